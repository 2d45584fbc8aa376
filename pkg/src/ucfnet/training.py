"""Training loop, batched inference, dataset evaluation and the CDC/FFC ablation."""
from __future__ import annotations

import copy
import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import functional as F
from .autograd import GradientTape, Tensor, precision
from .checkpoint import save_checkpoint
from .config import RunConfig
from .data import SampleRecord, SynthConfig, load_dataset, split, synth_generate
from .losses import total_loss
from .metrics import MetricReport, RocPoint, default_thresholds, evaluate, iou_dataset, confusion
from .model import UcfModel, build
from .optim import AdamW, cosine_lr

log = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "step", "bce", "soft_iou", "total", "lr", "val_iou", "seconds"]


class TrainingAborted(RuntimeError):
    """Loss went non-finite; ``last_good`` is the most recent checkpoint written, if any."""

    def __init__(self, message: str, last_good: Path | None):
        super().__init__(f"{message}; last good checkpoint: {last_good}")
        self.last_good = last_good


def prepare_data(cfg: RunConfig, out_dir: Path) -> tuple[list[SampleRecord], list[SampleRecord]]:
    """Load ``data.root`` or (re)generate the synthetic set, then split train/test."""
    if cfg.data.root:
        root = Path(cfg.data.root)
    else:
        synth = cfg.data.synth or SynthConfig()
        root = out_dir / "data"
        manifest = root / "manifest.json"
        stale = True
        if manifest.exists():
            stale = json.loads(manifest.read_text()).get("config") != json.loads(json.dumps(synth.__dict__))
        if stale:
            synth_generate(synth, root)
    samples = load_dataset(root, cfg.data.pad_multiple)
    if not samples:
        raise RuntimeError(f"dataset at {root} is empty")
    return split(samples, cfg.data.split_ratio, cfg.data.split_seed)


def stack(samples: Sequence[SampleRecord], attr: str, dtype) -> np.ndarray:
    return np.concatenate([getattr(s, attr) for s in samples], axis=0).astype(dtype)


def stack_common(samples: Sequence[SampleRecord], attr: str, dtype) -> np.ndarray:
    """Stack for training; mixed sizes are padded to the largest, image and mask alike."""
    arrs = [getattr(s, attr) for s in samples]
    h = max(a.shape[-2] for a in arrs)
    w = max(a.shape[-1] for a in arrs)
    out = []
    for a in arrs:
        ph, pw = h - a.shape[-2], w - a.shape[-1]
        if ph or pw:
            mode = "reflect" if ph < a.shape[-2] and pw < a.shape[-1] else "symmetric"
            a = np.pad(a, [(0, 0), (0, 0), (0, ph), (0, pw)], mode=mode)
        out.append(a)
    return np.concatenate(out, axis=0).astype(dtype)


def predict_probs(model: UcfModel, samples: Sequence[SampleRecord], batch_size: int = 8) -> list[np.ndarray]:
    """Sigmoid probability maps (cropped to original geometry), eval mode, no tape."""
    was_training = model.training
    model.eval()
    dtype = model.parameters()[0].data.dtype
    out = []
    try:
        # group by padded size so that batches stack
        for i in range(0, len(samples), batch_size):
            chunk = samples[i:i + batch_size]
            shapes = {s.image.shape for s in chunk}
            groups = [chunk] if len(shapes) == 1 else [[s] for s in chunk]
            for g in groups:
                probs = F.sigmoid(model(Tensor(stack(g, "image", dtype)))).data
                out.extend(s.crop(p[0]).astype(np.float64) for s, p in zip(g, probs))
    finally:
        model.train(was_training)
    return out


def evaluate_model(model: UcfModel, samples: Sequence[SampleRecord], cfg: RunConfig,
                   with_curve: bool = True) -> tuple[MetricReport, list[RocPoint]]:
    probs = predict_probs(model, samples, cfg.optim.batch_size)
    masks = [s.crop(s.mask[0, 0]) for s in samples]
    return evaluate(probs, masks, threshold=cfg.eval.threshold, dist=cfg.eval.distance,
                    thresholds=default_thresholds(cfg.eval.n_thresholds), auc_curve=cfg.eval.auc_curve,
                    ids=[s.id for s in samples], with_curve=with_curve)


def quick_iou(model: UcfModel, samples: Sequence[SampleRecord], threshold: float = 0.5) -> float:
    probs = predict_probs(model, samples)
    return iou_dataset([confusion(p >= threshold, s.crop(s.mask[0, 0]).astype(bool))
                        for p, s in zip(probs, samples)])


@dataclass
class TrainResult:
    model: UcfModel
    final_checkpoint: Path
    best_checkpoint: Path | None
    best_val_iou: float
    final_val_iou: float
    log_path: Path
    seconds: float
    history: list[dict] = field(default_factory=list)


def train(cfg: RunConfig, *, train_set: Sequence[SampleRecord] | None = None,
          test_set: Sequence[SampleRecord] | None = None, out_dir: Path | None = None) -> TrainResult:
    """Train from ``cfg``; everything is written under ``out_dir`` (default ``cfg.output_dir``).

    Writes ``train_log.csv`` (one row per epoch; ``lr`` is the rate used at
    the epoch's first step), ``checkpoints/last`` every
    ``run.checkpoint_every`` epochs, ``checkpoints/best`` whenever the
    held-out IoU improves and ``checkpoints/final`` at the end.
    """
    cfg.validate()
    out_dir = Path(out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if train_set is None or test_set is None:
        train_set, test_set = prepare_data(cfg, out_dir)
    ckpt_dir = out_dir / "checkpoints"
    t_start = time.perf_counter()

    with precision(cfg.dtype):
        model = build(cfg.model, cfg.run.seed)
        opt = AdamW(model.parameters(), cfg.optim)
        dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng([cfg.run.seed, 7])
        n = len(train_set)
        bs = cfg.optim.batch_size
        steps_per_epoch = -(-n // bs)
        total_steps = cfg.optim.epochs * steps_per_epoch
        images = stack_common(train_set, "image", dtype)
        masks = stack_common(train_set, "mask", dtype)

        log_path = out_dir / "train_log.csv"
        history: list[dict] = []
        best_iou, best_path, last_good = -1.0, None, None
        val_iou = float("nan")
        step = 0
        model.train()
        with open(log_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
            writer.writeheader()
            for epoch in range(1, cfg.optim.epochs + 1):
                order = rng.permutation(n)
                sums = {"bce": 0.0, "soft_iou": 0.0, "total": 0.0}
                epoch_lr = cosine_lr(step, total_steps, cfg.optim.lr_max, cfg.optim.lr_min)
                for b in range(steps_per_epoch):
                    idx = order[b * bs:(b + 1) * bs]
                    x, y = images[idx], masks[idx]
                    if cfg.data.hflip:
                        flip = rng.random(len(idx)) < 0.5
                        x = np.where(flip[:, None, None, None], x[..., ::-1], x)
                        y = np.where(flip[:, None, None, None], y[..., ::-1], y)
                    lr = cosine_lr(step, total_steps, cfg.optim.lr_max, cfg.optim.lr_min)
                    with GradientTape() as tape:
                        loss, parts = total_loss(model(Tensor(x)), y, cfg.loss)
                    if not np.isfinite(parts["total"]):
                        raise TrainingAborted(f"non-finite loss at epoch {epoch}, step {step}", last_good)
                    opt.zero_grad()
                    tape.backward(loss)
                    opt.step(lr)
                    step += 1
                    for k in sums:
                        sums[k] += parts.get(k, 0.0) * len(idx)
                evaluated = epoch % cfg.run.eval_every == 0 or epoch == cfg.optim.epochs
                if evaluated:
                    val_iou = quick_iou(model, test_set, cfg.eval.threshold)
                row = {
                    "epoch": epoch, "step": step,
                    **{k: f"{v / n:.6f}" for k, v in sums.items()},
                    "lr": f"{epoch_lr:.10g}",
                    "val_iou": f"{val_iou:.6f}" if evaluated else "",
                    "seconds": f"{time.perf_counter() - t_start:.1f}",
                }
                writer.writerow(row)
                fh.flush()
                history.append(row)
                if evaluated and val_iou > best_iou:
                    best_iou = val_iou
                    best_path = save_checkpoint(model, opt.state, step, ckpt_dir / "best",
                                                extra={"epoch": epoch, "val_iou": val_iou})
                    last_good = best_path
                if epoch % cfg.run.checkpoint_every == 0:
                    last_good = save_checkpoint(model, opt.state, step, ckpt_dir / "last",
                                                extra={"epoch": epoch})
                log.info("epoch %d loss %.4f val_iou %s", epoch, sums["total"] / n, row["val_iou"])
        final = save_checkpoint(model, opt.state, step, ckpt_dir / "final",
                                extra={"epoch": cfg.optim.epochs, "val_iou": val_iou})
    return TrainResult(model, final, best_path, best_iou, val_iou, log_path,
                       time.perf_counter() - t_start, history)


ABLATION_ROWS = ("UCF (vanilla)", "UCF + CDC", "UCF + FFC", "UCF + CDC + FFC")


def ablation_configs(cfg: RunConfig) -> list[tuple[str, RunConfig]]:
    """The four rows: (theta 0, no FFC), (theta, no FFC), (theta 0, n FFC), (theta, n FFC).

    ``theta`` and ``n`` come from ``cfg.model``.
    """
    theta, n_ffc = cfg.model.theta, cfg.model.n_ffc_blocks
    rows = []
    for name, (t, nf) in zip(ABLATION_ROWS, [(0.0, 0), (theta, 0), (0.0, n_ffc), (theta, n_ffc)]):
        c = copy.deepcopy(cfg)
        c.model.theta, c.model.n_ffc_blocks = t, nf
        rows.append((name, c))
    return rows


def ablate(cfg: RunConfig, out_dir: Path | None = None) -> dict:
    """Train every ablation row for every seed in ``run.seeds`` on one shared data split.

    Returns a report with per-seed metrics and the median over seeds per row.
    """
    out_dir = Path(out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set, test_set = prepare_data(cfg, out_dir)
    rows = []
    for name, row_cfg in ablation_configs(cfg):
        runs = []
        for seed in cfg.run.seeds:
            c = copy.deepcopy(row_cfg)
            c.run.seed = seed
            slug = name.lower().replace(" + ", "_").replace(" ", "_").replace("(", "").replace(")", "")
            res = train(c, train_set=train_set, test_set=test_set, out_dir=out_dir / slug / f"seed{seed}")
            with precision(c.dtype):
                report, _ = evaluate_model(res.model, test_set, c, with_curve=False)
            runs.append({"seed": seed, "iou": report.iou, "niou": report.niou, "pd": report.pd,
                         "fa": report.fa, "seconds": res.seconds,
                         "final_checkpoint": str(res.final_checkpoint)})
            log.info("%s seed %d: IoU %.4f", name, seed, report.iou)
        med = {k: float(np.median([r[k] for r in runs])) for k in ("iou", "niou", "pd", "fa")}
        rows.append({"method": name, "theta": row_cfg.model.theta,
                     "n_ffc_blocks": row_cfg.model.n_ffc_blocks, "seeds": list(cfg.run.seeds),
                     "runs": runs, "median": med})
    report = {"rows": rows, "config": cfg.to_dict()}
    (out_dir / "ablation.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    with open(out_dir / "ablation.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["method", "theta", "n_ffc_blocks", "seeds", "IoU", "nIoU", "Pd", "Fa"])
        for r in rows:
            m = r["median"]
            wr.writerow([r["method"], r["theta"], r["n_ffc_blocks"], " ".join(map(str, r["seeds"])),
                         f"{100 * m['iou']:.2f}", f"{100 * m['niou']:.2f}", f"{m['pd']:.2f}", f"{m['fa']:.2f}"])
    return report
