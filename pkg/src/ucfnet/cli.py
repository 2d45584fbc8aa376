"""``ucfnet`` command line: synth, train, eval, predict, gradcheck, ablate.

Every command reads one JSON config (``--config``); ``--set key.path=value``
overrides single keys.  Exit codes: 0 success, 1 runtime failure, 2 config
error (the message names the offending field).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import functional as F
from .autograd import Tensor, precision
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, RunConfig, config_from_dict
from .data import SynthConfig, load_dataset, pad_to_multiple, read_gray, synth_generate, write_gray
from .metrics import MetricReport, default_thresholds, evaluate, write_curve_csv
from .training import TrainingAborted, ablate, prepare_data, predict_probs, train
from .verification import GRADIENT_CASES, format_table, run_gradient_suite

log = logging.getLogger("ucfnet")

REPORT_FORMAT = "ucfnet-report"


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(item, "override must look like section.key=value")
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(key, f"{p} is not a section")
        node[parts[-1]] = _parse_value(value)
    return raw


def load_run_config(path: str | None, overrides: list[str]) -> RunConfig:
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON in {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("--config", "top level must be an object")
    return config_from_dict(apply_overrides(raw, overrides))


def report_document(report: MetricReport, *, source: str, dataset: str, n_thresholds: int) -> dict:
    """The JSON written by ``eval``; its layout is described in docs/report_schema.json."""
    return {
        "format": REPORT_FORMAT,
        "version": 1,
        "source": source,
        "dataset": dataset,
        "n_thresholds": n_thresholds,
        "table_row": report.table_row(),
        "metrics": report.to_dict(),
    }


# ------------------------------------------------------------------ commands


def cmd_synth(cfg: RunConfig, args) -> int:
    synth = cfg.data.synth or SynthConfig()
    out = Path(args.out) if args.out else cfg.output_dir / "data"
    synth_generate(synth, out)
    print(f"wrote {synth.count} samples to {out} (manifest.json, checksums.txt)")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    res = train(cfg)
    print(f"final checkpoint: {res.final_checkpoint}")
    print(f"best checkpoint:  {res.best_checkpoint} (val IoU {res.best_val_iou:.4f})")
    print(f"training log:     {res.log_path}")
    return 0


def _write_predictions(out: Path, ids, probs, threshold: float) -> None:
    (out / "masks").mkdir(parents=True, exist_ok=True)
    (out / "probs").mkdir(parents=True, exist_ok=True)
    for sid, p in zip(ids, probs):
        write_gray(out / "masks" / f"{sid}.png", (p >= threshold).astype(np.uint8) * 255)
        np.save(out / "probs" / f"{sid}.npy", p.astype(np.float32))


def _load_prediction(folder: Path, sid: str) -> np.ndarray:
    npy, png = folder / f"{sid}.npy", folder / f"{sid}.png"
    if npy.exists():
        return np.load(npy).astype(np.float64)
    if png.exists():
        return read_gray(png).astype(np.float64) / 255.0
    raise FileNotFoundError(f"no prediction for {sid!r} in {folder} (.npy or .png)")


def cmd_eval(cfg: RunConfig, args) -> int:
    if (args.checkpoint is None) == (args.predictions is None):
        raise ConfigError("--checkpoint", "give exactly one of --checkpoint or --predictions")
    out = cfg.output_dir / "eval"
    out.mkdir(parents=True, exist_ok=True)
    if args.data:
        samples, dataset = load_dataset(args.data, cfg.data.pad_multiple), str(args.data)
        if not samples:
            raise RuntimeError(f"no samples under {args.data}")
    else:
        _, samples = prepare_data(cfg, cfg.output_dir)
        dataset = "held-out split of " + (cfg.data.root or str(cfg.output_dir / "data"))
    ids = [s.id for s in samples]
    if args.checkpoint:
        ck = load_checkpoint(args.checkpoint, cfg.dtype)
        if cfg.data.pad_multiple % (2 ** ck.model.config.depth):
            raise ConfigError("data.pad_multiple", f"must be a multiple of {2 ** ck.model.config.depth}")
        with precision(cfg.dtype):
            probs = predict_probs(ck.model, samples, cfg.optim.batch_size)
        source = str(args.checkpoint)
    else:
        probs = [_load_prediction(Path(args.predictions), sid) for sid in ids]
        source = str(args.predictions)
    masks = [s.crop(s.mask[0, 0]) for s in samples]
    report, points = evaluate(probs, masks, threshold=cfg.eval.threshold, dist=cfg.eval.distance,
                              thresholds=default_thresholds(cfg.eval.n_thresholds),
                              auc_curve=cfg.eval.auc_curve, ids=ids)
    doc = report_document(report, source=source, dataset=dataset, n_thresholds=cfg.eval.n_thresholds)
    (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    write_curve_csv(points, out / "curve.csv")
    _write_predictions(out, ids, probs, cfg.eval.threshold)
    row = report.table_row()
    pd = "n/a" if row["Pd"] is None else f"{row['Pd']:.2f}"
    print(f"IoU {row['IoU']:.2f}  nIoU {row['nIoU']:.2f}  Pd {pd}  Fa {row['Fa']:.2f}  ({report.n_images} images)")
    print(f"report: {out / 'report.json'}")
    return 0


def cmd_predict(cfg: RunConfig, args) -> int:
    src = Path(args.input)
    files = sorted(src.glob("*.png")) if src.is_dir() else [src]
    if not files:
        raise RuntimeError(f"no PNG images under {src}")
    ck = load_checkpoint(args.checkpoint, cfg.dtype)
    multiple = 2 ** ck.model.config.depth
    model = ck.model.eval()
    probs = []
    with precision(cfg.dtype):
        for f in files:
            img = read_gray(f).astype(np.float64) / 255.0
            padded, _ = pad_to_multiple(img[None, None], multiple)
            p = F.sigmoid(model(Tensor(padded))).data[0, 0, :img.shape[0], :img.shape[1]]
            probs.append(p.astype(np.float64))
    out = cfg.output_dir / "predict"
    _write_predictions(out, [f.stem for f in files], probs, cfg.eval.threshold)
    print(f"wrote {len(files)} masks and probability maps to {out}")
    return 0


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    cases = GRADIENT_CASES
    if args.case:
        unknown = [c for c in args.case if c not in GRADIENT_CASES]
        if unknown:
            raise ConfigError("--case", f"unknown case {unknown[0]!r}; choose from {sorted(GRADIENT_CASES)}")
        cases = {c: GRADIENT_CASES[c] for c in args.case}
    reports = run_gradient_suite(cases)
    print(format_table(reports))
    return 0 if all(r.passed for r in reports) else 1


def cmd_ablate(cfg: RunConfig, args) -> int:
    report = ablate(cfg)
    for row in report["rows"]:
        m = row["median"]
        print(f"{row['method']:<18} IoU {100 * m['iou']:6.2f}  nIoU {100 * m['niou']:6.2f}  "
              f"Pd {m['pd']:6.2f}  Fa {m['fa']:7.2f}  (median of seeds {row['seeds']})")
    print(f"report: {cfg.output_dir / 'ablation.json'}")
    return 0


COMMANDS = {
    "synth": cmd_synth, "train": cmd_train, "eval": cmd_eval,
    "predict": cmd_predict, "gradcheck": cmd_gradcheck, "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ucfnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config (defaults apply to missing keys)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key, e.g. optim.epochs=10 (repeatable)")
        return p

    p = common(sub.add_parser("synth", help="generate the synthetic dataset"))
    p.add_argument("--out", help="dataset directory (default <output_dir>/data)")
    common(sub.add_parser("train", help="train a model"))
    p = common(sub.add_parser("eval", help="evaluate a checkpoint or saved predictions"))
    p.add_argument("--checkpoint", help="checkpoint manifest (or its stem)")
    p.add_argument("--predictions", help="folder of <id>.npy/<id>.png probability maps instead of a model")
    p.add_argument("--data", help="dataset root to evaluate in full (default: held-out split)")
    p = common(sub.add_parser("predict", help="write masks for a PNG or a folder of PNGs"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p = common(sub.add_parser("gradcheck", help="finite-difference check of every operator (always 64-bit)"))
    p.add_argument("--case", action="append", help="restrict to the named case (repeatable)")
    common(sub.add_parser("ablate", help="train the four CDC/FFC ablation rows over run.seeds"))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config, args.overrides)
        F.set_threads(cfg.run.threads)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, OSError, ValueError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
