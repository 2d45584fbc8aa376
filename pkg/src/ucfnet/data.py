"""Datasets on disk, train/test splitting and deterministic synthetic infrared scenes.

Layout shared by real and synthetic data::

    <root>/images/<id>.png   8-bit grayscale
    <root>/masks/<id>.png    8-bit grayscale, foreground iff value > 127
"""
from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

log = logging.getLogger(__name__)

MASK_THRESHOLD = 127


@dataclass
class SampleRecord:
    """One image/mask pair; arrays are ``(1, 1, h, w)`` after padding.

    ``pad`` is ``(bottom, right)`` pixels added by reflection; :meth:`crop`
    removes it from predictions.
    """

    id: str
    image: np.ndarray
    mask: np.ndarray
    pad: tuple[int, int] = (0, 0)

    @property
    def original_size(self) -> tuple[int, int]:
        h, w = self.image.shape[-2:]
        return h - self.pad[0], w - self.pad[1]

    def crop(self, arr: np.ndarray) -> np.ndarray:
        h, w = self.original_size
        return arr[..., :h, :w]


def pad_to_multiple(arr: np.ndarray, multiple: int, mode: str = "reflect") -> tuple[np.ndarray, tuple[int, int]]:
    h, w = arr.shape[-2:]
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph == 0 and pw == 0:
        return arr, (0, 0)
    widths = [(0, 0)] * (arr.ndim - 2) + [(0, ph), (0, pw)]
    # reflect needs the pad to be smaller than the size; fall back to symmetric
    if mode == "reflect" and (ph >= h or pw >= w):
        mode = "symmetric"
    return np.pad(arr, widths, mode=mode), (ph, pw)


def read_gray(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"))
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc


def write_gray(path: Path, arr: np.ndarray) -> None:
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="L").save(path, format="PNG")


def load_dataset(root: str | Path, multiple: int = 16) -> list[SampleRecord]:
    """Load ``images/`` and ``masks/`` PNGs, scale images to [0, 1] and binarize masks.

    Spatial dims are reflect-padded up to a multiple of ``multiple``; the pad
    is kept on each record.
    """
    root = Path(root)
    img_dir, mask_dir = root / "images", root / "masks"
    images = sorted(img_dir.glob("*.png")) if img_dir.is_dir() else []
    if not images:
        warnings.warn(f"no images found under {img_dir}")
        return []
    out = []
    for path in images:
        mpath = mask_dir / path.name
        if not mpath.exists():
            raise FileNotFoundError(f"missing mask for image stem {path.stem!r} (expected {mpath})")
        img = read_gray(path).astype(np.float64) / 255.0
        mask = (read_gray(mpath) > MASK_THRESHOLD).astype(np.float64)
        if img.shape != mask.shape:
            raise ValueError(f"{path.stem}: image {img.shape} and mask {mask.shape} differ in size")
        img, pad = pad_to_multiple(img[None, None], multiple)
        mask, _ = pad_to_multiple(mask[None, None], multiple)
        out.append(SampleRecord(path.stem, img, mask, pad))
    return out


def split(samples: Sequence, ratio: float = 0.8, seed: int = 0) -> tuple[list, list]:
    """Deterministic shuffled partition with ``round(ratio * n)`` training samples."""
    n = len(samples)
    n_train = int(np.floor(ratio * n + 0.5))
    order = np.random.default_rng(seed).permutation(n)
    train = [samples[i] for i in sorted(order[:n_train])]
    test = [samples[i] for i in sorted(order[n_train:])]
    return train, test


# ------------------------------------------------------------------ synthetic


@dataclass
class SynthConfig:
    count: int = 320
    size: tuple[int, int] = (64, 64)
    targets_per_image: tuple[int, int] = (1, 4)
    target_sigma: tuple[float, float] = (0.7, 2.5)
    target_amplitude: tuple[float, float] = (0.3, 1.0)
    background_smoothness: float = 8.0
    noise_floor: float = 0.02
    border: int = 4
    min_separation: float = 8.0
    seed: int = 0

    def validate(self) -> None:
        h, w = self.size
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if h % 16 or w % 16 or h < 16 or w < 16:
            raise ValueError(f"size must be positive multiples of 16, got {self.size}")
        for name in ("targets_per_image", "target_sigma", "target_amplitude"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must be a non-degenerate range, got {(lo, hi)}")
        if self.targets_per_image[0] < 1:
            raise ValueError("targets_per_image must start at >= 1")
        if self.target_sigma[0] <= 0 or self.target_amplitude[0] <= 0:
            raise ValueError("target_sigma and target_amplitude must be positive")
        if self.background_smoothness <= 0 or self.noise_floor < 0:
            raise ValueError("background_smoothness must be > 0 and noise_floor >= 0")


def half_max_mask(shape: tuple[int, int], center: tuple[int, int], sigma: float) -> np.ndarray:
    """Pixels where an isotropic Gaussian bump exceeds half its peak: ``r^2 < 2 ln 2 sigma^2``."""
    rr, cc = np.ogrid[:shape[0], :shape[1]]
    r2 = (rr - center[0]) ** 2 + (cc - center[1]) ** 2
    return r2 < 2 * np.log(2) * sigma ** 2


def _place_centers(rng: np.random.Generator, k: int, cfg: SynthConfig) -> list[tuple[int, int]]:
    h, w = cfg.size
    b = cfg.border
    centers: list[tuple[int, int]] = []
    for _ in range(1000 * k):
        if len(centers) == k:
            break
        c = (int(rng.integers(b, h - b)), int(rng.integers(b, w - b)))
        if all(np.hypot(c[0] - o[0], c[1] - o[1]) >= cfg.min_separation for o in centers):
            centers.append(c)
    if len(centers) < k:
        raise ValueError(
            f"cannot place {k} targets {cfg.min_separation} px apart and {b} px from the border "
            f"in a {h}x{w} image"
        )
    return centers


@dataclass
class SynthSample:
    image: np.ndarray  # float in [0, 1]
    mask: np.ndarray  # bool
    targets: list[dict] = field(default_factory=list)


def synth_sample(rng: np.random.Generator, cfg: SynthConfig) -> SynthSample:
    """One scene: smooth clutter in [0, 0.7], Gaussian targets on top, white noise, clipped to [0, 1]."""
    h, w = cfg.size
    bg = ndimage.gaussian_filter(rng.standard_normal((h, w)), cfg.background_smoothness, mode="wrap")
    bg = 0.7 * (bg - bg.min()) / max(bg.max() - bg.min(), 1e-12)
    k = int(rng.integers(cfg.targets_per_image[0], cfg.targets_per_image[1] + 1))
    centers = _place_centers(rng, k, cfg)
    img = bg.copy()
    mask = np.zeros((h, w), dtype=bool)
    rr, cc = np.ogrid[:h, :w]
    targets = []
    for c in centers:
        # log-uniform width keeps the mean target area near 0.6% of a 64x64 frame
        sigma = float(np.exp(rng.uniform(*np.log(cfg.target_sigma))))
        amp = float(rng.uniform(*cfg.target_amplitude))
        r2 = (rr - c[0]) ** 2 + (cc - c[1]) ** 2
        img += amp * np.exp(-r2 / (2 * sigma ** 2))
        mask |= half_max_mask((h, w), c, sigma)
        targets.append({"center": list(c), "sigma": sigma, "amplitude": amp})
    img += cfg.noise_floor * rng.standard_normal((h, w))
    return SynthSample(np.clip(img, 0.0, 1.0), mask, targets)


def synth_generate(config: SynthConfig, out_dir: str | Path) -> dict:
    """Write ``config.count`` scenes in the dataset layout plus ``manifest.json`` and ``checksums.txt``.

    Output is fully determined by ``config.seed``.  Returns the manifest.
    """
    config.validate()
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    width = len(str(config.count - 1))
    records, lines = [], []
    for i in range(config.count):
        s = synth_sample(rng, config)
        sid = f"synth_{i:0{width}d}"
        img8 = np.round(s.image * 255).astype(np.uint8)
        write_gray(out / "images" / f"{sid}.png", img8)
        write_gray(out / "masks" / f"{sid}.png", s.mask.astype(np.uint8) * 255)
        records.append({"id": sid, "targets": s.targets})
        for sub in ("images", "masks"):
            digest = hashlib.sha256((out / sub / f"{sid}.png").read_bytes()).hexdigest()
            lines.append(f"{digest}  {sub}/{sid}.png")
    manifest = {"config": asdict(config), "samples": records}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (out / "checksums.txt").write_text("\n".join(lines) + "\n")
    log.info("wrote %d synthetic samples to %s", config.count, out)
    return manifest
