"""Checkpoint persistence: a JSON manifest plus one raw little-endian payload.

``<name>.manifest.json`` lists every array (name, shape, dtype, byte offset,
byte length) in payload order; ``<name>.bin`` is the arrays' bytes
concatenated with no padding.  Offsets must tile the payload exactly.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autograd import precision
from .model import UcfConfig, UcfModel
from .optim import AdamWState

FORMAT = "ucfnet-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    """Manifest and payload disagree, or the payload does not fit the model."""


def _paths(path: str | Path) -> tuple[Path, Path]:
    p = Path(path)
    name = p.name
    for suffix in (".manifest.json", ".bin"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    base = p.with_name(name)
    return base.with_name(name + ".manifest.json"), base.with_name(name + ".bin")


def _collect(model: UcfModel, state: AdamWState | None) -> list[tuple[str, np.ndarray]]:
    arrays = [(f"param/{n}", p.data) for n, p in model.named_parameters()]
    arrays += [(f"buffer/{n}", b) for n, b in model.named_buffers()]
    if state is not None:
        for key in sorted(state.m):
            arrays.append((f"adam_m/{key}", state.m[key]))
            arrays.append((f"adam_v/{key}", state.v[key]))
    return arrays


def save_checkpoint(model: UcfModel, state: AdamWState | None, step: int, path: str | Path,
                    extra: dict | None = None) -> Path:
    """Write manifest and payload; returns the manifest path."""
    manifest_path, bin_path = _paths(path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    dtype = model.parameters()[0].data.dtype
    entries, offset = [], 0
    with open(bin_path, "wb") as fh:
        for name, arr in _collect(model, state):
            raw = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes()
            entries.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.name,
                            "offset": offset, "nbytes": len(raw)})
            fh.write(raw)
            offset += len(raw)
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "byte_order": "little",
        "element_width": dtype.itemsize * 8,
        "step": int(step),
        "optimizer_step": state.step if state is not None else None,
        "config": model.config.to_dict(),
        "payload": bin_path.name,
        "payload_nbytes": offset,
        "tensors": entries,
        "extra": extra or {},
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest_path


@dataclass
class LoadedCheckpoint:
    model: UcfModel
    state: AdamWState | None
    step: int
    manifest: dict


def load_checkpoint(path: str | Path, dtype=None) -> LoadedCheckpoint:
    """Rebuild the model from the manifest's config snapshot and fill it from the payload.

    ``dtype`` (``float32``/``float64``) requests a run precision; if it differs
    from the stored width the arrays are converted and a warning is issued.
    """
    manifest_path, bin_path = _paths(path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read manifest {manifest_path}: {exc}") from exc
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{manifest_path} is not a {FORMAT} manifest")
    payload = bin_path.read_bytes() if bin_path.exists() else b""
    entries = manifest["tensors"]
    expected = 0
    for e in entries:
        if e["offset"] != expected:
            raise CheckpointError(f"corrupt checkpoint: {e['name']} starts at {e['offset']}, expected {expected}")
        expected += e["nbytes"]
    if expected != len(payload) or expected != manifest["payload_nbytes"]:
        raise CheckpointError(
            f"corrupt checkpoint: manifest covers {expected} bytes, payload has {len(payload)}"
        )

    stored = np.dtype(f"float{manifest['element_width']}")
    target = stored if dtype is None else np.dtype(dtype)
    if target != stored:
        warnings.warn(f"converting {stored.name} checkpoint to {target.name}")

    config = UcfConfig(**manifest["config"])
    with precision(target):
        model = UcfModel(config, seed=0)
    params = dict(model.named_parameters())
    buffers = dict(model.named_buffers())
    state = AdamWState(step=manifest["optimizer_step"] or 0) if manifest["optimizer_step"] is not None else None
    seen = set()
    for e in entries:
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(e["dtype"]).newbyteorder("<")).reshape(e["shape"])
        kind, name = e["name"].split("/", 1)
        if kind == "param":
            if name not in params or params[name].shape != tuple(e["shape"]):
                raise CheckpointError(f"parameter {name} shape {e['shape']} does not match the config snapshot")
            params[name].data = arr.astype(target)
        elif kind == "buffer":
            if name not in buffers or buffers[name].shape != tuple(e["shape"]):
                raise CheckpointError(f"buffer {name} does not match the config snapshot")
            buffers[name][...] = arr.astype(target)
        elif kind in ("adam_m", "adam_v") and state is not None:
            (state.m if kind == "adam_m" else state.v)[name] = arr.astype(target)
        else:
            raise CheckpointError(f"unknown entry {e['name']}")
        seen.add(e["name"])
    missing = [n for n in params if f"param/{n}" not in seen]
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters: {missing[:3]}...")
    return LoadedCheckpoint(model, state, manifest["step"], manifest)


def checkpoint_digest(path: str | Path) -> str:
    """SHA-256 over manifest and payload bytes."""
    manifest_path, bin_path = _paths(path)
    h = hashlib.sha256()
    h.update(manifest_path.read_bytes())
    h.update(bin_path.read_bytes())
    return h.hexdigest()
