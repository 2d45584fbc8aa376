"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .autograd import GradientTape, Tensor, default_dtype


@dataclass
class GradEntry:
    name: str
    max_rel_err: float
    n_checked: int
    worst_index: tuple | None = None
    error: str | None = None

    def passed(self, tol_rel: float) -> bool:
        return self.error is None and self.max_rel_err <= tol_rel


@dataclass
class CheckReport:
    label: str
    tol_rel: float
    eps: float
    entries: list[GradEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.entries) and all(e.passed(self.tol_rel) for e in self.entries)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=float("nan"))

    def failures(self) -> list[GradEntry]:
        return [e for e in self.entries if not e.passed(self.tol_rel)]

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{status} {self.label}: max rel err {self.max_rel_err:.2e} (tol {self.tol_rel:g})"]
        for e in self.failures():
            detail = e.error or f"rel err {e.max_rel_err:.2e} at {e.worst_index}"
            lines.append(f"    {e.name}: {detail}")
        return "\n".join(lines)


def finite_diff_check(f: Callable[[], Tensor], inputs: Mapping[str, Tensor] | Sequence[Tensor],
                      eps: float = 1e-5, tol_rel: float = 1e-4, *, label: str = "",
                      max_coords: int | None = None, seed: int = 0) -> CheckReport:
    """Compare the tape gradient of ``f()`` with central differences.

    ``f`` takes no arguments and evaluates a scalar from ``inputs``, whose
    arrays are perturbed in place.  For each input the report holds the
    largest elementwise relative error ``|a - n| / max(|a|, |n|, floor)``
    with ``floor = 1e-6 * max(1, |f(x)|)``, which keeps round-off on
    vanishing gradients from counting as a failure.  ``max_coords`` samples
    at most that many coordinates per input (seeded).
    """
    if default_dtype() != np.float64:
        raise RuntimeError("finite_diff_check requires 64-bit mode; wrap the call in precision('float64')")
    named = dict(inputs) if isinstance(inputs, Mapping) else {f"input{i}": t for i, t in enumerate(inputs)}
    for name, t in named.items():
        if t.data.dtype != np.float64:
            raise RuntimeError(f"{name} is {t.data.dtype}; finite_diff_check needs float64 inputs")
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None

    report = CheckReport(label=label, tol_rel=tol_rel, eps=eps)
    with GradientTape() as tape:
        loss = f()
    f0 = float(loss.data)
    if not np.isfinite(f0):
        report.entries.append(GradEntry("<forward>", float("inf"), 0, error="non-finite f at the base point"))
        return report
    tape.backward(loss)
    floor = 1e-6 * max(1.0, abs(f0))
    rng = np.random.default_rng(seed)

    for name, t in named.items():
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        worst, worst_at, err_msg = 0.0, None, None
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f().data)
            flat[i] = orig - eps
            fm = float(f().data)
            flat[i] = orig
            at = np.unravel_index(i, t.shape)
            if not (np.isfinite(fp) and np.isfinite(fm)):
                err_msg = f"non-finite f when perturbing {name}{tuple(int(a) for a in at)}"
                worst = float("inf")
                break
            num = (fp - fm) / (2 * eps)
            a = float(analytic.reshape(-1)[i])
            rel = abs(a - num) / max(abs(a), abs(num), floor)
            if rel > worst:
                worst, worst_at = rel, tuple(int(v) for v in at)
        report.entries.append(GradEntry(name, worst, len(idx), worst_at, err_msg))
    return report
