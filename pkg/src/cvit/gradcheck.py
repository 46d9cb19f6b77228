"""Central finite-difference gradient checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from cvit import tensor as tn
from cvit.tensor import Tensor

# Magnitude below which a gradient component is compared on an absolute
# scale: with h = 1e-5 and O(1) losses, float64 round-off in the central
# difference is ~1e-12, so components under ~1e-8 cannot be resolved to a
# 1e-4 relative error (exact zeros occur for key biases and dead ReLUs).
REL_ERR_FLOOR = 1e-7


def rel_error(a, b, floor: float = REL_ERR_FLOOR) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@dataclass
class GradCheckResult:
    max_rel_error: float
    max_abs_error: float
    worst: str  # "name[index]"
    n_checked: int
    per_param: dict[str, float]


def check_gradients(
    params: dict[str, Tensor],
    loss_fn: Callable[[], Tensor],
    h: float = 1e-5,
    floor: float = REL_ERR_FLOOR,
    subset: dict[str, np.ndarray] | None = None,
) -> GradCheckResult:
    """Compare autodiff gradients of ``loss_fn()`` with central differences.

    Every element of every tensor in ``params`` is perturbed unless ``subset``
    gives explicit flat indices for some names.
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    tn.backward(loss)
    analytic = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1).copy() for k, p in params.items()}

    worst_rel, worst_abs, worst_at, count = 0.0, 0.0, "", 0
    per_param = {}
    with tn.no_grad():
        for name, p in params.items():
            if not p.data.flags.c_contiguous:
                p.data = np.ascontiguousarray(p.data)
            flat = p.data.reshape(-1)  # view: edits move the live parameter
            idx = subset.get(name, range(flat.size)) if subset else range(flat.size)
            fd = []
            for i in idx:
                orig = flat[i]
                flat[i] = orig + h
                up = loss_fn().item()
                flat[i] = orig - h
                down = loss_fn().item()
                flat[i] = orig
                fd.append((up - down) / (2 * h))
            idx = np.fromiter(idx, dtype=int)
            if idx.size == 0:
                continue
            fd = np.array(fd)
            an = analytic[name][idx]
            rel = rel_error(an, fd, floor)
            per_param[name] = float(rel.max())
            k = int(rel.argmax())
            if rel[k] > worst_rel:
                worst_rel, worst_at = float(rel[k]), f"{name}[{idx[k]}]"
            worst_abs = max(worst_abs, float(np.abs(an - fd).max()))
            count += idx.size
    return GradCheckResult(worst_rel, worst_abs, worst_at, count, per_param)
