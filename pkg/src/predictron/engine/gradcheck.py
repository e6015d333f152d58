"""Central finite-difference checks against the autodiff tape."""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Tensor, grad_graph


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """Norm-wise relative error ``|a - n| / max(|a|, |n|, floor)``."""
    diff = float(np.linalg.norm((analytic - numeric).ravel()))
    scale = max(float(np.linalg.norm(analytic.ravel())), float(np.linalg.norm(numeric.ravel())), floor)
    return diff / scale


def numeric_grad(f: Callable[[], float], t: Tensor, eps: float) -> np.ndarray:
    out = np.zeros(t.shape, dtype=np.float64)
    flat = t.data.reshape(-1)
    view = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f()
        flat[i] = orig - eps
        lo = f()
        flat[i] = orig
        view[i] = (hi - lo) / (2 * eps)
    return out


def finite_diff_check(f: Callable[[], Tensor], params: Iterable[Tensor], eps: float = 1e-6,
                      per_tensor: bool = False, pooled: bool = False):
    """Compare autodiff gradients of the scalar ``f()`` with central differences.

    ``f`` must rebuild the graph from the current parameter values each call.
    Returns the maximum per-tensor relative error, ``{name: error}`` with
    ``per_tensor``, or one error over all parameters stacked with ``pooled``
    (useful at 32-bit, where tensors with tiny gradients are all round-off).
    """
    params = list(params)
    analytic = grad_graph(f(), params)
    scalar = lambda: float(f().data)
    errors = {}
    stacked_a, stacked_n = [], []
    for i, t in enumerate(params):
        a = np.asarray(analytic.get(id(t), np.zeros_like(t.data)), dtype=np.float64)
        n = numeric_grad(scalar, t, eps)
        errors[t.name or f"param{i}"] = relative_error(a, n)
        stacked_a.append(a.ravel())
        stacked_n.append(n.ravel())
    if per_tensor:
        return errors
    if pooled:
        if not params:
            return 0.0
        return relative_error(np.concatenate(stacked_a), np.concatenate(stacked_n))
    return max(errors.values(), default=0.0)
