"""Central finite-difference checks for functions built on :mod:`protoloss.tensor`."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, grad

DEFAULT_STEP = 1e-5
# Coordinates whose true gradient is ~0 are compared against this magnitude
# instead of their own, so FD rounding noise (~1e-11 here) does not dominate.
DEFAULT_FLOOR = 1e-6


def numeric_gradient(f: Callable[[Sequence[np.ndarray]], float], arrays: Sequence[np.ndarray],
                     step: float = DEFAULT_STEP) -> list[np.ndarray]:
    """Central differences of the scalar ``f`` w.r.t. every entry of every array."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    out = []
    for k, arr in enumerate(arrays):
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = f(arrays)
            flat[i] = orig - step
            fm = f(arrays)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * step)
        out.append(g)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return np.abs(a - n) / denom


def check_gradients(fn: Callable[..., Tensor], *arrays: np.ndarray, step: float = DEFAULT_STEP,
                    floor: float = DEFAULT_FLOOR) -> float:
    """Max relative error between autodiff and central differences.

    ``fn`` receives one Tensor per array (all with ``requires_grad``) and
    must return a scalar Tensor.
    """
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    analytic = grad(fn(*leaves), leaves)

    def f(arrs):
        return fn(*[Tensor(a) for a in arrs]).item()

    numeric = numeric_gradient(f, arrays, step)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        if a.size:
            worst = max(worst, float(relative_error(a, n, floor).max()))
    return worst
