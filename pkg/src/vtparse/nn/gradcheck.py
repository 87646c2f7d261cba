"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamStore


def numerical_gradient(f: Callable[[], float], array: np.ndarray, eps: float = 1e-6,
                       entries=None) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``array`` (perturbed in place)."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    idx = range(flat.size) if entries is None else entries
    for i in idx:
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b|| / (||a|| + ||b||)``, zero when both vanish."""
    num = float(np.linalg.norm(np.ravel(a) - np.ravel(b)))
    den = float(np.linalg.norm(np.ravel(a)) + np.linalg.norm(np.ravel(b)))
    if den < 1e-12:
        return num
    return num / den


def check_params(loss_fn: Callable[[], "object"], stores: list[ParamStore],
                 eps: float = 1e-6) -> dict[str, float]:
    """Relative error of autodiff vs finite differences, per parameter array.

    ``loss_fn`` must build a fresh graph and return a scalar Tensor.
    """
    for s in stores:
        s.zero_grad()
    loss_fn().backward()
    errors = {}
    for si, s in enumerate(stores):
        analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                    for k, t in s.trainable()}
        for k, t in s.trainable():
            num = numerical_gradient(lambda: float(loss_fn().data), t.data, eps)
            errors[f"{si}:{k}"] = relative_error(analytic[k], num)
    return errors
