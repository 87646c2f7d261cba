"""AdaGrad with global-norm clipping and an l2 penalty."""

from __future__ import annotations

import numpy as np

from .params import ParamStore

EPS = 1e-10


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def clip_by_global_norm(grads: dict[str, np.ndarray], clip: float) -> dict[str, np.ndarray]:
    norm = global_norm(grads)
    if clip > 0 and norm > clip:
        scale = clip / norm
        return {k: g * scale for k, g in grads.items()}
    return grads


def adagrad_step(params: ParamStore, gradients: dict[str, np.ndarray] | None = None,
                 lr: float = 0.01, clip: float = 0.25, l2: float = 0.0) -> ParamStore:
    """Apply one AdaGrad update in place (gradients of a loss to minimise).

    The raw gradient is clipped to global norm ``clip`` first, then the l2
    term ``l2 * param`` is added, then the accumulator is updated.
    """
    if gradients is None:
        gradients = params.grads()
    gradients = clip_by_global_norm(gradients, clip)
    for name, g in gradients.items():
        p = params[name]
        if l2:
            g = g + l2 * p.data
        acc = params.accum[name]
        acc += g * g
        p.data = p.data - lr * g / (np.sqrt(acc) + EPS)
    return params
