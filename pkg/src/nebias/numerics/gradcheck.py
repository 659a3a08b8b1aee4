"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .nn import ParameterSet
from .tensor import Tensor

__all__ = ["finite_difference_check"]


def finite_difference_check(
    f,
    params: ParameterSet,
    eps: float = 1e-5,
    max_entries_per_param: int | None = None,
    rng: np.random.Generator | None = None,
    trainable_only: bool = True,
) -> float:
    """Return the max relative error between analytic and central-difference grads.

    ``f`` is a no-argument callable returning a scalar Tensor, recomputed from
    the current parameter values on every call. Relative error per entry is
    |analytic - central| / (|analytic| + |central| + 1e-12). When
    ``max_entries_per_param`` is set, a seeded random subset of entries is
    probed per tensor instead of the full sweep.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps {eps} outside [1e-7, 1e-3]")
    params.zero_grad()
    loss = f()
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ValueError("f must return a scalar Tensor")
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("f returned a non-finite value")
    loss.backward()

    items = params.trainable_items() if trainable_only else list(params.items())
    analytic = {n: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for n, p in items}

    worst = 0.0
    for name, p in items:
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries_per_param is not None and n > max_entries_per_param:
            if rng is None:
                rng = np.random.default_rng(0)
            idx = rng.choice(n, size=max_entries_per_param, replace=False)
        else:
            idx = np.arange(n)
        ga = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f().data)
            flat[i] = orig - eps
            down = float(f().data)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(f"non-finite f while perturbing {name}[{i}]")
            central = (up - down) / (2.0 * eps)
            err = abs(ga[i] - central) / (abs(ga[i]) + abs(central) + 1e-12)
            worst = max(worst, err)
    return worst
