"""Finite-difference gradient verification for scalar-valued closures."""

from __future__ import annotations

import math

import numpy as np


def grad_check(f, params, step=1e-5, max_coords_per_param=None, rng=None):
    """Compare analytic gradients of ``f`` against central differences.

    ``f`` must be a deterministic closure returning a scalar Tensor built
    from ``params``. Returns the maximum relative error
    |analytic - numeric| / max(1, |analytic| + |numeric|) over the checked
    coordinates. Coordinates are checked exhaustively unless
    ``max_coords_per_param`` caps them (sampled with ``rng``).
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = f()
    if not math.isfinite(loss.item()):
        raise ValueError("grad_check: non-finite loss")
    loss.backward()
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, ana in zip(params, analytic):
        flat = p.value.reshape(-1)
        n = flat.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = range(n)
        ana_flat = ana.reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            up = f().item()
            flat[i] = orig - step
            down = f().item()
            flat[i] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise ValueError("grad_check: non-finite perturbed loss")
            numeric = (up - down) / (2.0 * step)
            a = float(ana_flat[i])
            err = abs(a - numeric) / max(1.0, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst
