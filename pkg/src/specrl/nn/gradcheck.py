"""Central finite-difference gradient checking."""
from __future__ import annotations

import numpy as np

from .autodiff import backward
from .params import ParamSet


def grad_check(loss_fn, params: ParamSet, h: float = 1e-5, max_coords: int = 64, seed: int = 0,
               floor: float = 1e-6) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``loss_fn()`` must rebuild the scalar loss from the current contents of
    ``params`` and be deterministic. At most ``max_coords`` coordinates of each
    trainable array are probed. The error per coordinate is
    ``|analytic - fd| / (|analytic| + |fd| + floor)``; the floor keeps
    coordinates whose true gradient is zero from reporting round-off noise.
    """
    params.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("loss is not finite")
    backward(loss)
    analytic = {n: (np.zeros_like(t.data) if t.grad is None else t.grad.copy()) for n, t in params.trainable()}
    params.zero_grad()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, t in params.trainable():
        flat = t.data.reshape(-1)
        n = flat.size
        coords = rng.choice(n, size=min(n, max_coords), replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            up = float(loss_fn().data)
            flat[c] = orig - h
            down = float(loss_fn().data)
            flat[c] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(f"loss not finite while probing {name}[{c}]")
            fd = (up - down) / (2.0 * h)
            an = analytic[name].reshape(-1)[c]
            err = abs(an - fd) / (abs(an) + abs(fd) + floor)
            worst = max(worst, err)
    return worst
