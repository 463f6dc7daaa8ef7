"""Central-difference gradient verification."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, NumericError
from .core import Tensor, backward, no_grad


def grad_check(
    f: Callable[..., Tensor],
    x: Tensor | Sequence[Tensor],
    eps: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Return the max relative error between analytic and numeric gradients.

    ``f(x)`` must return a scalar tensor.  ``x`` may be a single tensor or a
    list of tensors (e.g. every model parameter); all of them are perturbed in
    place and restored.  The error per coordinate is
    ``|a - n| / max(|a|, |n|, 1e-8)``.  With ``max_coords`` set, a random
    subset of that many coordinates per tensor is checked.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    params = [x] if isinstance(x, Tensor) else list(x)
    for p in params:
        p.requires_grad = True
        p.grad = None
    loss = f(x)
    if loss.size != 1:
        raise ContractError("grad_check needs a scalar-valued function")
    if not np.isfinite(loss.data).all():
        raise NumericError("non-finite loss in grad_check")
    backward(loss)
    rng = rng or np.random.default_rng(0)

    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else np.array(p.grad)
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + eps
                up = float(f(x).data)
                flat[i] = orig - eps
                down = float(f(x).data)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"non-finite value while perturbing coordinate {i}")
            numeric = (up - down) / (2.0 * eps)
            a = float(analytic.reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
