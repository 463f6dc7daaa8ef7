"""ODE integration of the learned velocity field with classifier-free guidance."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, ContractError, NumericError, StiffnessError
from .tensor import Tensor, no_grad

METHODS = ("euler", "midpoint", "rk4", "dopri5")

# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
MIN_STEP = 1e-10


@dataclass
class SamplerConfig:
    method: str = "dopri5"
    steps: int = 16
    rtol: float = 1e-4
    atol: float = 1e-5
    cfg_scale: float = 1.0
    seed: int = 0
    max_steps: int = 10000

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not isinstance(self.steps, int) or self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not (self.rtol > 0 and self.atol > 0):
            raise ConfigError("rtol and atol must be positive")
        if self.cfg_scale < 0:
            raise ConfigError("cfg_scale must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown sampler fields: {sorted(unknown)}")
        return cls(**d)


def _velocity(model, x, t, bundle) -> np.ndarray:
    out = model(x, t, bundle)
    return np.asarray(out.data if isinstance(out, Tensor) else out, dtype=np.float64)


def cfg_velocity(model, x_t, t, bundle, gamma: float) -> np.ndarray:
    """``v(null) + gamma * (v(c) - v(null))``; a single conditional pass at gamma=1."""
    with no_grad():
        if gamma == 1.0:
            return _velocity(model, x_t, t, bundle)
        if bundle is None:
            raise ContractError("guidance scale != 1 needs a condition bundle")
        v_null = _velocity(model, x_t, t, bundle.nulled())
        if gamma == 0.0:
            return v_null
        v_cond = _velocity(model, x_t, t, bundle)
        return v_null + gamma * (v_cond - v_null)


def _check_state(x: np.ndarray, step: int) -> None:
    if not np.isfinite(x).all():
        raise NumericError(f"non-finite state after integration step {step}")


def integrate_fixed(model, x0, bundle, cfg: SamplerConfig) -> np.ndarray:
    """Integrate dx/dt = v from t=0 to t=1 in ``cfg.steps`` uniform steps."""
    if cfg.method not in ("euler", "midpoint", "rk4"):
        raise ContractError(f"integrate_fixed does not handle {cfg.method!r}")
    x = np.array(x0, dtype=np.float64)
    h = 1.0 / cfg.steps
    g = cfg.cfg_scale

    def f(xx, tt):
        return cfg_velocity(model, xx, tt, bundle, g)

    for i in range(cfg.steps):
        t = i * h
        if cfg.method == "euler":
            x = x + h * f(x, t)
        elif cfg.method == "midpoint":
            k1 = f(x, t)
            x = x + h * f(x + 0.5 * h * k1, t + 0.5 * h)
        else:
            k1 = f(x, t)
            k2 = f(x + 0.5 * h * k1, t + 0.5 * h)
            k3 = f(x + 0.5 * h * k2, t + 0.5 * h)
            k4 = f(x + h * k3, t + h)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_state(x, i)
    return x


def integrate_dopri5(model, x0, bundle, cfg: SamplerConfig) -> tuple[np.ndarray, dict]:
    """Adaptive Dormand-Prince 5(4) from t=0 to t=1.

    The error norm is the RMS of ``err_i / (atol + rtol * max(|x_i|, |x_new_i|))``;
    a step is accepted when the norm is <= 1.  Step sizes follow a PI
    controller clamped to [0.2, 5] times the previous step.  The first trial
    step spans the whole interval.
    """
    g = cfg.cfg_scale

    def f(xx, tt):
        return cfg_velocity(model, xx, tt, bundle, g)

    x = np.array(x0, dtype=np.float64)
    t, h = 0.0, 1.0
    k1 = f(x, t)
    nfe, accepted, rejected = 1, 0, 0
    err_prev = 1e-4
    just_rejected = False
    while t < 1.0:
        if accepted + rejected >= cfg.max_steps:
            raise StiffnessError(f"exceeded {cfg.max_steps} steps at t={t:.6g}")
        h = min(h, 1.0 - t)
        if h < MIN_STEP:
            raise StiffnessError(f"step size {h:.3g} underflow at t={t:.6g}")
        ks = [k1]
        for s in range(1, 7):
            xs = x + h * sum(a * k for a, k in zip(_A[s], ks) if a != 0.0)
            ks.append(f(xs, t + _C[s] * h))
        nfe += 6
        x_new = x + h * sum(b * k for b, k in zip(_B5, ks) if b != 0.0)
        err = h * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(x), np.abs(x_new))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if not np.isfinite(err_norm):
            raise NumericError(f"non-finite error estimate at t={t:.6g}")
        if err_norm <= 1.0:
            t = 1.0 if h >= 1.0 - t else t + h
            x = x_new
            k1 = ks[6]
            accepted += 1
            _check_state(x, accepted)
            if err_norm == 0.0:
                factor = MAX_FACTOR
            else:
                factor = SAFETY * err_norm ** (-0.7 / 5) * err_prev ** (0.4 / 5)
                factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
            if just_rejected:
                factor = min(factor, 1.0)
            err_prev = max(err_norm, 1e-4)
            just_rejected = False
            h *= factor
        else:
            rejected += 1
            h *= max(MIN_FACTOR, SAFETY * err_norm ** (-1 / 5))
            just_rejected = True
    return x, {"accepted": accepted, "rejected": rejected, "nfe": nfe}


def draw_noise(shape, seed: int, item: int = 0) -> np.ndarray:
    """Standard-normal start state, keyed by (seed, item) for paired comparisons."""
    return np.random.default_rng([int(seed), int(item)]).standard_normal(shape)


def sample(model, bundle, cfg: SamplerConfig, x0=None, shape=None) -> tuple[np.ndarray, dict]:
    """Integrate from ``x0`` (or seeded noise of ``shape``) with the configured method."""
    if x0 is None:
        if shape is None:
            raise ContractError("need x0 or shape")
        x0 = draw_noise(shape, cfg.seed)
    if cfg.method == "dopri5":
        return integrate_dopri5(model, x0, bundle, cfg)
    n = cfg.steps * {"euler": 1, "midpoint": 2, "rk4": 4}[cfg.method]
    n *= 1 if cfg.cfg_scale == 1.0 else (1 if cfg.cfg_scale == 0.0 else 2)
    return integrate_fixed(model, x0, bundle, cfg), {"accepted": cfg.steps, "rejected": 0, "nfe": n}
