"""AdamW with decoupled weight decay, and a warmup + cosine learning-rate schedule."""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, MissingGrad, StepOutOfRange


@dataclass(frozen=True)
class Schedule:
    max_lr: float = 5e-6
    min_lr: float = 5e-7
    total_steps: int = 1
    warmup_fraction: float = 0.05

    def __post_init__(self):
        if not 0 < self.min_lr <= self.max_lr:
            raise ConfigError(f"need 0 < min_lr <= max_lr, got {self.min_lr}, {self.max_lr}")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if not 0 <= self.warmup_fraction < 1:
            raise ConfigError("warmup_fraction must lie in [0, 1)")

    @property
    def warmup_steps(self):
        # round away float noise in fraction * steps before taking the ceiling
        w = math.ceil(round(self.warmup_fraction * self.total_steps, 9))
        return min(w, self.total_steps - 1)

    def to_dict(self):
        return asdict(self)


def lr_at(schedule, t):
    """Linear warmup to ``max_lr`` over the first ``W`` steps, then cosine decay to ``min_lr`` at ``T``."""
    T, W = schedule.total_steps, schedule.warmup_steps
    if not 0 <= t <= T:
        raise StepOutOfRange(f"step {t} outside [0, {T}]")
    if t < W:
        return schedule.max_lr * (t + 1) / W
    progress = (t - W) / (T - W)
    return schedule.min_lr + 0.5 * (schedule.max_lr - schedule.min_lr) * (1.0 + math.cos(math.pi * progress))


@dataclass
class OptimState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, named_params, **hyper):
        state = cls(**hyper)
        for name, p in named_params:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def clip_grad_norm(params, max_norm):
    """Scale gradients in place so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(np.square(p.grad, dtype=np.float64))) for p in params if p.grad is not None))
    if max_norm is not None and max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-6)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * np.asarray(scale, dtype=p.grad.dtype)
    return total


def adamw_step(named_params, state, lr):
    """One in-place AdamW update; gradients are cleared afterwards."""
    named_params = list(named_params)
    for name, p in named_params:
        if p.grad is None:
            raise MissingGrad(f"parameter {name} has no gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in named_params:
        g = p.grad
        dt = p.data.dtype
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        data = p.data * (1.0 - lr * state.weight_decay)
        data = data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = data.astype(dt, copy=False)
        p.grad = None
