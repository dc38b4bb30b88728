"""Adam optimizer and a finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, zero_grads

__all__ = ["AdamState", "adam_step", "grad_check"]


class MissingGradError(ValueError):
    """A parameter reached the optimizer without a populated gradient."""


@dataclass
class AdamState:
    """First/second moment accumulators per named parameter plus a step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
            step=0,
        )


def adam_step(
    params: dict[str, Tensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One standard bias-corrected Adam update, in place on ``params``."""
    if lr <= 0:
        raise ValueError(f"adam_step: lr must be positive, got {lr}")
    for name, p in params.items():
        if p.grad is None:
            raise MissingGradError(f"adam_step: parameter {name!r} has no gradient")
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = p.grad
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


def grad_check(f, params: list[Tensor], step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps the parameter list to a scalar Tensor and must be deterministic.
    Returns max over all coordinates of |analytic - central| / (|central| + 1e-12).
    """
    if step <= 0:
        raise ValueError(f"grad_check: step must be positive, got {step}")
    zero_grads(params)
    out = f(params)
    if not np.isfinite(out.data).all():
        raise ValueError("grad_check: f returned a non-finite value")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ag in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = ag.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            hi = f(params).item()
            flat[j] = orig - step
            lo = f(params).item()
            flat[j] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise ValueError("grad_check: f returned a non-finite value under perturbation")
            central = (hi - lo) / (2.0 * step)
            rel = abs(aflat[j] - central) / (abs(central) + 1e-12)
            worst = max(worst, rel)
    return worst
