"""Adam optimizer and Xavier initialization over named parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


class NonFiniteGradientError(RuntimeError):
    """A gradient contained NaN/inf; the update step was rejected."""


@dataclass
class AdamState:
    """Per-parameter first/second moments plus hyperparameters."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(params: dict[str, Tensor], lr: float, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p.data)
        state.v[name] = np.zeros_like(p.data)
    return state


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """One bias-corrected Adam update, in place on each parameter's data."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for '{name}'")
        if g.shape != params[name].data.shape:
            raise ValueError(f"gradient shape mismatch for '{name}'")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


def grads_by_name(params: dict[str, Tensor],
                  grad_map: dict[Tensor, np.ndarray]) -> dict[str, np.ndarray]:
    """Re-key a backward() gradient map by parameter name (zeros if untouched)."""
    out = {}
    for name, p in params.items():
        g = grad_map.get(p)
        out[name] = g if g is not None else np.zeros_like(p.data)
    return out


def xavier_init(shape: tuple[int, int], seed) -> Tensor:
    """Uniform [-a, a] with a = sqrt(6 / (fan_in + fan_out)); seeded."""
    rows, cols = shape
    if rows <= 0 or cols <= 0:
        raise ValueError("xavier_init needs positive dimensions")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-a, a, size=(rows, cols)), requires_grad=True)
