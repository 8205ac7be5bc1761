"""Bias-corrected Adam with decoupled weight decay over named tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "init_adam", "adam_update"]


@dataclass
class AdamState:
    """First/second moment accumulators per parameter plus the step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_adam(tensors: dict[str, np.ndarray], keys: list[str] | None = None) -> AdamState:
    keys = list(tensors) if keys is None else keys
    return AdamState(
        m={k: np.zeros_like(tensors[k]) for k in keys},
        v={k: np.zeros_like(tensors[k]) for k in keys},
    )


def adam_update(
    tensors: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam step over ``state``'s keys.

    Weight decay is decoupled: theta -= lr * weight_decay * theta is applied
    separately from the moment-based update, so the decay rate does not
    interact with the adaptive step size.
    """
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for key in state.m:
        g = grads[key]
        if g.shape != tensors[key].shape:
            raise ValueError(f"gradient shape mismatch for {key!r}: {g.shape} vs {tensors[key].shape}")
        state.m[key] = beta1 * state.m[key] + (1.0 - beta1) * g
        state.v[key] = beta2 * state.v[key] + (1.0 - beta2) * g * g
        m_hat = state.m[key] / bc1
        v_hat = state.v[key] / bc2
        tensors[key] -= lr * m_hat / (np.sqrt(v_hat) + eps)
        if weight_decay > 0.0:
            tensors[key] -= lr * weight_decay * tensors[key]
