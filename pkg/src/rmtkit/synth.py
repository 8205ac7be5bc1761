"""Synthetic fixtures: spiked activation streams and a mixture classification task.

"Structured" streams start with a strongly spiked covariance whose signal
strengths decay linearly to zero, so the spectrum collapses onto the noise
bulk over time; "noise" streams are stationary isotropic Gaussians. The
classifier task is a balanced Gaussian mixture with well-separated
orthogonal class means.
"""

from __future__ import annotations

import numpy as np

from .stream import DescriptorSeries, descriptor_series

__all__ = [
    "noise_sequence",
    "structured_sequence",
    "detection_dataset",
    "gaussian_mixture_task",
]


def _orthonormal_directions(rng: np.random.Generator, d: int, k: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return q.T  # (k, d) orthonormal rows


def noise_sequence(
    n_steps: int,
    width: int,
    sigma2: float = 1.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Stationary isotropic activation stream, one row per step."""
    rng = np.random.default_rng() if rng is None else rng
    return np.sqrt(sigma2) * rng.standard_normal((n_steps, width))


def structured_sequence(
    n_steps: int,
    width: int,
    sigma2: float = 1.0,
    n_spikes: int = 3,
    theta0: float = 8.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Spiked stream decaying to pure noise.

    Step t draws from a spiked Gaussian whose population variance along
    spike direction i starts at theta0 * sigma2 / sqrt(i + 1) and
    interpolates linearly down to sigma2 by the final step, so the covariance
    collapses onto the isotropic noise floor over the sequence.
    """
    rng = np.random.default_rng() if rng is None else rng
    dirs = _orthonormal_directions(rng, width, n_spikes)
    base = theta0 * sigma2 / np.sqrt(np.arange(n_spikes) + 1.0)
    out = np.sqrt(sigma2) * rng.standard_normal((n_steps, width))
    decay = 1.0 - np.arange(n_steps) / max(n_steps - 1, 1)
    coeffs = rng.standard_normal((n_steps, n_spikes))
    for i in range(n_spikes):
        theta_t = sigma2 + (base[i] - sigma2) * decay
        amp = np.sqrt(theta_t) - np.sqrt(sigma2)
        out += (amp * coeffs[:, i])[:, None] * dirs[i][None, :]
    return out


def detection_dataset(
    n_sequences: int,
    n_steps: int = 48,
    width: int = 24,
    capacity: int = 16,
    stride: int = 2,
    fit_bins: int = 64,
    sigma2: float = 1.0,
    n_spikes: int = 3,
    theta0: float = 8.0,
    seed: int = 0,
) -> list[tuple[DescriptorSeries, int]]:
    """Balanced labeled descriptor series: structured (1) vs noise (0)."""
    rng = np.random.default_rng(seed)
    dataset: list[tuple[DescriptorSeries, int]] = []
    for idx in range(n_sequences):
        label = idx % 2
        if label == 1:
            rows = structured_sequence(n_steps, width, sigma2, n_spikes, theta0, rng)
        else:
            rows = noise_sequence(n_steps, width, sigma2, rng)
        series = descriptor_series(rows, capacity=capacity, stride=stride, fit_bins=fit_bins)
        dataset.append((series, label))
    return dataset


def gaussian_mixture_task(
    n_classes: int = 10,
    dim: int = 32,
    n_train: int = 4000,
    n_val: int = 1000,
    separation: float = 4.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Balanced k-class Gaussian mixture with orthogonal means.

    Returns (x_train, y_train, x_val, y_val); unit isotropic class noise, so
    ``separation`` directly controls the Bayes error.
    """
    if n_classes > dim:
        raise ValueError(f"need dim >= n_classes for orthogonal means, got {dim} < {n_classes}")
    rng = np.random.default_rng(seed)
    means = separation * _orthonormal_directions(rng, dim, n_classes)

    def _draw(n: int) -> tuple[np.ndarray, np.ndarray]:
        y = np.tile(np.arange(n_classes), n // n_classes + 1)[:n]
        rng.shuffle(y)
        x = means[y] + rng.standard_normal((n, dim))
        return x, y

    x_train, y_train = _draw(n_train)
    x_val, y_val = _draw(n_val)
    return x_train, y_train, x_val, y_val
