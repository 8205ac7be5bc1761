"""Sliding activation buffer and streaming descriptor extraction.

One buffer per activation stream: rows arrive one per generation step, the
buffer keeps the most recent N of them (at most N * D scalars), and every
stride-th step with a full window emits a descriptor vector. Replaying the
same stream reproduces the series bit for bit.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .features import FeatureVector, ActivationWindow, descriptor_vector

__all__ = ["SlidingBuffer", "DescriptorSeries", "descriptor_series"]


class SlidingBuffer:
    """Ring buffer of the most recent ``capacity`` activation vectors."""

    def __init__(self, capacity: int, width: int) -> None:
        if capacity < 2:
            raise ValueError(f"capacity must be >= 2, got {capacity}")
        if width < 2:
            raise ValueError(f"width must be >= 2, got {width}")
        self.capacity = capacity
        self.width = width
        self.rows: deque[np.ndarray] = deque(maxlen=capacity)
        self.step_counter = 0

    def push(self, v: np.ndarray) -> "SlidingBuffer":
        """Append one activation vector, evicting the oldest when full."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.width,):
            raise ValueError(
                f"expected a vector of width {self.width}, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("activation vector contains non-finite entries")
        self.rows.append(v)
        self.step_counter += 1
        return self

    @property
    def full(self) -> bool:
        return self.step_counter >= self.capacity

    def current_window(self) -> ActivationWindow | None:
        """The last N rows as an N x D window, or None while underfull."""
        if not self.full:
            return None
        return ActivationWindow(np.stack(self.rows))


@dataclass
class DescriptorSeries:
    """Ordered descriptor vectors emitted every ``stride`` steps."""

    vectors: list[FeatureVector]
    stride: int = 1

    def __post_init__(self) -> None:
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        idx = [v.window_index for v in self.vectors]
        if any(b - a != self.stride for a, b in zip(idx, idx[1:])):
            raise ValueError("window_index must increase by exactly the stride")

    def __len__(self) -> int:
        return len(self.vectors)

    def feature_matrix(self) -> np.ndarray:
        """Stack the vectors into a (T, 22) array."""
        return np.stack([v.values for v in self.vectors])


def descriptor_series(
    source: Iterable[np.ndarray],
    capacity: int,
    stride: int = 1,
    fit_bins: int = 64,
    center: bool = False,
) -> DescriptorSeries:
    """Consume an activation stream and emit the descriptor time series.

    The window advances on every step; evaluation happens on every stride-th
    step once the buffer is full, so a stream of T >= N steps emits
    floor((T - N) / stride) + 1 vectors.

    Raises:
        ValueError: naming the step index, if the vector width changes
            mid-stream.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    buffer: SlidingBuffer | None = None
    vectors: list[FeatureVector] = []
    for step, row in enumerate(source, start=1):
        row = np.asarray(row, dtype=np.float64)
        if buffer is None:
            buffer = SlidingBuffer(capacity, width=row.shape[0])
        try:
            buffer.push(row)
        except ValueError as exc:
            raise ValueError(f"at stream step {step}: {exc}") from exc
        if buffer.full and (buffer.step_counter - capacity) % stride == 0:
            window = buffer.current_window()
            assert window is not None
            vectors.append(
                descriptor_vector(
                    window,
                    fit_bins=fit_bins,
                    window_index=buffer.step_counter,
                    center=center,
                )
            )
    return DescriptorSeries(vectors=vectors, stride=stride)
