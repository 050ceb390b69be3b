"""Seed-reproducible scalar Brownian increments with exact coarse/fine coupling.

Increments are drawn from numpy's Philox4x64 counter-based generator keyed by
the 64-bit path seed, so a path depends only on (seed, T, M) and distinct
sample paths can be generated in any order or process.

Coarsening always sums the *generated* (finest) increments left to right.
``coarsen(coarsen(p, 2), 2)`` therefore reproduces ``coarsen(p, 4)`` bit for
bit, and every coarse path in a study shares one underlying Brownian sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    # bijective finalizer on 64-bit words
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def spawn_sample_stream(master_seed: int, sample_index: int) -> int:
    """Seed for sample ``sample_index`` of a study keyed by ``master_seed``.

    splitmix64(master + (index + 1) * golden) mod 2^64. The golden-ratio
    increment is odd and the finalizer is a bijection, so for a fixed master
    seed the map index -> seed is injective on [0, 2^64).
    """
    return _splitmix64(int(master_seed) + (int(sample_index) + 1) * _GOLDEN)


@dataclass(frozen=True, eq=False)
class WienerPath:
    seed: int
    horizon: float
    steps: int
    increments: np.ndarray
    # finest generated increments and the coarsening factor relative to them
    source: np.ndarray | None = None
    factor: int = 1

    @property
    def step(self) -> float:
        return self.horizon / self.steps

    @property
    def fine_increments(self) -> np.ndarray:
        return self.increments if self.source is None else self.source

    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.step

    def values(self) -> np.ndarray:
        """W(t_n), n = 0..M, accumulated left to right from W(0) = 0."""
        return np.concatenate(([0.0], np.cumsum(self.increments)))


def sample_path(seed: int, horizon: float, steps: int) -> WienerPath:
    """M independent N(0, T/M) increments."""
    if int(steps) != steps or steps < 1:
        raise ValueError(f"steps must be a positive integer, got {steps}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    gen = np.random.Generator(np.random.Philox(key=int(seed) & _MASK64))
    dw = gen.standard_normal(int(steps)) * math.sqrt(horizon / steps)
    dw.setflags(write=False)
    return WienerPath(int(seed) & _MASK64, float(horizon), int(steps), dw)


def _sum_blocks(fine: np.ndarray, r: int) -> np.ndarray:
    blocks = fine.reshape(-1, r)
    acc = blocks[:, 0].copy()
    for j in range(1, r):
        acc += blocks[:, j]
    return acc


def coarsen(path: WienerPath, factor: int) -> WienerPath:
    """Sum consecutive blocks of ``factor`` increments (step becomes factor * k)."""
    if int(factor) != factor or factor < 1:
        raise ValueError(f"coarsening factor must be a positive integer, got {factor}")
    factor = int(factor)
    if path.steps % factor:
        raise ValueError(f"factor {factor} does not divide the step count {path.steps}")
    if factor == 1:
        return path
    fine = path.fine_increments
    total = path.factor * factor
    dw = _sum_blocks(fine, total)
    dw.setflags(write=False)
    return WienerPath(path.seed, path.horizon, path.steps // factor, dw, source=fine, factor=total)
