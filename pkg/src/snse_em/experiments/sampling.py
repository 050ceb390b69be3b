"""Per-sample work unit: coupled coarse and reference trajectories on one Brownian path.

Every statistic of the studies and probes is a function of independent
per-sample records. A record is computed by :func:`run_sample` from
``(cfg, index)`` alone, and :func:`map_samples` returns records sorted by
sample index, so aggregated results do not depend on the worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..noise import rnoise
from ..solver import run_trajectory
from ..spectral import half_operators, rinner, rsquare, to_half
from ..wiener import WienerPath, coarsen, sample_path
from .config import HOLDER_LAGS, HOLDER_RESOLUTION, StudyConfig

ERRORS = "errors"
STABILITY = "stability"
REFERENCE = "reference"
MARTINGALE = "martingale"
ALL_PARTS = frozenset({ERRORS, STABILITY, REFERENCE, MARTINGALE})


@dataclass
class SampleRecord:
    """Scalar outputs of one sample; arrays are indexed like ``cfg.coarse_steps``."""

    index: int
    seed: int
    fine_sum: float
    max_error: np.ndarray | None = None        # max_n ||e^n||, n = 0..M
    energy: np.ndarray | None = None           # k sum_{n>=1} ||grad e^n||^2
    pressure: np.ndarray | None = None         # ||P_ref(T) - k sum p^n||
    stab_max: np.ndarray | None = None         # max_n ||grad u^n||^2 + nu k sum ||A u^n||^2
    stab_incr: np.ndarray | None = None        # sum_n ||grad (u^n - u^{n-1})||^2
    holder: np.ndarray | None = None           # per lag: mean over starts of ||u(t+h) - u(t)||_V^2
    l2sq_half: float | None = None             # ||u_ref(T/2)||^2
    l2sq_final: float | None = None            # ||u_ref(T)||^2
    martingale: np.ndarray | None = None       # M_l after each checkpoint
    picard_max: int = 0


def holder_available(cfg: StudyConfig) -> bool:
    return cfg.reference_steps % HOLDER_RESOLUTION == 0


def martingale_steps(cfg: StudyConfig) -> tuple[int, ...]:
    """Partial-sum lengths l at which M_l is reported (coarsest ladder entry)."""
    mc = cfg.coarse_steps[0]
    c = cfg.martingale_checkpoints
    return tuple(sorted({max(1, round(mc * (j + 1) / c)) for j in range(c)}))


def check_coupling(fine: WienerPath, coarse: WienerPath):
    """Coarse and fine increments must come from the same generated path."""
    if coarse is not fine and coarse.source is not fine.fine_increments:
        raise RuntimeError("coarse path is not derived from the sample's fine path")
    total_f = math.fsum(fine.increments)
    total_c = math.fsum(coarse.increments)
    scale = math.fsum(abs(x) for x in fine.increments)
    if abs(total_f - total_c) > 1e-13 * max(scale, 1e-300) * math.sqrt(fine.steps):
        raise RuntimeError(f"increment checksum mismatch: {total_f!r} vs {total_c!r}")


class _MartingaleObserver:
    """Accumulates Z_n along the fine run for one coarse trajectory.

    Z_n = 2 ||G(u(t_n)) - G(u^n)||^2 (dW_{n+1}^2 - k)
          + (sum_j (G(u(s_j)) - G(u^n)) dW_j, u(t_n) - u^n),
    the integral being taken over the fine steps inside [t_n, t_{n+1}).
    """

    def __init__(self, cfg: StudyConfig, coarse_states: Sequence[np.ndarray], coarse_path: WienerPath):
        self.hops = half_operators(cfg.grid)
        self.model = cfg.model
        self.ratio = cfg.reference_steps // coarse_path.steps
        self.k = coarse_path.step
        self.dw = coarse_path.increments
        self.states = coarse_states
        self.z = np.zeros(coarse_path.steps)
        self.g_coarse = [rnoise(self.model, u, self.hops) for u in coarse_states[:-1]]

    def __call__(self, j, u, g, dw, u_next):
        n, r = divmod(j, self.ratio)
        if r == 0:
            self.dg = g - self.g_coarse[n]
            self.e = u - self.states[n]
            self.acc = np.zeros_like(g)
        self.acc += (g - self.g_coarse[n]) * dw
        if r == self.ratio - 1:
            dgsq = rsquare(self.dg, self.hops)
            self.z[n] = 2.0 * dgsq * (self.dw[n] ** 2 - self.k) + rinner(self.acc, self.e, self.hops)


def _grid_times(cfg: StudyConfig, fine_indices: Iterable[int]) -> list[float]:
    kf = cfg.horizon / cfg.reference_steps
    return [i * kf for i in sorted(set(fine_indices))]


def run_sample(cfg: StudyConfig, index: int, parts: frozenset = ALL_PARTS) -> SampleRecord:
    hops = half_operators(cfg.grid)
    model = cfg.model
    seed = cfg.sample_seed(index)
    mf = cfg.reference_steps
    fine = sample_path(seed, cfg.horizon, mf)
    rec = SampleRecord(index=index, seed=seed, fine_sum=float(fine.values()[-1]))
    u0 = cfg.initial_velocity(index)

    need_coarse = bool(parts & {ERRORS, STABILITY, MARTINGALE})
    need_ref = bool(parts & {ERRORS, REFERENCE, MARTINGALE})
    ladder = cfg.coarse_steps if parts & {ERRORS, STABILITY} else cfg.coarse_steps[:1]

    coarse = {}
    if need_coarse:
        for m in ladder:
            path = coarsen(fine, mf // m)
            check_coupling(fine, path)
            # every coarse state is kept when errors against the reference are needed
            times = path.times() if parts & {ERRORS, MARTINGALE} else ()
            coarse[m] = (path, run_trajectory(u0, path, cfg.params(m), model, times))
            rec.picard_max = max(rec.picard_max, int(coarse[m][1].picard_iters.max()))

    if STABILITY in parts:
        g0 = rsquare(to_half(u0.coeffs), hops, 1)
        smax, sinc = [], []
        for m in cfg.coarse_steps:
            tr = coarse[m][1]
            k = cfg.horizon / m
            smax.append(max(g0, float(np.max(tr.h1**2))) + cfg.viscosity * k * float(np.sum(tr.h2**2)))
            sinc.append(float(np.sum(tr.increment_h1**2)))
        rec.stab_max, rec.stab_incr = np.array(smax), np.array(sinc)

    if not need_ref:
        return rec

    fine_idx: set[int] = {0, mf}
    if parts & {ERRORS, MARTINGALE}:
        for m in ladder:
            fine_idx.update(range(0, mf + 1, mf // m))
    if REFERENCE in parts:
        if mf % 2 == 0:
            fine_idx.add(mf // 2)
        if holder_available(cfg):
            fine_idx.update(range(0, mf + 1, mf // HOLDER_RESOLUTION))
    times = _grid_times(cfg, fine_idx)

    observer = None
    if MARTINGALE in parts:
        m0 = cfg.coarse_steps[0]
        path0, tr0 = coarse[m0]
        states = [to_half(s.coeffs) for s in tr0.snapshots]
        observer = _MartingaleObserver(cfg, states, path0)

    ref = run_trajectory(u0, fine, cfg.params(mf), model, times, observer)
    rec.picard_max = max(rec.picard_max, int(ref.picard_iters.max()))
    snap = {n: to_half(v.coeffs) for n, v in zip(ref.checkpoint_steps, ref.snapshots)}
    p_ref = to_half(ref.final_pressure_sum.coeffs)

    if ERRORS in parts:
        max_err, energy, pressure = [], [], []
        for m in cfg.coarse_steps:
            r = mf // m
            tr = coarse[m][1]
            k = cfg.horizon / m
            e2, g2 = [], []
            for n in range(m + 1):
                e = snap[n * r] - to_half(tr.snapshots[n].coeffs)
                e2.append(rsquare(e, hops))
                g2.append(rsquare(e, hops, 1))
            max_err.append(math.sqrt(max(e2)))
            energy.append(k * math.fsum(g2[1:]))
            dp = p_ref - to_half(tr.final_pressure_sum.coeffs)
            pressure.append(math.sqrt(rsquare(dp, hops)))
        rec.max_error, rec.energy, rec.pressure = np.array(max_err), np.array(energy), np.array(pressure)

    if REFERENCE in parts:
        rec.l2sq_final = rsquare(snap[mf], hops)
        if mf % 2 == 0:
            rec.l2sq_half = rsquare(snap[mf // 2], hops)
        if holder_available(cfg):
            stride = mf // HOLDER_RESOLUTION
            h = []
            for lag in HOLDER_LAGS:
                vals = [rsquare(snap[(j + lag) * stride] - snap[j * stride], hops, 1)
                        for j in range(HOLDER_RESOLUTION - lag + 1)]
                h.append(math.fsum(vals) / len(vals))
            rec.holder = np.array(h)

    if MARTINGALE in parts:
        partial = np.cumsum(observer.z)
        rec.martingale = np.array([partial[l - 1] for l in martingale_steps(cfg)])

    return rec


def _work(args):
    cfg, index, parts = args
    return run_sample(cfg, index, parts)


def map_samples(cfg: StudyConfig, parts: frozenset = ALL_PARTS, threads: int = 1,
                indices: Sequence[int] | None = None) -> list[SampleRecord]:
    """Run samples with ``threads`` worker processes; output sorted by sample index."""
    indices = list(range(cfg.samples) if indices is None else indices)
    threads = max(1, int(threads))
    tasks = [(cfg, i, frozenset(parts)) for i in indices]
    if threads == 1 or len(tasks) <= 1:
        records = [_work(t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (4 * threads))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_work, tasks, chunksize=chunk))
    records.sort(key=lambda r: r.index)
    return records


def default_threads() -> int:
    return os.cpu_count() or 1
