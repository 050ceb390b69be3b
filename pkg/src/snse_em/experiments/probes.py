"""Monte Carlo probes of stability, exponential moments, time regularity and the
martingale structure of the error recursion.

Each probe accepts precomputed sample records (from a study run with the
matching parts) or generates its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..spectral import ConfigurationError
from .config import HOLDER_LAGS, HOLDER_RESOLUTION, StudyConfig
from .rates import RateFit, fit_rate
from .sampling import MARTINGALE, REFERENCE, STABILITY, SampleRecord, holder_available, martingale_steps
from .studies import run_with_retries

STABILITY_VARIATION = 0.25
EXP_MOMENT_VARIATION = 0.10
HOLDER_MIN_SLOPE = 0.35
MARTINGALE_MAX_Z = 3.0


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(len(x)))


def _rel_change(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(b - a) / max(abs(a), abs(b))


def _records(cfg, records, parts, threads):
    """(config actually used, records); a retry may have refined the ladder."""
    if records is None:
        cfg, records, _ = run_with_retries(cfg, frozenset(parts), threads)
    return cfg, records


# ---------------------------------------------------------------------------


@dataclass
class StabilityReport:
    ks: np.ndarray
    max_energy: np.ndarray        # E[max_n ||u^n||_V^2 + nu k sum ||A u^n||^2]
    max_energy_se: np.ndarray
    increments: np.ndarray        # E[sum_n ||u^n - u^{n-1}||_V^2]
    increments_se: np.ndarray
    variation: np.ndarray         # relative change of max_energy between adjacent k
    increment_growth: np.ndarray  # relative increase of increments between adjacent k (<= 0 if shrinking)

    @property
    def bounded(self) -> bool:
        # the increment sum carries an O(k) deterministic part, so only growth counts against it
        finite = np.all(np.isfinite(self.max_energy)) and np.all(np.isfinite(self.increments))
        return bool(finite and np.all(self.variation < STABILITY_VARIATION)
                    and np.all(self.increment_growth < STABILITY_VARIATION))

    passed = bounded


def stability_probe(cfg: StudyConfig, threads: int = 1, records: list[SampleRecord] | None = None) -> StabilityReport:
    cfg, records = _records(cfg, records, {STABILITY}, threads)
    a = np.array([r.stab_max for r in records])
    b = np.array([r.stab_incr for r in records])
    stats_a = [_mean_se(a[:, j]) for j in range(a.shape[1])]
    stats_b = [_mean_se(b[:, j]) for j in range(b.shape[1])]
    ma, mb = np.array([s[0] for s in stats_a]), np.array([s[0] for s in stats_b])
    var = np.array([_rel_change(ma[j], ma[j + 1]) for j in range(len(ma) - 1)])
    growth = np.array([(mb[j + 1] - mb[j]) / mb[j] if mb[j] > 0 else (math.inf if mb[j + 1] > 0 else 0.0)
                       for j in range(len(mb) - 1)])
    return StabilityReport(np.array([cfg.horizon / m for m in cfg.coarse_steps]),
                           ma, np.array([s[1] for s in stats_a]), mb, np.array([s[1] for s in stats_b]), var, growth)


# ---------------------------------------------------------------------------


@dataclass
class ExpMomentReport:
    sigma: float
    sigma0: float
    times: tuple[float, ...]
    estimate: np.ndarray          # N samples
    estimate_half: np.ndarray     # first N/2 samples
    n_samples: int

    @property
    def variation(self) -> np.ndarray:
        return np.array([_rel_change(a, b) for a, b in zip(self.estimate, self.estimate_half)])

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.estimate)))

    @property
    def stable(self) -> bool:
        return self.finite and bool(np.all(self.variation < EXP_MOMENT_VARIATION))

    passed = stable


def exp_moment_probe(cfg: StudyConfig, sigma: float | None = None, threads: int = 1,
                     records: list[SampleRecord] | None = None) -> ExpMomentReport:
    """E[exp(sigma ||u(t)||^2)] at t = T/2 and T on the reference discretization."""
    sigma0 = cfg.sigma0
    sigma = cfg.exp_sigma if sigma is None else float(sigma)
    if not 0 <= sigma <= sigma0:
        raise ConfigurationError(f"sigma: {sigma} lies outside [0, sigma_0 = 1/(16 K_G^2) = {sigma0!r}]")
    cfg, records = _records(cfg, records, {REFERENCE}, threads)
    columns, times = [], []
    if records[0].l2sq_half is not None:
        columns.append([r.l2sq_half for r in records])
        times.append(cfg.horizon / 2)
    columns.append([r.l2sq_final for r in records])
    times.append(cfg.horizon)
    vals = np.exp(sigma * np.array(columns))          # (n_times, N)
    half = max(1, len(records) // 2)
    return ExpMomentReport(sigma, sigma0, tuple(times), vals.mean(axis=1), vals[:, :half].mean(axis=1), len(records))


# ---------------------------------------------------------------------------


@dataclass
class HolderReport:
    lags: np.ndarray
    increments: np.ndarray        # (E ||u(t+h) - u(t)||_V^2)^(1/2)
    fit: RateFit

    @property
    def slope(self) -> float:
        return self.fit.slope

    @property
    def passed(self) -> bool:
        return bool(self.fit.slope >= HOLDER_MIN_SLOPE)


def holder_probe(cfg: StudyConfig, threads: int = 1, records: list[SampleRecord] | None = None) -> HolderReport:
    if not holder_available(cfg):
        raise ConfigurationError(f"reference_multiple: M_max*R = {cfg.reference_steps} must be a multiple of "
                                 f"{HOLDER_RESOLUTION} for the lag ladder T/64 ... T/4")
    cfg, records = _records(cfg, records, {REFERENCE}, threads)
    h = np.array([r.holder for r in records])
    stat = np.sqrt(h.mean(axis=0))
    lags = np.array([lag * cfg.horizon / HOLDER_RESOLUTION for lag in HOLDER_LAGS])
    fit = fit_rate(lags, stat) if np.all(stat > 0) else RateFit(math.nan, math.nan, math.nan)
    return HolderReport(lags, stat, fit)


# ---------------------------------------------------------------------------


@dataclass
class MartingaleReport:
    steps: tuple[int, ...]
    times: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    n_samples: int

    @property
    def normalized(self) -> np.ndarray:
        out = np.zeros_like(self.mean)
        nz = self.std_error > 0
        out[nz] = np.abs(self.mean[nz]) / self.std_error[nz]
        out[~nz & (self.mean != 0)] = math.inf
        return out

    @property
    def passed(self) -> bool:
        return bool(np.all(self.normalized <= MARTINGALE_MAX_Z))


def martingale_probe(cfg: StudyConfig, threads: int = 1, records: list[SampleRecord] | None = None) -> MartingaleReport:
    """Sample mean of M_l, normalized by its standard error, on the coarsest ladder entry."""
    cfg, records = _records(cfg, records, {MARTINGALE}, threads)
    m = np.array([r.martingale for r in records])
    stats = [_mean_se(m[:, j]) for j in range(m.shape[1])]
    steps = martingale_steps(cfg)
    k = cfg.horizon / cfg.coarse_steps[0]
    return MartingaleReport(steps, np.array(steps) * k, np.array([s[0] for s in stats]),
                            np.array([s[1] for s in stats]), len(records))
