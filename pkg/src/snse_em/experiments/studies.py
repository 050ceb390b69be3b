"""Strong-error and pressure-error convergence studies."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..solver import PicardNonconvergence
from .config import StudyConfig
from .rates import RateFit, fit_rate
from .sampling import ALL_PARTS, ERRORS, SampleRecord, map_samples

log = logging.getLogger(__name__)

NAN_FIT = RateFit(math.nan, math.nan, math.nan)


class StudyFailure(RuntimeError):
    """A study could not be completed (e.g. persistent Picard nonconvergence)."""


def format_number(x: float) -> str:
    """17 significant digits, locale independent."""
    return format(float(x), ".17g")


def order_label(prefix: str, value: float) -> str:
    return f"{prefix}{format(value, 'g')}"


@dataclass
class ConvergenceTable:
    """Error statistics per step size, rows sorted by k descending."""

    ks: np.ndarray
    n_samples: int
    columns: dict[str, np.ndarray]
    std_errors: dict[str, np.ndarray] = field(default_factory=dict)
    csv_columns: tuple[str, ...] | None = None

    def __post_init__(self):
        order = np.argsort(-np.asarray(self.ks, dtype=float), kind="stable")
        self.ks = np.asarray(self.ks, dtype=float)[order]
        self.columns = {k: np.asarray(v, dtype=float)[order] for k, v in self.columns.items()}
        self.std_errors = {k: np.asarray(v, dtype=float)[order] for k, v in self.std_errors.items()}
        for name, v in self.columns.items():
            if np.any(v < 0):
                raise ValueError(f"statistic {name} has negative entries")

    def fit(self, name: str) -> RateFit:
        vals = self.columns[name]
        if len(vals) < 3 or not np.all(vals > 0):
            return NAN_FIT
        return fit_rate(self.ks, vals)

    @property
    def fits(self) -> dict[str, RateFit]:
        return {name: self.fit(name) for name in self.columns}

    def row_dicts(self) -> list[dict]:
        return [{"k": k, "n_samples": self.n_samples, **{n: v[i] for n, v in self.columns.items()}}
                for i, k in enumerate(self.ks)]

    def to_csv(self, columns: tuple[str, ...] | None = None) -> str:
        names = list(columns or self.csv_columns or self.columns)
        lines = [",".join(["k", "n_samples", *names])]
        for i, k in enumerate(self.ks):
            lines.append(",".join([format_number(k), str(self.n_samples),
                                   *(format_number(self.columns[n][i]) for n in names)]))
        fits = self.fits
        lines.append(",".join(["slope", "", *(format_number(fits[n].slope) for n in names)]))
        lines.append(",".join(["ci", "", *(format_number(fits[n].ci) for n in names)]))
        return "\n".join(lines) + "\n"


def _moment_root(x: np.ndarray, a: float) -> tuple[float, float]:
    """(E[x^a])^(1/a) and its delta-method standard error."""
    xa = x**a
    mean = float(np.mean(xa))
    if mean == 0:
        return 0.0, 0.0
    se_mean = float(np.std(xa, ddof=1)) / math.sqrt(len(x))
    stat = mean ** (1.0 / a)
    return stat, stat * se_mean / (a * mean)


def velocity_columns(cfg: StudyConfig) -> tuple[str, ...]:
    """CSV columns of the converge table."""
    return (tuple(order_label("err_L2_q", q) for q in cfg.q_orders)
            + tuple(order_label("err_L2_m", m) for m in cfg.m_orders)
            + ("err_energy", "err_path_p95"))


def tables_from_records(cfg: StudyConfig, records: list[SampleRecord]) -> tuple[ConvergenceTable, ConvergenceTable]:
    """(velocity/energy table, pressure table) from per-sample error records."""
    ks = np.array([cfg.horizon / m for m in cfg.coarse_steps])
    err = np.array([r.max_error for r in records])         # (N, nM)
    energy = np.array([r.energy for r in records])
    pressure = np.array([r.pressure for r in records])
    n = len(records)

    cols, ses = {}, {}
    labels = [order_label("err_L2_q", q) for q in cfg.q_orders] + [order_label("err_L2_m", m) for m in cfg.m_orders]
    for label, a in zip(labels, cfg.velocity_orders):
        pairs = [_moment_root(err[:, j], a) for j in range(len(ks))]
        cols[label] = [p[0] for p in pairs]
        ses[label] = [p[1] for p in pairs]
    # (E[max ||e||^2])^(1/2): not a CSV column, kept for the second-moment rate
    pairs = [_moment_root(err[:, j], 2.0) for j in range(len(ks))]
    cols["err_L2_rms"], ses["err_L2_rms"] = [p[0] for p in pairs], [p[1] for p in pairs]
    pairs = [_moment_root(np.sqrt(energy[:, j]), 2.0) for j in range(len(ks))]
    cols["err_energy"], ses["err_energy"] = [p[0] for p in pairs], [p[1] for p in pairs]
    cols["err_path_p95"] = [float(np.percentile(err[:, j], 95)) for j in range(len(ks))]
    velocity = ConvergenceTable(ks, n, cols, ses, csv_columns=velocity_columns(cfg))

    pairs = [_moment_root(pressure[:, j], 2.0) for j in range(len(ks))]
    ptable = ConvergenceTable(ks, n, {"err_pressure": [p[0] for p in pairs]},
                              {"err_pressure": [p[1] for p in pairs]})
    return velocity, ptable


def synthetic_records(cfg: StudyConfig) -> list[SampleRecord]:
    """Injected errors e(k) = c k^rate for every sample, bypassing the solver."""
    ks = np.array([cfg.horizon / m for m in cfg.coarse_steps])
    e = cfg.synthetic_constant * ks**cfg.synthetic_rate
    return [SampleRecord(index=i, seed=cfg.sample_seed(i), fine_sum=0.0,
                         max_error=e.copy(), energy=e**2, pressure=e.copy())
            for i in range(cfg.samples)]


@dataclass
class StudyResult:
    config: StudyConfig
    records: list[SampleRecord]
    velocity: ConvergenceTable
    pressure: ConvergenceTable
    retries: int = 0
    wall_seconds: float = 0.0
    synthetic: bool = False


def run_with_retries(cfg: StudyConfig, parts=ALL_PARTS, threads: int = 1):
    """map_samples, halving the maximal step and retrying on Picard nonconvergence.

    Returns (config actually used, records, retries).
    """
    current = cfg
    for attempt in range(cfg.max_retries + 1):
        try:
            return current, map_samples(current, parts, threads), attempt
        except PicardNonconvergence as exc:
            log.warning("attempt %d failed (%s); halving the maximal step", attempt, exc)
            last = exc
            current = current.with_halved_step()
    raise StudyFailure(f"study failed after {cfg.max_retries} retries with halved steps: {last}") from last


def run_study(cfg: StudyConfig, threads: int = 1, parts=frozenset({ERRORS})) -> StudyResult:
    """Coupled-path Monte Carlo study; ``parts`` may add probe data to the records."""
    t0 = time.perf_counter()
    if cfg.synthetic_rate is not None:
        used, records, retries = cfg, synthetic_records(cfg), 0
    else:
        used, records, retries = run_with_retries(cfg, frozenset(parts) | {ERRORS}, threads)
    velocity, pressure = tables_from_records(used, records)
    return StudyResult(used, records, velocity, pressure, retries, time.perf_counter() - t0,
                       cfg.synthetic_rate is not None)


def strong_error_study(cfg: StudyConfig, threads: int = 1) -> ConvergenceTable:
    return run_study(cfg, threads).velocity


def pressure_error_study(cfg: StudyConfig, threads: int = 1) -> ConvergenceTable:
    return run_study(cfg, threads).pressure
