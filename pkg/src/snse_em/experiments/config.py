"""Study configuration shared by the convergence studies and the probes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..noise import NoiseKind, NoiseModel
from ..solver import SolverParams
from ..spectral import ConfigurationError, GridSpec, VectorField, taylor_green
from ..wiener import spawn_sample_stream

INITIAL_KINDS = ("taylor_green", "zero")

# fine-grid resolution of the lag ladder T/64, ..., T/4 used by the Hoelder probe
HOLDER_RESOLUTION = 64
HOLDER_LAGS = (1, 2, 4, 8, 16)

# stream tag for the per-sample random initial amplitude; disjoint from the path seed
_AMPLITUDE_TAG = 0xA5A5_0001


def _fail(key: str, msg: str):
    raise ConfigurationError(f"{key}: {msg}")


@dataclass(frozen=True)
class StudyConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    viscosity: float = 0.5
    horizon: float = 0.25
    noise_kind: NoiseKind = NoiseKind.SINE
    noise_strength: float = 0.5
    coarse_steps: tuple[int, ...] = (16, 32, 64, 128)
    reference_multiple: int = 16
    samples: int = 200
    master_seed: int = 0
    q_orders: tuple[float, ...] = (0.5, 0.9)
    m_orders: tuple[float, ...] = (4, 8)
    initial: str = "taylor_green"
    amplitude: float = 1.0
    # when both are set the amplitude is drawn per sample, uniform in [min, max]
    amplitude_min: float | None = None
    amplitude_max: float | None = None
    picard_tol: float = 1e-10
    picard_max_iters: int = 100
    max_retries: int = 2
    # exponential-moment exponent; None means sigma_0 of the noise model
    sigma: float | None = None
    martingale_checkpoints: int = 4
    simulate_steps: int | None = None
    # synthetic injection: bypass the solver and use errors c * k^rate
    synthetic_rate: float | None = None
    synthetic_constant: float = 1.0
    gronwall_instances: int = 1000
    gronwall_samples: int = 400
    gronwall_steps: int = 12
    gronwall_q: float = 0.5
    gronwall_alpha: float = 1.5

    def __post_init__(self):
        try:
            object.__setattr__(self, "noise_kind", NoiseKind(self.noise_kind))
        except ValueError:
            _fail("noise_kind", f"expected one of {[k.value for k in NoiseKind]}, got {self.noise_kind!r}")
        object.__setattr__(self, "coarse_steps", tuple(sorted(int(m) for m in self.coarse_steps)))
        object.__setattr__(self, "q_orders", tuple(float(q) for q in self.q_orders))
        object.__setattr__(self, "m_orders", tuple(float(m) for m in self.m_orders))
        self._validate()

    def _validate(self):
        if not self.viscosity > 0:
            _fail("viscosity", f"must be positive, got {self.viscosity}")
        if not self.horizon > 0:
            _fail("horizon", f"must be positive, got {self.horizon}")
        if not self.noise_strength >= 0:
            _fail("noise_strength", f"must be nonnegative, got {self.noise_strength}")
        if not self.coarse_steps or any(m < 1 for m in self.coarse_steps):
            _fail("coarse_steps", "needs at least one positive step count")
        if len(set(self.coarse_steps)) != len(self.coarse_steps):
            _fail("coarse_steps", "entries must be distinct")
        if int(self.reference_multiple) != self.reference_multiple or self.reference_multiple < 1:
            _fail("reference_multiple", f"must be a positive integer, got {self.reference_multiple}")
        for m in self.coarse_steps:
            if self.reference_steps % m:
                _fail("coarse_steps", f"M={m} does not divide M_max*R = {self.reference_steps}")
        if int(self.samples) != self.samples or self.samples < 2:
            _fail("samples", f"must be an integer >= 2, got {self.samples}")
        if not 0 <= int(self.master_seed) < 2**64:
            _fail("master_seed", f"must be an unsigned 64-bit integer, got {self.master_seed}")
        for q in self.q_orders:
            if not 0 < q < 1:
                _fail("q_orders", f"every q must lie in (0,1), got {q}")
        for m in self.m_orders:
            if not m > 2:
                _fail("m_orders", f"every m must exceed 2, got {m}")
        if self.initial not in INITIAL_KINDS:
            _fail("initial", f"expected one of {INITIAL_KINDS}, got {self.initial!r}")
        if not math.isfinite(self.amplitude):
            _fail("amplitude", f"must be finite, got {self.amplitude}")
        if (self.amplitude_min is None) != (self.amplitude_max is None):
            _fail("amplitude_min", "amplitude_min and amplitude_max must be given together")
        if self.amplitude_min is not None and not self.amplitude_min <= self.amplitude_max:
            _fail("amplitude_max", f"must be >= amplitude_min, got [{self.amplitude_min}, {self.amplitude_max}]")
        try:
            SolverParams(self.viscosity, self.horizon, self.picard_tol, self.picard_max_iters)
        except ValueError as exc:
            key = "picard_tol" if "picard_tol" in str(exc) else "picard_max_iters"
            _fail(key, str(exc))
        if int(self.max_retries) != self.max_retries or self.max_retries < 0:
            _fail("max_retries", f"must be a nonnegative integer, got {self.max_retries}")
        if self.sigma is not None:
            if not self.sigma >= 0:
                _fail("sigma", f"must be nonnegative, got {self.sigma}")
            if self.sigma > self.sigma0:
                _fail("sigma", f"{self.sigma} exceeds sigma_0 = 1/(16 K_G^2) = {self.sigma0!r}")
        if int(self.martingale_checkpoints) != self.martingale_checkpoints or self.martingale_checkpoints < 1:
            _fail("martingale_checkpoints", "must be a positive integer")
        if self.simulate_steps is not None and (int(self.simulate_steps) != self.simulate_steps
                                                or self.simulate_steps < 1):
            _fail("simulate_steps", f"must be a positive integer, got {self.simulate_steps}")
        if self.synthetic_rate is not None and not math.isfinite(self.synthetic_rate):
            _fail("synthetic_rate", "must be finite")
        if not self.synthetic_constant > 0:
            _fail("synthetic_constant", f"must be positive, got {self.synthetic_constant}")
        for key in ("gronwall_instances", "gronwall_samples", "gronwall_steps"):
            v = getattr(self, key)
            if int(v) != v or v < (2 if key == "gronwall_samples" else 1):
                _fail(key, f"must be a positive integer, got {v}")
        if not 0 < self.gronwall_q < 1:
            _fail("gronwall_q", f"must lie in (0,1), got {self.gronwall_q}")
        if not self.gronwall_alpha > 1:
            _fail("gronwall_alpha", f"must exceed 1, got {self.gronwall_alpha}")
        if not self.gronwall_q * self.gronwall_alpha < 1:
            _fail("gronwall_alpha", f"q * alpha must be < 1, got {self.gronwall_q * self.gronwall_alpha}")

    # derived quantities

    @property
    def model(self) -> NoiseModel:
        return NoiseModel(self.noise_kind, self.noise_strength)

    @property
    def reference_steps(self) -> int:
        return max(self.coarse_steps) * int(self.reference_multiple)

    @property
    def sigma0(self) -> float:
        return self.model.sigma0(self.grid)

    @property
    def exp_sigma(self) -> float:
        return self.sigma0 if self.sigma is None else self.sigma

    @property
    def velocity_orders(self) -> tuple[float, ...]:
        """Moment exponents a of (E[max ||e||^a])^(1/a): 2q for each q, then each m."""
        return tuple(2 * q for q in self.q_orders) + self.m_orders

    def params(self, steps: int) -> SolverParams:
        return SolverParams(self.viscosity, self.horizon / steps, self.picard_tol, self.picard_max_iters)

    def sample_seed(self, index: int) -> int:
        return spawn_sample_stream(self.master_seed, index)

    def sample_amplitude(self, index: int) -> float:
        if self.amplitude_min is None:
            return self.amplitude
        gen = np.random.Generator(np.random.Philox(key=spawn_sample_stream(self.sample_seed(index), _AMPLITUDE_TAG)))
        return float(gen.uniform(self.amplitude_min, self.amplitude_max))

    def initial_velocity(self, index: int = 0) -> VectorField:
        if self.initial == "zero":
            return VectorField.zeros(self.grid)
        return taylor_green(self.grid, self.sample_amplitude(index))

    def with_halved_step(self) -> "StudyConfig":
        """Same study with every coarse step count doubled (max step halved)."""
        return replace(self, coarse_steps=tuple(2 * m for m in self.coarse_steps))

    def replace(self, **changes) -> "StudyConfig":
        return replace(self, **changes)


def sample_indices(cfg: StudyConfig) -> Sequence[int]:
    return range(int(cfg.samples))
