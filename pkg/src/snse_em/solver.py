"""Implicit Euler-Maruyama stepping for the periodic stochastic Navier-Stokes system.

One step solves, on divergence-free fields,

    (I + nu k A) u' + k P[(u' . grad) u'] = u + P[G(u)] dW

by Picard iteration with the exact diagonal inverse of (I + nu k A), and then
recovers the mean-zero pressure

    p' = Laplacian^{-1} div[ G(u) dW / k - (u' . grad) u' ].

The noise enters explicitly through G(u^n). Velocity and pressure keep the
(0, 0) mode at zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .noise import NoiseModel, noise_coeffs, rnoise
from .spectral import (
    DIVERGENCE_RTOL,
    GridSpec,
    SpectralField,
    VectorField,
    convective_coeffs,
    divergence_coeffs,
    divergence_defect,
    half_operators,
    operators,
    project_coeffs,
    rconvective,
    rsquare,
    to_full,
    to_half,
)
from .wiener import WienerPath

log = logging.getLogger(__name__)


class PicardNonconvergence(RuntimeError):
    """The fixed-point iteration did not reach ``picard_tol``."""

    def __init__(self, residual: float, iterations: int, step_index: int | None = None):
        self.residual = residual
        self.iterations = iterations
        self.step_index = step_index
        where = "" if step_index is None else f" at step {step_index}"
        super().__init__(f"Picard iteration failed to converge{where}: "
                         f"residual {residual:.3e} after {iterations} iterations")

    def __reduce__(self):
        # keep the structured fields when crossing process boundaries
        return type(self), (self.residual, self.iterations, self.step_index)


@dataclass(frozen=True)
class SolverParams:
    viscosity: float
    step: float
    picard_tol: float = 1e-10
    picard_max_iters: int = 100

    def __post_init__(self):
        if not self.viscosity > 0:
            raise ValueError(f"viscosity must be positive, got {self.viscosity}")
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if not 0 < self.picard_tol < 1:
            raise ValueError(f"picard_tol must lie in (0, 1), got {self.picard_tol}")
        if int(self.picard_max_iters) != self.picard_max_iters or self.picard_max_iters < 1:
            raise ValueError(f"picard_max_iters must be a positive integer, got {self.picard_max_iters}")


@dataclass(frozen=True)
class StepResult:
    velocity: VectorField
    pressure: SpectralField
    picard_iters: int
    residual: float


class StepKernel:
    """Half-spectrum implementation shared by :func:`em_step` and trajectories."""

    def __init__(self, grid: GridSpec, params: SolverParams, model: NoiseModel):
        self.grid = grid
        self.params = params
        self.model = model
        self.hops = half_operators(grid)
        self.stokes_inv = 1.0 / (1.0 + params.viscosity * params.step * self.hops.ksq)
        self.history: list[float] = []

    def noise(self, u: np.ndarray) -> np.ndarray:
        return rnoise(self.model, u, self.hops)

    def solve(self, u: np.ndarray, g: np.ndarray, dw: float, conv_u: np.ndarray | None = None):
        """Return (u_next, conv(u_next), iterations, residual).

        ``conv_u`` may carry the already known convective term of ``u``.
        """
        hops, k = self.hops, self.params.step
        rhs = u + project_coeffs(g, hops) * dw
        rhs[:, 0, 0] = 0.0
        scale = math.sqrt(rsquare(rhs, hops))
        if conv_u is None:
            conv_u = rconvective(u, u, hops)
        pconv = project_coeffs(conv_u, hops)
        history = self.history = []
        residual = math.inf
        for it in range(1, self.params.picard_max_iters + 1):
            w_next = self.stokes_inv * (rhs - k * pconv)
            conv = rconvective(w_next, w_next, hops)
            pconv_next = project_coeffs(conv, hops)
            # (I + nu k A) w_next + k P conv(w_next) - rhs = k P [conv(w_next) - conv(w)]
            res_abs = k * math.sqrt(rsquare(pconv_next - pconv, hops))
            residual = res_abs / scale if scale > 0 else res_abs
            history.append(residual)
            pconv = pconv_next
            if residual <= self.params.picard_tol:
                if len(history) >= 3 and not (history[-3] >= history[-2] >= history[-1]):
                    log.warning("Picard residuals not monotone over last 3 iterations: %s", history[-3:])
                return w_next, conv, it, residual
        raise PicardNonconvergence(residual, self.params.picard_max_iters)

    def pressure(self, g: np.ndarray, conv: np.ndarray, dw: float) -> np.ndarray:
        f = g * (dw / self.params.step) - conv
        p = -divergence_coeffs(f, self.hops) * self.hops.inv_ksq
        p[0, 0] = 0.0
        return p


def _check_divergence_free(u: VectorField, what: str):
    if divergence_defect(u) > DIVERGENCE_RTOL:
        raise ValueError(f"{what} must be divergence-free")


def em_step(u_n: VectorField, dW: float, params: SolverParams, model: NoiseModel) -> StepResult:
    """Advance one implicit Euler-Maruyama step."""
    _check_divergence_free(u_n, "u_n")
    kernel = StepKernel(u_n.grid, params, model)
    u_half = to_half(u_n.coeffs)
    g = kernel.noise(u_half)
    u_next, conv, iters, residual = kernel.solve(u_half, g, dW)
    p = kernel.pressure(g, conv, dW)
    return StepResult(VectorField(u_n.grid, to_full(u_next), divergence_free=True),
                      SpectralField(u_n.grid, to_full(p), mean_zero=True), iters, residual)


def recover_pressure(u_n: VectorField, u_np1: VectorField, dW: float,
                     params: SolverParams, model: NoiseModel) -> SpectralField:
    kernel = StepKernel(u_n.grid, params, model)
    u_next = to_half(u_np1.coeffs)
    conv = rconvective(u_next, u_next, kernel.hops)
    p = kernel.pressure(kernel.noise(to_half(u_n.coeffs)), conv, dW)
    return SpectralField(u_n.grid, to_full(p), mean_zero=True)


def momentum_residual(u_n: VectorField, u_np1: VectorField, p: SpectralField, dW: float,
                      params: SolverParams, model: NoiseModel, phi: VectorField) -> tuple[float, float]:
    """Weak momentum equation tested against ``phi``: (residual, sum of |terms|)."""
    grid = u_n.grid
    ops = operators(grid)
    k, nu = params.step, params.viscosity
    area = grid.area

    def ip(a, b):
        return area * float(np.sum((a * np.conj(b)).real))

    du = u_np1.coeffs - u_n.coeffs
    grad_u = np.stack([1j * ops.kx * u_np1.coeffs, 1j * ops.ky * u_np1.coeffs])
    grad_phi = np.stack([1j * ops.kx * phi.coeffs, 1j * ops.ky * phi.coeffs])
    conv = convective_coeffs(u_np1.coeffs, u_np1.coeffs, grid)
    g = noise_coeffs(model, u_n.coeffs, grid)
    terms = [
        ip(du, phi.coeffs),
        nu * k * ip(grad_u, grad_phi),
        k * ip(conv, phi.coeffs),
        -k * ip(p.coeffs, divergence_coeffs(phi.coeffs, ops)),
        -dW * ip(g, phi.coeffs),
    ]
    return sum(terms), sum(abs(t) for t in terms)


# ---------------------------------------------------------------------------
# trajectories

Observer = Callable[[int, np.ndarray, np.ndarray, float, np.ndarray], None]


@dataclass
class TrajectoryRecord:
    """Per-step series (index n-1 holds the value at t_n, n = 1..M) and checkpoints."""

    times: np.ndarray
    l2: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    increment_l2: np.ndarray
    increment_h1: np.ndarray
    picard_iters: np.ndarray
    checkpoint_times: tuple[float, ...] = ()
    checkpoint_steps: tuple[int, ...] = ()
    snapshots: list[VectorField] = field(default_factory=list)
    pressure_sums: list[SpectralField] = field(default_factory=list)
    final_velocity: VectorField | None = None
    final_pressure_sum: SpectralField | None = None

    @property
    def steps(self) -> int:
        return len(self.times)


def _time_to_step(t: float, step: float, steps: int) -> int:
    horizon = step * steps
    if t < -1e-12 * horizon or t > horizon * (1 + 1e-12):
        raise ValueError(f"time {t} lies outside [0, {horizon}]")
    n = round(t / step)
    if abs(n * step - t) > 1e-9 * step:
        raise ValueError(f"time {t} is not a grid point of step {step}")
    return int(n)


def _check_step(params: SolverParams, path: WienerPath):
    if abs(params.step - path.step) > 1e-12 * path.step:
        raise ValueError(f"params.step {params.step} does not match path step T/M = {path.step}")


def _norms_squared(a: np.ndarray, hops) -> tuple[float, float, float]:
    e = hops.weight * (a.real**2 + a.imag**2)
    ke = hops.ksq * e
    area = hops.area
    return area * float(e.sum()), area * float(ke.sum()), area * float((hops.ksq * ke).sum())


def run_trajectory(u0: VectorField, path: WienerPath, params: SolverParams, model: NoiseModel,
                   checkpoint_times: Sequence[float] = (), observer: Observer | None = None) -> TrajectoryRecord:
    """Integrate over all increments of ``path``.

    ``observer(n, u_n, G(u_n), dW_{n+1}, u_{n+1})`` is called after each step
    n = 0..M-1 with half-spectrum coefficient arrays (see
    :func:`snse_em.spectral.to_half`).
    """
    _check_step(params, path)
    _check_divergence_free(u0, "u0")
    grid = u0.grid
    M = path.steps
    kernel = StepKernel(grid, params, model)
    hops = kernel.hops

    cp_steps = tuple(_time_to_step(t, params.step, M) for t in checkpoint_times)
    wanted: dict[int, list[int]] = {}
    for idx, n in enumerate(cp_steps):
        wanted.setdefault(n, []).append(idx)
    snapshots: list = [None] * len(cp_steps)
    psums: list = [None] * len(cp_steps)

    series = np.zeros((5, M))
    iters = np.zeros(M, dtype=int)
    u = to_half(u0.coeffs)
    psum = np.zeros_like(u[0])

    def record(n):
        for idx in wanted.get(n, ()):
            snapshots[idx] = VectorField(grid, to_full(u), divergence_free=True)
            psums[idx] = SpectralField(grid, to_full(psum), mean_zero=True)

    record(0)
    dws = path.increments
    conv = None
    for n in range(M):
        dw = float(dws[n])
        g = kernel.noise(u)
        try:
            u_next, conv, it, _ = kernel.solve(u, g, dw, conv)
        except PicardNonconvergence as exc:
            raise PicardNonconvergence(exc.residual, exc.iterations, step_index=n) from None
        scale = np.max(np.abs(u_next))
        if scale > 0 and np.max(np.abs(divergence_coeffs(u_next, hops))) > DIVERGENCE_RTOL * scale:
            raise RuntimeError(f"divergence-free invariant violated at step {n}")
        psum = psum + params.step * kernel.pressure(g, conv, dw)
        if observer is not None:
            observer(n, u, g, dw, u_next)
        l2, h1, h2 = _norms_squared(u_next, hops)
        dl2, dh1, _ = _norms_squared(u_next - u, hops)
        series[:, n] = (l2, h1, h2, dl2, dh1)
        iters[n] = it
        u = u_next
        record(n + 1)

    series = np.sqrt(series)
    return TrajectoryRecord(
        times=np.arange(1, M + 1) * params.step,
        l2=series[0], h1=series[1], h2=series[2],
        increment_l2=series[3], increment_h1=series[4],
        picard_iters=iters,
        checkpoint_times=tuple(float(t) for t in checkpoint_times),
        checkpoint_steps=cp_steps,
        snapshots=snapshots,
        pressure_sums=psums,
        final_velocity=VectorField(grid, to_full(u), divergence_free=True),
        final_pressure_sum=SpectralField(grid, to_full(psum), mean_zero=True),
    )


@dataclass
class ReferenceSnapshots:
    times: tuple[float, ...]
    fine_steps: tuple[int, ...]
    velocities: list[VectorField]
    pressure_sums: list[SpectralField]


def reference_trajectory(u0: VectorField, fine_path: WienerPath, params_fine: SolverParams,
                         model: NoiseModel, coarse_times: Sequence[float],
                         observer: Observer | None = None) -> ReferenceSnapshots:
    """Fine-step proxy for the exact solution, sampled at ``coarse_times``."""
    rec = run_trajectory(u0, fine_path, params_fine, model, coarse_times, observer)
    return ReferenceSnapshots(rec.checkpoint_times, rec.checkpoint_steps, rec.snapshots, rec.pressure_sums)


def stokes_decay_factor(grid: GridSpec, viscosity: float, step: float, steps: int) -> float:
    """Amplitude factor (1 + nu k |k_TG|^2)^(-M) of a Taylor-Green mode under implicit Euler."""
    ktg2 = 2 * (2 * math.pi / grid.period) ** 2
    return (1.0 + viscosity * step * ktg2) ** (-steps)
