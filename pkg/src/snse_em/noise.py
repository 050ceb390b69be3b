"""Bounded multiplicative noise maps G and numerical checks of their hypotheses.

Each map applies a scalar nonlinearity to every velocity component on the
collocation grid (the saturating map included: g(v_i) = v_i^2 / (1 + v_i^2)),
multiplies by the strength delta, transforms back and dealiases. The result
is not projected and keeps its mean.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .spectral import (GridSpec, HalfOperators, VectorField, h1_coeffs, half_operators, l2_coeffs, rforward,
                       rinverse, to_full, to_half)

EPS_TOL = 1e-8

# max_t |d/dt (t^2 / (1 + t^2))| = 3 sqrt(3) / 8, attained at t = 1/sqrt(3)
SATURATING_SLOPE = 3 * math.sqrt(3) / 8


class NoiseKind(str, Enum):
    SINE = "sine"
    COSINE = "cosine"
    SATURATING = "saturating"


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind = NoiseKind.SINE
    strength: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not self.strength >= 0:
            raise ValueError(f"noise strength must be nonnegative, got {self.strength}")

    def pointwise(self, x: np.ndarray) -> np.ndarray:
        if self.kind is NoiseKind.SINE:
            g = np.sin(x)
        elif self.kind is NoiseKind.COSINE:
            g = np.cos(x)
        else:
            x2 = x * x
            g = x2 / (1.0 + x2)
        return self.strength * g

    def pointwise_derivative(self, x: np.ndarray) -> np.ndarray:
        if self.kind is NoiseKind.SINE:
            d = np.cos(x)
        elif self.kind is NoiseKind.COSINE:
            d = -np.sin(x)
        else:
            d = 2 * x / (1.0 + x * x) ** 2
        return self.strength * d

    @property
    def slope_bound(self) -> float:
        """sup |delta g'| over the real line."""
        return self.strength * (SATURATING_SLOPE if self.kind is NoiseKind.SATURATING else 1.0)

    @property
    def lipschitz_threshold(self) -> float:
        # acceptance thresholds for the L^2 Lipschitz ratio
        return self.strength * (2.0 if self.kind is NoiseKind.SATURATING else 1.0)

    def bound_constant(self, grid: GridSpec) -> float:
        """K_G = delta |D|^(1/2); each component satisfies ||G_i(v)|| <= K_G."""
        return self.strength * grid.period

    def sigma0(self, grid: GridSpec) -> float:
        """Largest admissible exponent 1 / (16 K_G^2) for exponential moments."""
        kg = self.bound_constant(grid)
        return math.inf if kg == 0 else 1.0 / (16.0 * kg * kg)


def rnoise(model: NoiseModel, u: np.ndarray, hops: HalfOperators) -> np.ndarray:
    """Dealiased half spectrum of G(u) for a half-spectrum velocity."""
    g = rforward(model.pointwise(rinverse(u, hops.modes)))
    g[:, ~hops.dealias] = 0.0
    return g


def noise_coeffs(model: NoiseModel, u: np.ndarray, grid: GridSpec) -> np.ndarray:
    return to_full(rnoise(model, to_half(u), half_operators(grid)))


def eval_noise(model: NoiseModel, v: VectorField) -> VectorField:
    return VectorField(v.grid, noise_coeffs(model, v.coeffs, v.grid))


@dataclass(frozen=True)
class AssumptionReport:
    kind: NoiseKind
    strength: float
    pairs_tested: int
    lipschitz_ratio: float
    lipschitz_threshold: float
    sup_norm: float
    sup_threshold: float
    gradient_ratio: float
    gradient_threshold: float

    @property
    def lipschitz_ok(self) -> bool:
        return self.lipschitz_ratio <= self.lipschitz_threshold + EPS_TOL

    @property
    def bounded_ok(self) -> bool:
        return self.sup_norm <= self.sup_threshold + 1e-10

    @property
    def gradient_ok(self) -> bool:
        return math.isfinite(self.gradient_ratio) and self.gradient_ratio <= self.gradient_threshold * (1 + EPS_TOL)

    @property
    def ok(self) -> bool:
        return self.lipschitz_ok and self.bounded_ok and self.gradient_ok


def verify_assumptions(model: NoiseModel, fields: Sequence[VectorField]) -> AssumptionReport:
    """Empirical Lipschitz (B1), boundedness (B2) and H^1-stability (B3) ratios.

    Pairs with ||v - w|| == 0 and fields with ||grad v|| == 0 are skipped.
    """
    fields = list(fields)
    if len(fields) < 2:
        raise ValueError("verify_assumptions needs at least two trial fields")
    grid = fields[0].grid
    G = [noise_coeffs(model, f.coeffs, grid) for f in fields]

    lip, pairs = 0.0, 0
    for i, j in itertools.combinations(range(len(fields)), 2):
        dv = l2_coeffs(fields[i].coeffs - fields[j].coeffs, grid)
        if dv == 0.0:
            continue
        pairs += 1
        lip = max(lip, l2_coeffs(G[i] - G[j], grid) / dv)

    sup = max(l2_coeffs(g, grid) for g in G)
    grad = 0.0
    for f, g in zip(fields, G):
        gv = h1_coeffs(f.coeffs, grid)
        if gv > 0:
            grad = max(grad, h1_coeffs(g, grid) / gv)

    return AssumptionReport(
        kind=model.kind,
        strength=model.strength,
        pairs_tested=pairs,
        lipschitz_ratio=lip,
        lipschitz_threshold=model.lipschitz_threshold,
        sup_norm=sup,
        sup_threshold=math.sqrt(2) * model.bound_constant(grid),
        gradient_ratio=grad,
        gradient_threshold=model.slope_bound,
    )
