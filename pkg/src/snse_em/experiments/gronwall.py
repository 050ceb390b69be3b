"""Sample-average check of the discrete stochastic Gronwall inequality.

Hypothesis, per sample and n = 0..n_max:

    X_n <= F_n + M_n + sum_{j<n} G_j X_j,   X, F, G >= 0,  M a martingale, M_0 = 0.

Conclusion, for q in (0,1), alpha > 1 with q alpha < 1 and 1/alpha + 1/alpha' = 1:

    E[sup_n X_n^q] <= (1 + 1/(1 - alpha q))^(1/alpha)
                      * || prod_{j<n_max} (1 + G_j)^q ||_{L^alpha'}
                      * (E[sup_n F_n])^q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..wiener import spawn_sample_stream

HYPOTHESIS_RTOL = 1e-12


@dataclass(frozen=True)
class GronwallInstance:
    """Arrays of shape (samples, steps + 1)."""

    F: np.ndarray
    G: np.ndarray
    M: np.ndarray
    X: np.ndarray

    @classmethod
    def constant(cls, samples: int, steps: int, F=0.0, G=0.0, M=0.0, X=0.0) -> "GronwallInstance":
        shape = (samples, steps + 1)
        return cls(*(np.full(shape, float(v)) for v in (F, G, M, X)))


@dataclass(frozen=True)
class GronwallResult:
    lhs: float
    rhs: float
    lhs_se: float
    stat_tol: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + self.stat_tol * self.lhs_se


def check_hypothesis(inst: GronwallInstance):
    """Raise ValueError naming the first (sample, n) that violates the hypothesis."""
    shape = inst.X.shape
    for name in ("F", "G", "M"):
        if getattr(inst, name).shape != shape:
            raise ValueError(f"{name} has shape {getattr(inst, name).shape}, expected {shape}")
    for name in ("F", "G", "X"):
        arr = getattr(inst, name)
        bad = np.argwhere(~(arr >= 0))
        if len(bad):
            i, n = bad[0]
            raise ValueError(f"{name} must be nonnegative; violated at sample {i}, n={n}")
    bad = np.flatnonzero(inst.M[:, 0] != 0)
    if len(bad):
        raise ValueError(f"M_0 must be 0; violated at sample {bad[0]}, n=0")
    # memory term sum_{j<n} G_j X_j
    memory = np.zeros(shape)
    memory[:, 1:] = np.cumsum(inst.G[:, :-1] * inst.X[:, :-1], axis=1)
    bound = inst.F + inst.M + memory
    slack = HYPOTHESIS_RTOL * (np.abs(inst.F) + np.abs(inst.M) + memory)
    viol = inst.X > bound + slack
    if viol.any():
        i, n = np.argwhere(viol)[0]
        raise ValueError(f"X_n <= F_n + M_n + sum G_j X_j violated at sample {i}, n={n}: "
                         f"{inst.X[i, n]!r} > {bound[i, n]!r}")


def gronwall_constant(q: float, alpha: float) -> float:
    return (1.0 + 1.0 / (1.0 - alpha * q)) ** (1.0 / alpha)


def gronwall_check(inst: GronwallInstance, q: float, alpha: float, stat_tol: float = 5.0) -> GronwallResult:
    """Evaluate both sides by sample averages; passes if LHS <= RHS + stat_tol * SE(LHS)."""
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0,1), got {q}")
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if not q * alpha < 1:
        raise ValueError(f"q * alpha must be < 1, got {q * alpha}")
    check_hypothesis(inst)
    n_samples = inst.X.shape[0]
    sup_x = np.max(inst.X, axis=1) ** q
    lhs = float(np.mean(sup_x))
    lhs_se = float(np.std(sup_x, ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    alpha_p = alpha / (alpha - 1.0)
    log_prod = q * np.sum(np.log1p(inst.G[:, :-1]), axis=1)
    prod_norm = float(np.mean(np.exp(alpha_p * log_prod))) ** (1.0 / alpha_p)
    sup_f = float(np.mean(np.max(inst.F, axis=1)))
    rhs = gronwall_constant(q, alpha) * prod_norm * sup_f ** q
    return GronwallResult(lhs, rhs, lhs_se, stat_tol)


def generate_instance(rng: np.random.Generator, samples: int, steps: int) -> GronwallInstance:
    """Random hypothesis-satisfying instance.

    M_n = sum_{j<=n} xi_j eta_j with xi_j independent Rademacher and eta_j
    predictable (a function of xi_1..xi_{j-1}); F_n = b_n + max(0, -M_n) so that
    F + M >= 0; X_n = U_n (F_n + M_n + sum_{j<n} G_j X_j) with U_n in [u_min, 1].
    Instance-level scales are drawn from ``rng`` to vary the regime.
    """
    shape = (samples, steps + 1)
    g_scale = rng.uniform(0.0, 0.6)
    m_scale = rng.uniform(0.0, 2.0)
    b_scale = rng.uniform(0.05, 2.0)
    u_min = rng.choice([1.0, rng.uniform(0.0, 1.0)])

    xi = rng.choice([-1.0, 1.0], size=shape)
    xi[:, 0] = 0.0
    eta = np.empty(shape)
    eta[:, 0] = 0.0
    eta[:, 1] = m_scale
    eta[:, 2:] = m_scale * (1.0 + 0.5 * np.abs(xi[:, 1:-1]) * rng.uniform(0.0, 1.0, size=(samples, 1)))
    M = np.cumsum(xi * eta, axis=1)

    G = g_scale * rng.uniform(0.0, 1.0, size=shape)
    F = b_scale * rng.uniform(0.0, 1.0, size=shape) + np.maximum(0.0, -M)
    U = rng.uniform(u_min, 1.0, size=shape)
    X = np.empty(shape)
    memory = np.zeros(samples)
    for n in range(steps + 1):
        X[:, n] = U[:, n] * np.maximum(F[:, n] + M[:, n] + memory, 0.0)
        memory = memory + G[:, n] * X[:, n]
    return GronwallInstance(F, G, M, X)


@dataclass
class GronwallSuite:
    results: list[GronwallResult]

    @property
    def n_hold(self) -> int:
        return sum(r.holds for r in self.results)

    @property
    def passed(self) -> bool:
        return self.n_hold == len(self.results)

    def summary(self) -> str:
        return f"{self.n_hold}/{len(self.results)} hold"


def gronwall_suite(master_seed: int, instances: int = 1000, samples: int = 400, steps: int = 12,
                   q: float = 0.5, alpha: float = 1.5) -> GronwallSuite:
    results = []
    for i in range(instances):
        rng = np.random.Generator(np.random.Philox(key=spawn_sample_stream(master_seed, i)))
        results.append(gronwall_check(generate_instance(rng, samples, steps), q, alpha))
    return GronwallSuite(results)
