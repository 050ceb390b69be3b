"""Log-log least-squares rate fits."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats


class RateFit(NamedTuple):
    slope: float
    intercept: float
    ci: float


def fit_rate(ks: Sequence[float], errors: Sequence[float]) -> RateFit:
    """Fit log(err) = slope * log(k) + intercept; ci = 1.96 * stderr(slope)."""
    ks = np.asarray(ks, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ks.shape != errors.shape or ks.ndim != 1:
        raise ValueError("ks and errors must be 1-d arrays of equal length")
    if len(ks) < 3:
        raise ValueError(f"need at least 3 points for a rate fit, got {len(ks)}")
    if np.any(~(ks > 0)):
        raise ValueError("step sizes must be positive")
    if np.any(~(errors > 0)):
        raise ValueError("errors must be positive (degenerate study)")
    res = stats.linregress(np.log(ks), np.log(errors))
    return RateFit(float(res.slope), float(res.intercept), float(1.96 * res.stderr))
