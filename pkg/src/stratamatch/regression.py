"""Least-squares fitting and the small statistics the tree builder needs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import EmptyInput, InsufficientDegreesOfFreedom

logger = logging.getLogger(__name__)

_RIDGE = 1e-10


@dataclass(frozen=True)
class LinearFit:
    """An intercept-plus-slopes linear model with its training diagnostics.

    ``r2_adj`` is ``None`` when it is undefined, i.e. when ``n_obs <= p + 1``
    leaves no residual degrees of freedom.
    """

    intercept: float
    coefficients: np.ndarray
    r2: float
    r2_adj: float | None
    n_obs: int
    rank_deficient: bool

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.intercept + x @ self.coefficients


def ols_fit(x: np.ndarray, y: np.ndarray) -> LinearFit:
    """Fit ordinary least squares of ``y`` on ``x`` with an intercept.

    Uses a stable orthogonal factorization. Rank-deficient designs get the
    minimum-norm solution and are flagged; if the factorization itself fails,
    a tiny ridge on the normal equations is used as a fallback.

    R-squared is computed about the mean of ``y``; a zero-variance outcome is
    reported as a perfect fit by convention.

    Raises:
        EmptyInput: if ``x`` or ``y`` has no rows.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    n = x.shape[0]
    if n == 0 or y.shape[0] == 0:
        raise EmptyInput("ols_fit needs at least one observation")
    if y.shape[0] != n:
        raise EmptyInput("feature and outcome row counts disagree")
    p = x.shape[1]

    design = np.column_stack([np.ones(n), x])
    rank_deficient = False
    try:
        beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        rank_deficient = rank < p + 1
    except np.linalg.LinAlgError:
        logger.warning("lstsq failed to converge; falling back to ridge-regularized normal equations")
        gram = design.T @ design + _RIDGE * np.eye(p + 1)
        beta = np.linalg.solve(gram, design.T @ y)
        rank_deficient = True

    resid = y - design @ beta
    ssr = float(resid @ resid)
    centered = y - y.mean()
    sst = float(centered @ centered)
    r2 = 1.0 if sst == 0.0 else 1.0 - ssr / sst
    r2a = None
    if n > p + 1:
        r2a = 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)
    coef = np.asarray(beta[1:], dtype=np.float64)
    coef.setflags(write=False)
    return LinearFit(
        intercept=float(beta[0]),
        coefficients=coef,
        r2=float(r2),
        r2_adj=r2a,
        n_obs=n,
        rank_deficient=bool(rank_deficient),
    )


def adjusted_r2(r2: float, n: int, p: int) -> float:
    """Adjusted R-squared: ``1 - (1 - r2) * (n - 1) / (n - p - 1)``.

    Raises:
        InsufficientDegreesOfFreedom: when ``n <= p + 1``.
    """
    if n <= p + 1:
        raise InsufficientDegreesOfFreedom(f"adjusted r2 needs n > p + 1 (got n={n}, p={p})")
    return 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)


def std_dev(v: np.ndarray) -> float:
    """Population standard deviation (divisor ``n``).

    Raises:
        EmptyInput: on an empty vector.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise EmptyInput("std_dev of an empty vector")
    return float(np.std(v))


def feature_weights(d: Dataset) -> np.ndarray:
    """Feature importance for matching distances and deviation caps.

    Regresses the outcome on the normalized features of all units, treated
    and control together, and returns the absolute values of the slope
    coefficients (intercept excluded). Degenerate all-zero weights are the
    caller's concern; see the matcher's unit-weight fallback.
    """
    fit = ols_fit(d.x, d.y)
    w = np.abs(fit.coefficients)
    w.setflags(write=False)
    return w
