"""Closed-form OLS of predicted logits on protected features.

Fits y = X beta by least squares through the thin QR factorization,
derives per-coefficient standard errors from the unbiased residual
variance, and tests each coefficient with a two-sided Student-t test at
n - p - 1 degrees of freedom (p counting the non-intercept columns).
The t survival function is evaluated through the regularized incomplete
beta function, computed by continued fraction.
"""

import math
from dataclasses import dataclass

import numpy as np

from .design import DesignMatrix
from .errors import InsufficientSamples, InvalidInput, RankDeficient, ShapeMismatch
from .linalg import thin_qr

_BETA_EPS = 1e-12
_BETA_MAX_ITER = 500
_FPMIN = 1e-300


@dataclass(frozen=True, eq=False)
class InfluenceReport:
    """Per-feature influence of protected columns on a logit vector.

    The intercept is part of the fit but excluded from the report body.
    """

    label: str
    features: tuple
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_statistics: np.ndarray
    p_values: np.ndarray
    dof: int
    r_squared: float
    n: int


@dataclass(frozen=True, eq=False)
class AggregatedInfluence:
    """Mean/std of coefficients and p-values over probe restarts."""

    label: str
    features: tuple
    coef_mean: np.ndarray
    coef_std: np.ndarray
    p_mean: np.ndarray
    p_std: np.ndarray
    n_reports: int


def _solve_upper(r, b):
    """Back substitution for upper-triangular r."""
    p = r.shape[0]
    x = np.zeros(b.shape, dtype=np.float64)
    for i in range(p - 1, -1, -1):
        x[i] = (b[i] - r[i, i + 1:] @ x[i + 1:]) / r[i, i]
    return x


def ols_fit(x, y):
    """Least squares of ``y`` on ``x`` via pivoted QR.

    Returns ``(beta, residuals, xtx_inv_diag)``.  ``x`` must have full
    column rank (the evaluation model needs identifiable coefficients,
    unlike the projector).
    """
    arr = x.data if isinstance(x, DesignMatrix) else np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = arr.shape
    if y.shape != (n,):
        raise ShapeMismatch(f"y has shape {y.shape}, expected ({n},)")
    if n <= p:
        raise InvalidInput(f"need more rows than columns (n={n}, p={p})")
    factor = thin_qr(arr)
    if factor.rank < p:
        raise RankDeficient(f"design has rank {factor.rank} < {p} columns")

    beta_piv = _solve_upper(factor.r, factor.q1.T @ y)
    beta = np.empty(p)
    beta[factor.pivots] = beta_piv
    residuals = y - arr @ beta

    # (X'X)^-1 = P R^-1 R^-T P'; its diagonal is the row sums of squares
    # of R^-1, mapped back through the pivot permutation.
    rinv = _solve_upper(factor.r, np.eye(p))
    diag = np.empty(p)
    diag[factor.pivots] = np.einsum("ij,ij->i", rinv, rinv)
    return beta, residuals, diag


def _beta_cont_frac(a, b, x):
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            break
    return h


def _betainc_reg(a, b, x):
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cont_frac(a, b, x) / a
    return 1.0 - front * _beta_cont_frac(b, a, 1.0 - x) / b


def student_t_p_two_sided(t, dof):
    """Two-sided p-value 2*SF(|t|) of the Student-t distribution."""
    if dof < 1:
        raise InvalidInput(f"dof must be >= 1, got {dof}")
    if math.isnan(t):
        raise InvalidInput("t statistic is NaN")
    if math.isinf(t):
        return 0.0
    x = dof / (dof + t * t)
    p = _betainc_reg(dof / 2.0, 0.5, x)
    return min(max(p, 0.0), 1.0)


def influence_report(logits, x, label):
    """Fit the evaluation model and test each protected coefficient.

    ``logits`` are raw probe outputs; ``x`` must be a DesignMatrix whose
    first column is the intercept.  Residual dof is n - p - 1 with p the
    number of protected (non-intercept) columns.
    """
    if not isinstance(x, DesignMatrix) or not x.columns or x.columns[0] != "intercept":
        raise InvalidInput("influence_report needs a DesignMatrix with a leading intercept")
    y = np.asarray(logits, dtype=np.float64).reshape(-1)
    n = y.shape[0]
    dof = n - x.p
    if dof < 1:
        raise InsufficientSamples(f"n={n} leaves dof={dof} with {x.p - 1} protected columns")

    beta, residuals, diag = ols_fit(x, y)
    rss = float(residuals @ residuals)
    sigma2 = rss / dof
    se = np.sqrt(sigma2 * diag)

    t_stats = np.empty(x.p)
    for j in range(x.p):
        if se[j] == 0.0:
            t_stats[j] = 0.0 if beta[j] == 0.0 else math.inf * np.sign(beta[j])
        else:
            t_stats[j] = beta[j] / se[j]
    p_values = np.array([student_t_p_two_sided(t, dof) for t in t_stats])

    centered = y - y.mean()
    tss = float(centered @ centered)
    r2 = 1.0 - rss / tss if tss > 0.0 else 0.0

    return InfluenceReport(
        label=label,
        features=tuple(x.columns[1:]),
        coefficients=beta[1:].copy(),
        standard_errors=se[1:].copy(),
        t_statistics=t_stats[1:].copy(),
        p_values=p_values[1:].copy(),
        dof=dof,
        r_squared=r2,
        n=n,
    )


def aggregate_reports(reports):
    """Mean and sample std of coefficients and p-values across restarts."""
    if not reports:
        raise InvalidInput("no reports to aggregate")
    first = reports[0]
    for rep in reports[1:]:
        if rep.features != first.features or rep.label != first.label:
            raise InvalidInput("reports have inconsistent schemas")
    coefs = np.stack([r.coefficients for r in reports])
    pvals = np.stack([r.p_values for r in reports])
    k = len(reports)
    return AggregatedInfluence(
        label=first.label,
        features=first.features,
        coef_mean=coefs.mean(axis=0),
        coef_std=coefs.std(axis=0, ddof=1) if k > 1 else np.zeros(coefs.shape[1]),
        p_mean=pvals.mean(axis=0),
        p_std=pvals.std(axis=0, ddof=1) if k > 1 else np.zeros(pvals.shape[1]),
        n_reports=k,
    )
