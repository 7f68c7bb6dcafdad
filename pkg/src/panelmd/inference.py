"""Exact covariance of the MD estimator and asymptotic-normality diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .exceptions import PanelError, ShapeError, SingularCovarianceError, SingularMatrixError
from .linalg import inv_sqrtm, numerical_rank, spd_solve
from .panel import CovarianceModel, PanelDataset

__all__ = [
    "CovarianceReport",
    "NormalityResult",
    "covariance_beta",
    "normality_diagnostic",
    "standardized_deviation",
    "trace_condition",
]

WHITENED_TOL = 1e-8
MIN_SAMPLES = 200


@dataclass(frozen=True)
class CovarianceReport:
    """Sandwich covariance of the closed-form MD estimator.

    ``sigma_xdomega`` is ``X'DD' Omega DD'X`` and ``sigma_beta`` is
    ``G^{-1} sigma_xdomega G^{-1}`` with ``G = X'DD'X``. When ``D' Omega D``
    is the identity, ``whitened`` is set and ``collapse_gap`` records
    ``max |sigma_beta - G^{-1}|``.
    """

    sigma_xdomega: np.ndarray
    sigma_beta: np.ndarray
    whitened: bool
    trace_stat: float
    collapse_gap: float | None = None


@dataclass(frozen=True)
class NormalityResult:
    coordinate: int
    ks_statistic: float
    p_value: float
    mean: float
    variance: float


def covariance_beta(data: PanelDataset, D, omega: CovarianceModel) -> CovarianceReport:
    Dm = getattr(D, "D", D)
    Dm = np.asarray(Dm, dtype=np.float64)
    if Dm.shape != (data.nobs, data.p):
        raise ShapeError(f"D has shape {Dm.shape}, expected {(data.nobs, data.p)}")
    if (omega.n, omega.T) != (data.n, data.T):
        raise ShapeError("covariance model and panel have different (n, T)")
    Xt = Dm.T @ data.X
    G = Xt.T @ Xt
    if numerical_rank(G) < data.p:
        raise SingularMatrixError("X'DD'X is singular; covariance undefined")
    DOD = omega.quadratic(Dm)
    middle = Xt.T @ DOD @ Xt
    middle = 0.5 * (middle + middle.T)
    G_inv = spd_solve(G, np.eye(data.p))
    G_inv = 0.5 * (G_inv + G_inv.T)
    sigma = G_inv @ middle @ G_inv
    sigma = 0.5 * (sigma + sigma.T)
    whitened = float(np.max(np.abs(DOD - np.eye(data.p)))) <= WHITENED_TOL
    gap = float(np.max(np.abs(sigma - G_inv))) if whitened else None
    if numerical_rank(middle) == data.p:
        trace = float(np.trace(np.linalg.solve(middle, data.X.T @ data.X)))
    else:
        trace = float("nan")
    return CovarianceReport(
        sigma_xdomega=middle, sigma_beta=sigma, whitened=whitened,
        trace_stat=trace, collapse_gap=gap,
    )


def trace_condition(data: PanelDataset, report: CovarianceReport) -> float:
    """``tr(X S^{-1} X')`` evaluated as ``tr(S^{-1} X'X)`` for ``S = sigma_xdomega``."""
    S = report.sigma_xdomega
    if numerical_rank(S) < S.shape[0]:
        raise SingularMatrixError("sigma_xdomega is singular")
    return float(np.trace(np.linalg.solve(S, data.X.T @ data.X)))


def standardized_deviation(beta_hat, beta_true, sigma_beta) -> np.ndarray:
    """``sigma_beta^{-1/2} (beta_hat - beta_true)``.

    ``beta_hat`` may be a single vector or an ``(R, p)`` stack of estimates.
    """
    dev = np.asarray(beta_hat, dtype=np.float64) - np.asarray(beta_true, dtype=np.float64)
    try:
        root = inv_sqrtm(sigma_beta)
    except SingularMatrixError:
        raise SingularCovarianceError("sigma_beta is not positive definite") from None
    return dev @ root


def normality_diagnostic(samples: Sequence[Sequence[float]] | np.ndarray) -> list[NormalityResult]:
    """Per-coordinate one-sample KS test against N(0, 1) with asymptotic p-values."""
    z = np.asarray(samples, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[0] < MIN_SAMPLES:
        raise PanelError(f"normality diagnostic needs at least {MIN_SAMPLES} samples, got {z.shape[0]}")
    out = []
    for k in range(z.shape[1]):
        res = stats.kstest(z[:, k], "norm", method="asymp")
        out.append(NormalityResult(
            coordinate=k,
            ks_statistic=float(res.statistic),
            p_value=float(res.pvalue),
            mean=float(z[:, k].mean()),
            variance=float(z[:, k].var(ddof=1)),
        ))
    return out
