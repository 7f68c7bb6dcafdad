"""OLS, within, random-effects and closed-form minimum distance estimators.

The MD estimator minimizes ``L(b) = 4 * sum_k (d_k'(y - X b))^2``, whose
unique minimizer (when ``X'DD'X`` is nonsingular) is

    beta_hat = (X'DD'X)^{-1} X'DD'y.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DegeneratePanelError, ShapeError, SingularMatrixError
from .inference import covariance_beta
from .linalg import numerical_rank, spd_solve
from .panel import (
    CovarianceModel,
    PanelDataset,
    build_omega,
    quasi_demean,
    unit_means,
    within_omega,
    within_transform,
)
from .weights import AssumptionReport, WeightMatrix, validate_d, weight_matrix

__all__ = [
    "EstimateReport",
    "VarianceComponents",
    "distance_closed_form",
    "distance_gradient",
    "estimate",
    "estimate_md",
    "estimate_md_within",
    "estimate_ols",
    "estimate_random_effects",
    "estimate_variance_components",
    "estimate_within",
    "rho_from_components",
]

log = logging.getLogger(__name__)

GRADIENT_TOL = 1e-8


@dataclass(frozen=True)
class EstimateReport:
    method: str
    beta_hat: np.ndarray
    sigma_beta: np.ndarray | None = None
    rho_hat: float | None = None
    diagnostics: AssumptionReport | None = None
    gradient_norm: float | None = None

    @property
    def std_errors(self) -> np.ndarray | None:
        if self.sigma_beta is None:
            return None
        return np.sqrt(np.clip(np.diag(self.sigma_beta), 0.0, None))


@dataclass(frozen=True)
class VarianceComponents:
    sigma_gamma2: float
    sigma_nu2: float
    rho_hat: float
    variant: str = "standard"


def _weights(D: WeightMatrix | np.ndarray) -> np.ndarray:
    return D.D if isinstance(D, WeightMatrix) else np.asarray(D, dtype=np.float64)


def _check_shapes(data: PanelDataset, Dm: np.ndarray, b: np.ndarray | None = None) -> None:
    if Dm.ndim != 2 or Dm.shape[0] != data.nobs:
        raise ShapeError(f"D has shape {Dm.shape}, expected ({data.nobs}, k)")
    if b is not None and b.shape[0] != data.p:
        raise ShapeError(f"b has length {b.shape[0]}, expected p = {data.p}")


def _ols(X: np.ndarray, y: np.ndarray, names: Sequence[str], dof: int) -> tuple[np.ndarray, np.ndarray]:
    gram = X.T @ X
    if numerical_rank(gram) < X.shape[1]:
        # Locate the offending columns through the null space of the Gram matrix.
        _, _, vt = np.linalg.svd(gram)
        null = vt[-1]
        bad = [names[k] for k in np.flatnonzero(np.abs(null) > 1e-8)]
        raise SingularMatrixError(f"regressor matrix is rank deficient in columns: {', '.join(bad)}")
    beta = spd_solve(gram, X.T @ y)
    resid = y - X @ beta
    if dof <= 0:
        sigma = np.full((X.shape[1], X.shape[1]), np.nan)
    else:
        s2 = float(resid @ resid) / dof
        sigma = s2 * spd_solve(gram, np.eye(X.shape[1]))
    return beta, 0.5 * (sigma + sigma.T)


def estimate_ols(data: PanelDataset) -> EstimateReport:
    """Pooled OLS ``(X'X)^{-1} X'y`` with the classical iid covariance."""
    beta, sigma = _ols(data.X, data.y, data.names, data.nobs - data.p)
    return EstimateReport(method="OLS", beta_hat=beta, sigma_beta=sigma, rho_hat=0.0)


def estimate_within(data: PanelDataset) -> EstimateReport:
    """OLS on the within-transformed panel (fixed-effects estimator)."""
    w = within_transform(data)
    try:
        beta, sigma = _ols(w.X, w.y, w.names, data.n * (data.T - 1) - data.p)
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"within estimator undefined ({exc}); time-invariant regressor?") from None
    return EstimateReport(method="Within", beta_hat=beta, sigma_beta=sigma, rho_hat=1.0)


def rho_from_components(sigma_gamma2: float, sigma_nu2: float, T: int, variant: str = "standard") -> float:
    """Quasi-demeaning fraction, clamped to ``[0, 1)``.

    ``standard``: ``1 - sigma_nu / sqrt(sigma_nu^2 + T sigma_gamma^2)``.
    ``paper``: ``1 - sigma_nu^2 / sqrt(sigma_nu^2 + T sigma_gamma^2)``, which
    is not scale invariant and is often negative before clamping.
    """
    denom = np.sqrt(sigma_nu2 + T * sigma_gamma2)
    if variant == "standard":
        rho = 1.0 - np.sqrt(sigma_nu2) / denom
    elif variant == "paper":
        rho = 1.0 - sigma_nu2 / denom
    else:
        raise ValueError(f"unknown rho variant {variant!r}")
    return float(np.clip(rho, 0.0, np.nextafter(1.0, 0.0)))


def estimate_variance_components(data: PanelDataset, rho_variant: str = "standard") -> VarianceComponents:
    """Swamy-Arora style variance components from within and between regressions.

    ``sigma_nu2`` is the within residual variance with ``n(T-1) - p`` degrees
    of freedom; ``sigma_gamma2`` is the between-regression residual variance
    (``n - p`` dof) minus ``sigma_nu2 / T``, floored at zero.
    """
    n, T, p = data.n, data.T, data.p
    dof_w = n * (T - 1) - p
    dof_b = n - p
    if n < 2 or dof_w <= 0 or dof_b <= 0:
        raise DegeneratePanelError(
            f"variance components need n(T-1) - p > 0 and n - p > 0 (n={n}, T={T}, p={p})"
        )
    w = within_transform(data)
    bw, _ = _ols(w.X, w.y, w.names, dof_w)
    ew = w.y - w.X @ bw
    sigma_nu2 = float(ew @ ew) / dof_w
    xbar, ybar = unit_means(data)
    bb, _ = _ols(xbar, ybar, data.names, dof_b)
    eb = ybar - xbar @ bb
    between = float(eb @ eb) / dof_b
    if sigma_nu2 <= 0:
        raise DegeneratePanelError("within residual variance is zero; the fit is exact")
    sigma_gamma2 = max(0.0, between - sigma_nu2 / T)
    rho = rho_from_components(sigma_gamma2, sigma_nu2, T, rho_variant)
    return VarianceComponents(sigma_gamma2=sigma_gamma2, sigma_nu2=sigma_nu2, rho_hat=rho, variant=rho_variant)


def estimate_random_effects(
    data: PanelDataset,
    vc: VarianceComponents | float | None = None,
    *,
    rho_variant: str = "standard",
) -> EstimateReport:
    """Feasible GLS via quasi-demeaning by ``rho_hat`` times the unit means.

    ``vc`` may be estimated components, a forced ``rho_hat`` in ``[0, 1]``,
    or None to estimate components from ``data``.
    """
    if vc is None:
        vc = estimate_variance_components(data, rho_variant)
    rho = vc.rho_hat if isinstance(vc, VarianceComponents) else float(vc)
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho_hat must lie in [0, 1], got {rho}")
    q = quasi_demean(data, rho)
    dof = data.nobs - data.p - (data.n if rho == 1.0 else 0)
    beta, sigma = _ols(q.X, q.y, q.names, dof)
    return EstimateReport(method="RandomEffects", beta_hat=beta, sigma_beta=sigma, rho_hat=rho)


def distance_closed_form(data: PanelDataset, D: WeightMatrix | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """``L(b) = 4 * ||D'(y - X b)||^2``."""
    Dm = _weights(D)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    _check_shapes(data, Dm, b)
    u = Dm.T @ (data.y - data.X @ b)
    return float(4.0 * (u @ u))


def distance_gradient(data: PanelDataset, D: WeightMatrix | np.ndarray, b: Sequence[float] | np.ndarray) -> np.ndarray:
    """``dL/db = 8 (X'DD'X b - X'DD'y)``."""
    Dm = _weights(D)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    _check_shapes(data, Dm, b)
    Xt = Dm.T @ data.X
    yt = Dm.T @ data.y
    return 8.0 * (Xt.T @ (Xt @ b) - Xt.T @ yt)


def estimate_md(
    data: PanelDataset,
    D: WeightMatrix | np.ndarray,
    omega: CovarianceModel | None = None,
) -> EstimateReport:
    """Closed-form MD estimate ``(X'DD'X)^{-1} X'DD'y``.

    When ``omega`` is given the report carries the exact sandwich covariance.
    The gradient of L at the solution is recorded; a value above tolerance
    (relative to ``8 ||X'DD'y||``) is logged as a warning.
    """
    Dm = _weights(D)
    if Dm.shape != (data.nobs, data.p):
        raise ShapeError(f"D has shape {Dm.shape}, expected {(data.nobs, data.p)}")
    report = validate_d(Dm, data)
    if not report.a3_ok:
        raise SingularMatrixError(
            f"singular normal equations: X'DD'X has rank {report.rank} < p = {data.p}"
        )
    Xt = Dm.T @ data.X
    yt = Dm.T @ data.y
    G = Xt.T @ Xt
    h = Xt.T @ yt
    beta = spd_solve(0.5 * (G + G.T), h)
    grad = 8.0 * (G @ beta - h)
    gnorm = float(np.linalg.norm(grad))
    scale = max(1.0, 8.0 * float(np.linalg.norm(h)))
    if gnorm > GRADIENT_TOL * scale:
        log.warning("MD first-order condition violated: |grad| = %.3g (cond %.3g)", gnorm, report.condition_number)
    sigma = None
    if omega is not None:
        sigma = covariance_beta(data, Dm, omega).sigma_beta
    return EstimateReport(method="MD", beta_hat=beta, sigma_beta=sigma, diagnostics=report, gradient_norm=gnorm)


def estimate_md_within(
    data: PanelDataset,
    strategy: str | WeightMatrix = "omega-aligned",
    sigma_nu2: float | None = None,
) -> EstimateReport:
    """MD applied to the within model: within-transform, then :func:`estimate_md`.

    The transformed errors have covariance ``sigma_nu2 (I - J/T)`` per unit,
    which is singular, so eigenpair strategies draw only from the non-null
    eigenpairs. ``sigma_nu2`` defaults to the within residual variance; it
    only scales the reported covariance, never the estimate.
    """
    w = within_transform(data)
    if sigma_nu2 is None:
        dof = data.n * (data.T - 1) - data.p
        if dof > 0:
            bw, _ = _ols(w.X, w.y, w.names, dof)
            e = w.y - w.X @ bw
            sigma_nu2 = float(e @ e) / dof
        if not sigma_nu2:
            sigma_nu2 = 1.0
    omega_w = within_omega(sigma_nu2, data.n, data.T)
    if isinstance(strategy, WeightMatrix):
        D = strategy
    else:
        D = weight_matrix(strategy, w, omega_w, pseudo=True)
    return estimate_md(w, D, omega_w)


def estimate(
    method: str,
    data: PanelDataset,
    *,
    d_strategy: str = "omega-aligned",
    rho_variant: str = "standard",
    within_pipeline: bool = False,
    D: WeightMatrix | None = None,
) -> EstimateReport:
    """Dispatch by short method name: ``ols``, ``within``, ``re`` or ``md``.

    For ``md`` without ``within_pipeline`` the covariance needed by the Omega
    based strategies (and by the reported standard errors) is built from
    estimated variance components.
    """
    method = method.lower()
    if method == "ols":
        return estimate_ols(data)
    if method == "within":
        return estimate_within(data)
    if method == "re":
        return estimate_random_effects(data, rho_variant=rho_variant)
    if method != "md":
        raise ValueError(f"unknown method {method!r}")
    if within_pipeline:
        return estimate_md_within(data, D if D is not None else d_strategy)
    vc = estimate_variance_components(data, rho_variant)
    omega = build_omega(vc.sigma_gamma2, vc.sigma_nu2, data.n, data.T)
    if D is None:
        D = weight_matrix(d_strategy, data, omega)
    return estimate_md(data, D, omega)
