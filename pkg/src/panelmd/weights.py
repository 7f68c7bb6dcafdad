"""Weight matrices D for the closed-form minimum distance estimator.

D is ``(nT, p)`` with entry ``d_itk`` in row ``(i-1)*T + t-1``, column ``k``.
Three constructions are provided:

* ``ols_equivalent``: ``D = X (X'X)^{-1/2}``, which reduces MD to OLS.
* ``omega_eigen``: columns ``c_j^{-1/2} q_j`` taken from p eigenpairs of Omega,
  so that ``D' Omega D = I``.
* ``omega_aligned``: a whitened frame spanning ``Omega^+ X``, i.e.
  ``D = Omega^+ X (X' Omega^+ X)^{-1/2}``. It also satisfies
  ``D' Omega D = I`` but is built from the regressors, which gives the
  GLS estimator. On within-transformed data it uses only the T-1 non-null
  eigenpairs of each block.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence, Union

import numpy as np

from .exceptions import PanelError, ShapeError, SingularCovarianceError, SingularMatrixError
from .linalg import EIG_FLOOR, RANK_RTOL, inv_sqrtm, sym_eigh
from .panel import CovarianceModel, PanelDataset

__all__ = [
    "AssumptionReport",
    "WeightMatrix",
    "d_omega_aligned",
    "d_omega_eigen",
    "d_ols_equivalent",
    "omega_eigenpairs",
    "read_weight_csv",
    "validate_d",
    "weight_matrix",
]

Selection = Union[str, Sequence[int]]


@dataclass(frozen=True)
class WeightMatrix:
    D: np.ndarray
    strategy: str
    T: int
    selection: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        D = np.array(self.D, dtype=np.float64, copy=True)
        if D.ndim == 1:
            D = D[:, None]
        if D.ndim != 2:
            raise ShapeError("D must be a 2-d array")
        if D.shape[0] % self.T:
            raise ShapeError(f"D has {D.shape[0]} rows, not a multiple of T = {self.T}")
        if not np.all(np.isfinite(D)):
            raise ShapeError("D contains non-finite entries")
        D.setflags(write=False)
        object.__setattr__(self, "D", D)

    @property
    def p(self) -> int:
        return self.D.shape[1]

    @property
    def n(self) -> int:
        return self.D.shape[0] // self.T

    def blocks(self) -> np.ndarray:
        """``(n, T, p)`` array whose ``i``-th slice is D_i."""
        return self.D.reshape(self.n, self.T, self.p)

    @classmethod
    def from_blocks(cls, blocks: Sequence[np.ndarray], strategy: str = "custom") -> WeightMatrix:
        b = np.asarray(blocks, dtype=np.float64)
        return cls(D=b.reshape(-1, b.shape[-1]), strategy=strategy, T=b.shape[1])


@dataclass(frozen=True)
class AssumptionReport:
    """Diagnostics for the regularity conditions on D.

    ``a2_by_tk[t, k]`` is ``n * max_i d_itk^2``; ``a2_statistic`` is the
    largest of those. ``a3_ok`` says whether ``X'DD'X`` has full rank.
    """

    a2_by_tk: np.ndarray
    a2_statistic: float
    a3_ok: bool
    rank: int
    condition_number: float


def _as_matrix(D: WeightMatrix | np.ndarray) -> np.ndarray:
    return D.D if isinstance(D, WeightMatrix) else np.asarray(D, dtype=np.float64)


def d_ols_equivalent(data: PanelDataset) -> WeightMatrix:
    """``D = X (X'X)^{-1/2}`` so that ``DD'`` is the projection onto col(X)."""
    gram = data.X.T @ data.X
    try:
        A = inv_sqrtm(gram)
    except SingularMatrixError:
        w, v = sym_eigh(gram)
        null = v[:, 0]
        involved = [data.names[k] for k in np.flatnonzero(np.abs(null) > 1e-8)]
        raise SingularMatrixError(
            "X'X is singular; the regressors "
            f"{', '.join(involved)} are linearly dependent "
            f"(null direction {np.round(null, 6).tolist()})"
        ) from None
    return WeightMatrix(D=data.X @ A, strategy="ols_equivalent", T=data.T)


def omega_eigenpairs(omega: CovarianceModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All nT eigenpairs of Omega assembled from the per-block decompositions.

    Returns ``(values, units, local)`` sorted by ascending eigenvalue with a
    stable order: ties keep unit-major, then within-block order. ``units[j]``
    and ``local[j]`` locate eigenpair ``j`` as column ``local[j]`` of the
    eigenvector matrix of block ``units[j]``.
    """
    w, _ = omega.eigh_blocks()
    values = w.reshape(-1)
    units = np.repeat(np.arange(omega.n), omega.T)
    local = np.tile(np.arange(omega.T), omega.n)
    order = np.argsort(values, kind="stable")
    return values[order], units[order], local[order]


def d_omega_eigen(
    omega: CovarianceModel,
    p: int,
    selection: Selection = "smallest",
    *,
    pseudo: bool = False,
) -> WeightMatrix:
    """Whitening weights ``d_j = c_j^{-1/2} q_j`` from p eigenpairs of Omega.

    ``selection`` is ``"smallest"``, ``"largest"``, or explicit positions in
    the ascending eigenvalue order of :func:`omega_eigenpairs`. With
    ``pseudo=True`` null eigenpairs are discarded before selecting, which is
    how a rank-deficient Omega (e.g. within-transformed errors) is handled;
    explicit positions then index the non-null eigenpairs.
    """
    values, units, local = omega_eigenpairs(omega)
    N = omega.n * omega.T
    if p < 1 or p > N:
        raise ShapeError(f"p = {p} must lie in 1..nT = {N}")
    floor = EIG_FLOOR * max(values[-1], 0.0)
    if pseudo:
        keep = values > floor
        values, units, local = values[keep], units[keep], local[keep]
        if values.size < p:
            raise SingularCovarianceError(
                f"only {values.size} non-null eigenpairs available for p = {p}"
            )
    if isinstance(selection, str):
        if selection == "smallest":
            picks = np.arange(p)
        elif selection == "largest":
            picks = np.arange(values.size - 1, values.size - 1 - p, -1)
        else:
            raise ValueError(f"unknown eigenpair selection {selection!r}")
    else:
        picks = np.asarray(list(selection), dtype=np.int64)
        if picks.size != p:
            raise ShapeError(f"{picks.size} eigenpair indices given for p = {p}")
        if np.unique(picks).size != picks.size:
            raise ValueError("selected eigenpairs must be distinct")
        if picks.min() < 0 or picks.max() >= values.size:
            raise IndexError(f"eigenpair index out of range 0..{values.size - 1}")
    c = values[picks]
    if np.any(c <= floor):
        raise SingularCovarianceError(
            f"selected eigenvalues {c[c <= floor].tolist()} are not positive"
        )
    _, vecs = omega.eigh_blocks()
    D = np.zeros((N, p))
    T = omega.T
    for j, (pick, cj) in enumerate(zip(picks, c)):
        i = units[pick]
        D[i * T:(i + 1) * T, j] = vecs[i][:, local[pick]] / np.sqrt(cj)
    return WeightMatrix(D=D, strategy="omega_eigen", T=T, selection=tuple(int(k) for k in picks))


def _pinv_blocks(omega: CovarianceModel) -> np.ndarray:
    w, v = omega.eigh_blocks()
    floor = EIG_FLOOR * max(w.max(), 0.0)
    inv = np.where(w > floor, 1.0 / np.where(w > floor, w, 1.0), 0.0)
    return np.einsum("itj,ij,isj->its", v, inv, v)


def d_omega_aligned(data: PanelDataset, omega: CovarianceModel) -> WeightMatrix:
    """Whitened weights spanning ``Omega^+ X``: ``D = Omega^+ X (X' Omega^+ X)^{-1/2}``.

    ``D' Omega D = I`` holds whenever X lies in the range of Omega, so the
    covariance sandwich collapses exactly as for eigenpair weights.
    """
    if omega.n != data.n or omega.T != data.T:
        raise ShapeError("covariance model and panel have different (n, T)")
    pinv = _pinv_blocks(omega)
    WX = np.einsum("its,isk->itk", pinv, data.X_blocks()).reshape(data.nobs, data.p)
    G = data.X.T @ WX
    try:
        A = inv_sqrtm(G)
    except SingularMatrixError:
        raise SingularMatrixError(
            "X' Omega^+ X is singular; a regressor lies in the null space of Omega "
            "(for within data this means a time-invariant regressor)"
        ) from None
    return WeightMatrix(D=WX @ A, strategy="omega_aligned", T=data.T)


def validate_d(D: WeightMatrix | np.ndarray, data: PanelDataset) -> AssumptionReport:
    Dm = _as_matrix(D)
    if Dm.shape != (data.nobs, data.p):
        raise ShapeError(f"D has shape {Dm.shape}, expected {(data.nobs, data.p)}")
    blocks = Dm.reshape(data.n, data.T, data.p)
    a2 = data.n * np.max(blocks**2, axis=0)
    Xt = Dm.T @ data.X
    G = Xt.T @ Xt
    s = np.linalg.svd(G, compute_uv=False)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s[0] > 0 else 0
    cond = float(s[0] / s[-1]) if s[-1] > 0 else float("inf")
    return AssumptionReport(
        a2_by_tk=a2,
        a2_statistic=float(a2.max()),
        a3_ok=rank == data.p,
        rank=rank,
        condition_number=cond,
    )


def weight_matrix(
    strategy: str,
    data: PanelDataset,
    omega: CovarianceModel | None = None,
    *,
    pseudo: bool = False,
) -> WeightMatrix:
    """Build D by its CLI name: ols-equiv, omega-eigen-small, omega-eigen-large, omega-aligned."""
    key = strategy.replace("_", "-")
    if key == "ols-equiv":
        return d_ols_equivalent(data)
    if omega is None:
        raise ValueError(f"strategy {strategy!r} needs a covariance model")
    if key == "omega-eigen-small":
        return d_omega_eigen(omega, data.p, "smallest", pseudo=pseudo)
    if key == "omega-eigen-large":
        return d_omega_eigen(omega, data.p, "largest", pseudo=pseudo)
    if key == "omega-aligned":
        return d_omega_aligned(data, omega)
    raise ValueError(f"unknown D strategy {strategy!r}")


def read_weight_csv(source: str | Path | IO[str], data: PanelDataset) -> WeightMatrix:
    """Load a custom D from a headerless CSV of nT rows by p columns (unit-major)."""
    try:
        D = np.loadtxt(source, delimiter=",", ndmin=2, comments="#")
    except ValueError as exc:
        raise PanelError(f"malformed weight file: {exc}") from None
    if D.shape != (data.nobs, data.p):
        raise ShapeError(f"weight file has shape {D.shape}, expected {(data.nobs, data.p)}")
    return WeightMatrix(D=D, strategy="custom", T=data.T)
