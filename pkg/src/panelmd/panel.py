"""Balanced panel data model, layout helpers and the error covariance.

Rows are stored unit-major: the T observations of unit ``i`` occupy rows
``(i-1)*T .. i*T - 1`` in time order. Every other module relies on this.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

import numpy as np
import pandas as pd

from .exceptions import (
    DegeneratePanelError,
    PanelError,
    ShapeError,
    SingularCovarianceError,
    UnbalancedPanelError,
)
from .linalg import sym_eigh

__all__ = [
    "CovarianceModel",
    "PanelDataset",
    "ResidualVector",
    "build_omega",
    "quasi_demean",
    "read_panel_csv",
    "residuals",
    "row_index",
    "unit_means",
    "within_omega",
    "within_transform",
    "write_panel_csv",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def row_index(i: int, t: int, T: int, n: int | None = None) -> int:
    """Zero-based row of observation ``(i, t)``; ``i`` and ``t`` are 1-based."""
    if T < 1:
        raise IndexError(f"T must be positive, got {T}")
    if i < 1 or (n is not None and i > n):
        raise IndexError(f"unit index {i} out of range 1..{n if n is not None else 'n'}")
    if t < 1 or t > T:
        raise IndexError(f"time index {t} out of range 1..{T}")
    return (i - 1) * T + (t - 1)


@dataclass(frozen=True)
class PanelDataset:
    """Balanced panel of ``n`` units observed over ``T`` periods.

    ``X`` is ``(n*T, p)`` and ``y`` has length ``n*T``, both unit-major.
    ``unit_ids`` and ``time_ids`` hold the original labels (one per unit and
    one per period) so read/write round-trips preserve them.
    """

    X: np.ndarray
    y: np.ndarray
    n: int
    T: int
    unit_ids: np.ndarray = field(default=None)  # type: ignore[assignment]
    time_ids: np.ndarray = field(default=None)  # type: ignore[assignment]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        n, T = int(self.n), int(self.T)
        if n < 1:
            raise DegeneratePanelError(f"need at least one unit, got n={n}")
        if T < 2:
            raise DegeneratePanelError(f"need at least two periods, got T={T}")
        if X.ndim != 2 or X.shape[1] < 1:
            raise ShapeError("X must be a 2-d array with at least one column")
        if X.shape[0] != n * T:
            raise ShapeError(f"X has {X.shape[0]} rows, expected n*T = {n * T}")
        if y.shape[0] != n * T:
            raise ShapeError(f"y has length {y.shape[0]}, expected n*T = {n * T}")
        unit_ids = np.arange(1, n + 1) if self.unit_ids is None else np.asarray(self.unit_ids)
        time_ids = np.arange(1, T + 1) if self.time_ids is None else np.asarray(self.time_ids)
        if unit_ids.shape != (n,) or time_ids.shape != (T,):
            raise ShapeError("unit_ids must have length n and time_ids length T")
        names = tuple(self.names) or tuple(f"x{k + 1}" for k in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ShapeError(f"{len(names)} column names for {X.shape[1]} regressors")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "unit_ids", unit_ids)
        object.__setattr__(self, "time_ids", time_ids)
        object.__setattr__(self, "names", names)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def nobs(self) -> int:
        return self.n * self.T

    def X_blocks(self) -> np.ndarray:
        """``(n, T, p)`` view with ``X_blocks()[i]`` equal to X_i."""
        return self.X.reshape(self.n, self.T, self.p)

    def y_blocks(self) -> np.ndarray:
        return self.y.reshape(self.n, self.T)

    def replace(self, X: np.ndarray | None = None, y: np.ndarray | None = None) -> PanelDataset:
        """Copy with new arrays but the same layout and labels."""
        return PanelDataset(
            X=self.X if X is None else X,
            y=self.y if y is None else y,
            n=self.n,
            T=self.T,
            unit_ids=self.unit_ids,
            time_ids=self.time_ids,
            names=self.names,
        )


@dataclass(frozen=True)
class ResidualVector:
    values: np.ndarray
    b: np.ndarray


def unit_means(data: PanelDataset) -> tuple[np.ndarray, np.ndarray]:
    """Time averages per unit: ``(xbar (n, p), ybar (n,))``."""
    return data.X_blocks().mean(axis=1), data.y_blocks().mean(axis=1)


def quasi_demean(data: PanelDataset, rho: float) -> PanelDataset:
    """Subtract ``rho`` times each unit's time average from y and every column of X."""
    xbar, ybar = unit_means(data)
    Xq = data.X_blocks() - rho * xbar[:, None, :]
    yq = data.y_blocks() - rho * ybar[:, None]
    return data.replace(X=Xq.reshape(data.nobs, data.p), y=yq.reshape(-1))


def within_transform(data: PanelDataset) -> PanelDataset:
    """Demean y and X within each unit, removing any time-invariant component."""
    if data.T < 2:
        raise DegeneratePanelError("within transform needs T >= 2")
    return quasi_demean(data, 1.0)


def residuals(data: PanelDataset, b: Sequence[float] | np.ndarray) -> ResidualVector:
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.shape[0] != data.p:
        raise ShapeError(f"coefficient vector has length {b.shape[0]}, expected p = {data.p}")
    return ResidualVector(values=data.y - data.X @ b, b=b)


@dataclass(frozen=True)
class CovarianceModel:
    """Block-diagonal error covariance of a balanced panel.

    Either a two-component random-effects structure (``sigma_gamma2``,
    ``sigma_nu2``) or explicit ``(n, T, T)`` blocks. The dense ``nT x nT``
    matrix is only built on request by :meth:`dense`.
    """

    n: int
    T: int
    kind: str
    sigma_gamma2: float | None = None
    sigma_nu2: float | None = None
    explicit: np.ndarray | None = None

    @classmethod
    def from_blocks(cls, blocks: Sequence[np.ndarray] | np.ndarray) -> CovarianceModel:
        b = np.asarray(blocks, dtype=np.float64)
        if b.ndim != 3 or b.shape[1] != b.shape[2]:
            raise ShapeError("blocks must have shape (n, T, T)")
        if not np.allclose(b, np.swapaxes(b, 1, 2), rtol=1e-12, atol=1e-14):
            raise PanelError("covariance blocks must be symmetric")
        sym = 0.5 * (b + np.swapaxes(b, 1, 2))
        return cls(n=b.shape[0], T=b.shape[1], kind="explicit", explicit=_frozen(sym))

    def block(self, i: int) -> np.ndarray:
        """Block E_i for zero-based unit ``i``."""
        if self.kind == "random_effects":
            T = self.T
            return self.sigma_nu2 * np.eye(T) + self.sigma_gamma2 * np.ones((T, T))
        return np.array(self.explicit[i])

    def blocks(self) -> np.ndarray:
        if self.kind == "random_effects":
            return np.broadcast_to(self.block(0), (self.n, self.T, self.T))
        return self.explicit

    def dense(self) -> np.ndarray:
        """Materialize the full ``nT x nT`` matrix; meant for small checks."""
        N = self.n * self.T
        out = np.zeros((N, N))
        for i, E in enumerate(self.blocks()):
            sl = slice(i * self.T, (i + 1) * self.T)
            out[sl, sl] = E
        return out

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """``Omega @ v`` for a vector or an ``(nT, k)`` matrix, block by block."""
        v = np.asarray(v, dtype=np.float64)
        vb = v.reshape(self.n, self.T, -1)
        out = np.einsum("ist,isk->itk", self.blocks(), vb)
        return out.reshape(v.shape)

    def quadratic(self, A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
        """``A' Omega B`` accumulated as the sum of ``A_i' E_i B_i``."""
        B = A if B is None else B
        return np.asarray(A, dtype=np.float64).T @ self.matvec(B)

    def eigh_blocks(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-block ascending eigenvalues ``(n, T)`` and eigenvectors ``(n, T, T)``."""
        if self.kind == "random_effects":
            w, v = sym_eigh(self.block(0))
            return np.tile(w, (self.n, 1)), np.broadcast_to(v, (self.n, self.T, self.T))
        ws, vs = zip(*(sym_eigh(E) for E in self.explicit))
        return np.stack(ws), np.stack(vs)


def build_omega(sigma_gamma2: float, sigma_nu2: float, n: int, T: int) -> CovarianceModel:
    """Random-effects covariance with blocks ``sigma_nu2 * I_T + sigma_gamma2 * J_T``."""
    if not np.isfinite(sigma_nu2) or sigma_nu2 <= 0:
        raise SingularCovarianceError(f"sigma_nu2 must be positive, got {sigma_nu2}")
    if not np.isfinite(sigma_gamma2) or sigma_gamma2 < 0:
        raise PanelError(f"sigma_gamma2 must be non-negative, got {sigma_gamma2}")
    if n < 1 or T < 1:
        raise ShapeError("n and T must be positive")
    return CovarianceModel(
        n=int(n), T=int(T), kind="random_effects",
        sigma_gamma2=float(sigma_gamma2), sigma_nu2=float(sigma_nu2),
    )


def within_omega(sigma_nu2: float, n: int, T: int) -> CovarianceModel:
    """Covariance of within-transformed errors, ``sigma_nu2 * (I_T - J_T / T)`` per block.

    Each block has rank T-1.
    """
    if sigma_nu2 <= 0:
        raise SingularCovarianceError(f"sigma_nu2 must be positive, got {sigma_nu2}")
    block = sigma_nu2 * (np.eye(T) - np.ones((T, T)) / T)
    return CovarianceModel.from_blocks(np.broadcast_to(block, (n, T, T)))


def read_panel_csv(source: str | Path | IO[str]) -> PanelDataset:
    """Load a long-format CSV with header ``unit,time,y,x1,...,xp``.

    Rows may come in any order; lines starting with ``#`` are ignored.
    Raises :class:`UnbalancedPanelError` unless every unit has exactly one
    row for every period.
    """
    try:
        frame = pd.read_csv(source, comment="#", skipinitialspace=True, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise PanelError(f"malformed CSV: {exc}") from exc
    cols = [str(c).strip() for c in frame.columns]
    frame.columns = cols
    if cols[:3] != ["unit", "time", "y"] or len(cols) < 4:
        raise PanelError("CSV header must start with unit,time,y followed by regressor columns")
    xcols = cols[3:]
    if frame.isna().any().any():
        raise PanelError("CSV contains missing or non-numeric values")
    try:
        values = frame[["y", *xcols]].astype(np.float64)
        units = frame["unit"].astype(np.int64)
        times = frame["time"].astype(np.int64)
    except (TypeError, ValueError) as exc:
        raise PanelError(f"CSV contains non-numeric entries: {exc}") from exc
    if frame.duplicated(["unit", "time"]).any():
        dup = frame.loc[frame.duplicated(["unit", "time"]), ["unit", "time"]].iloc[0]
        raise UnbalancedPanelError(f"duplicate observation for unit {dup['unit']}, time {dup['time']}")
    unit_ids = np.unique(units.to_numpy())
    time_ids = np.unique(times.to_numpy())
    n, T = unit_ids.size, time_ids.size
    if len(frame) != n * T:
        counts = units.value_counts()
        short = counts[counts < T].index.tolist()
        raise UnbalancedPanelError(
            f"unbalanced panel: {len(frame)} rows for {n} units x {T} periods; "
            f"units with missing periods: {short[:5]}"
        )
    order = np.lexsort((times.to_numpy(), units.to_numpy()))
    values = values.to_numpy()[order]
    return PanelDataset(
        X=values[:, 1:], y=values[:, 0], n=n, T=T,
        unit_ids=unit_ids, time_ids=time_ids, names=tuple(xcols),
    )


def write_panel_csv(data: PanelDataset, target: str | Path | IO[str]) -> None:
    frame = pd.DataFrame(data.X, columns=list(data.names))
    frame.insert(0, "y", data.y)
    frame.insert(0, "time", np.tile(data.time_ids, data.n))
    frame.insert(0, "unit", np.repeat(data.unit_ids, data.T))
    frame.to_csv(target, index=False, float_format="%.17g")
