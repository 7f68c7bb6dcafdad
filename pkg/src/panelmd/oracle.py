"""Indicator-based evaluation of the MD distance, independent of the closed form.

For a residual ``e`` the integrand of the distance is the step function

    g_e(z) = I(e <= z) - I(-e < z),

which is ``-sign(e)`` on ``(-|e|, |e|)`` and zero elsewhere. The squared norm
of U expands into pairwise products ``d_itk d_jsk g_{e_it}(z_t) g_{e_js}(z_s)``;
each pair is integrated over two separate variables, so a pair contributes the
product of two one-dimensional integrals. That reading also applies to the
diagonal pairs, and it is the one that matches ``4 * sum_k (sum d e)^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import BoxTooSmallError, ShapeError
from .panel import PanelDataset

__all__ = ["IndicatorProfile", "distance_oracle", "equivalence_run", "grid_minimize", "single_integral"]


@dataclass(frozen=True)
class IndicatorProfile:
    e: float

    def __call__(self, z: float) -> float:
        return float(self.e <= z) - float(-self.e < z)

    @property
    def support(self) -> tuple[float, float]:
        a = abs(self.e)
        return (-a, a)

    @property
    def sign(self) -> float:
        return -float(np.sign(self.e))

    def integral(self) -> float:
        """Exact integral over the real line by summing over the breakpoint intervals."""
        points = sorted({-self.e, self.e})
        total = 0.0
        for lo, hi in zip(points[:-1], points[1:]):
            total += self((lo + hi) / 2.0) * (hi - lo)
        return total


def single_integral(e: float) -> float:
    """Integral of ``g_e`` over the real line; equals ``-2 e``."""
    return IndicatorProfile(float(e)).integral()


def distance_oracle(data: PanelDataset, D, b) -> float:
    """Distance through the pairwise indicator expansion.

    Quadratic in the number of observations; meant for small instances.
    """
    Dm = np.asarray(getattr(D, "D", D), dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if Dm.shape[0] != data.nobs or b.shape[0] != data.p:
        raise ShapeError("D, b and the panel disagree in shape")
    N, K = Dm.shape
    integrals = []
    for row in range(N):
        e = float(data.y[row]) - sum(float(data.X[row, j]) * float(b[j]) for j in range(data.p))
        integrals.append(single_integral(e))
    total = 0.0
    for k in range(K):
        for r in range(N):
            for s in range(N):
                total += Dm[r, k] * Dm[s, k] * integrals[r] * integrals[s]
    return total


def grid_minimize(
    data: PanelDataset,
    D,
    box,
    step: float,
    chunk: int = 65536,
) -> np.ndarray:
    """Exhaustive grid argmin of the closed-form distance over a box.

    ``box`` is one ``(low, high)`` pair per coefficient (p <= 2). If the
    minimizing grid point sits on the edge of the box in some coordinate the
    true minimum may lie outside, and :class:`BoxTooSmallError` is raised.
    """
    Dm = np.asarray(getattr(D, "D", D), dtype=np.float64)
    box = np.asarray(box, dtype=np.float64).reshape(-1, 2)
    p = data.p
    if p > 2:
        raise ShapeError("grid_minimize supports at most two coefficients")
    if box.shape[0] != p:
        raise ShapeError(f"box has {box.shape[0]} intervals, expected p = {p}")
    if step <= 0:
        raise ValueError("step must be positive")
    axes = [lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1) for lo, hi in box]
    grids = np.meshgrid(*axes, indexing="ij")
    points = np.stack([g.reshape(-1) for g in grids], axis=1)
    Xt = Dm.T @ data.X
    yt = Dm.T @ data.y
    best_val, best_idx = np.inf, -1
    for start in range(0, points.shape[0], chunk):
        block = points[start:start + chunk]
        u = yt[None, :] - block @ Xt.T
        vals = 4.0 * np.einsum("gk,gk->g", u, u)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_idx = float(vals[j]), start + j
    flat = np.unravel_index(best_idx, grids[0].shape)
    for k, (ax, pos) in enumerate(zip(axes, flat)):
        if pos == 0 or pos == ax.size - 1:
            raise BoxTooSmallError(f"grid minimum on the boundary of coordinate {k}; widen the box")
    return points[best_idx]


def equivalence_run(n: int, T: int, p: int, instances: int, seed: int) -> float:
    """Largest relative gap between :func:`distance_oracle` and the closed form.

    Draws ``instances`` random (X, y, D, b) with standard normal entries.
    """
    from .estimators import distance_closed_form

    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    worst = 0.0
    for _ in range(instances):
        X = rng.standard_normal((n * T, p))
        data = PanelDataset(X=X, y=rng.standard_normal(n * T), n=n, T=T)
        D = rng.standard_normal((n * T, p))
        b = rng.standard_normal(p)
        ref = distance_closed_form(data, D, b)
        got = distance_oracle(data, D, b)
        worst = max(worst, float(abs(got - ref) / max(abs(ref), 1e-300)))
    return worst
