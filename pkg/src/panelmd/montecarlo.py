"""Error distributions, the panel data-generating process and the replication engine.

Each replication ``r`` draws from its own generator seeded by ``(seed, r)``
through :class:`numpy.random.SeedSequence`, so a table depends only on the
configuration and the seed, never on how replications are scheduled.
Within a replication the draw order is fixed: regressors, individual
effects, remainder disturbances.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import IO, Callable, Sequence

import numpy as np

from .estimators import (
    estimate_md,
    estimate_md_within,
    estimate_ols,
    estimate_random_effects,
    estimate_within,
)
from .exceptions import NumericalError, PanelError, SimulationError
from .inference import NormalityResult, covariance_beta, normality_diagnostic, standardized_deviation
from .panel import PanelDataset, build_omega
from .weights import weight_matrix

__all__ = [
    "DistributionSpec",
    "SimulationConfig",
    "SimulationTable",
    "ConfigError",
    "normality_study",
    "generate_dataset",
    "inverse_cdf",
    "metrics",
    "replicate_fixed_design",
    "replication_rng",
    "run_simulation",
    "sample",
]

FAILURE_LIMIT = 0.01
D_STRATEGIES = ("ols-equiv", "omega-eigen-small", "omega-eigen-large", "omega-aligned")
_U53 = float(2**53)


@dataclass(frozen=True)
class DistributionSpec:
    """A zero-centered symmetric error law.

    ``family`` is one of ``normal``, ``laplace``, ``logistic`` or ``mtn``.
    For ``mtn`` the draw is ``N(0, scale_a^2)`` with probability ``weight``
    and ``N(0, scale_b^2)`` otherwise.
    """

    family: str
    loc: float = 0.0
    scale: float = 5.0
    weight: float = 0.9
    scale_a: float = 2.0
    scale_b: float = 5.0

    def __post_init__(self) -> None:
        if self.family not in ("normal", "laplace", "logistic", "mtn"):
            raise PanelError(f"unknown distribution family {self.family!r}")
        if self.family == "mtn":
            if not 0.0 < self.weight < 1.0:
                raise PanelError("mixture weight must lie in (0, 1)")
            if self.scale_a <= 0 or self.scale_b <= 0:
                raise PanelError("mixture scales must be positive")
        elif self.scale <= 0:
            raise PanelError("scale must be positive")

    @classmethod
    def parse(cls, name: str, scale: float = 5.0) -> DistributionSpec:
        """Build a spec from a CLI name with the simulation-study defaults."""
        key = name.strip().lower()
        if key == "mtn":
            return cls("mtn")
        return cls(key, scale=scale)

    @property
    def variance(self) -> float:
        if self.family == "normal":
            return self.scale**2
        if self.family == "laplace":
            return 2.0 * self.scale**2
        if self.family == "logistic":
            return self.scale**2 * math.pi**2 / 3.0
        return self.weight * self.scale_a**2 + (1.0 - self.weight) * self.scale_b**2

    @property
    def label(self) -> str:
        if self.family == "mtn":
            return f"mtn({self.weight:g},{self.scale_a:g},{self.scale_b:g})"
        return f"{self.family}({self.loc:g},{self.scale:g})"


def inverse_cdf(dist: DistributionSpec, u):
    """Quantile function for the Laplace and logistic families."""
    u = np.asarray(u, dtype=np.float64)
    if dist.family == "laplace":
        c = u - 0.5
        return dist.loc - dist.scale * np.sign(c) * np.log1p(-2.0 * np.abs(c))
    if dist.family == "logistic":
        return dist.loc + dist.scale * np.log(u / (1.0 - u))
    raise PanelError(f"no closed-form quantile used for {dist.family!r}")


def _open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    # Midpoints of a 2^-53 lattice: never exactly 0 or 1.
    return (rng.integers(0, 2**53, size=size, dtype=np.int64) + 0.5) / _U53


def sample(dist: DistributionSpec, rng: np.random.Generator, size=None):
    """Draw from ``dist`` using ``rng``.

    Laplace and logistic use inverse-CDF on open-interval uniforms; normal
    uses the generator's standard normal; MTN picks a component first.
    """
    if dist.family in ("laplace", "logistic"):
        return inverse_cdf(dist, _open_uniform(rng, size))
    if dist.family == "normal":
        return dist.loc + dist.scale * rng.standard_normal(size)
    pick_b = rng.random(size) >= dist.weight
    z = rng.standard_normal(size)
    return dist.loc + np.where(pick_b, dist.scale_b, dist.scale_a) * z


def replication_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(r),)))


class ConfigError(PanelError):
    def __init__(self, name: str, message: str) -> None:
        super().__init__(f"{name} {message}")
        self.name = name


@dataclass(frozen=True)
class SimulationConfig:
    """Monte Carlo design. Defaults follow the published simulation study."""

    n: int = 10
    T: int = 5
    p: int = 3
    beta: tuple[float, ...] = (-2.0, 1.2, 3.3)
    gamma_dist: DistributionSpec = field(default_factory=lambda: DistributionSpec("normal"))
    nu_dist: DistributionSpec = field(default_factory=lambda: DistributionSpec("normal"))
    x_range: tuple[float, float] = (0.0, 30.0)
    estimators: tuple[str, ...] = ("ols", "within", "re", "md")
    d_strategy: str = "omega-aligned"
    rho_variant: str = "standard"
    reps: int = 1000
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        beta = tuple(float(b) for b in self.beta)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "estimators", tuple(e.lower() for e in self.estimators))
        checks = [
            ("reps", self.reps >= 1, "must be at least 1"),
            ("n", self.n >= 1, "must be at least 1"),
            ("T", self.T >= 2, "must be at least 2"),
            ("p", self.p >= 1, "must be at least 1"),
            ("beta", len(beta) == self.p, f"needs {self.p} entries"),
            ("x_range", self.x_range[0] < self.x_range[1], "needs low < high"),
            ("workers", self.workers >= 1, "must be at least 1"),
            ("rho_variant", self.rho_variant in ("standard", "paper"), "must be standard or paper"),
            ("d_strategy", self.d_strategy in D_STRATEGIES, f"must be one of {', '.join(D_STRATEGIES)}"),
            ("seed", 0 <= self.seed < 2**64, "must be a 64-bit unsigned integer"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(name, msg)
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown or not self.estimators:
            raise ConfigError("estimators", f"unknown or empty estimator list {sorted(unknown)}")

    def describe(self) -> dict:
        d = asdict(self)
        d["gamma_dist"] = self.gamma_dist.label
        d["nu_dist"] = self.nu_dist.label
        return d


def generate_dataset(config: SimulationConfig, rng: np.random.Generator) -> tuple[PanelDataset, np.ndarray]:
    """One panel from the linear model with two-component errors; also returns the errors."""
    n, T, p = config.n, config.T, config.p
    lo, hi = config.x_range
    X = rng.uniform(lo, hi, size=(n * T, p))
    gamma = np.asarray(sample(config.gamma_dist, rng, n))
    nu = np.asarray(sample(config.nu_dist, rng, n * T))
    eps = np.repeat(gamma, T) + nu
    y = X @ np.asarray(config.beta) + eps
    return PanelDataset(X=X, y=y, n=n, T=T), eps


ESTIMATORS: dict[str, Callable] = {
    "ols": lambda data, cfg: estimate_ols(data),
    "within": lambda data, cfg: estimate_within(data),
    "re": lambda data, cfg: estimate_random_effects(data, rho_variant=cfg.rho_variant),
    "md": lambda data, cfg: estimate_md_within(data, cfg.d_strategy),
}


def _replicate(config: SimulationConfig, r: int) -> dict[str, np.ndarray | None]:
    data, _ = generate_dataset(config, replication_rng(config.seed, r))
    out: dict[str, np.ndarray | None] = {}
    for name in config.estimators:
        try:
            out[name] = ESTIMATORS[name](data, config).beta_hat
        except (NumericalError, np.linalg.LinAlgError):
            out[name] = None
    return out


def _replicate_range(config: SimulationConfig, start: int, stop: int) -> list[dict]:
    return [_replicate(config, r) for r in range(start, stop)]


def metrics(estimates, beta_true) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-coefficient ``(bias, SE, MSE)``; SE divides by R so MSE = bias^2 + SE^2."""
    est = np.asarray(estimates, dtype=np.float64)
    if est.size == 0:
        raise PanelError("metrics need at least one estimate")
    if est.ndim == 1:
        est = est[None, :]
    beta_true = np.asarray(beta_true, dtype=np.float64)
    if est.shape[1] != beta_true.shape[0]:
        raise PanelError("estimate and true coefficient dimensions differ")
    mean = est.mean(axis=0)
    bias = mean - beta_true
    se = np.sqrt(np.mean((est - mean) ** 2, axis=0))
    mse = np.mean((est - beta_true) ** 2, axis=0)
    return bias, se, mse


@dataclass(frozen=True)
class SimulationTable:
    """Bias, SE and MSE for every (estimator, coefficient) cell."""

    estimators: tuple[str, ...]
    bias: np.ndarray
    se: np.ndarray
    mse: np.ndarray
    config: SimulationConfig
    failures: dict[str, int]

    def cell(self, estimator: str, k: int) -> tuple[float, float, float]:
        j = self.estimators.index(estimator)
        return float(self.bias[j, k]), float(self.se[j, k]), float(self.mse[j, k])

    def rows(self):
        for j, name in enumerate(self.estimators):
            for k in range(self.bias.shape[1]):
                yield name, f"beta{k + 1}", self.bias[j, k], self.se[j, k], self.mse[j, k]

    def write_csv(self, stream: IO[str]) -> None:
        stream.write("estimator,coefficient,bias,se,mse\n")
        for name, coef, b, s, m in self.rows():
            stream.write(f"{name},{coef},{float(b)!r},{float(s)!r},{float(m)!r}\n")


def run_simulation(config: SimulationConfig) -> SimulationTable:
    """Run ``config.reps`` replications and aggregate per estimator.

    A replication in which an estimator hits a numerical failure is skipped
    for that estimator only; more than 1% failures aborts the run.
    """
    R = config.reps
    if config.workers > 1 and R > 1:
        bounds = np.linspace(0, R, min(config.workers * 4, R) + 1).astype(int)
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_replicate_range, config, a, b) for a, b in zip(bounds[:-1], bounds[1:])]
            results = [row for fut in futures for row in fut.result()]
    else:
        results = _replicate_range(config, 0, R)
    bias, se, mse, failures = [], [], [], {}
    for name in config.estimators:
        good = [res[name] for res in results if res[name] is not None]
        failures[name] = R - len(good)
        if failures[name] > FAILURE_LIMIT * R or not good:
            raise SimulationError(f"estimator {name!r} failed in {failures[name]} of {R} replications")
        b, s, m = metrics(np.stack(good), config.beta)
        bias.append(b)
        se.append(s)
        mse.append(m)
    return SimulationTable(
        estimators=config.estimators,
        bias=np.stack(bias), se=np.stack(se), mse=np.stack(mse),
        config=config, failures=failures,
    )


def replicate_fixed_design(
    data: PanelDataset,
    beta,
    gamma_dist: DistributionSpec,
    nu_dist: DistributionSpec,
    D,
    reps: int,
    seed: int,
) -> np.ndarray:
    """MD estimates over ``reps`` fresh error draws with X and D held fixed.

    Returns an ``(reps, p)`` array. Errors for replication ``r`` come from
    :func:`replication_rng` ``(seed, r)``.
    """
    beta = np.asarray(beta, dtype=np.float64)
    mean = data.X @ beta
    out = np.empty((reps, data.p))
    for r in range(reps):
        rng = replication_rng(seed, r)
        gamma = np.asarray(sample(gamma_dist, rng, data.n))
        nu = np.asarray(sample(nu_dist, rng, data.nobs))
        y = mean + np.repeat(gamma, data.T) + nu
        out[r] = estimate_md(data.replace(y=y), D).beta_hat
    return out


def normality_study(
    n: int,
    T: int,
    p: int,
    reps: int,
    seed: int,
    gamma_dist: DistributionSpec | None = None,
    nu_dist: DistributionSpec | None = None,
    d_strategy: str = "omega-aligned",
    beta: Sequence[float] | None = None,
    x_range: tuple[float, float] = (0.0, 30.0),
) -> tuple[list[NormalityResult], np.ndarray]:
    """Standardized MD deviations under a known covariance, with their KS summary.

    X is drawn once from ``SeedSequence(seed)``; Omega is the random-effects
    covariance implied by the two error laws; replication errors use the
    per-replication streams.
    """
    gamma_dist = gamma_dist or DistributionSpec("normal")
    nu_dist = nu_dist or DistributionSpec("normal")
    if beta is None:
        beta = (-2.0, 1.2, 3.3) if p == 3 else (1.0,) * p
    beta = np.asarray(beta, dtype=np.float64)
    design = np.random.default_rng(np.random.SeedSequence(int(seed)))
    X = design.uniform(x_range[0], x_range[1], size=(n * T, p))
    data = PanelDataset(X=X, y=X @ beta, n=n, T=T)
    omega = build_omega(gamma_dist.variance, nu_dist.variance, n, T)
    D = weight_matrix(d_strategy, data, omega)
    sigma = covariance_beta(data, D, omega).sigma_beta
    est = replicate_fixed_design(data, beta, gamma_dist, nu_dist, D, reps, seed)
    z = standardized_deviation(est, beta, sigma)
    return normality_diagnostic(z), z
