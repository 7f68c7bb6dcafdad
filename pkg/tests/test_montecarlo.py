import io
import math

import numpy as np
import pytest

from panelmd.exceptions import PanelError
from panelmd.montecarlo import (
    ConfigError,
    DistributionSpec,
    SimulationConfig,
    generate_dataset,
    inverse_cdf,
    metrics,
    replication_rng,
    run_simulation,
    sample,
)


def test_inverse_cdf_examples():
    assert inverse_cdf(DistributionSpec("logistic"), 0.5) == 0.0
    lap = inverse_cdf(DistributionSpec("laplace"), 0.9)
    assert lap == pytest.approx(-5 * math.log(0.2), rel=1e-14)
    assert lap == pytest.approx(8.0472, abs=1e-4)
    assert inverse_cdf(DistributionSpec("laplace"), 0.1) == pytest.approx(-lap, rel=1e-14)


def test_distribution_variances():
    assert DistributionSpec("normal").variance == 25.0
    assert DistributionSpec("laplace").variance == 50.0
    assert DistributionSpec("logistic").variance == pytest.approx(82.2467, abs=1e-4)
    assert DistributionSpec("mtn").variance == pytest.approx(6.1)


def test_distribution_validation():
    with pytest.raises(PanelError):
        DistributionSpec("cauchy")
    with pytest.raises(PanelError):
        DistributionSpec("normal", scale=0.0)
    with pytest.raises(PanelError):
        DistributionSpec("mtn", weight=1.0)


@pytest.mark.parametrize("family", ["normal", "laplace", "logistic", "mtn"])
def test_sampler_mean_is_centered(family):
    dist = DistributionSpec.parse(family)
    x = sample(dist, np.random.default_rng(11), 200_000)
    sd = math.sqrt(dist.variance)
    assert abs(x.mean()) <= 4 * sd / math.sqrt(x.size)
    assert np.all(np.isfinite(x))


def test_sampler_is_deterministic():
    for family in ("normal", "laplace", "logistic", "mtn"):
        dist = DistributionSpec.parse(family)
        a = sample(dist, replication_rng(5, 3), 100)
        b = sample(dist, replication_rng(5, 3), 100)
        np.testing.assert_array_equal(a, b)


def test_generate_dataset_structure():
    cfg = SimulationConfig(reps=1)
    data, eps = generate_dataset(cfg, replication_rng(0, 0))
    assert (data.n, data.T, data.p) == (10, 5, 3)
    assert data.X.min() >= 0.0 and data.X.max() <= 30.0
    np.testing.assert_allclose(data.y - data.X @ np.array(cfg.beta), eps, atol=1e-12)
    again, eps2 = generate_dataset(cfg, replication_rng(0, 0))
    np.testing.assert_array_equal(again.y, data.y)
    np.testing.assert_array_equal(eps2, eps)


def test_generate_dataset_without_effect():
    cfg = SimulationConfig(gamma_dist=DistributionSpec("normal", scale=1e-6), reps=1)
    data, eps = generate_dataset(cfg, replication_rng(1, 0))
    means = eps.reshape(10, 5).mean(axis=1)
    assert np.abs(means).max() < 15.0


@pytest.mark.parametrize("gamma,nu", [("normal", "normal"), ("laplace", "logistic")])
def test_within_unit_correlation(gamma, nu):
    g, v = DistributionSpec.parse(gamma), DistributionSpec.parse(nu)
    cfg = SimulationConfig(n=5000, T=5, gamma_dist=g, nu_dist=v, reps=1)
    _, eps = generate_dataset(cfg, replication_rng(2, 0))
    e = eps.reshape(5000, 5)
    corr = np.corrcoef(e[:, 0], e[:, 1])[0, 1]
    assert corr == pytest.approx(g.variance / (g.variance + v.variance), abs=0.05)


def test_metrics_examples():
    beta = np.array([1.0, -2.0])
    assert all(np.all(m == 0) for m in metrics([beta, beta], beta))
    bias, se, mse = metrics([beta + 1, beta - 1], beta)
    np.testing.assert_allclose(bias, 0.0)
    np.testing.assert_allclose(se, 1.0)
    np.testing.assert_allclose(mse, 1.0)
    bias, se, mse = metrics([beta + 1, beta + 1], beta)
    np.testing.assert_allclose(bias, 1.0)
    np.testing.assert_allclose(se, 0.0)
    np.testing.assert_allclose(mse, 1.0)
    with pytest.raises(PanelError):
        metrics([], beta)


def test_config_validation():
    with pytest.raises(ConfigError) as info:
        SimulationConfig(reps=0)
    assert info.value.name == "reps"
    with pytest.raises(ConfigError):
        SimulationConfig(beta=(1.0, 2.0))
    with pytest.raises(ConfigError):
        SimulationConfig(estimators=("ols", "gmm"))
    with pytest.raises(ConfigError):
        SimulationConfig(d_strategy="bogus")


def test_simulation_single_replication():
    table = run_simulation(SimulationConfig(reps=1))
    np.testing.assert_array_equal(table.se, 0.0)
    np.testing.assert_allclose(table.mse, table.bias**2, rtol=1e-12)


def test_simulation_noiseless_limit():
    cfg = SimulationConfig(
        gamma_dist=DistributionSpec("normal", scale=1e-9),
        nu_dist=DistributionSpec("normal", scale=1e-6),
        reps=20,
    )
    table = run_simulation(cfg)
    assert np.all(table.mse < 1e-8)


def test_simulation_mse_identity_and_csv():
    table = run_simulation(SimulationConfig(reps=50, seed=9))
    np.testing.assert_allclose(table.mse, table.bias**2 + table.se**2, rtol=0, atol=1e-10)
    assert np.all(np.isfinite(table.mse))
    buf = io.StringIO()
    table.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "estimator,coefficient,bias,se,mse"
    assert len(lines) == 1 + 4 * 3
    assert lines[1].startswith("ols,beta1,")


def test_simulation_determinism_and_schedule_invariance():
    cfg = SimulationConfig(reps=40, seed=123)
    a = run_simulation(cfg)
    b = run_simulation(cfg)
    c = run_simulation(SimulationConfig(reps=40, seed=123, workers=2))
    for other in (b, c):
        np.testing.assert_array_equal(a.bias, other.bias)
        np.testing.assert_array_equal(a.se, other.se)
        np.testing.assert_array_equal(a.mse, other.mse)
    d = run_simulation(SimulationConfig(reps=40, seed=124))
    assert not np.array_equal(a.mse, d.mse)
