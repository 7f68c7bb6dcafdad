import numpy as np
import pytest

from panelmd.estimators import distance_closed_form, estimate_md
from panelmd.exceptions import BoxTooSmallError, ShapeError
from panelmd.oracle import IndicatorProfile, distance_oracle, equivalence_run, grid_minimize, single_integral
from panelmd.panel import PanelDataset

from conftest import make_panel


@pytest.mark.parametrize("e,expected", [(0.0, 0.0), (1.0, -2.0), (-3.0, 6.0)])
def test_single_integral_examples(e, expected):
    assert single_integral(e) == expected


def test_single_integral_dense_sample():
    for e in np.linspace(-100, 100, 2001):
        assert abs(single_integral(e) + 2 * e) <= 1e-12


def test_indicator_profile():
    g = IndicatorProfile(1.5)
    assert g.support == (-1.5, 1.5)
    assert g.sign == -1.0
    assert g(0.0) == -1.0 and g(2.0) == 0.0 and g(-2.0) == 0.0
    assert IndicatorProfile(-2.0)(0.0) == 1.0
    assert IndicatorProfile(0.0).integral() == 0.0


def test_distance_oracle_examples(rng):
    data, beta = make_panel(rng, 2, 2, 1, noise=0.0)
    assert distance_oracle(data, rng.standard_normal((4, 1)), beta) == pytest.approx(0.0, abs=1e-20)
    one = PanelDataset(X=[[0.0], [0.0]], y=[1.0, 0.0], n=1, T=2)
    D = [[1.0], [0.0]]
    assert distance_oracle(one, D, [0.0]) == 4.0
    assert distance_closed_form(one, D, [0.0]) == 4.0
    with pytest.raises(ShapeError):
        distance_oracle(one, D, [0.0, 1.0])


def test_distance_oracle_matches_closed_form(rng):
    for _ in range(50):
        data, _ = make_panel(rng, 2, 2, 2)
        D = rng.standard_normal((4, 2))
        b = rng.standard_normal(2)
        ref = distance_closed_form(data, D, b)
        assert distance_oracle(data, D, b) == pytest.approx(ref, rel=1e-9)


def test_distance_oracle_permutation_invariance(rng):
    data, _ = make_panel(rng, 3, 3, 2)
    D = rng.standard_normal((9, 2))
    b = rng.standard_normal(2)
    perm = rng.permutation(9)
    shuffled = PanelDataset(X=data.X[perm], y=data.y[perm], n=3, T=3)
    assert distance_oracle(shuffled, D[perm], b) == pytest.approx(distance_oracle(data, D, b), rel=1e-12)


def test_equivalence_run():
    assert equivalence_run(2, 2, 2, 20, seed=3) <= 1e-9


def test_grid_minimize_noiseless(rng):
    data, beta = make_panel(rng, 4, 2, 2, noise=0.0)
    D = rng.standard_normal((8, 2))
    box = [(b - 0.2, b + 0.2) for b in beta]
    got = grid_minimize(data, D, box, 1e-3)
    assert np.max(np.abs(got - beta)) <= 5e-4 + 1e-12


def test_grid_minimize_one_dimensional_parabola():
    # L(b) = 4 (0.3217 - b)^2 with its vertex at 0.3217.
    data = PanelDataset(X=[[1.0], [0.0]], y=[0.3217, 0.0], n=1, T=2)
    got = grid_minimize(data, [[1.0], [0.0]], [(0.0, 1.0)], 1e-3)
    assert abs(got[0] - 0.3217) <= 0.5e-3


def test_grid_minimize_random_instance(rng):
    data, _ = make_panel(rng, 3, 2, 2)
    D = rng.standard_normal((6, 2))
    beta = estimate_md(data, D).beta_hat
    box = [(b - 0.3, b + 0.3) for b in beta]
    assert np.max(np.abs(grid_minimize(data, D, box, 1e-3) - beta)) <= 1e-3


def test_grid_minimize_box_errors(rng):
    data, beta = make_panel(rng, 3, 2, 1, noise=0.0)
    D = rng.standard_normal((6, 1))
    with pytest.raises(BoxTooSmallError):
        grid_minimize(data, D, [(beta[0] + 1, beta[0] + 2)], 1e-2)
    wide, _ = make_panel(rng, 3, 2, 3)
    with pytest.raises(ShapeError):
        grid_minimize(wide, np.ones((6, 3)), [(0, 1)] * 3, 0.1)
