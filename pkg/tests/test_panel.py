import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panelmd.exceptions import (
    DegeneratePanelError,
    PanelError,
    ShapeError,
    SingularCovarianceError,
    UnbalancedPanelError,
)
from panelmd.panel import (
    CovarianceModel,
    PanelDataset,
    build_omega,
    read_panel_csv,
    residuals,
    row_index,
    within_omega,
    within_transform,
    write_panel_csv,
)

from conftest import make_panel


@pytest.mark.parametrize("i,t,T,expected", [(1, 1, 5, 0), (2, 1, 5, 5), (3, 4, 5, 13)])
def test_row_index(i, t, T, expected):
    assert row_index(i, t, T) == expected


def test_row_index_is_bijective():
    n, T = 4, 3
    rows = {row_index(i, t, T, n) for i in range(1, n + 1) for t in range(1, T + 1)}
    assert rows == set(range(n * T))


@pytest.mark.parametrize("i,t", [(0, 1), (1, 0), (1, 6), (5, 1)])
def test_row_index_out_of_range(i, t):
    with pytest.raises(IndexError):
        row_index(i, t, 5, n=4)


def test_dataset_validation():
    with pytest.raises(DegeneratePanelError):
        PanelDataset(X=np.ones((3, 1)), y=np.ones(3), n=3, T=1)
    with pytest.raises(ShapeError):
        PanelDataset(X=np.ones((5, 1)), y=np.ones(6), n=3, T=2)
    with pytest.raises(ShapeError):
        PanelDataset(X=np.ones((6, 1)), y=np.ones(5), n=3, T=2)


def test_dataset_is_read_only():
    data = PanelDataset(X=np.ones((4, 1)), y=np.arange(4.0), n=2, T=2)
    with pytest.raises(ValueError):
        data.y[0] = 1.0


def test_within_transform_examples():
    data = PanelDataset(X=[[1.0], [1.0], [4.0], [0.0], [0.0], [5.0]], y=[2, 4, 9, 1, 3, 5], n=2, T=3)
    w = within_transform(data)
    np.testing.assert_allclose(w.y[:3], [-3, -1, 4])
    # Second unit y = (1, 3, 5) has mean 3.
    np.testing.assert_allclose(w.y[3:], [-2, 0, 2])
    np.testing.assert_allclose(w.X[:, 0], [-1, -1, 2, -5 / 3, -5 / 3, 10 / 3])

    two = PanelDataset(X=[[7.0], [7.0]], y=[1, 3], n=1, T=2)
    w2 = within_transform(two)
    np.testing.assert_allclose(w2.y, [-1, 1])
    np.testing.assert_array_equal(w2.X, 0.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), T=st.integers(2, 5), p=st.integers(1, 3))
def test_within_transform_properties(seed, n, T, p):
    rng = np.random.default_rng(seed)
    data, _ = make_panel(rng, n, T, p)
    w = within_transform(data)
    np.testing.assert_allclose(w.X_blocks().sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(w.y_blocks().sum(axis=1), 0.0, atol=1e-12)
    ww = within_transform(w)
    np.testing.assert_allclose(ww.X, w.X, atol=1e-12)
    np.testing.assert_allclose(ww.y, w.y, atol=1e-12)
    b = rng.standard_normal(p)
    lhs = residuals(w, b).values
    rhs = within_transform(data.replace(y=residuals(data, b).values)).y
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_residuals_examples():
    data = PanelDataset(X=[[2.0], [1.0]], y=[7.0, 5.0], n=1, T=2)
    r = residuals(data, [3.0])
    assert r.values[0] == 1.0
    np.testing.assert_array_equal(residuals(data, [0.0]).values, data.y)
    exact = PanelDataset(X=[[1.0, 2.0], [3.0, 1.0]], y=[5.0, 5.0], n=1, T=2)
    np.testing.assert_allclose(residuals(exact, [1.0, 2.0]).values, 0.0)
    with pytest.raises(ShapeError):
        residuals(data, [1.0, 2.0])


def test_build_omega_examples():
    om = build_omega(1.0, 2.0, 1, 2)
    np.testing.assert_array_equal(om.dense(), [[3.0, 1.0], [1.0, 3.0]])
    np.testing.assert_allclose(np.linalg.eigvalsh(om.block(0)), [2.0, 4.0])
    np.testing.assert_array_equal(build_omega(0.0, 1.0, 3, 4).dense(), np.eye(12))
    with pytest.raises(SingularCovarianceError):
        build_omega(1.0, 0.0, 2, 2)
    with pytest.raises(PanelError):
        build_omega(-1.0, 1.0, 2, 2)


@settings(max_examples=40, deadline=None)
@given(
    sg=st.floats(0.0, 50.0), sn=st.floats(0.01, 50.0),
    n=st.integers(1, 4), T=st.integers(2, 5),
)
def test_random_effects_block_structure(sg, sn, n, T):
    om = build_omega(sg, sn, n, T)
    dense = om.dense()
    mask = np.kron(np.eye(n), np.ones((T, T))).astype(bool)
    assert np.all(dense[~mask] == 0.0)
    w = np.linalg.eigvalsh(om.block(0))
    expected = np.sort(np.r_[np.full(T - 1, sn), sn + T * sg])
    np.testing.assert_allclose(w, expected, rtol=1e-10, atol=1e-10)
    assert np.linalg.eigvalsh(dense).min() >= sn * (1 - 1e-10)


def test_matvec_and_quadratic_match_dense(rng):
    blocks = []
    for _ in range(3):
        a = rng.standard_normal((4, 4))
        blocks.append(a @ a.T)
    om = CovarianceModel.from_blocks(blocks)
    v = rng.standard_normal((12, 2))
    np.testing.assert_allclose(om.matvec(v), om.dense() @ v, rtol=1e-12)
    np.testing.assert_allclose(om.quadratic(v), v.T @ om.dense() @ v, rtol=1e-12)


def test_within_omega_rank():
    om = within_omega(2.0, 3, 4)
    w = np.linalg.eigvalsh(om.dense())
    assert np.sum(w > 1e-10) == 3 * 3
    np.testing.assert_allclose(w[w > 1e-10], 2.0)


def test_csv_round_trip(rng):
    data, _ = make_panel(rng, 3, 4, 2)
    buf = io.StringIO()
    write_panel_csv(data, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "unit,time,y,x1,x2"
    # Shuffled row order is sorted back into unit-major layout.
    body = lines[1:]
    shuffled = [body[k] for k in rng.permutation(len(body))]
    back = read_panel_csv(io.StringIO("\n".join([lines[0], *shuffled])))
    np.testing.assert_array_equal(back.X, data.X)
    np.testing.assert_array_equal(back.y, data.y)
    assert (back.n, back.T, back.p) == (3, 4, 2)


def test_csv_rejects_unbalanced():
    text = "unit,time,y,x1\n1,1,0.5,1\n1,2,0.7,2\n2,1,0.1,3\n"
    with pytest.raises(UnbalancedPanelError):
        read_panel_csv(io.StringIO(text))
    dup = "unit,time,y,x1\n1,1,0.5,1\n1,1,0.7,2\n2,1,0.1,3\n2,2,0.1,3\n"
    with pytest.raises(UnbalancedPanelError):
        read_panel_csv(io.StringIO(dup))


def test_csv_rejects_bad_header_and_values():
    with pytest.raises(PanelError):
        read_panel_csv(io.StringIO("id,time,y,x1\n1,1,1,1\n1,2,1,1\n"))
    with pytest.raises(PanelError):
        read_panel_csv(io.StringIO("unit,time,y,x1\n1,1,abc,1\n1,2,1,1\n"))
