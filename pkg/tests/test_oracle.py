import numpy as np
import pytest

from banditcd import (
    LabeledDataset,
    SolverState,
    SparseColumnMatrix,
    apply_coordinate_step,
    coordinate_view,
    generate_synthetic,
    lasso_prox_update,
    make_lasso,
    make_ridge_dual,
    oracle_coordinate_min,
    oracle_eval,
    reference_update,
)
from banditcd.errors import ScaleGuardError
from banditcd.problems import duality_gap


def tiny(values, labels):
    return LabeledDataset(
        matrix=SparseColumnMatrix.from_dense(values), labels=np.asarray(labels, float)
    )


def test_snapshot_zero_state_lasso_formulas():
    ds = generate_synthetic(12, 5, 0.8, 3, 0.05, seed=1)
    p = make_lasso(ds, 0.1)
    snap = oracle_eval(p, np.zeros(p.d))
    n = p.n
    assert snap.f_value == pytest.approx(float(ds.labels @ ds.labels) / (2 * n))
    assert np.allclose(snap.w, -ds.labels / n)
    assert np.allclose(snap.Ax, 0.0)


def test_snapshot_gap_nonnegative():
    ds = generate_synthetic(12, 5, 0.8, 3, 0.05, seed=2)
    p = make_lasso(ds, 0.1)
    rng = np.random.default_rng(3)
    bound = p.params["bound"]
    for _ in range(50):
        x = np.clip(rng.standard_normal(p.d), -bound, bound)
        snap = oracle_eval(p, x)
        assert snap.gap_total >= -1e-9
        assert np.all(snap.coordinate_gaps >= -1e-9)


def test_engine_agrees_with_snapshot_after_random_steps():
    p = make_lasso(generate_synthetic(50, 30, 0.4, 5, 0.02, seed=4), 0.05)
    st = SolverState(p)
    rng = np.random.default_rng(5)
    for _ in range(1000):
        i = int(rng.integers(p.d))
        view = coordinate_view(st, i)
        prop = (
            lasso_prox_update(p, view, i)
            if rng.random() < 0.5
            else reference_update(p, view, i)
        )
        apply_coordinate_step(p, st, prop)
    snap = oracle_eval(p, st.x)
    assert st.objective == pytest.approx(snap.f_value, abs=1e-7)
    gap_engine, per_engine = duality_gap(p, st.x, st.v)
    assert gap_engine == pytest.approx(snap.gap_total, abs=1e-7)
    assert np.allclose(per_engine, np.maximum(snap.coordinate_gaps, 0.0), atol=1e-7)
    assert np.allclose(st.v, snap.Ax, atol=1e-7)
    assert np.allclose(st.w, snap.w, atol=1e-7)


def test_coordinate_min_matches_lasso_closed_form():
    p = make_lasso(tiny([[1.0]], [1.0]), 0.1)
    z = oracle_coordinate_min(p, np.zeros(1), 0)
    assert z == pytest.approx(0.9, abs=1e-8)
    view_prop = lasso_prox_update(
        p,
        type("V", (), {"x_i": 0.0, "a_dot_w": -1.0, "version": 0})(),
        0,
    )
    assert view_prop.new_x == pytest.approx(z, abs=1e-8)


def test_coordinate_min_matches_ridge_dual_update():
    from banditcd import ridge_dual_update
    from banditcd.problems import dual_point
    from banditcd.updates import CoordinateView

    ds = tiny([[1.0, 2.0], [3.0, 4.0]], [1.0, -1.0])
    p = make_ridge_dual(ds, 0.5)
    alpha = np.array([0.3, -0.2])
    w = dual_point(p, p.matrix.matvec(alpha))
    rows, vals = p.matrix.col(1)
    view = CoordinateView(x_i=float(alpha[1]), a_dot_w=float(vals @ w[rows]))
    prop = ridge_dual_update(p, view, 1)
    z = oracle_coordinate_min(p, alpha, 1)
    assert z == pytest.approx(prop.new_x, abs=1e-8)


def test_coordinate_min_beats_grid():
    p = make_lasso(generate_synthetic(15, 6, 0.7, 3, 0.05, seed=6), 0.1)
    rng = np.random.default_rng(7)
    bound = p.params["bound"]
    x = np.clip(rng.standard_normal(p.d) * 0.2, -bound, bound)
    i = 2
    z_star = oracle_coordinate_min(p, x, i)
    dense = p.matrix.to_dense()
    ax = dense @ x

    def phi(z):
        v = ax + (z - x[i]) * dense[:, i]
        g = 0.1 * abs(z) if abs(z) <= bound else np.inf
        return p.smooth.value(v) + g

    for z in np.linspace(-bound, bound, 101):
        assert phi(z_star) <= phi(z) + 1e-10


def test_scale_guard_refuses_large_instances():
    ds = generate_synthetic(1100, 1000, 0.01, 3, 0.05, seed=8)
    p = make_lasso(ds, 0.1)
    with pytest.raises(ScaleGuardError):
        oracle_eval(p, np.zeros(p.d))
