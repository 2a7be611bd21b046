import numpy as np
import pytest

from banditcd import (
    CoordinateView,
    LabeledDataset,
    SparseColumnMatrix,
    UpdateProposal,
    generate_synthetic,
    lasso_prox_update,
    logistic_shrink_update,
    make_lasso,
    make_logistic_l1,
    make_ridge_dual,
    marginal_decrease,
    marginal_decreases,
    primal_value,
    reference_update,
    ridge_dual_update,
    sample_state,
    step_size,
    surrogate_gap,
    verify_class_h,
)
from banditcd.errors import InternalConsistencyError
from banditcd.problems import dual_point


def tiny(values, labels):
    return LabeledDataset(
        matrix=SparseColumnMatrix.from_dense(values), labels=np.asarray(labels, float)
    )


def binary_dataset(n=40, d=12, seed=11):
    # dense +-1 features keep the quoted logistic shrink step inside the
    # safe class (its curvature constant matches |a_i|^2 = n exactly)
    rng = np.random.default_rng(seed)
    a = np.sign(rng.standard_normal((n, d)))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    return LabeledDataset(matrix=SparseColumnMatrix.from_dense(a), labels=y)


def view_at(p, x, i):
    w = dual_point(p, p.matrix.matvec(x))
    rows, vals = p.matrix.col(i)
    return CoordinateView(x_i=float(x[i]), a_dot_w=float(vals @ w[rows]))


def objective(p, x):
    return primal_value(p, np.asarray(x, float))


# ---------------------------------------------------------------------------
# step_size / marginal_decrease


def test_step_size_saturates_at_one():
    assert step_size(2.0, 1.0, 0.0, 1.0, 1.0) == 1.0


def test_step_size_fractional():
    assert step_size(0.5, 1.0, 0.0, 1.0, 1.0) == pytest.approx(0.5)


def test_step_size_zero_residue_returns_one():
    assert step_size(0.0, 0.0, 0.0, 1.0, 1.0) == 1.0
    assert step_size(3.0, 0.0, 2.0, 1.0, 1.0) == 1.0


def test_step_size_input_validation():
    with pytest.raises(ValueError):
        step_size(1.0, 1.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        step_size(1.0, 1.0, 0.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        step_size(1.0, 1.0, -0.5, 1.0, 1.0)
    with pytest.raises(InternalConsistencyError):
        step_size(-1.0, 1.0, 0.0, 1.0, 1.0)


def test_marginal_decrease_saturated_branch():
    # step saturates: r = G - |a|^2 kappa^2 / (2 beta) = 2 - 0.5
    assert marginal_decrease(2.0, 1.0, 0.0, 1.0, 1.0) == pytest.approx(1.5)


def test_marginal_decrease_fractional_branch():
    # s = 0.5: r = s * G / 2 = 0.125
    assert marginal_decrease(0.5, 1.0, 0.0, 1.0, 1.0) == pytest.approx(0.125)


def test_marginal_decrease_stationary_is_zero():
    assert marginal_decrease(0.0, 0.0, 0.0, 1.0, 1.0) == 0.0


def test_vectorized_marginal_decreases_match_scalar():
    rng = np.random.default_rng(0)
    gaps = rng.uniform(0, 3, 200)
    kappas = rng.standard_normal(200) * np.where(rng.random(200) < 0.2, 0.0, 1.0)
    mu = np.where(rng.random(200) < 0.5, 0.0, rng.uniform(0.1, 2.0, 200))
    col_sq = rng.uniform(0.2, 4.0, 200)
    beta = 1.7
    vec = marginal_decreases(gaps, kappas, mu, col_sq, beta)
    for k in range(200):
        assert vec[k] == pytest.approx(
            marginal_decrease(gaps[k], kappas[k], mu[k], col_sq[k], beta), abs=1e-14
        )
    assert np.all(vec >= 0.0)


# ---------------------------------------------------------------------------
# reference_update


def test_reference_update_fixed_point_at_zero_residue():
    p = make_lasso(tiny([[1.0]], [1.0]), 0.1)
    view = CoordinateView(x_i=0.0, a_dot_w=0.05)  # inside the dual ball
    prop = reference_update(p, view, 0)
    assert prop.new_x == 0.0
    assert prop.decrease == 0.0
    assert prop.kappa == 0.0


def test_reference_update_chained_hand_example():
    # one row, one column, unit data: with gap 4.5 and residue 2.5 the safe
    # step is s = 4.5 / 6.25 = 0.72, lands at 1.8, certifies 1.62
    p = make_lasso(tiny([[1.0]], [1.9]), 0.1, support_bound=2.5)
    view = view_at(p, np.zeros(1), 0)
    assert view.a_dot_w == pytest.approx(-1.9)
    prop = reference_update(p, view, 0)
    assert prop.gap == pytest.approx(4.5, rel=1e-12)
    assert prop.kappa == pytest.approx(2.5, rel=1e-12)
    assert prop.step == pytest.approx(0.72, rel=1e-12)
    assert prop.new_x == pytest.approx(1.8, rel=1e-12)
    assert prop.decrease == pytest.approx(1.62, rel=1e-12)


def test_reference_update_certified_decrease_holds_on_random_states():
    p = make_lasso(generate_synthetic(25, 10, 0.6, 4, 0.05, seed=2), 0.08)
    rng = np.random.default_rng(4)
    for _ in range(1000):
        x = sample_state(p, rng)
        i = int(rng.integers(p.d))
        prop = reference_update(p, view_at(p, x, i), i)
        x2 = x.copy()
        x2[i] = prop.new_x
        assert objective(p, x) - objective(p, x2) >= prop.decrease - 1e-9


# ---------------------------------------------------------------------------
# lasso_prox_update


def test_lasso_prox_hand_example():
    p = make_lasso(tiny([[1.0]], [1.0]), 0.1)
    prop = lasso_prox_update(p, view_at(p, np.zeros(1), 0), 0)
    assert prop.new_x == pytest.approx(0.9, rel=1e-12)
    assert prop.step == "exact"


def test_lasso_prox_dead_zone():
    # |a.rho| <= n*lambda with x_i = 0 leaves the coordinate at zero
    p = make_lasso(tiny([[1.0], [1.0]], [0.05, 0.05]), 0.1)
    prop = lasso_prox_update(p, view_at(p, np.zeros(1), 0), 0)
    assert prop.new_x == 0.0


def test_lasso_prox_requires_lasso():
    p = make_ridge_dual(tiny([[1.0]], [1.0]), 0.5)
    with pytest.raises(ValueError):
        lasso_prox_update(p, CoordinateView(0.0, 0.0), 0)


def test_lasso_prox_never_beaten_by_reference():
    p = make_lasso(generate_synthetic(30, 8, 0.5, 3, 0.02, seed=3), 0.1)
    rng = np.random.default_rng(5)
    for _ in range(1000):
        x = sample_state(p, rng)
        i = int(rng.integers(p.d))
        view = view_at(p, x, i)
        prox = lasso_prox_update(p, view, i)
        ref = reference_update(p, view, i)
        x_prox, x_ref = x.copy(), x.copy()
        x_prox[i] = prox.new_x
        x_ref[i] = ref.new_x
        assert objective(p, x_prox) <= objective(p, x_ref) + 1e-9


# ---------------------------------------------------------------------------
# logistic_shrink_update


def test_logistic_shrink_to_zero():
    ds = binary_dataset(n=4, d=2, seed=1)
    p = make_logistic_l1(ds, 0.05)
    prop = logistic_shrink_update(p, CoordinateView(x_i=0.1, a_dot_w=0.0), 0)
    assert prop.new_x == 0.0  # |x - 0| <= 4*lambda = 0.2 shrinks away


def test_logistic_shrink_hand_example():
    # single datapoint y=+1, a=1, x=0: smooth slope is -1/2, so the
    # argument is 2 and the threshold 0.04 leaves 1.96
    p = make_logistic_l1(tiny([[1.0]], [1.0]), 0.01)
    view = view_at(p, np.zeros(1), 0)
    assert view.a_dot_w == pytest.approx(-0.5)
    prop = logistic_shrink_update(p, view, 0)
    assert prop.new_x == pytest.approx(1.96, rel=1e-12)


def test_logistic_shrink_requires_logistic():
    p = make_lasso(tiny([[1.0]], [1.0]), 0.1)
    with pytest.raises(ValueError):
        logistic_shrink_update(p, CoordinateView(0.0, 0.0), 0)


def test_logistic_shrink_membership_on_its_native_scaling():
    p = make_logistic_l1(binary_dataset(), 0.05)
    report = verify_class_h(logistic_shrink_update, p, trials=1000, seed=7)
    assert report.violations == 0


# ---------------------------------------------------------------------------
# ridge_dual_update


def test_ridge_dual_update_noop_at_optimum():
    from banditcd import reference_optimum

    ds = generate_synthetic(8, 5, 0.9, 3, 0.05, seed=6)
    p = make_ridge_dual(ds, 0.4)
    ref = reference_optimum(p, 1e-12)
    for i in range(p.d):
        prop = ridge_dual_update(p, view_at(p, ref.x, i), i)
        assert abs(prop.new_x - ref.x[i]) <= 1e-9


def test_ridge_dual_update_matches_quadratic_minimizer():
    ds = tiny([[1.0, 2.0], [3.0, 4.0]], [1.0, -1.0])
    lam, n = 0.5, 2
    p = make_ridge_dual(ds, lam)
    alpha = np.array([0.3, -0.2])
    i = 1
    # restriction along coordinate i: quad * z^2 + slope * z + const around 0
    a = ds.matrix.to_dense()
    col = a[i, :]  # datapoint i (column of the transposed matrix)
    u = a.T @ alpha

    def restriction(z):
        uu = u + z * col
        return (
            uu @ uu / (2 * lam)
            + ds.labels[i] * (alpha[i] + z)
            + n / 4 * (alpha[i] + z) ** 2
            + ds.labels[1 - i] * alpha[1 - i]
            + n / 4 * alpha[1 - i] ** 2
        )

    quad = col @ col / (2 * lam) + n / 4
    slope = col @ u / lam + ds.labels[i] + n / 2 * alpha[i]
    z_star = -slope / (2 * quad)
    grid = np.linspace(z_star - 1, z_star + 1, 101)
    assert restriction(z_star) <= min(restriction(z) for z in grid) + 1e-12
    prop = ridge_dual_update(p, view_at(p, alpha, i), i)
    assert prop.new_x == pytest.approx(alpha[i] + z_star, rel=1e-12)


def test_ridge_dual_update_requires_ridge():
    p = make_lasso(tiny([[1.0]], [1.0]), 0.1)
    with pytest.raises(ValueError):
        ridge_dual_update(p, CoordinateView(0.0, 0.0), 0)


def test_ridge_dual_membership():
    ds = generate_synthetic(15, 8, 0.8, 4, 0.05, seed=9)
    p = make_ridge_dual(ds, 0.5)
    report = verify_class_h(ridge_dual_update, p, trials=1000, seed=7)
    assert report.violations == 0


# ---------------------------------------------------------------------------
# surrogate_gap


def test_surrogate_gap_zero_at_identity():
    p = make_lasso(generate_synthetic(10, 5, 0.8, 2, 0.05, seed=8), 0.1)
    rng = np.random.default_rng(9)
    x = sample_state(p, rng)
    assert surrogate_gap(p, x, x) == 0.0


def test_surrogate_upper_bounds_single_coordinate_changes():
    p = make_lasso(generate_synthetic(20, 8, 0.6, 3, 0.05, seed=10), 0.1)
    rng = np.random.default_rng(11)
    bound = p.params["bound"]
    for _ in range(300):
        x = sample_state(p, rng)
        i = int(rng.integers(p.d))
        x2 = x.copy()
        x2[i] = float(np.clip(x[i] + rng.standard_normal(), -bound, bound))
        change = objective(p, x2) - objective(p, x)
        assert change <= surrogate_gap(p, x, x2) + 1e-9


def test_surrogate_tight_for_matched_quadratic():
    # the quadratic smooth part has curvature exactly 1/n along unit columns,
    # so the separable model is the exact Taylor expansion
    p = make_lasso(tiny(np.eye(3), [1.0, -2.0, 0.5]), 0.1)
    rng = np.random.default_rng(12)
    bound = p.params["bound"]
    for _ in range(100):
        x = np.clip(rng.standard_normal(3), -bound, bound)
        i = int(rng.integers(3))
        x2 = x.copy()
        x2[i] = float(np.clip(x[i] + rng.standard_normal(), -bound, bound))
        change = objective(p, x2) - objective(p, x)
        assert change == pytest.approx(surrogate_gap(p, x, x2), abs=1e-9)


# ---------------------------------------------------------------------------
# verify_class_h


def test_verify_reference_against_itself():
    p = make_lasso(generate_synthetic(15, 6, 0.7, 3, 0.05, seed=13), 0.1)
    report = verify_class_h(reference_update, p, trials=200, seed=1)
    assert report.violations == 0
    assert report.trials == 200


def test_verify_lasso_prox_clean():
    p = make_lasso(generate_synthetic(15, 6, 0.7, 3, 0.05, seed=13), 0.1)
    report = verify_class_h(lasso_prox_update, p, trials=1000, seed=1)
    assert report.violations == 0


def test_verify_flags_overshooting_rule():
    p = make_lasso(generate_synthetic(15, 6, 0.7, 3, 0.05, seed=13), 0.1)

    def overshoot(problem, view, i):
        ref = reference_update(problem, view, i)
        return UpdateProposal(
            i=i,
            new_x=view.x_i + 10.0 * (ref.new_x - view.x_i),
            step="exact",
            kappa=ref.kappa,
            gap=ref.gap,
            decrease=ref.decrease,
            version=ref.version,
        )

    report = verify_class_h(overshoot, p, trials=200, seed=1)
    assert report.violations > 0
    assert report.worst_margin > 0


def test_verify_rejects_zero_trials():
    p = make_lasso(tiny([[1.0]], [1.0]), 0.1)
    with pytest.raises(ValueError):
        verify_class_h(reference_update, p, trials=0, seed=1)


# ---------------------------------------------------------------------------
# never-increase invariant across rules


@pytest.mark.parametrize(
    "maker,rule",
    [
        ("lasso", lasso_prox_update),
        ("lasso", reference_update),
        ("logistic", logistic_shrink_update),
        ("ridge", ridge_dual_update),
    ],
)
def test_accepted_proposals_never_increase_objective(maker, rule):
    if maker == "lasso":
        p = make_lasso(generate_synthetic(20, 8, 0.6, 3, 0.05, seed=14), 0.1)
    elif maker == "logistic":
        p = make_logistic_l1(binary_dataset(seed=14), 0.05)
    else:
        p = make_ridge_dual(generate_synthetic(14, 7, 0.8, 3, 0.05, seed=14), 0.5)
    rng = np.random.default_rng(15)
    for _ in range(300):
        x = sample_state(p, rng)
        i = int(rng.integers(p.d))
        prop = rule(p, view_at(p, x, i), i)
        x2 = x.copy()
        x2[i] = prop.new_x
        f_before = objective(p, x)
        assert objective(p, x2) <= f_before + 1e-12 * max(1.0, abs(f_before))
