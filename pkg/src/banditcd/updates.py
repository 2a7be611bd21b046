"""Coordinate update rules and the certified per-step decrease they share.

The reference safe step moves x_i toward the nearest conjugate subgradient
u_bar by the fraction

    s_i = min{ 1, (G_i + mu_i kappa_i^2 / 2)
                  / (kappa_i^2 (mu_i + |a_i|^2 / beta)) },

and every rule that does at least as well as that step (in objective value,
or under the separable quadratic surrogate) enjoys the same certified
decrease

    r_i = G_i - |a_i|^2 kappa_i^2 / (2 beta)          if s_i = 1,
    r_i = s_i (G_i + mu_i kappa_i^2 / 2) / 2          otherwise,

which is nonnegative and lower-bounds F(x before) - F(x after). r_i is what
the selection strategies consume as feedback, regardless of which rule
produced the step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import InternalConsistencyError
from .problems import Problem, coordinate_gap
from .sparse_data import LabeledDataset

# Tolerance below which a negative gap / decrease is treated as rounding noise.
_NOISE = 1e-12


@dataclass(frozen=True)
class CoordinateView:
    """The per-coordinate state snapshot an update rule consumes.

    ``a_dot_w`` is a_i.T w at the current iterate (w = grad f(Ax));
    ``version`` is the iteration counter the snapshot was taken at, used to
    reject stale proposals.
    """

    x_i: float
    a_dot_w: float
    version: int = 0


@dataclass(frozen=True)
class UpdateProposal:
    """A proposed new value for one coordinate plus its certificates.

    ``step`` is the safe-step fraction in [0, 1], or the tag "exact" for
    closed-form coordinate minimizers. ``decrease`` is the certified lower
    bound on the objective drop (the bandit feedback signal).
    """

    i: int
    new_x: float
    step: Union[float, str]
    kappa: float
    gap: float
    decrease: float
    version: int = 0


def _check_inputs(gap: float, kappa: float, mu: float, col_sq_norm: float, beta: float):
    if col_sq_norm <= 0.0:
        raise ValueError(f"col_sq_norm must be positive, got {col_sq_norm}")
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if mu < 0.0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    if gap < -_NOISE * max(1.0, abs(gap)):
        raise InternalConsistencyError(f"coordinate gap {gap} is negative")


def step_size(gap: float, kappa: float, mu: float, col_sq_norm: float, beta: float) -> float:
    """Safe step fraction; 1 when kappa = 0 (the move is zero either way)."""
    _check_inputs(gap, kappa, mu, col_sq_norm, beta)
    gap = max(gap, 0.0)
    k2 = kappa * kappa
    if k2 == 0.0:
        return 1.0
    return min(1.0, (gap + 0.5 * mu * k2) / (k2 * (mu + col_sq_norm / beta)))


def marginal_decrease(
    gap: float, kappa: float, mu: float, col_sq_norm: float, beta: float
) -> float:
    """Certified objective decrease for a safe step on this coordinate."""
    s = step_size(gap, kappa, mu, col_sq_norm, beta)
    gap = max(gap, 0.0)
    k2 = kappa * kappa
    if s >= 1.0:
        r = gap - col_sq_norm * k2 / (2.0 * beta)
    else:
        r = 0.5 * s * (gap + 0.5 * mu * k2)
    if r < -_NOISE * max(1.0, gap):
        raise InternalConsistencyError(f"marginal decrease {r} is negative")
    return max(r, 0.0)


def marginal_decreases(
    gaps: np.ndarray,
    kappas: np.ndarray,
    mu: np.ndarray,
    col_sq_norms: np.ndarray,
    beta: float,
) -> np.ndarray:
    """Vectorized marginal decreases for all coordinates at once."""
    gaps = np.maximum(np.asarray(gaps, dtype=np.float64), 0.0)
    k2 = np.asarray(kappas, dtype=np.float64) ** 2
    num = gaps + 0.5 * mu * k2
    denom = k2 * (mu + col_sq_norms / beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(k2 > 0.0, np.minimum(1.0, num / denom), 1.0)
    r = np.where(s >= 1.0, gaps - col_sq_norms * k2 / (2.0 * beta), 0.5 * s * num)
    return np.maximum(r, 0.0)


def _coordinate_certificates(
    p: Problem, view: CoordinateView, i: int
) -> tuple[float, float]:
    """(G_i, kappa_i) at the snapshot."""
    gap = coordinate_gap(p, i, view.x_i, view.a_dot_w)
    lo, hi = p.separable.conjugate_subdiff(np.array([-view.a_dot_w]), np.array([i]))
    u_bar = float(min(max(view.x_i, lo[0]), hi[0]))
    return gap, u_bar - view.x_i


def _finish(
    p: Problem,
    view: CoordinateView,
    i: int,
    new_x: float,
    step: Union[float, str],
    gap: float,
    kappa: float,
) -> UpdateProposal:
    r = marginal_decrease(
        gap, kappa, float(p.separable.mu[i]), float(p.matrix.col_sq_norms[i]), p.smooth.beta
    )
    return UpdateProposal(
        i=i, new_x=new_x, step=step, kappa=kappa, gap=gap, decrease=r,
        version=view.version,
    )


def reference_update(p: Problem, view: CoordinateView, i: int) -> UpdateProposal:
    """The safe step: x_i <- x_i + s * kappa. Valid for every problem."""
    gap, kappa = _coordinate_certificates(p, view, i)
    s = step_size(
        gap, kappa, float(p.separable.mu[i]), float(p.matrix.col_sq_norms[i]), p.smooth.beta
    )
    return _finish(p, view, i, view.x_i + s * kappa, s, gap, kappa)


def _soft_threshold(q: float, tau: float) -> float:
    return float(np.sign(q) * max(abs(q) - tau, 0.0))


def _clamp_box(z: float, bound: float) -> float:
    return float(min(max(z, -bound), bound))


def lasso_prox_update(p: Problem, view: CoordinateView, i: int) -> UpdateProposal:
    """Exact minimizer of the squared loss along coordinate i, soft-thresholded.

    With rho = Y - Ax + x_i a_i, the one-dimensional minimizer is
    S_{n lam / |a_i|^2}(a_i.T rho / |a_i|^2); since w = (Ax - Y)/n this is
    S(x_i - n a_i.T w / |a_i|^2). The result is clamped to the support box,
    which for a convex 1D objective is still the constrained minimizer.
    """
    if p.kind != "lasso":
        raise ValueError(f"lasso_prox_update requires a lasso problem, got {p.kind!r}")
    n = p.n
    lam = p.params["lam"]
    col_sq = float(p.matrix.col_sq_norms[i])
    z = _soft_threshold(view.x_i - n * view.a_dot_w / col_sq, n * lam / col_sq)
    z = _clamp_box(z, float(p.separable.support_bound[i]))
    gap, kappa = _coordinate_certificates(p, view, i)
    return _finish(p, view, i, z, "exact", gap, kappa)


def logistic_shrink_update(p: Problem, view: CoordinateView, i: int) -> UpdateProposal:
    """Shrinkage step for the averaged logistic loss.

    x_i <- S_{4 lam}(x_i - 4 * dF_smooth/dx_i), clamped to the support box.
    The membership of this rule in the safe class is data-dependent; see
    verify_class_h for the preflight check.
    """
    if p.kind != "logistic_l1":
        raise ValueError(
            f"logistic_shrink_update requires a logistic problem, got {p.kind!r}"
        )
    lam = p.params["lam"]
    z = _soft_threshold(view.x_i - 4.0 * view.a_dot_w, 4.0 * lam)
    z = _clamp_box(z, float(p.separable.support_bound[i]))
    gap, kappa = _coordinate_certificates(p, view, i)
    return _finish(p, view, i, z, "exact", gap, kappa)


def ridge_dual_update(p: Problem, view: CoordinateView, i: int) -> UpdateProposal:
    """Exact minimizer of the ridge-dual objective along coordinate i.

    The restriction is the quadratic with slope a_i.T w + g_i'(x_i) and
    curvature |a_i|^2 / beta + mu_i at the current point.
    """
    if p.kind != "ridge_dual":
        raise ValueError(f"ridge_dual_update requires a ridge_dual problem, got {p.kind!r}")
    slope = view.a_dot_w + float(
        p.separable.gradient(np.array([view.x_i]), np.array([i]))[0]
    )
    curv = float(p.matrix.col_sq_norms[i]) / p.smooth.beta + float(p.separable.mu[i])
    z = view.x_i - slope / curv
    gap, kappa = _coordinate_certificates(p, view, i)
    return _finish(p, view, i, z, "exact", gap, kappa)


UPDATE_RULES: dict[str, Callable] = {
    "reference": reference_update,
    "lasso_prox": lasso_prox_update,
    "logistic_shrink": logistic_shrink_update,
    "ridge_dual": ridge_dual_update,
}

DEFAULT_RULES: dict[str, str] = {
    "lasso": "lasso_prox",
    "logistic_l1": "logistic_shrink",
    "ridge_dual": "ridge_dual",
    "l2_quadratic": "reference",
}

RULE_COMPATIBILITY: dict[str, set[str]] = {
    "reference": {"lasso", "logistic_l1", "ridge_dual", "l2_quadratic"},
    "lasso_prox": {"lasso"},
    "logistic_shrink": {"logistic_l1"},
    "ridge_dual": {"ridge_dual"},
}


# ---------------------------------------------------------------------------
# Surrogate bound and membership verification


def surrogate_gap(p: Problem, x: np.ndarray, x_prime: np.ndarray) -> float:
    """Separable quadratic upper model of F(x') - F(x).

    sum_i [ (grad f(Ax).T a_i)(x'_i - x_i) + |a_i|^2 (x'_i - x_i)^2 / (2 beta)
            + g_i(x'_i) - g_i(x_i) ].

    Upper-bounds the true change whenever x and x' differ in one coordinate.
    """
    x = np.asarray(x, dtype=np.float64)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    w = p.smooth.gradient(p.matrix.matvec(x))
    atw = p.matrix.rmatvec(w)
    delta = x_prime - x
    quad = p.matrix.col_sq_norms * delta**2 / (2.0 * p.smooth.beta)
    g_change = p.separable.component_value(x_prime, None) - p.separable.component_value(
        x, None
    )
    return float(np.sum(atw * delta + quad + g_change))


def _surrogate_change_1d(
    p: Problem, i: int, x_i: float, a_dot_w: float, new_x: float
) -> float:
    """surrogate_gap restricted to a single-coordinate move."""
    delta = new_x - x_i
    idx = np.array([i])
    g_change = float(
        p.separable.component_value(np.array([new_x]), idx)[0]
        - p.separable.component_value(np.array([x_i]), idx)[0]
    )
    quad = float(p.matrix.col_sq_norms[i]) * delta**2 / (2.0 * p.smooth.beta)
    return a_dot_w * delta + quad + g_change


def _objective_change_1d(
    p: Problem, v: np.ndarray, i: int, x_i: float, new_x: float
) -> float:
    """Exact F(x + (new_x - x_i) e_i) - F(x), via the touched components."""
    rows, vals = p.matrix.col(i)
    dv = (new_x - x_i) * vals
    f_change = float(
        np.sum(
            p.smooth.component_value(v[rows] + dv, rows)
            - p.smooth.component_value(v[rows], rows)
        )
    )
    idx = np.array([i])
    g_change = float(
        p.separable.component_value(np.array([new_x]), idx)[0]
        - p.separable.component_value(np.array([x_i]), idx)[0]
    )
    return f_change + g_change


def sample_state(p: Problem, rng: np.random.Generator) -> np.ndarray:
    """A random feasible iterate: sparse, inside any support boxes."""
    x = np.zeros(p.d)
    active = rng.random(p.d) < 0.5
    bound = p.separable.support_bound
    bounded = np.isfinite(bound)
    u = rng.uniform(-1.0, 1.0, size=p.d)
    x[active & bounded] = (u * bound)[active & bounded]
    free = active & ~bounded
    if np.any(free):
        labels = p.params.get("labels")
        base = 1.0 + (float(np.mean(np.abs(labels))) if labels is not None else 0.0)
        sigma = base / (1.0 + p.separable.mu)
        x[free] = (rng.standard_normal(p.d) * sigma)[free]
    return x


@dataclass(frozen=True)
class ClassHReport:
    """Outcome of the membership preflight for an update rule."""

    trials: int
    violations: int
    worst_margin: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def verify_class_h(
    rule: Callable, p: Problem, trials: int, seed: int, slack: float = 1e-9
) -> ClassHReport:
    """Check that ``rule`` never does worse than the reference safe step.

    At each sampled (x, i) the rule must satisfy at least one of:
    (a) exact objective change no larger than the reference step's, or
    (b) surrogate change no larger than the reference step's.
    Violations are counted and the worst margin (how far past the slack the
    best of the two criteria landed) is reported, not raised.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    violations = 0
    worst = -np.inf
    for _ in range(trials):
        x = sample_state(p, rng)
        i = int(rng.integers(p.d))
        v = p.matrix.matvec(x)
        w = p.smooth.gradient(v)
        rows, vals = p.matrix.col(i)
        view = CoordinateView(x_i=float(x[i]), a_dot_w=float(vals @ w[rows]))
        prop = rule(p, view, i)
        ref = reference_update(p, view, i)
        d_obj = _objective_change_1d(p, v, i, view.x_i, prop.new_x) - _objective_change_1d(
            p, v, i, view.x_i, ref.new_x
        )
        d_sur = _surrogate_change_1d(p, i, view.x_i, view.a_dot_w, prop.new_x) - (
            _surrogate_change_1d(p, i, view.x_i, view.a_dot_w, ref.new_x)
        )
        margin = min(d_obj, d_sur)
        worst = max(worst, margin)
        if margin > slack:
            violations += 1
    return ClassHReport(trials=trials, violations=violations, worst_margin=float(worst))
