"""Primal-dual problem abstraction and its concrete instantiations.

A problem is  F(x) = f(Ax) + sum_i g_i(x_i)  with f smooth (gradient
Lipschitz constant 1/beta) and each g_i convex, either mu_i-strongly convex
or with support bounded by L_i. Its Fenchel dual is
F_D(w) = f*(w) + sum_i g*_i(-a_i.T w). At w = grad f(Ax) the duality gap
decomposes coordinate-wise:

    G(x) = F(x) + F_D(w) = sum_i G_i,
    G_i  = g*_i(-a_i.T w) + g_i(x_i) + x_i * (a_i.T w),

each G_i nonnegative by Young's inequality. The dual residue of coordinate
i is kappa_i = u_bar - x_i where u_bar is the point of the subdifferential
of g*_i at -a_i.T w closest to x_i.

Concrete objectives:
  * make_lasso          -- squared loss / (2n) + lam * |x|_1, L1 part given
                           bounded support of size B = F(0)/lam so that its
                           conjugate is Lipschitz and residues stay finite.
  * make_logistic_l1    -- averaged logistic loss + lam * |x|_1, same
                           bounded-support treatment with B = log(2)/lam.
  * make_ridge_dual     -- the ridge objective (1/n)|Y-Ax|^2 + lam/2 |x|^2
                           rewritten in its dual over the n datapoint
                           variables, again in the f(Ax) + sum g_i form.
  * make_l2_quadratic   -- squared loss / (2n) + lam * x_i^2 per coordinate
                           (differentiable; used by the greedy-gradient
                           selection rule and its equivalence checks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, xlogy

from .errors import InternalConsistencyError
from .sparse_data import LabeledDataset, SparseColumnMatrix

# Coordinate gaps below this (absolute, scaled) threshold are treated as
# floating-point noise and clamped to zero; anything more negative is a bug.
GAP_NOISE_TOL = 1e-12


@dataclass(frozen=True)
class SmoothPart:
    """Smooth term f(v) with Lipschitz-gradient constant 1/beta.

    All smooth parts in this library are separable across the components of
    v, which lets the solver refresh values and gradients on just the rows
    a column update touches. ``component_value``/``component_gradient`` take
    (values, rows) where rows=None means "all rows in order".
    """

    beta: float
    component_value: Callable[[np.ndarray, Optional[np.ndarray]], np.ndarray]
    component_gradient: Callable[[np.ndarray, Optional[np.ndarray]], np.ndarray]
    conjugate_value: Callable[[np.ndarray], float]

    def value(self, v: np.ndarray) -> float:
        return float(np.sum(self.component_value(np.asarray(v), None)))

    def gradient(self, v: np.ndarray) -> np.ndarray:
        return self.component_gradient(np.asarray(v), None)


@dataclass(frozen=True)
class SeparablePart:
    """Separable term sum_i g_i(x_i), vectorized over coordinates.

    ``mu[i]`` is the strong-convexity constant of g_i and
    ``support_bound[i]`` the radius of its support (inf when mu[i] > 0).
    The callables take (values, idx) where idx=None means coordinates
    0..d-1 in order. ``conjugate_subdiff`` returns the closed interval
    [lo, hi] of subgradients of g*_i; lo == hi wherever g*_i is
    differentiable. ``gradient`` is None when the g_i are not
    differentiable (L1 parts).
    """

    mu: np.ndarray
    support_bound: np.ndarray
    component_value: Callable
    conjugate_value: Callable
    conjugate_subdiff: Callable
    gradient: Optional[Callable] = None

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    def value(self, x: np.ndarray) -> float:
        return float(np.sum(self.component_value(np.asarray(x), None)))


@dataclass(frozen=True)
class Problem:
    """A smooth-plus-separable objective over the columns of ``matrix``.

    ``direction`` records whether the coordinates are features ("primal")
    or datapoints ("dual"). For dual problems, ``dual_to_primal`` maps an
    iterate back to the original variable space and ``primal_objective``
    evaluates the original objective there.
    """

    kind: str
    direction: str
    smooth: SmoothPart
    separable: SeparablePart
    matrix: SparseColumnMatrix
    params: dict = field(default_factory=dict)
    dual_to_primal: Optional[Callable] = None
    primal_objective: Optional[Callable] = None

    def __post_init__(self):
        if self.separable.d != self.matrix.n_cols:
            raise ValueError(
                f"separable part has {self.separable.d} coordinates, "
                f"matrix has {self.matrix.n_cols} columns"
            )

    @property
    def d(self) -> int:
        return self.matrix.n_cols

    @property
    def n(self) -> int:
        return self.matrix.n_rows


@dataclass(frozen=True)
class DualResidue:
    """kappa = u_bar - x_i, with u_bar the nearest conjugate subgradient."""

    kappa: float
    u_bar: float


# ---------------------------------------------------------------------------
# Evaluation


def primal_value(p: Problem, x: np.ndarray, cached_Ax: np.ndarray | None = None) -> float:
    """F(x) = f(Ax) + sum_i g_i(x_i); +inf if any g_i is infinite.

    ``cached_Ax`` is trusted to equal ``p.matrix @ x`` (caller-maintained).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.d,):
        raise ValueError(f"x has shape {x.shape}, expected ({p.d},)")
    if cached_Ax is None:
        cached_Ax = p.matrix.matvec(x)
    elif np.asarray(cached_Ax).shape != (p.n,):
        raise ValueError(f"cached_Ax has shape {np.shape(cached_Ax)}, expected ({p.n},)")
    g = p.separable.value(x)
    if not np.isfinite(g):
        return math.inf
    return p.smooth.value(cached_Ax) + g


def dual_value(p: Problem, w: np.ndarray) -> float:
    """F_D(w) = f*(w) + sum_i g*_i(-a_i.T w)."""
    w = np.asarray(w, dtype=np.float64)
    u = -p.matrix.rmatvec(w)
    conj = float(np.sum(p.separable.conjugate_value(u, None)))
    return float(p.smooth.conjugate_value(w)) + conj


def dual_point(p: Problem, cached_Ax: np.ndarray) -> np.ndarray:
    """The canonical dual point w = grad f(Ax)."""
    return p.smooth.gradient(np.asarray(cached_Ax, dtype=np.float64))


def dual_residue(p: Problem, i: int, x_i: float, w: np.ndarray) -> DualResidue:
    """Clamp x_i into the subgradient interval of g*_i at -a_i.T w."""
    rows, vals = p.matrix.col(i)
    a_dot_w = float(vals @ np.asarray(w)[rows])
    lo, hi = p.separable.conjugate_subdiff(np.array([-a_dot_w]), np.array([i]))
    u_bar = float(min(max(x_i, lo[0]), hi[0]))
    return DualResidue(kappa=u_bar - x_i, u_bar=u_bar)


def _guard_gap(gap: float, scale: float) -> float:
    if gap < -GAP_NOISE_TOL * max(1.0, scale):
        raise InternalConsistencyError(
            f"coordinate gap {gap} is negative beyond floating-point noise"
        )
    return max(gap, 0.0)


def coordinate_gap(p: Problem, i: int, x_i: float, a_i_dot_w: float) -> float:
    """G_i = g*_i(-a_i.T w) + g_i(x_i) + x_i * a_i.T w (nonnegative)."""
    idx = np.array([i])
    conj = float(p.separable.conjugate_value(np.array([-a_i_dot_w]), idx)[0])
    val = float(p.separable.component_value(np.array([x_i]), idx)[0])
    cross = x_i * a_i_dot_w
    return _guard_gap(conj + val + cross, abs(conj) + abs(val) + abs(cross))


def coordinate_stats(
    p: Problem, x: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (a.T w, G_i, kappa_i) for all coordinates at once."""
    atw = p.matrix.rmatvec(w)
    u = -atw
    conj = p.separable.conjugate_value(u, None)
    val = p.separable.component_value(x, None)
    cross = x * atw
    gaps = conj + val + cross
    scale = np.abs(conj) + np.abs(val) + np.abs(cross)
    bad = gaps < -GAP_NOISE_TOL * np.maximum(1.0, scale)
    if np.any(bad):
        j = int(np.argmax(bad))
        raise InternalConsistencyError(
            f"coordinate gap {gaps[j]} at coordinate {j} is negative beyond "
            "floating-point noise"
        )
    np.maximum(gaps, 0.0, out=gaps)
    lo, hi = p.separable.conjugate_subdiff(u, None)
    kappas = np.clip(x, lo, hi) - x
    return atw, gaps, kappas


def duality_gap(
    p: Problem, x: np.ndarray, cached_Ax: np.ndarray
) -> tuple[float, np.ndarray]:
    """Total gap G = sum_i G_i at w = grad f(Ax), plus the per-coordinate vector."""
    x = np.asarray(x, dtype=np.float64)
    w = dual_point(p, cached_Ax)
    _, gaps, _ = coordinate_stats(p, x, w)
    return float(gaps.sum()), gaps


def objective_gradient(p: Problem, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """grad F(x) = A.T w + g'(x); only defined when the g_i are smooth."""
    if p.separable.gradient is None:
        raise ValueError(
            f"problem kind {p.kind!r} has a nondifferentiable separable part"
        )
    return p.matrix.rmatvec(w) + p.separable.gradient(np.asarray(x), None)


# ---------------------------------------------------------------------------
# Separable building blocks


def _l1_box_part(d: int, lam: float, bound: float) -> SeparablePart:
    """g_i(z) = lam * |z| on |z| <= bound, +inf outside.

    Conjugate g*(u) = bound * max(|u| - lam, 0); its subdifferential is the
    full interval [0, bound] (resp. [-bound, 0]) at the kinks |u| = lam, so
    residues are exact there instead of picking an arbitrary subgradient.
    """

    def value(z, idx):
        z = np.asarray(z, dtype=np.float64)
        out = lam * np.abs(z)
        return np.where(np.abs(z) <= bound, out, np.inf)

    def conjugate(u, idx):
        u = np.asarray(u, dtype=np.float64)
        return bound * np.maximum(np.abs(u) - lam, 0.0)

    def subdiff(u, idx):
        u = np.asarray(u, dtype=np.float64)
        conds = [u > lam, u == lam, np.abs(u) < lam, u == -lam]
        lo = np.select(conds, [bound, 0.0, 0.0, -bound], default=-bound)
        hi = np.select(conds, [bound, bound, 0.0, 0.0], default=-bound)
        return lo, hi

    return SeparablePart(
        mu=np.zeros(d),
        support_bound=np.full(d, bound),
        component_value=value,
        conjugate_value=conjugate,
        conjugate_subdiff=subdiff,
        gradient=None,
    )


def _l2_part(d: int, lam: float) -> SeparablePart:
    """g_i(z) = lam * z^2, strongly convex with mu = 2*lam."""

    def value(z, idx):
        return lam * np.asarray(z, dtype=np.float64) ** 2

    def conjugate(u, idx):
        return np.asarray(u, dtype=np.float64) ** 2 / (4.0 * lam)

    def subdiff(u, idx):
        g = np.asarray(u, dtype=np.float64) / (2.0 * lam)
        return g, g.copy()

    def gradient(z, idx):
        return 2.0 * lam * np.asarray(z, dtype=np.float64)

    return SeparablePart(
        mu=np.full(d, 2.0 * lam),
        support_bound=np.full(d, np.inf),
        component_value=value,
        conjugate_value=conjugate,
        conjugate_subdiff=subdiff,
        gradient=gradient,
    )


# ---------------------------------------------------------------------------
# Smooth building blocks


def _scaled_quadratic_smooth(y: np.ndarray, denom: float) -> SmoothPart:
    """f(v) = |v - y|^2 / (2 * denom); beta = denom.

    Conjugate: f*(w) = y.T w + (denom/2) |w|^2.
    """
    y = np.asarray(y, dtype=np.float64)

    def comp_value(vals, rows):
        t = y if rows is None else y[rows]
        return (np.asarray(vals) - t) ** 2 / (2.0 * denom)

    def comp_gradient(vals, rows):
        t = y if rows is None else y[rows]
        return (np.asarray(vals) - t) / denom

    def conjugate(w):
        w = np.asarray(w, dtype=np.float64)
        return float(y @ w + 0.5 * denom * (w @ w))

    return SmoothPart(
        beta=float(denom),
        component_value=comp_value,
        component_gradient=comp_gradient,
        conjugate_value=conjugate,
    )


def _logistic_smooth(y: np.ndarray, n: int) -> SmoothPart:
    """f(v) = (1/n) sum_j log(1 + exp(-y_j v_j)); beta = 4n.

    The per-component curvature is at most 1/(4n), hence the gradient is
    1/(4n)-Lipschitz. Conjugate: with a_j = -n w_j y_j required in [0, 1],
    f*(w) = (1/n) sum_j [a_j log a_j + (1-a_j) log(1-a_j)].
    """
    y = np.asarray(y, dtype=np.float64)

    def comp_value(vals, rows):
        t = y if rows is None else y[rows]
        return np.logaddexp(0.0, -t * np.asarray(vals)) / n

    def comp_gradient(vals, rows):
        t = y if rows is None else y[rows]
        return -t * expit(-t * np.asarray(vals)) / n

    def conjugate(w):
        a = -n * np.asarray(w, dtype=np.float64) * y
        if np.any(a < -1e-12) or np.any(a > 1.0 + 1e-12):
            return math.inf
        a = np.clip(a, 0.0, 1.0)
        return float(np.sum(xlogy(a, a) + xlogy(1.0 - a, 1.0 - a)) / n)

    return SmoothPart(
        beta=4.0 * n,
        component_value=comp_value,
        component_gradient=comp_gradient,
        conjugate_value=conjugate,
    )


# ---------------------------------------------------------------------------
# Problem constructors


def _check_lambda(lam: float):
    if not lam > 0.0:
        raise ValueError(f"lambda must be positive, got {lam}")


def make_lasso(
    data: LabeledDataset, lam: float, support_bound: float | None = None
) -> Problem:
    """F(x) = |Y - Ax|^2 / (2n) + lam |x|_1 with box-bounded L1 part.

    The L1 terms are restricted to |x_i| <= B with B = F(0)/lam =
    |Y|^2 / (2 n lam), which keeps every dual residue finite while leaving
    the minimizers unchanged (any optimum satisfies lam |x|_1 <= F(0)).
    ``support_bound`` overrides B, mainly for composing test instances.
    """
    _check_lambda(lam)
    n = data.matrix.n_rows
    smooth = _scaled_quadratic_smooth(data.labels, float(n))
    f0 = float(data.labels @ data.labels) / (2.0 * n)
    bound = f0 / lam if support_bound is None else float(support_bound)
    return Problem(
        kind="lasso",
        direction="primal",
        smooth=smooth,
        separable=_l1_box_part(data.matrix.n_cols, lam, bound),
        matrix=data.matrix,
        params={"lam": lam, "bound": bound, "labels": data.labels},
    )


def make_logistic_l1(data: LabeledDataset, lam: float) -> Problem:
    """F(x) = (1/n) sum log(1 + exp(-y_j (Ax)_j)) + lam |x|_1, labels +-1.

    Same bounded-support L1 treatment as the quadratic case, with
    B = F(0)/lam = log(2)/lam.
    """
    _check_lambda(lam)
    data.require_binary()
    n = data.matrix.n_rows
    bound = math.log(2.0) / lam
    return Problem(
        kind="logistic_l1",
        direction="primal",
        smooth=_logistic_smooth(data.labels, n),
        separable=_l1_box_part(data.matrix.n_cols, lam, bound),
        matrix=data.matrix,
        params={"lam": lam, "bound": bound, "labels": data.labels},
    )


def make_ridge_dual(data: LabeledDataset, lam: float) -> Problem:
    """The dual of ridge regression P(x) = (1/n)|Y - Ax|^2 + (lam/2)|x|^2.

    Dualizing P through the same smooth-plus-separable template gives an
    objective over the n datapoint variables alpha:

        D(alpha) = |A.T alpha|^2 / (2 lam)
                   + sum_j [ Y_j alpha_j + (n/4) alpha_j^2 ],

    which is again of the library's standard form with data matrix A.T
    (columns are datapoints), smooth part u -> |u|^2/(2 lam) (beta = lam)
    and n/2-strongly-convex separable parts. Strong duality gives
    D(alpha*) = -P(x*), and iterates map back through
    x(alpha) = -A.T alpha / lam.
    """
    _check_lambda(lam)
    a_t = data.matrix.transpose()  # columns are datapoints
    n = data.matrix.n_rows
    y = data.labels

    def comp_value(vals, rows):
        return np.asarray(vals, dtype=np.float64) ** 2 / (2.0 * lam)

    def comp_gradient(vals, rows):
        return np.asarray(vals, dtype=np.float64) / lam

    def conjugate(s):
        s = np.asarray(s, dtype=np.float64)
        return float(0.5 * lam * (s @ s))

    smooth = SmoothPart(
        beta=lam,
        component_value=comp_value,
        component_gradient=comp_gradient,
        conjugate_value=conjugate,
    )

    def sep_value(z, idx):
        t = y if idx is None else y[idx]
        z = np.asarray(z, dtype=np.float64)
        return t * z + 0.25 * n * z**2

    def sep_conjugate(u, idx):
        t = y if idx is None else y[idx]
        return (np.asarray(u, dtype=np.float64) - t) ** 2 / n

    def sep_subdiff(u, idx):
        t = y if idx is None else y[idx]
        g = 2.0 * (np.asarray(u, dtype=np.float64) - t) / n
        return g, g.copy()

    def sep_gradient(z, idx):
        t = y if idx is None else y[idx]
        return t + 0.5 * n * np.asarray(z, dtype=np.float64)

    separable = SeparablePart(
        mu=np.full(n, 0.5 * n),
        support_bound=np.full(n, np.inf),
        component_value=sep_value,
        conjugate_value=sep_conjugate,
        conjugate_subdiff=sep_subdiff,
        gradient=sep_gradient,
    )

    def dual_to_primal(alpha: np.ndarray) -> np.ndarray:
        return -a_t.matvec(np.asarray(alpha, dtype=np.float64)) / lam

    def primal_objective(x: np.ndarray) -> float:
        resid = y - a_t.rmatvec(np.asarray(x, dtype=np.float64))
        return float(resid @ resid / n + 0.5 * lam * (x @ x))

    return Problem(
        kind="ridge_dual",
        direction="dual",
        smooth=smooth,
        separable=separable,
        matrix=a_t,
        params={"lam": lam, "labels": y, "n_datapoints": n},
        dual_to_primal=dual_to_primal,
        primal_objective=primal_objective,
    )


def make_l2_quadratic(data: LabeledDataset, lam: float) -> Problem:
    """F(x) = |Y - Ax|^2 / (2n) + lam sum_i x_i^2 (fully differentiable)."""
    _check_lambda(lam)
    n = data.matrix.n_rows
    return Problem(
        kind="l2_quadratic",
        direction="primal",
        smooth=_scaled_quadratic_smooth(data.labels, float(n)),
        separable=_l2_part(data.matrix.n_cols, lam),
        matrix=data.matrix,
        params={"lam": lam, "labels": data.labels},
    )


PROBLEM_KINDS = ("lasso", "logistic_l1", "ridge_dual", "l2_quadratic")
