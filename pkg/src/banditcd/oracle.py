"""Dense brute-force reference implementations, for tests only.

Everything here recomputes quantities from scratch with dense linear
algebra and shares no intermediate values with the engine's caches, so it
can arbitrate whenever the incremental path drifts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ScaleGuardError
from .problems import Problem

_DESK_SCALE = 10**6  # refuse dense work beyond n * d of this size


def _guard(p: Problem):
    if p.n * p.d > _DESK_SCALE:
        raise ScaleGuardError(
            f"dense oracle refused: n*d = {p.n * p.d} exceeds {_DESK_SCALE}"
        )


@dataclass(frozen=True)
class DenseSnapshot:
    """Every solver-relevant quantity at x, recomputed densely."""

    x: np.ndarray
    Ax: np.ndarray
    w: np.ndarray
    f_value: float
    f_dual: float
    gap_total: float
    coordinate_gaps: np.ndarray
    kappas: np.ndarray
    u_bars: np.ndarray


def oracle_eval(p: Problem, x: np.ndarray) -> DenseSnapshot:
    """Evaluate F, F_D, the gap decomposition and residues at x, densely."""
    _guard(p)
    x = np.asarray(x, dtype=np.float64)
    dense = p.matrix.to_dense()
    ax = dense @ x
    w = p.smooth.gradient(ax)
    f_value = p.smooth.value(ax) + p.separable.value(x)
    u = -(dense.T @ w)
    conj = p.separable.conjugate_value(u, None)
    f_dual = p.smooth.conjugate_value(w) + float(np.sum(conj))
    gaps = conj + p.separable.component_value(x, None) - x * u
    lo, hi = p.separable.conjugate_subdiff(u, None)
    u_bars = np.clip(x, lo, hi)
    return DenseSnapshot(
        x=x,
        Ax=ax,
        w=w,
        f_value=f_value,
        f_dual=f_dual,
        gap_total=float(np.sum(gaps)),
        coordinate_gaps=gaps,
        kappas=u_bars - x,
        u_bars=u_bars,
    )


_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_section(phi, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = phi(c), phi(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = phi(d)
    return 0.5 * (a + b)


def oracle_coordinate_min(p: Problem, x: np.ndarray, i: int, tol: float = 1e-10) -> float:
    """argmin_z of the objective restricted to coordinate i, by search.

    The restriction is convex in z, so golden-section over a bracket
    converges; bounded-support coordinates use their box directly and
    unbounded ones get a doubling bracket around the current value.
    """
    _guard(p)
    x = np.asarray(x, dtype=np.float64)
    dense = p.matrix.to_dense()
    ax = dense @ x
    col = dense[:, i]
    idx = np.array([i])

    def phi(z: float) -> float:
        g = float(p.separable.component_value(np.array([z]), idx)[0])
        if not np.isfinite(g):
            return math.inf
        return p.smooth.value(ax + (z - x[i]) * col) + g

    bound = float(p.separable.support_bound[i])
    if np.isfinite(bound):
        lo, hi = -bound, bound
    else:
        radius = 1.0
        center = float(x[i])
        f_center = phi(center)
        while phi(center - radius) < f_center or phi(center + radius) < f_center:
            radius *= 2.0
            if radius > 1e12:
                raise RuntimeError("failed to bracket the coordinate minimizer")
        lo, hi = center - radius, center + radius
    return _golden_section(phi, lo, hi, tol)
