"""The coordinate-descent driver.

Keeps the iterate x together with incrementally maintained caches: the
product v = Ax, the dual point w = grad f(Ax), and the running objective
value. A step on coordinate i touches only the nnz(a_i) rows of column i.
Caches are rebuilt from scratch every ``resync_every`` iterations and at
every checkpoint to bound floating-point drift.

Each iteration runs: (bin refresh if due) -> select -> build proposal ->
apply -> feedback, where the feedback is the marginal decrease recomputed
at the stepped coordinate after the state change (one extra coordinate-gap
evaluation, O(nnz(a_i))).

Work accounting: ``gap_evals`` counts coordinate-gap evaluations,
``col_passes`` counts column sweeps, ``entry_touches`` counts the stored
entries those sweeps visited. Checkpoint diagnostics (the full duality gap
per trace record) are tallied separately in ``trace_gap_evals`` so the
algorithmic cost model stays inspectable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import (
    BudgetExceededError,
    NumericalFailureError,
    StaleProposalError,
)
from .problems import (
    Problem,
    coordinate_stats,
    duality_gap,
    objective_gradient,
    primal_value,
)
from .selection import Strategy, make_strategy
from .updates import (
    DEFAULT_RULES,
    RULE_COMPATIBILITY,
    UPDATE_RULES,
    ClassHReport,
    CoordinateView,
    UpdateProposal,
    _coordinate_certificates,
    marginal_decrease,
    marginal_decreases,
    reference_update,
    verify_class_h,
)


@dataclass
class WorkCounters:
    gap_evals: int = 0
    col_passes: int = 0
    entry_touches: int = 0
    full_refreshes: int = 0
    trace_gap_evals: int = 0

    def snapshot(self) -> "WorkCounters":
        return WorkCounters(
            self.gap_evals,
            self.col_passes,
            self.entry_touches,
            self.full_refreshes,
            self.trace_gap_evals,
        )


class SolverState:
    """Mutable iterate plus caches for one problem instance."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self.x = np.zeros(problem.d)
        self.t = 0
        self.counters = WorkCounters()
        self._resync()

    def _resync(self):
        p = self.problem
        self.v = p.matrix.matvec(self.x)
        self.w = p.smooth.gradient(self.v)
        self.f_total = p.smooth.value(self.v)
        self.g_total = p.separable.value(self.x)

    resync = _resync

    @property
    def objective(self) -> float:
        return self.f_total + self.g_total

    @property
    def epoch(self) -> float:
        return self.t / self.problem.d

    def exact_objective(self) -> float:
        """Objective recomputed from the v cache, bypassing the running sums."""
        p = self.problem
        return p.smooth.value(self.v) + p.separable.value(self.x)


def coordinate_view(state: SolverState, i: int) -> CoordinateView:
    """Snapshot (x_i, a_i.T w) for building a proposal; one column pass."""
    rows, vals = state.problem.matrix.col(i)
    state.counters.col_passes += 1
    state.counters.entry_touches += rows.size
    return CoordinateView(
        x_i=float(state.x[i]),
        a_dot_w=float(vals @ state.w[rows]),
        version=state.t,
    )


def compute_all_gaps(p: Problem, state: SolverState) -> np.ndarray:
    """All coordinate-wise gaps at once; costs d gap evaluations."""
    _, gaps, _ = coordinate_stats(p, state.x, state.w)
    c = state.counters
    c.gap_evals += p.d
    c.col_passes += p.d
    c.entry_touches += p.matrix.total_nnz
    return gaps


def compute_all_marginal_decreases(p: Problem, state: SolverState) -> np.ndarray:
    """Marginal decreases for every coordinate; costs d gap evaluations."""
    _, gaps, kappas = coordinate_stats(p, state.x, state.w)
    c = state.counters
    c.gap_evals += p.d
    c.col_passes += p.d
    c.entry_touches += p.matrix.total_nnz
    return marginal_decreases(
        gaps, kappas, p.separable.mu, p.matrix.col_sq_norms, p.smooth.beta
    )


def compute_gradient_magnitudes(p: Problem, state: SolverState) -> np.ndarray:
    """|grad_i F| for every coordinate (differentiable objectives only)."""
    grad = objective_gradient(p, state.x, state.w)
    c = state.counters
    c.col_passes += p.d
    c.entry_touches += p.matrix.total_nnz
    return np.abs(grad)


def apply_coordinate_step(p: Problem, state: SolverState, proposal: UpdateProposal):
    """Apply a proposal: update x_i, v, w and the objective incrementally.

    Only the nnz(a_i) touched rows are revisited, which is exact here
    because every smooth part is separable across the rows of v.
    """
    if proposal.version != state.t:
        raise StaleProposalError(
            f"proposal built at t={proposal.version}, state is at t={state.t}"
        )
    i = proposal.i
    delta = proposal.new_x - state.x[i]
    if not np.isfinite(proposal.new_x):
        raise NumericalFailureError(
            "non-finite coordinate value proposed",
            {"t": state.t, "i": i, "new_x": proposal.new_x},
        )
    rows, vals = p.matrix.col(i)
    state.counters.col_passes += 1
    state.counters.entry_touches += rows.size
    if delta != 0.0:
        old_vals = p.smooth.component_value(state.v[rows], rows)
        state.v[rows] += delta * vals
        state.w[rows] = p.smooth.component_gradient(state.v[rows], rows)
        new_vals = p.smooth.component_value(state.v[rows], rows)
        state.f_total += float(np.sum(new_vals - old_vals))
        idx = np.array([i])
        g_new = float(p.separable.component_value(np.array([proposal.new_x]), idx)[0])
        g_old = float(p.separable.component_value(np.array([state.x[i]]), idx)[0])
        state.g_total += g_new - g_old
        state.x[i] = proposal.new_x
    state.t += 1
    if not math.isfinite(state.f_total) or not math.isfinite(state.g_total):
        raise NumericalFailureError(
            "non-finite objective after step",
            {"t": state.t, "i": i, "f": state.f_total, "g": state.g_total},
        )


def post_step_decrease(p: Problem, state: SolverState, i: int) -> float:
    """Marginal decrease of coordinate i at the state just after its step."""
    view = coordinate_view(state, i)
    gap, kappa = _coordinate_certificates(p, view, i)
    state.counters.gap_evals += 1
    return marginal_decrease(
        gap, kappa, float(p.separable.mu[i]), float(p.matrix.col_sq_norms[i]),
        p.smooth.beta,
    )


@dataclass(frozen=True)
class TraceRecord:
    """One checkpoint of a run."""

    t: int
    epoch: float
    f_value: float
    gap: float
    subopt: float
    subopt_is_gap: bool
    eta: float
    eta_running_max: float
    elapsed_s: float
    col_passes: int
    gap_evals: int
    entry_touches: int
    full_refreshes: int
    distinct_selected: int
    top_share: float


@dataclass
class AuditLog:
    """Per-step record kept when audit mode is on."""

    t: list[int] = field(default_factory=list)
    coordinate: list[int] = field(default_factory=list)
    f_before: list[float] = field(default_factory=list)
    f_after: list[float] = field(default_factory=list)
    claimed_decrease: list[float] = field(default_factory=list)

    def decrease_violations(self, tol: float = 1e-9) -> int:
        fb = np.asarray(self.f_before)
        fa = np.asarray(self.f_after)
        r = np.asarray(self.claimed_decrease)
        return int(np.sum(fb - fa < r - tol))

    def monotone_violations(self, rel_tol: float = 1e-12) -> int:
        fb = np.asarray(self.f_before)
        fa = np.asarray(self.f_after)
        return int(np.sum(fa > fb + rel_tol * np.maximum(1.0, np.abs(fb))))


@dataclass
class RunResult:
    traces: list[TraceRecord]
    state: SolverState
    strategy: Strategy
    audit: Optional[AuditLog]
    crossings: dict[float, float]
    selection_counts: np.ndarray
    step_coordinates: Optional[np.ndarray] = None
    step_values: Optional[np.ndarray] = None
    preflight: Optional[ClassHReport] = None
    fell_back_to_reference: bool = False

    @property
    def final(self) -> TraceRecord:
        return self.traces[-1]


def _scores_for(strategy: Strategy, p: Problem, state: SolverState) -> np.ndarray:
    kind = strategy.score_kind
    if kind == "marginal":
        return compute_all_marginal_decreases(p, state)
    if kind == "gap":
        return compute_all_gaps(p, state)
    if kind == "gradient_abs":
        return compute_gradient_magnitudes(p, state)
    raise ValueError(f"strategy {strategy.name!r} does not consume score vectors")


def _resolve_rule(p: Problem, rule) -> Callable:
    if rule is None:
        rule = DEFAULT_RULES[p.kind]
    if isinstance(rule, str):
        if rule not in UPDATE_RULES:
            raise ValueError(f"unknown update rule {rule!r}")
        if p.kind not in RULE_COMPATIBILITY[rule]:
            raise ValueError(
                f"update rule {rule!r} is incompatible with problem kind {p.kind!r}"
            )
        return UPDATE_RULES[rule]
    return rule


def _checkpoint(
    p: Problem,
    state: SolverState,
    f_star_ref: Optional[float],
    eta_max_seen: float,
    started: float,
    selection_counts: np.ndarray,
) -> tuple[TraceRecord, float, float]:
    state.resync()
    gap, gaps = duality_gap(p, state.x, state.v)
    state.counters.trace_gap_evals += p.d
    max_gap = float(gaps.max(initial=0.0))
    eta = gap / max_gap if max_gap > 0.0 else float("nan")
    if math.isfinite(eta):
        eta_max_seen = max(eta_max_seen, eta)
    f_value = state.objective
    if f_star_ref is not None:
        subopt, is_gap = f_value - f_star_ref, False
    else:
        subopt, is_gap = gap, True
    total_selected = int(selection_counts.sum())
    c = state.counters
    record = TraceRecord(
        t=state.t,
        epoch=state.epoch,
        f_value=f_value,
        gap=gap,
        subopt=subopt,
        subopt_is_gap=is_gap,
        eta=eta,
        eta_running_max=eta_max_seen if math.isfinite(eta_max_seen) else float("nan"),
        elapsed_s=time.perf_counter() - started,
        col_passes=c.col_passes,
        gap_evals=c.gap_evals,
        entry_touches=c.entry_touches,
        full_refreshes=c.full_refreshes,
        distinct_selected=int(np.count_nonzero(selection_counts)),
        top_share=(selection_counts.max() / total_selected) if total_selected else 0.0,
    )
    return record, gap, eta_max_seen


def run(
    p: Problem,
    strategy: Union[str, Strategy],
    update_rule=None,
    *,
    epochs: float,
    seed: int = 0,
    epsilon: float = 0.5,
    bin_size: int | None = None,
    trace_every: int | None = None,
    f_star_ref: float | None = None,
    audit: bool = False,
    target_gap: float | None = None,
    targets: tuple[float, ...] = (),
    stop_at_targets: bool = False,
    resync_every: int | None = None,
    record_steps: bool = False,
    preflight_trials: int = 0,
    preflight_threshold: float = 0.0,
) -> RunResult:
    """Drive ceil(epochs * d) coordinate steps and trace the descent.

    Deterministic given the seed. ``targets`` are suboptimality levels whose
    first crossing epoch is recorded (needs ``f_star_ref``); ``target_gap``
    stops the run early once the duality gap at a checkpoint falls below it.

    A positive ``preflight_trials`` probes the update rule on random states
    before the run; if more than ``preflight_threshold * trials`` of them
    beat neither membership criterion, the run falls back to the always-safe
    reference step (some quoted specialized rules carry curvature constants
    that are only valid for specific data scalings).
    """
    if epochs <= 0:
        raise ValueError("epochs must be positive")
    d = p.d
    if isinstance(strategy, str):
        strategy = make_strategy(
            strategy, d, epsilon=epsilon, bin_size=bin_size, seed=seed
        )
    if strategy.d != d:
        raise ValueError("strategy dimension does not match the problem")
    if strategy.score_kind == "gradient_abs" and p.separable.gradient is None:
        raise ValueError(
            "gs needs a differentiable objective; "
            f"problem kind {p.kind!r} has nonsmooth separable terms"
        )
    rule = _resolve_rule(p, update_rule)
    preflight_report = None
    fell_back = False
    if preflight_trials > 0 and rule is not reference_update:
        preflight_report = verify_class_h(rule, p, preflight_trials, seed)
        if preflight_report.violations > preflight_threshold * preflight_trials:
            rule = reference_update
            fell_back = True
    total_steps = int(math.ceil(epochs * d))
    if trace_every is None:
        trace_every = d
    if resync_every is None:
        resync_every = 10 * d

    state = SolverState(p)
    started = time.perf_counter()
    selection_counts = np.zeros(d, dtype=np.int64)
    audit_log = AuditLog() if audit else None
    crossings: dict[float, float] = {}
    pending = sorted(targets)  # pop the largest (easiest) target first
    step_coords = np.empty(total_steps, dtype=np.int64) if record_steps else None
    step_values = np.empty(total_steps) if record_steps else None

    eta_max_seen = float("-inf")
    record, gap, eta_max_seen = _checkpoint(
        p, state, f_star_ref, eta_max_seen, started, selection_counts
    )
    traces = [record]
    if target_gap is not None and gap <= target_gap:
        return RunResult(
            traces, state, strategy, audit_log, crossings, selection_counts,
            step_coords[:0] if record_steps else None,
            step_values[:0] if record_steps else None,
            preflight_report, fell_back,
        )

    if strategy.binned:
        strategy.refresh(_scores_for(strategy, p, state))
        state.counters.full_refreshes += 1

    for t in range(1, total_steps + 1):
        if strategy.binned and t % strategy.bin_size == 0:
            strategy.refresh(_scores_for(strategy, p, state))
            state.counters.full_refreshes += 1
        scores = _scores_for(strategy, p, state) if strategy.full_information else None
        i = strategy.select(scores)
        view = coordinate_view(state, i)
        proposal = rule(p, view, i)
        state.counters.gap_evals += 1  # every proposal evaluates its gap
        if audit:
            f_before = state.exact_objective()
        apply_coordinate_step(p, state, proposal)
        if strategy.wants_feedback:
            strategy.feedback(i, post_step_decrease(p, state, i))
        selection_counts[i] += 1
        if record_steps:
            step_coords[t - 1] = i
            step_values[t - 1] = proposal.new_x
        if audit:
            f_after = state.exact_objective()
            audit_log.t.append(t)
            audit_log.coordinate.append(i)
            audit_log.f_before.append(f_before)
            audit_log.f_after.append(f_after)
            audit_log.claimed_decrease.append(proposal.decrease)
        if f_star_ref is not None and pending:
            subopt = state.objective - f_star_ref
            while pending and subopt <= pending[-1]:
                crossings[pending.pop()] = t / d
            if stop_at_targets and not pending:
                record, gap, eta_max_seen = _checkpoint(
                    p, state, f_star_ref, eta_max_seen, started, selection_counts
                )
                if record.t != traces[-1].t:
                    traces.append(record)
                break
        if t % resync_every == 0:
            state.resync()
        if t % trace_every == 0 or t == total_steps:
            record, gap, eta_max_seen = _checkpoint(
                p, state, f_star_ref, eta_max_seen, started, selection_counts
            )
            if record.t != traces[-1].t:
                traces.append(record)
            if target_gap is not None and gap <= target_gap:
                break

    return RunResult(
        traces, state, strategy, audit_log, crossings, selection_counts,
        step_coords[: state.t] if record_steps else None,
        step_values[: state.t] if record_steps else None,
        preflight_report, fell_back,
    )


@dataclass(frozen=True)
class ReferenceOptimum:
    """A solution with a bracketing certificate f_star in [f_lower, f_value]."""

    x: np.ndarray
    f_value: float
    gap: float

    @property
    def f_lower(self) -> float:
        return self.f_value - self.gap


def reference_optimum(
    p: Problem, tol: float, *, max_epochs: float = 2000.0, seed: int = 0
) -> ReferenceOptimum:
    """A near-optimal iterate for plotting suboptimality curves.

    Quadratic objectives (ridge dual, per-coordinate L2) are solved exactly
    through dense linear algebra at desk scale; the L1 problems run the
    greedy full-information strategy until the duality gap certifies ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if p.kind in ("ridge_dual", "l2_quadratic"):
        if p.n * p.d > 10**6:
            raise ValueError("dense reference solve refused beyond desk scale")
        dense = p.matrix.to_dense()
        if p.kind == "ridge_dual":
            # stationarity of |A.T alpha|^2/(2 lam) + sum Y_j a_j + (n/4) a_j^2
            lam = p.params["lam"]
            n = p.params["n_datapoints"]
            a = dense.T  # datapoints x features
            lhs = a @ a.T / lam + 0.5 * n * np.eye(n)
            x_star = np.linalg.solve(lhs, -p.params["labels"])
        else:
            lam = p.params["lam"]
            n = p.n
            y = p.params["labels"]
            lhs = dense.T @ dense / n + 2.0 * lam * np.eye(p.d)
            x_star = np.linalg.solve(lhs, dense.T @ y / n)
        f_value = primal_value(p, x_star)
        gap, _ = duality_gap(p, x_star, p.matrix.matvec(x_star))
        return ReferenceOptimum(x=x_star, f_value=f_value, gap=gap)
    result = run(
        p, "max_r", None, epochs=max_epochs, seed=seed, trace_every=p.d,
        target_gap=tol,
    )
    final = result.final
    if final.gap > tol:
        raise BudgetExceededError(
            f"gap {final.gap:.3e} did not reach {tol:.3e} within "
            f"{max_epochs} epochs",
            certificate=(result.state.x.copy(), final.f_value, final.gap),
        )
    return ReferenceOptimum(
        x=result.state.x.copy(), f_value=final.f_value, gap=final.gap
    )
