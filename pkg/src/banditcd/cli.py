"""Experiment runner: datasets -> problem -> strategy -> trace CSV.

Single-run mode writes one convergence trace and prints a one-line summary;
``compare`` mode runs several strategies on one shared problem instance and
tabulates the epochs each needed to reach a ladder of suboptimality
targets. Wall times are reported but never used as pass/fail thresholds
(they are hardware-bound).

Exit codes: 0 success, 2 usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .errors import BudgetExceededError, LibsvmParseError, NumericalFailureError
from .problems import make_lasso, make_logistic_l1, make_ridge_dual
from .selection import STRATEGY_NAMES, default_bin_size, make_strategy
from .sparse_data import (
    LabeledDataset,
    binarize_labels,
    generate_synthetic,
    normalize_columns,
    parse_libsvm,
)
from .updates import DEFAULT_RULES, UPDATE_RULES

TRACE_DIR_ENV = "BANDITCD_TRACE_DIR"
CSV_HEADER = "t,epoch,F,gap,subopt,eta,elapsed_s,col_passes,gap_evals"
COMPARE_TARGETS = (1e-1, 1e-2, 1e-3, math.exp(-5.0))

_PROBLEMS = {
    "lasso": make_lasso,
    "logistic_l1": make_logistic_l1,
    "ridge_dual": make_ridge_dual,
}


@dataclass
class RunConfig:
    problem: str
    lam: float
    strategy: str
    data_path: str | None = None
    synthetic: dict | None = None
    epsilon: float = 0.5
    bin_size: str = "d/2"
    update: str | None = None
    epochs: float = 10.0
    seed: int = 0
    normalize: bool = False
    trace_path: str | None = None
    trace_every: int | None = None
    audit: bool = False
    target_gap: float | None = None
    f_star_ref: float | None = None

    def validate(self):
        if self.problem not in _PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if (self.data_path is None) == (self.synthetic is None):
            raise ValueError("exactly one of --data and --synthetic is required")
        if self.strategy not in STRATEGY_NAMES:
            raise ValueError(
                f"unknown strategy {self.strategy!r}; choose from {STRATEGY_NAMES}"
            )
        if self.update is not None and self.update not in UPDATE_RULES:
            raise ValueError(f"unknown update rule {self.update!r}")


def parse_synthetic_spec(spec: str) -> dict:
    """Parse the `key=value,...` mini-grammar for synthetic datasets.

    Keys: n, d (counts), sparsity (fraction), signal (nonzeros in the
    planted coefficients), noise (noise standard deviation).
    """
    out = {"n": 200, "d": 100, "sparsity": 0.3, "signal": 5, "noise": 0.01}
    casts = {"n": int, "d": int, "sparsity": float, "signal": int, "noise": float}
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition("=")
        if not sep or key not in casts:
            raise ValueError(f"bad synthetic spec item {item!r}")
        try:
            out[key] = casts[key](value)
        except ValueError:
            raise ValueError(f"bad synthetic spec value in {item!r}")
    return out


def resolve_bin_size(token: str, d: int) -> int:
    """Bin sizes may be given literally or as the `d/2` convention."""
    token = token.strip()
    if token == "d/2":
        return default_bin_size(d)
    if token == "d":
        return d
    value = int(token)
    if value < 1:
        raise ValueError("bin size must be >= 1")
    return value


def _parse_target_token(token: str) -> float:
    token = token.strip()
    if token == "exp(-5)":
        return math.exp(-5.0)
    return float(token)


def load_dataset(cfg: RunConfig) -> LabeledDataset:
    if cfg.data_path is not None:
        try:
            with open(cfg.data_path, "rb") as fh:
                text = fh.read()
        except OSError as exc:
            raise ValueError(f"cannot read {cfg.data_path}: {exc}")
        ds = parse_libsvm(text, expect_binary_labels=cfg.problem == "logistic_l1")
    else:
        s = cfg.synthetic
        ds = generate_synthetic(
            s["n"], s["d"], s["sparsity"], s["signal"], s["noise"], cfg.seed
        )
        if cfg.problem == "logistic_l1":
            # synthetic targets are real; classification needs +-1 labels
            ds = binarize_labels(ds)
    if cfg.normalize:
        norm = normalize_columns(ds.matrix)
        if norm.dropped:
            print(f"dropped all-zero columns: {norm.dropped}", file=sys.stderr)
        ds = LabeledDataset(matrix=norm.matrix, labels=ds.labels)
    return ds


def build_problem(cfg: RunConfig):
    return _PROBLEMS[cfg.problem](load_dataset(cfg), cfg.lam)


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def write_trace_csv(path: str, traces) -> None:
    lines = [CSV_HEADER]
    for r in traces:
        lines.append(
            ",".join(
                [
                    _fmt(r.t),
                    _fmt(r.epoch),
                    _fmt(r.f_value),
                    _fmt(r.gap),
                    _fmt(r.subopt),
                    _fmt(r.eta),
                    _fmt(r.elapsed_s),
                    _fmt(r.col_passes),
                    _fmt(r.gap_evals),
                ]
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _trace_destination(path: str | None) -> str | None:
    if path is None:
        return None
    if os.path.dirname(path):
        return path
    base = os.environ.get(TRACE_DIR_ENV)
    return os.path.join(base, path) if base else path


def run_single(cfg: RunConfig) -> int:
    cfg.validate()
    problem = build_problem(cfg)
    bin_size = resolve_bin_size(cfg.bin_size, problem.d)
    strategy = make_strategy(
        cfg.strategy, problem.d, epsilon=cfg.epsilon, bin_size=bin_size, seed=cfg.seed
    )
    started = time.perf_counter()
    result = engine.run(
        problem,
        strategy,
        cfg.update,
        epochs=cfg.epochs,
        seed=cfg.seed,
        trace_every=cfg.trace_every,
        f_star_ref=cfg.f_star_ref,
        audit=cfg.audit,
        target_gap=cfg.target_gap,
    )
    elapsed = time.perf_counter() - started
    dest = _trace_destination(cfg.trace_path)
    if dest:
        write_trace_csv(dest, result.traces)
    final = result.final
    print(
        f"problem={cfg.problem} strategy={cfg.strategy} "
        f"final_F={final.f_value:.6e} final_gap={final.gap:.6e} "
        f"epochs={final.epoch:g} elapsed_s={elapsed:.3f}"
    )
    return 0


def run_compare(cfg: RunConfig, strategies: list[str], targets, out_path: str | None) -> int:
    """Run several strategies against one shared problem and F*."""
    cfg.validate()
    problem = build_problem(cfg)
    bin_size = resolve_bin_size(cfg.bin_size, problem.d)
    tol = min(min(targets) * 1e-2, 1e-6)
    ref = engine.reference_optimum(problem, tol, max_epochs=4000.0, seed=cfg.seed)
    rows = []
    for name in strategies:
        if name not in STRATEGY_NAMES:
            raise ValueError(f"unknown strategy {name!r}")
        try:
            strategy = make_strategy(
                name, problem.d, epsilon=cfg.epsilon, bin_size=bin_size, seed=cfg.seed
            )
            started = time.perf_counter()
            result = engine.run(
                problem,
                strategy,
                cfg.update,
                epochs=cfg.epochs,
                seed=cfg.seed,
                f_star_ref=ref.f_value,
                targets=tuple(targets),
            )
            elapsed = time.perf_counter() - started
            rows.append((name, result.crossings, elapsed, None))
        except ValueError as exc:
            rows.append((name, {}, 0.0, str(exc)))
    header = ["strategy"] + [f"epochs_to_{t:.6g}" for t in targets] + ["elapsed_s", "status"]
    table = [header]
    for name, crossings, elapsed, error in rows:
        cells = [name]
        for t in targets:
            cells.append(_fmt(crossings[t]) if t in crossings else "-")
        cells.append(f"{elapsed:.3f}")
        cells.append("ok" if error is None else f"failed: {error}")
        table.append(cells)
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    for row in table:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            for row in table:
                fh.write(",".join(row) + "\n")
    return 0


def build_parser(compare: bool) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="banditcd compare" if compare else "banditcd",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--problem", required=True, choices=sorted(_PROBLEMS))
    data = parser.add_mutually_exclusive_group(required=True)
    data.add_argument("--data", help="LIBSVM-format text file")
    data.add_argument(
        "--synthetic",
        help="synthetic dataset spec: n=,d=,sparsity=,signal=,noise=",
    )
    parser.add_argument("--lambda", dest="lam", type=float, required=True)
    if compare:
        parser.add_argument(
            "--strategies",
            required=True,
            help="comma-separated strategy names sharing the problem instance",
        )
        parser.add_argument(
            "--targets",
            default="1e-1,1e-2,1e-3,exp(-5)",
            help="comma-separated suboptimality targets (exp(-5) accepted)",
        )
        parser.add_argument("--out", help="write the comparison table as CSV")
    else:
        parser.add_argument("--strategy", default="b_max_r", choices=STRATEGY_NAMES)
        parser.add_argument("--trace", help="write the convergence trace CSV here")
        parser.add_argument("--trace-every", type=int, default=None)
        parser.add_argument("--audit", action="store_true")
        parser.add_argument("--target-gap", type=float, default=None)
        parser.add_argument("--f-star-ref", type=float, default=None)
    parser.add_argument("--epsilon", type=float, default=0.5)
    parser.add_argument(
        "--bin-size", default="d/2", help="bin length; the literal d/2 is allowed"
    )
    parser.add_argument("--update", default=None, choices=sorted(UPDATE_RULES))
    parser.add_argument("--epochs", type=float, default=10.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--normalize", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    compare = bool(argv) and argv[0] == "compare"
    if compare:
        argv = argv[1:]
    parser = build_parser(compare)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        synthetic = parse_synthetic_spec(args.synthetic) if args.synthetic else None
        cfg = RunConfig(
            problem=args.problem,
            lam=args.lam,
            strategy="uniform" if compare else args.strategy,
            data_path=args.data,
            synthetic=synthetic,
            epsilon=args.epsilon,
            bin_size=args.bin_size,
            update=args.update,
            epochs=args.epochs,
            seed=args.seed,
            normalize=args.normalize,
            trace_path=None if compare else args.trace,
            trace_every=None if compare else args.trace_every,
            audit=False if compare else args.audit,
            target_gap=None if compare else args.target_gap,
            f_star_ref=None if compare else args.f_star_ref,
        )
        if compare:
            strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
            targets = [_parse_target_token(t) for t in args.targets.split(",")]
            return run_compare(cfg, strategies, targets, args.out)
        return run_single(cfg)
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return 3
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, LibsvmParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
