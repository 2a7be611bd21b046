"""Coordinate-selection strategies and their logarithmic-time score store.

Six strategies share one interface:

  uniform        -- each coordinate equally likely, ignores all feedback.
  ada_gap        -- sample proportionally to the fresh per-coordinate gaps.
  gap_per_epoch  -- like ada_gap but from gaps recomputed once per bin.
  gs             -- greedy largest |grad_i F| (differentiable objectives).
  max_r          -- greedy largest fresh marginal decrease.
  b_max_r        -- epsilon-greedy over stale marginal-decrease estimates:
                    with probability epsilon explore uniformly, otherwise
                    take the argmax of the stored estimates; the estimate of
                    the updated coordinate is replaced by the decrease
                    observed right after its step, and all estimates are
                    recomputed at the start of every bin of E iterations.

Full-information strategies receive a freshly computed score vector on
every call; binned strategies keep their own stale copies in a ScoreTree so
that update, argmax and weighted sampling all cost O(log d).
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .errors import InternalConsistencyError

_FALLBACK_EPS = 1e-15  # below this, a score vector is considered all-zero


class ScoreTree:
    """Fixed-size array of nonnegative scores with cached subtree sums and
    maxima. Point update, argmax, total and weighted sampling are all
    O(log d); ties in argmax resolve to the lowest index."""

    def __init__(self, d: int):
        if d < 1:
            raise ValueError("ScoreTree needs at least one leaf")
        self.d = d
        size = 1
        while size < d:
            size *= 2
        self._size = size
        self._sum = np.zeros(2 * size)
        self._max = np.full(2 * size, -np.inf)
        self._arg = np.full(2 * size, 2 * size, dtype=np.int64)
        self._max[size : size + d] = 0.0
        self._arg[size : size + d] = np.arange(d)
        self._rebuild()

    @property
    def depth(self) -> int:
        return self._size.bit_length()

    def _rebuild(self):
        s, m, a = self._sum, self._max, self._arg
        level = self._size // 2
        while level >= 1:
            k = np.arange(level, 2 * level)
            left, right = 2 * k, 2 * k + 1
            s[k] = s[left] + s[right]
            take_left = m[left] >= m[right]
            m[k] = np.where(take_left, m[left], m[right])
            a[k] = np.where(take_left, a[left], a[right])
            level //= 2

    def values(self) -> np.ndarray:
        return self._sum[self._size : self._size + self.d].copy()

    def update(self, i: int, value: float):
        if not 0 <= i < self.d:
            raise IndexError(f"leaf {i} out of range [0, {self.d})")
        k = self._size + i
        self._sum[k] = value
        self._max[k] = value
        k //= 2
        s, m, a = self._sum, self._max, self._arg
        while k >= 1:
            left, right = 2 * k, 2 * k + 1
            s[k] = s[left] + s[right]
            if m[left] >= m[right]:
                m[k], a[k] = m[left], a[left]
            else:
                m[k], a[k] = m[right], a[right]
            k //= 2

    def refresh(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.d,):
            raise ValueError(f"expected {self.d} scores, got shape {values.shape}")
        self._sum[self._size : self._size + self.d] = values
        self._max[self._size : self._size + self.d] = values
        self._rebuild()

    def total(self) -> float:
        return float(self._sum[1])

    def max_score(self) -> float:
        return float(self._max[1])

    def argmax(self) -> int:
        return int(self._arg[1])

    def sample(self, u: float) -> int:
        """Leaf index whose prefix-sum interval contains u in [0, total)."""
        k = 1
        s = self._sum
        while k < self._size:
            left = 2 * k
            if u < s[left]:
                k = left
            else:
                u -= s[left]
                k = left + 1
        return min(k - self._size, self.d - 1)


class Strategy:
    """Base coordinate chooser. Subclasses override select()."""

    name = "base"
    full_information = False  # wants a fresh score vector every iteration
    binned = False            # keeps stale scores, refreshed once per bin
    wants_feedback = False    # consumes the post-step observed decrease
    score_kind: Optional[str] = None  # "marginal" | "gap" | "gradient_abs"

    def __init__(self, d: int):
        if d < 1:
            raise ValueError("strategy needs at least one coordinate")
        self.d = d
        self.feedback_count = 0

    def select(self, scores: np.ndarray | None = None) -> int:
        raise NotImplementedError

    def feedback(self, i: int, value: float):
        # shared contract: observed decreases must be nonnegative
        if value < -1e-12:
            raise InternalConsistencyError(
                f"observed decrease {value} at coordinate {i} is negative"
            )
        self.feedback_count += 1

    def refresh(self, scores: np.ndarray):
        raise RuntimeError(f"strategy {self.name!r} has no bins to refresh")


class UniformStrategy(Strategy):
    name = "uniform"

    def __init__(self, d: int, rng: np.random.Generator):
        super().__init__(d)
        self.rng = rng

    def select(self, scores=None) -> int:
        return int(self.rng.integers(self.d))


class AdaGapStrategy(Strategy):
    """Sample coordinate i with probability G_i / sum_j G_j (fresh gaps)."""

    name = "ada_gap"
    full_information = True
    score_kind = "gap"

    def __init__(self, d: int, rng: np.random.Generator):
        super().__init__(d)
        self.rng = rng

    def select(self, scores=None) -> int:
        if scores is None:
            raise ValueError("ada_gap needs the fresh score vector")
        scores = np.asarray(scores, dtype=np.float64)
        if float(scores.max(initial=0.0)) <= _FALLBACK_EPS:
            # at (near) optimality any choice is a no-op
            return int(self.rng.integers(self.d))
        c = np.cumsum(scores)
        u = self.rng.random() * c[-1]
        return int(min(np.searchsorted(c, u, side="right"), self.d - 1))


class GapPerEpochStrategy(Strategy):
    """ada_gap's cheap cousin: gaps recomputed once per bin of E steps."""

    name = "gap_per_epoch"
    binned = True
    score_kind = "gap"

    def __init__(self, d: int, bin_size: int, rng: np.random.Generator):
        super().__init__(d)
        if bin_size < 1:
            raise ValueError("bin_size must be >= 1")
        self.bin_size = bin_size
        self.rng = rng
        self.tree = ScoreTree(d)

    def select(self, scores=None) -> int:
        if self.tree.max_score() <= _FALLBACK_EPS:
            return int(self.rng.integers(self.d))
        u = self.rng.random() * self.tree.total()
        return self.tree.sample(u)

    def refresh(self, scores: np.ndarray):
        scores = _checked_scores(scores, self.d)
        self.tree.refresh(scores)


class MaxRStrategy(Strategy):
    """Greedy: the coordinate with the largest fresh marginal decrease."""

    name = "max_r"
    full_information = True
    score_kind = "marginal"

    def select(self, scores=None) -> int:
        if scores is None:
            raise ValueError("max_r needs the fresh score vector")
        return int(np.argmax(scores))  # ties resolve to the lowest index


class GaussSouthwellStrategy(Strategy):
    """Greedy largest gradient magnitude; needs a differentiable objective."""

    name = "gs"
    full_information = True
    score_kind = "gradient_abs"

    def select(self, scores=None) -> int:
        if scores is None:
            raise ValueError("gs needs the fresh score vector")
        return int(np.argmax(scores))


class BMaxRStrategy(Strategy):
    """Epsilon-greedy over stale marginal-decrease estimates.

    Estimates live in a ScoreTree: every bin start overwrites all of them
    with fresh values, and each step's observed decrease replaces the single
    estimate of the stepped coordinate. With epsilon = 0 and bin size 1 the
    selection degenerates to max_r; with epsilon = 1 it is uniform.
    """

    name = "b_max_r"
    binned = True
    wants_feedback = True
    score_kind = "marginal"

    def __init__(self, d: int, epsilon: float, bin_size: int, rng: np.random.Generator):
        super().__init__(d)
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
        if bin_size < 1:
            raise ValueError("bin_size must be >= 1")
        self.epsilon = epsilon
        self.bin_size = bin_size
        self.rng = rng
        self.tree = ScoreTree(d)

    def select(self, scores=None) -> int:
        explore = self.rng.random() < self.epsilon
        if explore:
            return int(self.rng.integers(self.d))
        return self.tree.argmax()

    def feedback(self, i: int, value: float):
        super().feedback(i, value)
        self.tree.update(i, max(value, 0.0))

    def refresh(self, scores: np.ndarray):
        scores = _checked_scores(scores, self.d)
        self.tree.refresh(scores)


def _checked_scores(scores: np.ndarray, d: int) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (d,):
        raise ValueError(f"expected {d} scores, got shape {scores.shape}")
    if np.any(scores < -1e-12):
        raise InternalConsistencyError("negative scores in refresh")
    return np.maximum(scores, 0.0)


STRATEGY_NAMES = ("uniform", "ada_gap", "gap_per_epoch", "gs", "max_r", "b_max_r")


def default_bin_size(d: int) -> int:
    """The experiments' convention: bins of ceil(d/2) iterations."""
    return max(1, math.ceil(d / 2))


def make_strategy(
    name: str,
    d: int,
    *,
    epsilon: float = 0.5,
    bin_size: int | None = None,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
) -> Strategy:
    """Build a strategy by CLI name. Exploration defaults to 0.5 and the bin
    size to ceil(d/2); any epsilon in roughly [0.2, 0.7] works well."""
    if rng is None:
        rng = np.random.default_rng(seed)
    if bin_size is None:
        bin_size = default_bin_size(d)
    if name == "uniform":
        return UniformStrategy(d, rng)
    if name == "ada_gap":
        return AdaGapStrategy(d, rng)
    if name == "gap_per_epoch":
        return GapPerEpochStrategy(d, bin_size, rng)
    if name == "gs":
        return GaussSouthwellStrategy(d)
    if name == "max_r":
        return MaxRStrategy(d)
    if name == "b_max_r":
        return BMaxRStrategy(d, epsilon, bin_size, rng)
    raise ValueError(f"unknown strategy {name!r}; choose from {STRATEGY_NAMES}")
