"""Column-oriented sparse storage, LIBSVM ingestion, and synthetic data.

The solver touches one column per iteration, so storage is column-major:
slicing column j and reading its cached squared norm are O(nnz(a_j)) and
O(1). Feature indices are 1-based in LIBSVM files and 0-based internally;
the conversion happens at the parse boundary only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import LibsvmParseError


class SparseColumnMatrix:
    """Sparse matrix in CSC layout with cached per-column squared norms.

    Canonical form is enforced at construction: row indices strictly
    increasing within each column, no explicitly stored zeros.
    """

    def __init__(self, matrix):
        m = sp.csc_matrix(matrix, dtype=np.float64, copy=True)
        m.sum_duplicates()
        m.sort_indices()
        m.eliminate_zeros()
        self._csc = m
        self.n_rows, self.n_cols = m.shape
        sq = m.copy()
        sq.data **= 2
        self.col_sq_norms = np.asarray(sq.sum(axis=0)).ravel()
        self.col_nnz = np.diff(m.indptr)

    @classmethod
    def from_dense(cls, array) -> "SparseColumnMatrix":
        return cls(sp.csc_matrix(np.asarray(array, dtype=np.float64)))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def total_nnz(self) -> int:
        return int(self._csc.nnz)

    @property
    def data(self) -> np.ndarray:
        return self._csc.data

    @property
    def indices(self) -> np.ndarray:
        return self._csc.indices

    @property
    def indptr(self) -> np.ndarray:
        return self._csc.indptr

    def col(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Rows and values of column j, sorted by row index (views)."""
        lo, hi = self._csc.indptr[j], self._csc.indptr[j + 1]
        return self._csc.indices[lo:hi], self._csc.data[lo:hi]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """A @ x."""
        return self._csc @ np.asarray(x, dtype=np.float64)

    def rmatvec(self, w: np.ndarray) -> np.ndarray:
        """A.T @ w in one pass over the stored entries."""
        return self._csc.T @ np.asarray(w, dtype=np.float64)

    def transpose(self) -> "SparseColumnMatrix":
        return SparseColumnMatrix(self._csc.T.tocsc())

    def to_dense(self) -> np.ndarray:
        return self._csc.toarray()

    def content_equal(self, other: "SparseColumnMatrix") -> bool:
        """Bitwise equality of the canonical stored content."""
        return (
            self.shape == other.shape
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True)
class LabeledDataset:
    """A data matrix plus one real label per row."""

    matrix: SparseColumnMatrix
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.float64)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1 or labels.shape[0] != self.matrix.n_rows:
            raise ValueError(
                f"labels length {labels.shape} does not match "
                f"{self.matrix.n_rows} rows"
            )

    def require_binary(self):
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must all be +1 or -1")


@dataclass(frozen=True)
class NormalizationResult:
    """Output of normalize_columns.

    ``scales[k]`` is the Euclidean norm the k-th retained column was divided
    by; a solution x' of the normalized problem maps back to the original
    coordinates as x_original = x' / scales. ``dropped`` lists the original
    indices of all-zero columns that were removed.
    """

    matrix: SparseColumnMatrix
    scales: np.ndarray
    dropped: list[int]


def _remap_binary_labels(labels: np.ndarray) -> np.ndarray:
    present = set(np.unique(labels).tolist())
    if present <= {-1.0, 1.0}:
        return labels
    if present <= {0.0, 1.0}:
        return np.where(labels == 0.0, -1.0, 1.0)
    if present <= {1.0, 2.0}:
        return np.where(labels == 1.0, -1.0, 1.0)
    raise LibsvmParseError(
        f"cannot remap labels {sorted(present)} to binary -1/+1"
    )


def parse_libsvm(text, expect_binary_labels: bool = False) -> LabeledDataset:
    """Parse LIBSVM text: one `<label> <idx>:<val> ...` line per row.

    Indices must be 1-based and strictly increasing within a line
    (duplicates are rejected rather than summed: silent summing hides data
    bugs). The column count is the maximum feature index seen. With
    expect_binary_labels, label sets {0,1} and {1,2} are remapped to
    {-1,+1} (smaller value to -1); labels already in {-1,+1} pass through.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    labels = []
    rows, cols, vals = [], [], []
    n_cols = 0
    row = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise LibsvmParseError(f"bad label token {tokens[0]!r}", lineno)
        prev_idx = 0
        for token in tokens[1:]:
            idx_s, _, val_s = token.partition(":")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibsvmParseError(f"bad feature token {token!r}", lineno)
            if idx < 1:
                raise LibsvmParseError(f"feature index {idx} is not 1-based", lineno)
            if idx <= prev_idx:
                raise LibsvmParseError(
                    f"feature indices not strictly increasing at {token!r}", lineno
                )
            prev_idx = idx
            rows.append(row)
            cols.append(idx - 1)
            vals.append(val)
            n_cols = max(n_cols, idx)
        labels.append(label)
        row += 1
    if row == 0:
        raise LibsvmParseError("empty input")
    matrix = SparseColumnMatrix(
        sp.coo_matrix((vals, (rows, cols)), shape=(row, n_cols))
    )
    y = np.asarray(labels, dtype=np.float64)
    if expect_binary_labels:
        y = _remap_binary_labels(y)
    return LabeledDataset(matrix=matrix, labels=y)


def to_libsvm(dataset: LabeledDataset) -> str:
    """Serialize a dataset back to LIBSVM text (exact float round trip)."""
    csr = dataset.matrix._csc.tocsr()
    lines = []
    for r in range(csr.shape[0]):
        lo, hi = csr.indptr[r], csr.indptr[r + 1]
        parts = [f"{dataset.labels[r]:.17g}"]
        parts.extend(
            f"{j + 1}:{v:.17g}" for j, v in zip(csr.indices[lo:hi], csr.data[lo:hi])
        )
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def normalize_columns(m: SparseColumnMatrix) -> NormalizationResult:
    """Rescale every column to unit Euclidean norm.

    All-zero columns cannot be normalized; they are dropped and their
    original indices reported.
    """
    norms = np.sqrt(m.col_sq_norms)
    keep = norms > 0.0
    dropped = np.flatnonzero(~keep).tolist()
    kept = m._csc[:, keep].tocsc()
    scales = norms[keep]
    kept = kept.multiply(sp.csc_matrix(1.0 / scales[None, :])).tocsc()
    return NormalizationResult(
        matrix=SparseColumnMatrix(kept), scales=scales, dropped=dropped
    )


def binarize_labels(dataset: LabeledDataset) -> LabeledDataset:
    """Map real targets to +1/-1 by sign (zero goes to +1)."""
    y = np.where(dataset.labels >= 0.0, 1.0, -1.0)
    return LabeledDataset(matrix=dataset.matrix, labels=y)


def generate_synthetic(
    n: int,
    d: int,
    sparsity: float,
    nnz_signal: int,
    noise_sd: float,
    seed: int,
) -> LabeledDataset:
    """Random sparse regression data with a few dominant coefficients.

    The planted coefficient vector has nnz_signal nonzeros whose magnitudes
    decay geometrically, so per-coordinate progress differs wildly across
    coordinates: the regime where adaptive selection pays off. Pure function
    of its arguments (fresh generator from seed).
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if not 0.0 < sparsity <= 1.0:
        raise ValueError(f"sparsity must be in (0, 1], got {sparsity}")
    if not 0 <= nnz_signal <= d:
        raise ValueError(f"nnz_signal must be in [0, d], got {nnz_signal}")
    if noise_sd < 0.0:
        raise ValueError("noise_sd must be nonnegative")
    rng = np.random.default_rng(seed)
    rows, cols, vals = [], [], []
    for j in range(d):
        picked = np.flatnonzero(rng.random(n) < sparsity)
        if picked.size == 0:
            # keep every column usable by the solver
            picked = np.array([rng.integers(n)])
        rows.append(picked)
        cols.append(np.full(picked.size, j))
        vals.append(rng.standard_normal(picked.size))
    matrix = SparseColumnMatrix(
        sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, d),
        )
    )
    coef = np.zeros(d)
    support = rng.choice(d, size=nnz_signal, replace=False)
    signs = rng.choice([-1.0, 1.0], size=nnz_signal)
    coef[support] = signs * 0.75 ** np.arange(nnz_signal)
    y = matrix.matvec(coef)
    if noise_sd > 0.0:
        y = y + noise_sd * rng.standard_normal(n)
    return LabeledDataset(matrix=matrix, labels=y)
