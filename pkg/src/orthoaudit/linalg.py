"""Orthogonal-complement projection of embeddings against a design matrix.

The corrected embedding is the residual of projecting each embedding
column onto col(X): with a thin QR factorization X = Q1 R, the projector
onto col(X) is Q1 Q1^T and the correction is

    E_tilde = E - Q1 (Q1^T E)

computed in exactly that factored order, so the n x n complement matrix
I - Q1 Q1^T is never formed.  By the Frisch-Waugh-Lovell theorem the
corrected columns carry zero least-squares influence of every design
column.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import _backend
from .design import DesignMatrix
from .errors import AlignmentError, InvalidInput, ShapeMismatch, SmallSampleWarning

DEFAULT_TOL = 1e-10

# chunk size (rows) for finiteness scans of large matrices
_SCAN_BLOCK = 65536


def _all_finite(a):
    for start in range(0, a.shape[0], _SCAN_BLOCK):
        if not np.isfinite(a[start:start + _SCAN_BLOCK]).all():
            return False
    return True


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """An n x d matrix of real-valued features with unique row ids."""

    ids: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", np.asarray(self.ids))
        object.__setattr__(
            self, "data", np.ascontiguousarray(self.data, dtype=np.float64)
        )
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise InvalidInput("embedding must be a non-empty 2-D matrix")
        if self.ids.shape[0] != self.data.shape[0]:
            raise ShapeMismatch(
                f"{self.ids.shape[0]} row ids vs {self.data.shape[0]} embedding rows"
            )
        if np.unique(self.ids).shape[0] != self.ids.shape[0]:
            raise InvalidInput("embedding row ids are not unique")
        if not _all_finite(self.data):
            raise InvalidInput("embedding contains non-finite entries")

    @classmethod
    def from_array(cls, data):
        """Wrap a bare array, assigning positional row ids."""
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        return cls(ids=np.arange(data.shape[0]), data=data)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class ThinQR:
    """Thin, rank-revealing QR factorization of a design matrix.

    ``q1`` holds the ``rank`` orthonormal columns spanning col(X); ``r`` is
    the upper-trapezoidal factor of the column-pivoted matrix, so
    ``X[:, pivots] ~= q1 @ r``.  Columns of X beyond the detected rank have
    no representation; the complementary orthonormal block is never
    materialized, only its action through the projector.
    """

    q1: np.ndarray
    r: np.ndarray
    rank: int
    pivots: np.ndarray
    tol: float


def _as_design_array(x):
    if isinstance(x, DesignMatrix):
        return x.data
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInput("design must be a 2-D matrix")
    return arr


def thin_qr(x, tol=DEFAULT_TOL):
    """Column-pivoted Householder QR with relative rank detection.

    The rank is the number of diagonal entries of R exceeding
    ``tol * |R[0, 0]|``; an all-zero matrix has rank 0 (not an error).
    """
    arr = _as_design_array(x)
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInput("design must have at least one row and column")
    if not np.isfinite(arr).all():
        raise InvalidInput("design contains non-finite entries")
    if tol <= 0:
        raise InvalidInput("tolerance must be positive")
    q1, r, piv, rank = _backend.get().qr_pivoted(arr, tol)
    return ThinQR(q1=q1, r=r, rank=rank, pivots=piv, tol=tol)


def _project_out(e_data, x, tol):
    factor = thin_qr(x, tol)
    out = np.empty_like(e_data)
    _backend.get().subtract_projection(factor.q1, e_data, out)
    return out, factor


def _check_aligned(e, x):
    if not isinstance(e, EmbeddingMatrix):
        raise InvalidInput("expected an EmbeddingMatrix")
    if e.n != (x.n if isinstance(x, DesignMatrix) else np.asarray(x).shape[0]):
        raise ShapeMismatch(
            f"embedding has {e.n} rows, design has "
            f"{x.n if isinstance(x, DesignMatrix) else np.asarray(x).shape[0]}"
        )
    if isinstance(x, DesignMatrix) and not np.array_equal(e.ids, x.ids):
        bad = np.nonzero(e.ids != x.ids)[0]
        raise AlignmentError(
            f"row ids disagree at {bad.shape[0]} positions "
            f"(first: embedding {e.ids[bad[0]]!r} vs design {x.ids[bad[0]]!r})"
        )


def orthogonalize(e, x, tol=DEFAULT_TOL):
    """Remove every linear trace of the design columns from an embedding.

    Returns a new EmbeddingMatrix of the same shape whose columns are
    orthogonal to col(X).  Rows of ``e`` and ``x`` must be aligned (equal
    ids when ``x`` is a DesignMatrix).
    """
    _check_aligned(e, x)
    out, _ = _project_out(e.data, x, tol)
    return EmbeddingMatrix(ids=e.ids, data=out)


def orthogonalize_unseen(e_star, x_star, tol=DEFAULT_TOL):
    """Orthogonalize held-out data against its own protected features.

    The factorization is recomputed from ``x_star``; nothing is reused
    from the training split.  Warns when there are fewer than ten rows per
    design column, where the estimated (and subtracted) feature effect has
    high variance.
    """
    _check_aligned(e_star, x_star)
    p = x_star.p if isinstance(x_star, DesignMatrix) else np.asarray(x_star).shape[1]
    if e_star.n < 10 * p:
        warnings.warn(
            f"{e_star.n} rows for {p} design columns (< 10 per column); "
            "the subtracted effect estimate has high variance",
            SmallSampleWarning,
        )
    out, _ = _project_out(e_star.data, x_star, tol)
    return EmbeddingMatrix(ids=e_star.ids, data=out)
