"""Principal components of an embedding and per-group score marginals.

Used to compare the dominant variance structure of an embedding before
and after correction: fit two components, project, and summarize the
per-group distribution of each score as a fixed-bin histogram with
moments.  After orthogonalization against a design containing a group
indicator, the per-group marginal means coincide, since group mean
differences are linear functionals of the design.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyGroupWarning, InvalidInput, ShapeMismatch, ZeroVariance
from .linalg import EmbeddingMatrix

# Switchover from a dense eigendecomposition of the d x d covariance to
# matrix-free power iteration; above this, forming the covariance costs
# more than the handful of matvec sweeps.
_DENSE_MAX_D = 512
_POWER_TOL = 1e-10
_POWER_MAX_ITER = 5000
_BINS = 64


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray

    def __post_init__(self):
        comp = np.asarray(self.components, dtype=np.float64)
        gram = comp @ comp.T
        if not np.allclose(gram, np.eye(comp.shape[0]), atol=1e-8):
            raise InvalidInput("component rows must be orthonormal")

    @property
    def k(self):
        return self.components.shape[0]

    @property
    def d(self):
        return self.components.shape[1]


def _as_array(e):
    if isinstance(e, EmbeddingMatrix):
        return e.data
    arr = np.ascontiguousarray(np.asarray(e, dtype=np.float64))
    if arr.ndim != 2:
        raise InvalidInput(f"expected a 2-D embedding, got ndim={arr.ndim}")
    return arr


def _top_components_power(centered, k, divisor):
    """Top-k eigenpairs of centered'centered/divisor by power iteration
    with deflation; never forms the d x d covariance."""
    d = centered.shape[1]
    rng = np.random.default_rng(0)
    comps = np.zeros((k, d))
    vals = np.zeros(k)
    for i in range(k):
        v = rng.standard_normal(d)
        v -= comps[:i].T @ (comps[:i] @ v)
        v /= np.linalg.norm(v)
        for _ in range(_POWER_MAX_ITER):
            w = centered.T @ (centered @ v) / divisor
            w -= comps[:i].T @ (comps[:i] @ w)
            norm = np.linalg.norm(w)
            if norm == 0.0:
                # remaining spectrum is zero; keep the current direction
                break
            w /= norm
            if min(np.linalg.norm(w - v), np.linalg.norm(w + v)) < _POWER_TOL:
                v = w
                break
            v = w
        comps[i] = v
        vals[i] = v @ (centered.T @ (centered @ v)) / divisor
    return vals, comps


def pca_fit(e, k=2):
    """Top-k principal directions of the sample covariance of ``e``.

    Components are rows, orthonormal, each signed so its largest-
    magnitude entry is positive.  Explained-variance fractions are
    relative to the total variance, so they need not sum to 1 for
    k < min(n, d).
    """
    x = _as_array(e)
    n, d = x.shape
    if n < 2:
        raise InvalidInput(f"need at least 2 rows, got {n}")
    if not 1 <= k <= min(n, d):
        raise InvalidInput(f"k={k} outside 1..{min(n, d)}")

    mean = x.mean(axis=0)
    centered = x - mean
    divisor = n - 1
    total_var = float(np.einsum("ij,ij->", centered, centered)) / divisor
    if total_var == 0.0:
        raise ZeroVariance("embedding has no variance")

    if d <= _DENSE_MAX_D:
        cov = centered.T @ centered / divisor
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1][:k]
        vals = evals[order]
        comps = np.ascontiguousarray(evecs[:, order].T)
    else:
        vals, comps = _top_components_power(centered, k, divisor)

    vals = np.clip(vals, 0.0, None)
    for i in range(k):
        peak = int(np.argmax(np.abs(comps[i])))
        if comps[i, peak] < 0:
            comps[i] = -comps[i]
    return PcaModel(
        mean=mean,
        components=comps,
        explained_variance_ratio=vals / total_var,
    )


def pca_transform(model, e):
    """Project rows of ``e`` onto the fitted components."""
    x = _as_array(e)
    if x.shape[1] != model.d:
        raise ShapeMismatch(f"embedding has d={x.shape[1]}, model expects {model.d}")
    return (x - model.mean) @ model.components.T


@dataclass(frozen=True, eq=False)
class MarginalRow:
    group: str
    component: int
    n: int
    mean: float
    std: float
    counts: np.ndarray


@dataclass(frozen=True, eq=False)
class GroupMarginals:
    """Plot-ready per-group histograms of PCA scores.

    Bin edges are shared across groups within each component, spanning
    that component's observed range, so group histograms overlay
    directly.
    """

    edges: tuple
    rows: tuple


def group_marginals(scores, groups, categories=None, bins=_BINS):
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        scores = scores[:, None]
    n, k = scores.shape
    groups = np.asarray(groups)
    if groups.shape != (n,):
        raise ShapeMismatch(f"groups have shape {groups.shape}, expected ({n},)")

    edges = []
    for j in range(k):
        lo = float(scores[:, j].min())
        hi = float(scores[:, j].max())
        if lo == hi:
            lo -= 0.5
            hi += 0.5
        edges.append(np.linspace(lo, hi, bins + 1))

    if categories is None:
        categories = [str(g) for g in np.unique(groups)]
    labels = np.array([str(g) for g in groups])

    rows = []
    for cat in categories:
        mask = labels == str(cat)
        m = int(mask.sum())
        if m == 0:
            warnings.warn(f"group {cat!r} has no members", EmptyGroupWarning)
            continue
        for j in range(k):
            vals = scores[mask, j]
            counts, _ = np.histogram(vals, bins=edges[j])
            rows.append(
                MarginalRow(
                    group=str(cat),
                    component=j,
                    n=m,
                    mean=float(vals.mean()),
                    std=float(vals.std()),
                    counts=counts,
                )
            )
    return GroupMarginals(edges=tuple(edges), rows=tuple(rows))
