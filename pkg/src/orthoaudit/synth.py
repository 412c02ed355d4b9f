"""Synthetic embeddings with planted protected-feature leakage.

The generator draws demographics, encodes them into the design X, and
emits E = sigma*Z + X @ B with standard-normal Z, so the amount of
protected signal in the embedding is exactly the planted matrix B.
Pathology labels follow a logistic model on the embedding plus a direct
protected-feature leak gamma.  Ground truth stays attached to the
dataset for assertions.

The module also carries two deliberately naive reference
implementations (normal-equations residualization, O(n^2) pair-counting
AUC) used to cross-check the production code paths.
"""

from dataclasses import dataclass, field

import numpy as np

from .design import RACES, SEXES, DesignMatrix, ProtectedRecord, encode_design
from .errors import InvalidInput, RankDeficient, ShapeMismatch, UndefinedMetric
from .linalg import EmbeddingMatrix

# scan-level demographics of the MIMIC subset: race shares from the
# patient table, sex share and age moments from the scan rows
_RACE_DEFAULT = {"White": 0.7577, "Black": 0.1993, "Asian": 0.0430}
_SEX_DEFAULT = {"Male": 0.5369, "Female": 0.4631}

_AGE_LO = 18.0
_AGE_HI = 100.0

_ORACLE_MAX_N = 10_000
_PAIRCOUNT_MAX_N = 5_000


def _check_proportions(props, allowed, what):
    if set(props) - set(allowed):
        raise InvalidInput(f"unknown {what} categories {set(props) - set(allowed)}")
    vals = np.array([props.get(c, 0.0) for c in allowed], dtype=np.float64)
    if np.any(vals < 0) or abs(vals.sum() - 1.0) > 1e-9:
        raise InvalidInput(f"{what} proportions must be non-negative and sum to 1")
    return vals


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    """Parameters of one synthetic dataset draw.

    ``b`` is p x d (p = 5 design columns, intercept first) and controls
    how strongly each protected column leaks into each embedding
    dimension; ``w_star`` (d) and ``gamma`` (p) drive the pathology
    label through sigmoid(E w* + X gamma).
    """

    n: int = 5000
    d: int = 32
    seed: int = 0
    sigma: float = 1.0
    b: np.ndarray = None
    w_star: np.ndarray = None
    gamma: np.ndarray = None
    sex_proportions: dict = field(default_factory=lambda: dict(_SEX_DEFAULT))
    race_proportions: dict = field(default_factory=lambda: dict(_RACE_DEFAULT))
    age_mean: float = 62.6
    age_std: float = 16.6
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.n < 2:
            raise InvalidInput(f"n must be >= 2, got {self.n}")
        if self.d < 1:
            raise InvalidInput(f"d must be >= 1, got {self.d}")
        if self.sigma < 0:
            raise InvalidInput(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidInput("train fraction must be in (0, 1)")
        if self.age_std < 0:
            raise InvalidInput("age std must be >= 0")
        _check_proportions(self.sex_proportions, SEXES, "sex")
        _check_proportions(self.race_proportions, RACES, "race")
        p = 5
        b = np.zeros((p, self.d)) if self.b is None else np.asarray(self.b, dtype=np.float64)
        w = np.zeros(self.d) if self.w_star is None else np.asarray(self.w_star, dtype=np.float64)
        g = np.zeros(p) if self.gamma is None else np.asarray(self.gamma, dtype=np.float64)
        if b.shape != (p, self.d):
            raise ShapeMismatch(f"b has shape {b.shape}, expected ({p}, {self.d})")
        if w.shape != (self.d,):
            raise ShapeMismatch(f"w_star has shape {w.shape}, expected ({self.d},)")
        if g.shape != (p,):
            raise ShapeMismatch(f"gamma has shape {g.shape}, expected ({p},)")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "w_star", w)
        object.__setattr__(self, "gamma", g)


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    embedding: EmbeddingMatrix
    records: tuple
    labels: np.ndarray
    splits: np.ndarray
    spec: SyntheticSpec

    def design(self, schema=None):
        if schema is None:
            return encode_design(self.records)
        return encode_design(self.records, schema)

    def mask(self, split):
        return self.splits == split


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def generate(spec):
    """Draw one dataset.  All randomness flows from spec.seed in a fixed
    order (ages, sexes, races, noise, labels, split), so identical specs
    give bit-identical datasets."""
    rng = np.random.default_rng(spec.seed)
    n, d = spec.n, spec.d

    ages = np.clip(rng.normal(spec.age_mean, spec.age_std, size=n), _AGE_LO, _AGE_HI)
    sex_p = _check_proportions(spec.sex_proportions, SEXES, "sex")
    race_p = _check_proportions(spec.race_proportions, RACES, "race")
    sexes = rng.choice(len(SEXES), size=n, p=sex_p)
    races = rng.choice(len(RACES), size=n, p=race_p)

    records = tuple(
        ProtectedRecord(
            rid=f"s{i:06d}",
            age=float(ages[i]),
            sex=SEXES[sexes[i]],
            race=RACES[races[i]],
        )
        for i in range(n)
    )
    x = encode_design(records).data

    e = rng.standard_normal((n, d))
    if spec.sigma != 1.0:
        e *= spec.sigma
    e += x @ spec.b

    logits = e @ spec.w_star + x @ spec.gamma
    labels = (rng.random(n) < _sigmoid(logits)).astype(np.int64)
    splits = np.where(rng.random(n) < spec.train_fraction, "train", "test")

    embedding = EmbeddingMatrix(ids=np.array([r.rid for r in records]), data=e)
    return SyntheticDataset(
        embedding=embedding,
        records=records,
        labels=labels,
        splits=splits,
        spec=spec,
    )


def biased_spec(n=5000, d=32, seed=0, leak=4.0, gamma_scale=1.5):
    """A spec with strong planted sex/race/age leakage: protected probes
    succeed before correction and collapse after.

    The pathology direction w* is projected orthogonal to the rows of B,
    so the label signal lives in the noise subspace and survives
    correction; only the direct leak gamma ties the label to the
    protected columns.
    """
    if d < 6:
        raise InvalidInput("biased preset needs d >= 6")
    rng = np.random.default_rng(seed + 1_000_003)
    b = np.zeros((5, d))
    # rows: intercept, age_div100, sex_female, race_black, race_asian
    b[1] = rng.standard_normal(d) * 10.0 * leak  # age enters as age/100
    b[2] = rng.standard_normal(d) * leak
    b[3] = rng.standard_normal(d) * leak
    b[4] = rng.standard_normal(d) * leak
    w = rng.standard_normal(d)
    q, _ = np.linalg.qr(b[1:].T)
    w -= q @ (q.T @ w)
    w /= np.linalg.norm(w)
    gamma = np.array([0.0, 0.0, gamma_scale, -gamma_scale, 0.0])
    return SyntheticSpec(n=n, d=d, seed=seed, b=b, w_star=w, gamma=gamma)


def no_signal_spec(n=5000, d=32, seed=0):
    """A spec with zero protected leakage; the null case."""
    rng = np.random.default_rng(seed + 2_000_003)
    w = rng.standard_normal(d) / np.sqrt(d)
    return SyntheticSpec(n=n, d=d, seed=seed, w_star=w)


def oracle_residualize(e, x):
    """Per-column OLS residuals via explicit normal equations.

    Independent of the QR path on purpose: forms X'X and solves it
    directly.  Only for oracle-scale inputs (n <= 10^4, full-rank X).
    """
    earr = e.data if isinstance(e, EmbeddingMatrix) else np.asarray(e, dtype=np.float64)
    # NB: hasattr(x, "data") would be true for a bare ndarray (its buffer)
    xarr = x.data if isinstance(x, DesignMatrix) else np.asarray(x, dtype=np.float64)
    if earr.shape[0] != xarr.shape[0]:
        raise ShapeMismatch(f"{earr.shape[0]} embedding rows vs {xarr.shape[0]} design rows")
    if earr.shape[0] > _ORACLE_MAX_N:
        raise InvalidInput(f"oracle limited to n <= {_ORACLE_MAX_N}")
    xtx = xarr.T @ xarr
    cond = np.linalg.cond(xtx)
    if not np.isfinite(cond) or cond > 1e12:
        raise RankDeficient(f"X'X is singular or near-singular (cond={cond:.3g})")
    beta = np.linalg.solve(xtx, xarr.T @ earr)
    resid = earr - xarr @ beta
    if isinstance(e, EmbeddingMatrix):
        return EmbeddingMatrix(ids=e.ids, data=resid)
    return EmbeddingMatrix.from_array(resid)


def oracle_auc_paircount(scores, labels):
    """AUC by explicit positive-negative pair counting, half credit for
    ties.  Quadratic; only for oracle-scale inputs."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).astype(np.int64).reshape(-1)
    if scores.shape != labels.shape:
        raise ShapeMismatch(f"{scores.shape[0]} scores vs {labels.shape[0]} labels")
    if scores.shape[0] > _PAIRCOUNT_MAX_N:
        raise InvalidInput(f"oracle limited to n <= {_PAIRCOUNT_MAX_N}")
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.shape[0] == 0 or neg.shape[0] == 0:
        raise UndefinedMetric("AUC needs both classes present")
    wins = 0.0
    for s in pos:
        wins += np.count_nonzero(neg < s) + 0.5 * np.count_nonzero(neg == s)
    return wins / (pos.shape[0] * neg.shape[0])
