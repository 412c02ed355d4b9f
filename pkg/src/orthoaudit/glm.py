"""Linear probe models trained by minibatch gradient descent.

Three probe families share one training loop: logistic regression for
binary targets (pathology presence, sex), plain linear regression for
age in years, and multinomial softmax regression for race.  The probe
sees the embedding as its only features.  Optimization is shuffled
minibatch descent with adaptive moment estimation by default (decay
0.9/0.999, epsilon 1e-8), switchable to plain SGD; there is no
regularization and no hyperparameter search.

Weights start uniform in [-1/sqrt(d), 1/sqrt(d)], bias at zero, both
drawn from the run seed, so a (seed, config, backend) triple pins the
result bit for bit.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DegenerateClassesWarning, Diverged, InvalidInput, ShapeMismatch
from .linalg import EmbeddingMatrix

_TASKS = ("binary", "regression", "multinomial")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 1e-4
    batch_size: int = 256
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidInput(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise InvalidInput(f"learning rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise InvalidInput(f"batch size must be >= 1, got {self.batch_size}")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidInput(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise InvalidInput("moment decays must lie in [0, 1)")
        if not self.epsilon > 0:
            raise InvalidInput(f"epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class ProbeModel:
    """A fitted probe: weights (d x k_out), bias (k_out), and the
    hyperparameters it was trained with."""

    task: str
    weights: np.ndarray
    bias: np.ndarray
    config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.task not in _TASKS:
            raise InvalidInput(f"unknown task {self.task!r}")
        w = np.ascontiguousarray(np.atleast_2d(np.asarray(self.weights, dtype=np.float64)))
        if w.shape[0] == 1 and np.asarray(self.weights).ndim == 1:
            w = w.T
        b = np.ascontiguousarray(np.asarray(self.bias, dtype=np.float64).reshape(-1))
        if w.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"weights {w.shape} vs bias {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise InvalidInput("model parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def d(self):
        return self.weights.shape[0]

    @property
    def k_out(self):
        return self.weights.shape[1]


def _matrix(e):
    if isinstance(e, EmbeddingMatrix):
        return e.data
    arr = np.ascontiguousarray(np.asarray(e, dtype=np.float64))
    if arr.ndim != 2:
        raise InvalidInput(f"expected a 2-D embedding, got ndim={arr.ndim}")
    return arr


def _init_params(d, k_out, cfg):
    """Seeded initial parameters; the generator is returned so the epoch
    shuffles continue the same stream."""
    rng = np.random.default_rng(cfg.seed)
    scale = 1.0 / math.sqrt(d)
    if k_out == 1:
        w = rng.uniform(-scale, scale, size=d)
        b = np.zeros(1)
    else:
        w = rng.uniform(-scale, scale, size=(d, k_out))
        b = np.zeros(k_out)
    return w, b, rng


def _run(kernel_name, x, target, k_out, cfg):
    n, d = x.shape
    w, b, rng = _init_params(d, k_out, cfg)
    mw = np.zeros_like(w)
    vw = np.zeros_like(w)
    mb = np.zeros_like(b)
    vb = np.zeros_like(b)
    kernel = getattr(_backend.get(), kernel_name)
    adam = cfg.optimizer == "adam"
    t = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        t, bad = kernel(
            x, target, order, w, b, mw, vw, mb, vb,
            cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon,
            cfg.batch_size, t, adam,
        )
        if bad >= 0:
            raise Diverged(epoch, bad)
    return w, b


def fit_binary_probe(e, y, cfg=TrainConfig()):
    """Logistic probe on the embedding against 0/1 labels."""
    x = _matrix(e)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"{y.shape[0]} labels for {x.shape[0]} rows")
    if y.shape[0] == 0:
        raise InvalidInput("no training rows")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise InvalidInput("binary labels must be 0/1")
    w, b = _run("epoch_binary", x, y, 1, cfg)
    return ProbeModel(task="binary", weights=w, bias=b, config=cfg)


def fit_linear_probe(e, y, cfg=TrainConfig()):
    """Least-squares probe on the embedding against real targets."""
    x = _matrix(e)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"{y.shape[0]} targets for {x.shape[0]} rows")
    if y.shape[0] == 0:
        raise InvalidInput("no training rows")
    if not np.all(np.isfinite(y)):
        raise InvalidInput("targets must be finite")
    w, b = _run("epoch_linear", x, y, 1, cfg)
    return ProbeModel(task="regression", weights=w, bias=b, config=cfg)


def fit_multinomial_probe(e, labels, cfg=TrainConfig(), n_classes=None):
    """Softmax probe against integer class labels 0..K-1.

    K is taken from ``n_classes`` or inferred as max(label)+1 (at least
    2).  A class absent from the data only triggers a warning; its score
    column trains toward the bias.
    """
    x = _matrix(e)
    lab = np.asarray(labels)
    if lab.shape != (x.shape[0],):
        raise ShapeMismatch(f"labels have shape {lab.shape}, expected ({x.shape[0]},)")
    if lab.shape[0] == 0:
        raise InvalidInput("no training rows")
    if not np.issubdtype(lab.dtype, np.integer):
        flab = np.asarray(labels, dtype=np.float64)
        if not np.all(flab == np.floor(flab)):
            raise InvalidInput("class labels must be integers")
        lab = flab.astype(np.int64)
    else:
        lab = lab.astype(np.int64)
    if lab.min() < 0:
        raise InvalidInput("class labels must be >= 0")
    k = int(n_classes) if n_classes is not None else max(int(lab.max()) + 1, 2)
    if lab.max() >= k:
        raise InvalidInput(f"label {int(lab.max())} outside 0..{k - 1}")
    present = np.unique(lab)
    if present.shape[0] < k:
        missing = sorted(set(range(k)) - set(present.tolist()))
        warnings.warn(
            f"classes {missing} absent from training labels",
            DegenerateClassesWarning,
        )
    w, b = _run("epoch_multinomial", x, lab, k, cfg)
    return ProbeModel(task="multinomial", weights=w, bias=b, config=cfg)


def predict_scores(model, e):
    """Raw scores (n x k_out): logits for classifiers, predictions for
    the regression probe.  No thresholding."""
    x = _matrix(e)
    if x.shape[1] != model.d:
        raise ShapeMismatch(f"embedding has d={x.shape[1]}, model expects {model.d}")
    return x @ model.weights + model.bias


def dataset_loss(model, e, y):
    """Full-dataset mean training loss of ``model`` on (e, y).

    The same objective the minibatch kernels descend, evaluated in one
    pass; used to check that training moved downhill overall.
    """
    z = predict_scores(model, e)
    if model.task == "binary":
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        z1 = z[:, 0]
        return float(np.mean(np.maximum(z1, 0.0) - z1 * y + np.log1p(np.exp(-np.abs(z1)))))
    if model.task == "regression":
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        diff = z[:, 0] - y
        return float(np.mean(diff * diff))
    lab = np.asarray(y, dtype=np.int64).reshape(-1)
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1))
    return float(np.mean(log_norm - shifted[np.arange(lab.shape[0]), lab]))
