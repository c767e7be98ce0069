"""Weighted trainers and predictors.

Two classifiers, both trained by minimizing a weighted logistic loss with
deterministic mini-batch gradient steps:

* a logistic regression over the sparse feature vector, and
* a second-order factorization machine

      score(x) = w0 + sum_j w_j x_j
               + sum_j sum_{j'>j} x_j x_j' sum_f V[j,f] V[j',f]

  whose pairwise term is evaluated through the O(k * nnz) identity
  ``0.5 * sum_f ((V^T x)_f^2 - (V^2)^T x^2)``.

Batch updates average the weighted per-row gradients by the batch's weight
mass, so splitting one row into copies whose weights sum to the original
leaves the trajectory bit-for-bit unchanged, and zero-weight rows are
dropped up front so they cannot perturb shuffling. The l2 penalties are
spread across batches relative to the total weight mass. Everything is a
pure function of (data, config): shuffling and initialization draw from
seeded generators.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.sparse import csr_matrix
from scipy.special import expit

from .data import FeatureVector, SCHEMA_VERSION
from .errors import ConfigError, DataError, DivergenceError
from .weighting import LabelFrequency, WeightedTrainingSet

_INIT_STREAM = 31
_SHUFFLE_STREAM = 37


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.005
    epochs: int = 20
    batch_size: int = 512
    l2_linear: float = 1e-6
    l2_factor: float = 1e-5
    k: int = 8
    init_scale: float = 0.05
    seed: int = 0
    shuffle: bool = True

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1 or self.k < 1:
            raise ConfigError("epochs, batch_size and k must be at least 1")
        if self.l2_linear < 0 or self.l2_factor < 0 or self.init_scale < 0:
            raise ConfigError("l2 penalties and init_scale must be nonnegative")


@dataclass
class LogisticModel:
    bias: float
    weights: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])


@dataclass
class FMModel:
    w0: float
    w: np.ndarray
    V: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.w.shape[0])

    @property
    def k(self) -> int:
        return int(self.V.shape[1])


@dataclass(frozen=True)
class PlattParams:
    """Sigmoid recalibration 1 / (1 + exp(a * s + b)); a <= 0 when the raw
    scores are positively oriented."""

    a: float
    b: float


def _as_csr(x, dim: int) -> csr_matrix:
    if isinstance(x, FeatureVector):
        if x.dim != dim:
            raise DataError(f"feature dim {x.dim} does not match model dim {dim}")
        indptr = np.array([0, x.nnz], dtype=np.int64)
        return csr_matrix((x.values, x.indices, indptr), shape=(1, dim))
    if x.shape[1] != dim:
        raise DataError(f"matrix width {x.shape[1]} does not match model dim {dim}")
    return x


def lr_predict(model: LogisticModel, x):
    """p(label | x) as sigmoid of the linear score."""
    single = isinstance(x, FeatureVector)
    mat = _as_csr(x, model.dim)
    p = expit(model.bias + mat @ model.weights)
    return float(p[0]) if single else p


def fm_predict(model: FMModel, x):
    """Raw factorization-machine score (pre-sigmoid)."""
    single = isinstance(x, FeatureVector)
    mat = _as_csr(x, model.dim)
    score = _fm_scores(model.w0, model.w, model.V, mat, mat.multiply(mat).tocsr())
    return float(score[0]) if single else score


def fm_predict_proba(model: FMModel, x):
    score = fm_predict(model, x)
    return float(expit(score)) if np.ndim(score) == 0 else expit(score)


def _fm_scores(w0, w, v, x: csr_matrix, x2: csr_matrix) -> np.ndarray:
    a = x @ v
    s = x2 @ (v * v)
    return w0 + x @ w + 0.5 * ((a * a).sum(axis=1) - s.sum(axis=1))


def lr_loss_grad(bias, w, x: csr_matrix, y, sample_weight, l2):
    """Weighted negative log-likelihood plus l2 penalty, with gradients."""
    z = bias + x @ w
    loss = float(np.dot(sample_weight, np.logaddexp(0.0, z) - y * z)
                 + 0.5 * l2 * np.dot(w, w))
    r = sample_weight * (expit(z) - y)
    return loss, float(r.sum()), x.T @ r + l2 * w


def fm_loss_grad(w0, w, v, x: csr_matrix, x2: csr_matrix, y, sample_weight,
                 l2_linear, l2_factor):
    """Weighted logistic loss of the FM score, with gradients."""
    a = x @ v
    z = w0 + x @ w + 0.5 * ((a * a).sum(axis=1) - (x2 @ (v * v)).sum(axis=1))
    loss = float(np.dot(sample_weight, np.logaddexp(0.0, z) - y * z)
                 + 0.5 * l2_linear * np.dot(w, w)
                 + 0.5 * l2_factor * np.sum(v * v))
    r = sample_weight * (expit(z) - y)
    g0 = float(r.sum())
    gw = x.T @ r + l2_linear * w
    gv = x.T @ (r[:, None] * a) - (x2.T @ r)[:, None] * v + l2_factor * v
    return loss, g0, gw, gv


def _prepare(data: WeightedTrainingSet):
    x, y, sw = data.to_arrays()
    keep = sw > 0.0
    if not keep.all():
        x, y, sw = x[keep], y[keep], sw[keep]
    if x.shape[0] == 0:
        raise DataError("training set has no rows with positive weight")
    return x, y, sw


def _batches(order: np.ndarray, size: int):
    for lo in range(0, order.shape[0], size):
        yield order[lo:lo + size]


def lr_train(data: WeightedTrainingSet, cfg: TrainConfig) -> LogisticModel:
    """Fit the logistic classifier; deterministic for a fixed seed."""
    cfg.validate()
    x, y, sw = _prepare(data)
    n = x.shape[0]
    total_w = sw.sum()
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _SHUFFLE_STREAM)))
    bias = 0.0
    w = np.zeros(data.dim)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        for rows in _batches(order, cfg.batch_size):
            xb = x[rows]
            z = bias + xb @ w
            r = sw[rows] * (expit(z) - y[rows])
            s = sw[rows].sum()
            gb = r.sum() / s
            gw = xb.T @ r / s + (cfg.l2_linear / total_w) * w
            bias -= cfg.learning_rate * gb
            w -= cfg.learning_rate * gw
        loss, _, _ = lr_loss_grad(bias, w, x, y, sw, cfg.l2_linear)
        if not math.isfinite(loss):
            raise DivergenceError(f"logistic training diverged at epoch {epoch}")
    return LogisticModel(bias=float(bias), weights=w)


def fm_train(data: WeightedTrainingSet, cfg: TrainConfig) -> FMModel:
    """Fit the factorization machine; V starts from a seeded normal draw,
    the linear part from zero."""
    cfg.validate()
    x, y, sw = _prepare(data)
    x2 = x.multiply(x).tocsr()
    n = x.shape[0]
    total_w = sw.sum()
    init_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _INIT_STREAM)))
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _SHUFFLE_STREAM)))
    w0 = 0.0
    w = np.zeros(data.dim)
    v = init_rng.normal(0.0, cfg.init_scale, size=(data.dim, cfg.k))
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        for rows in _batches(order, cfg.batch_size):
            xb = x[rows]
            x2b = x2[rows]
            a = xb @ v
            z = w0 + xb @ w + 0.5 * ((a * a).sum(axis=1) - (x2b @ (v * v)).sum(axis=1))
            r = sw[rows] * (expit(z) - y[rows])
            s = sw[rows].sum()
            g0 = r.sum() / s
            gw = xb.T @ r / s + (cfg.l2_linear / total_w) * w
            gv = (xb.T @ (r[:, None] * a) - (x2b.T @ r)[:, None] * v) / s \
                + (cfg.l2_factor / total_w) * v
            w0 -= cfg.learning_rate * g0
            w -= cfg.learning_rate * gw
            v -= cfg.learning_rate * gv
        loss, _, _, _ = fm_loss_grad(w0, w, v, x, x2, y, sw, cfg.l2_linear, cfg.l2_factor)
        if not math.isfinite(loss):
            raise DivergenceError(f"factorization machine training diverged at epoch {epoch}")
    return FMModel(w0=float(w0), w=w, V=v)


def posterior_probability(model, x, c: LabelFrequency, mode: str = "divide_by_c"):
    """Churn-complement posterior from a labeled-vs-rest classifier.

    ``raw`` returns the sigmoid score untouched; ``divide_by_c`` rescales it
    by the label frequency (capped at 1), turning a labeled-vs-unlabeled
    score into an estimate of the true positive posterior.
    """
    if isinstance(model, LogisticModel):
        score = lr_predict(model, x)
    elif isinstance(model, FMModel):
        score = fm_predict_proba(model, x)
    else:
        raise ConfigError(f"cannot score with {type(model).__name__}")
    if mode == "raw":
        return score
    if mode == "divide_by_c":
        return np.minimum(1.0, np.asarray(score) / c.value) if np.ndim(score) \
            else min(1.0, score / c.value)
    raise ConfigError(f"unknown posterior mode {mode!r}")


def platt_fit(scores, labels) -> PlattParams:
    """Fit the two-parameter sigmoid recalibration by log-loss."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError("scores and labels must be 1-d and aligned")
    n1 = float(y.sum())
    n0 = float(y.size - n1)
    if n0 == 0 or n1 == 0:
        raise DataError("degenerate calibration: both classes must be present")

    def objective(theta):
        q = -(theta[0] * s + theta[1])
        loss = float(np.sum(np.logaddexp(0.0, q) - y * q))
        dq = expit(q) - y
        return loss, np.array([-np.dot(dq, s), -dq.sum()])

    x0 = np.array([0.0, math.log((n0 + 1.0) / (n1 + 1.0))])
    res = minimize(objective, x0, jac=True, method="L-BFGS-B")
    return PlattParams(a=float(res.x[0]), b=float(res.x[1]))


def platt_apply(params: PlattParams, scores):
    p = expit(-(params.a * np.asarray(scores, dtype=float) + params.b))
    return float(p) if np.ndim(scores) == 0 else p


def write_model(model, path, cfg: TrainConfig | None = None,
                c: LabelFrequency | None = None) -> None:
    doc: dict = {"version": SCHEMA_VERSION}
    if isinstance(model, LogisticModel):
        doc.update(type="lr", dim=model.dim, w0=model.bias, w=model.weights.tolist())
    elif isinstance(model, FMModel):
        doc.update(type="fm", dim=model.dim, k=model.k, w0=model.w0,
                   w=model.w.tolist(), V=model.V.tolist())
    else:
        raise ConfigError(f"cannot persist {type(model).__name__}")
    doc["cfg"] = asdict(cfg) if cfg is not None else None
    doc["c"] = c.value if c is not None else None
    doc["c_method"] = c.method if c is not None else None
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, separators=(",", ":"))
        f.write("\n")


def read_model(path):
    """Load a persisted model; returns ``(model, metadata)``."""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: malformed model file ({exc.msg})") from exc
    if doc.get("version") != SCHEMA_VERSION:
        raise DataError(f"{path}: unsupported model version {doc.get('version')!r}")
    kind = doc.get("type")
    meta = {"cfg": doc.get("cfg"), "c": doc.get("c"), "c_method": doc.get("c_method")}
    if kind == "lr":
        model = LogisticModel(bias=float(doc["w0"]), weights=np.asarray(doc["w"], dtype=float))
    elif kind == "fm":
        model = FMModel(w0=float(doc["w0"]), w=np.asarray(doc["w"], dtype=float),
                        V=np.asarray(doc["V"], dtype=float))
    else:
        raise DataError(f"{path}: unknown model type {kind!r}")
    return model, meta
