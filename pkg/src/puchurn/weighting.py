"""Label-frequency estimation and instance weighting for PU training.

The label frequency ``c`` is the probability that a true positive gets
labeled inside the short observation window. Given a classifier score
``s`` for "this instance is labeled" and ``c``, each unlabeled instance is
duplicated into a positive copy with weight

    w = (1 - c) * s / (1 - c * s)

and a negative copy with weight ``1 - w``. The closed form above equals
``((1 - c) / c) * (g / (1 - g))`` with ``g = c * s``, but stays finite at
the score boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix

from .data import FeatureVector, SCHEMA_VERSION, WeightedInstance
from .errors import DataError

SCORE_EPS = 1e-6
C_FLOOR = 0.01

METHOD_MEAN = "e1"
METHOD_RATIO = "e2"
METHOD_MAX = "e3"
METHOD_HISTORICAL = "historical"
C_METHODS = (METHOD_MEAN, METHOD_RATIO, METHOD_MAX, METHOD_HISTORICAL)

PROV_POSITIVE = "positive"
PROV_UNLABELED_POS = "unlabeled-as-positive"
PROV_UNLABELED_NEG = "unlabeled-as-negative"
PROV_NEGATIVE = "negative"  # in-memory only, for fully labeled sets


@dataclass(frozen=True)
class LabelFrequency:
    """Estimated probability that a true positive is labeled."""

    value: float
    method: str
    support: int

    def __post_init__(self):
        if not (0.0 < self.value <= 1.0):
            raise DataError(f"label frequency must lie in (0, 1], got {self.value}")
        if self.method not in C_METHODS:
            raise DataError(f"unknown label-frequency method {self.method!r}")


def _finish(value: float, method: str, support: int) -> LabelFrequency:
    return LabelFrequency(value=max(float(value), C_FLOOR), method=method, support=support)


def estimate_c_mean(scores_labeled: Sequence[float]) -> LabelFrequency:
    """Mean score over labeled validation positives."""
    scores = np.asarray(scores_labeled, dtype=float)
    if scores.size == 0:
        raise DataError("label-frequency estimate needs at least one labeled score")
    return _finish(scores.mean(), METHOD_MEAN, scores.size)


def estimate_c_ratio(scores_labeled: Sequence[float],
                     scores_all: Sequence[float]) -> LabelFrequency:
    """Sum of labeled scores over the sum across the whole validation set."""
    num = np.asarray(scores_labeled, dtype=float)
    den = np.asarray(scores_all, dtype=float)
    if den.size == 0 or den.sum() <= 0.0:
        raise DataError("degenerate scores: validation sum must be positive")
    return _finish(num.sum() / den.sum(), METHOD_RATIO, den.size)


def estimate_c_max(scores_all: Sequence[float]) -> LabelFrequency:
    """Maximum score over the validation set."""
    scores = np.asarray(scores_all, dtype=float)
    if scores.size == 0:
        raise DataError("label-frequency estimate needs at least one score")
    return _finish(scores.max(), METHOD_MAX, scores.size)


def estimate_c_from_counts(n_short: int, n_full: int) -> LabelFrequency:
    """Ratio of positives seen in the short window to the full-window count.

    Computed on a historical cohort whose full window is already observed.
    """
    if n_full <= 0:
        raise DataError("no history: the full-window positive count is zero")
    if n_short < 0 or n_short > n_full:
        raise DataError(
            f"inconsistent cohort: short-window count {n_short} exceeds "
            f"full-window count {n_full}"
        )
    return _finish(n_short / n_full, METHOD_HISTORICAL, n_full)


def compute_weight(score, c: LabelFrequency | float):
    """Positive-copy weight for an unlabeled instance; in [0, 1] by construction.

    Accepts a scalar or an array of scores. Scores are nudged off the exact
    boundaries so the ratio form stays finite even at c = 1.
    """
    cv = c.value if isinstance(c, LabelFrequency) else float(c)
    if not (0.0 < cv <= 1.0):
        raise DataError(f"label frequency must lie in (0, 1], got {cv}")
    s = np.clip(np.asarray(score, dtype=float), SCORE_EPS, 1.0 - SCORE_EPS)
    w = (1.0 - cv) * s / (1.0 - cv * s)
    if np.ndim(score) == 0:
        return float(w)
    return w


@dataclass
class WeightedTrainingSet:
    """Rows for the weighted trainers plus per-row provenance tags.

    Built by :func:`build_weighted_training_set` the rows satisfy: every
    positive source appears once with unit weight, every unlabeled source
    appears as an adjacent (positive, negative) pair whose weights sum to
    exactly 1. Plain fully-labeled sets reuse the container with unit
    weights and ``positive`` / ``negative`` tags.
    """

    user_ids: list[str]
    rows: list[WeightedInstance]
    provenance: list[str]
    dim: int
    c: LabelFrequency | None = None

    def __post_init__(self):
        if not (len(self.user_ids) == len(self.rows) == len(self.provenance)):
            raise DataError("user_ids, rows and provenance must align")

    def __len__(self) -> int:
        return len(self.rows)

    def to_arrays(self) -> tuple[csr_matrix, np.ndarray, np.ndarray]:
        """CSR design matrix, labels, weights."""
        n = len(self.rows)
        indptr = np.zeros(n + 1, dtype=np.int64)
        for i, row in enumerate(self.rows):
            indptr[i + 1] = indptr[i] + row.features.nnz
        if n:
            indices = np.concatenate([r.features.indices for r in self.rows])
            values = np.concatenate([r.features.values for r in self.rows])
        else:
            indices = np.empty(0, dtype=np.int64)
            values = np.empty(0, dtype=np.float64)
        x = csr_matrix((values, indices, indptr), shape=(n, self.dim))
        y = np.array([r.label for r in self.rows], dtype=np.float64)
        w = np.array([r.weight for r in self.rows], dtype=np.float64)
        return x, y, w

    def validate_pu(self) -> None:
        """Check the duplicate-pair structure of a PU-weighted set."""
        i = 0
        while i < len(self.rows):
            tag = self.provenance[i]
            if tag == PROV_POSITIVE:
                if self.rows[i].label != 1 or self.rows[i].weight != 1.0:
                    raise DataError(f"positive row {i} must have label 1 and unit weight")
                i += 1
            elif tag == PROV_UNLABELED_POS:
                if i + 1 >= len(self.rows) or self.provenance[i + 1] != PROV_UNLABELED_NEG:
                    raise DataError(f"unlabeled row {i} lacks its negative copy")
                if self.user_ids[i] != self.user_ids[i + 1]:
                    raise DataError(f"duplicate pair at {i} mixes users")
                pos, neg = self.rows[i], self.rows[i + 1]
                if pos.label != 1 or neg.label != 0:
                    raise DataError(f"duplicate pair at {i} has wrong labels")
                if pos.weight + neg.weight != 1.0:
                    raise DataError(f"duplicate pair at {i} weights do not sum to 1")
                i += 2
            else:
                raise DataError(f"unexpected provenance {tag!r} in a PU-weighted set")


def plain_training_set(positives: Mapping[str, FeatureVector],
                       negatives: Mapping[str, FeatureVector],
                       dim: int,
                       negative_tag: str = PROV_NEGATIVE) -> WeightedTrainingSet:
    """Unit-weight rows from two labeled groups, canonically ordered."""
    user_ids: list[str] = []
    rows: list[WeightedInstance] = []
    prov: list[str] = []
    for uid in sorted(positives):
        user_ids.append(uid)
        rows.append(WeightedInstance(positives[uid], 1, 1.0))
        prov.append(PROV_POSITIVE)
    for uid in sorted(negatives):
        user_ids.append(uid)
        rows.append(WeightedInstance(negatives[uid], 0, 1.0))
        prov.append(negative_tag)
    return WeightedTrainingSet(user_ids, rows, prov, dim)


def build_weighted_training_set(positives: Mapping[str, FeatureVector],
                                unlabeled: Mapping[str, FeatureVector],
                                scores: Mapping[str, float],
                                c: LabelFrequency) -> WeightedTrainingSet:
    """Positive rows first, then per-unlabeled duplicate pairs in user order."""
    missing = [uid for uid in unlabeled if uid not in scores]
    if missing:
        raise DataError(f"incomplete scores: no score for user {missing[0]!r}")
    user_ids: list[str] = []
    rows: list[WeightedInstance] = []
    prov: list[str] = []
    for uid in sorted(positives):
        user_ids.append(uid)
        rows.append(WeightedInstance(positives[uid], 1, 1.0))
        prov.append(PROV_POSITIVE)
    for uid in sorted(unlabeled):
        w = compute_weight(scores[uid], c)
        fv = unlabeled[uid]
        user_ids.extend((uid, uid))
        rows.append(WeightedInstance(fv, 1, w))
        rows.append(WeightedInstance(fv, 0, 1.0 - w))
        prov.extend((PROV_UNLABELED_POS, PROV_UNLABELED_NEG))
    dims = {fv.dim for fv in positives.values()} | {fv.dim for fv in unlabeled.values()}
    if len(dims) > 1:
        raise DataError(f"mixed feature dims in training set: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    out = WeightedTrainingSet(user_ids, rows, prov, dim, c=c)
    out.validate_pu()
    return out


def write_weighted_set(wts: WeightedTrainingSet, path) -> None:
    if wts.c is None:
        raise DataError("cannot persist a weighted set without its label frequency")
    wts.validate_pu()
    with open(path, "w", encoding="utf-8") as f:
        header = {
            "version": SCHEMA_VERSION,
            "c": wts.c.value,
            "c_method": wts.c.method,
            "dim": wts.dim,
        }
        f.write(json.dumps(header, separators=(",", ":")))
        f.write("\n")
        for uid, row, tag in zip(wts.user_ids, wts.rows, wts.provenance):
            f.write(json.dumps({
                "user_id": uid,
                "label": row.label,
                "weight": row.weight,
                "provenance": tag,
                "features": row.features.pairs(),
            }, separators=(",", ":")))
            f.write("\n")


def read_weighted_set(path) -> WeightedTrainingSet:
    path = Path(path)
    header = None
    user_ids: list[str] = []
    rows: list[WeightedInstance] = []
    prov: list[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from exc
            if header is None:
                version = obj.get("version")
                if version != SCHEMA_VERSION:
                    raise DataError(f"{path}: unsupported weighted set version {version!r}")
                header = obj
                continue
            try:
                fv = FeatureVector.from_pairs(obj["features"], int(header["dim"]))
                rows.append(WeightedInstance(fv, int(obj["label"]), float(obj["weight"])))
                user_ids.append(obj["user_id"])
                prov.append(obj["provenance"])
            except (DataError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}: line {lineno}: bad row ({exc})") from exc
    if header is None:
        raise DataError(f"{path}: missing weighted set header")
    c = LabelFrequency(value=float(header["c"]), method=str(header["c_method"]),
                       support=0)
    out = WeightedTrainingSet(user_ids, rows, prov, int(header["dim"]), c=c)
    out.validate_pu()
    return out
