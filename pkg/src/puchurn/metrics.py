"""AUC computation, rule baselines, and comparison-report plumbing.

AUC follows the Mann-Whitney convention: the probability that a uniformly
random positive outranks a uniformly random negative, ties credited half.
The rule baselines are single-threshold binary scorers, evaluated as
degenerate rankings; each (rule, parameter) pair yields one report row.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError

METHOD_LABELS = {
    "recency_rule": "Recency Rule",
    "frequency_rule": "Frequency Rule",
    "supervised_lr": "Logistic Regression",
    "supervised_fm": "Factorization Machine",
    "tccp": "TCCP",
}
METHOD_ORDER = tuple(METHOD_LABELS)


def auc(scores, labels) -> float:
    """Rank-based AUC with average ranks on ties; O(n log n)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError("scores and labels must be 1-d and aligned")
    pos = y == 1
    n1 = int(pos.sum())
    n0 = int(y.size - n1)
    if n1 == 0 or n0 == 0:
        raise DataError("undefined AUC: both classes must be present")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    boundary = np.r_[True, sorted_s[1:] != sorted_s[:-1]]
    group = np.cumsum(boundary) - 1
    first = np.flatnonzero(boundary)
    counts = np.diff(np.r_[first, s.size])
    avg_rank = first + (counts - 1) / 2.0 + 1.0  # 1-based
    ranks = np.empty(s.size)
    ranks[order] = avg_rank[group]
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def recency_predict(days_since_last_login, threshold_days: int):
    """1 when the user has been silent for at least ``threshold_days``."""
    out = (np.asarray(days_since_last_login) >= threshold_days).astype(np.int8)
    return int(out) if np.ndim(days_since_last_login) == 0 else out


def frequency_predict(login_count, min_count: int):
    """1 when the user logged in fewer than ``min_count`` times."""
    out = (np.asarray(login_count) < min_count).astype(np.int8)
    return int(out) if np.ndim(login_count) == 0 else out


@dataclass(frozen=True)
class EvalRow:
    method: str
    params: str
    auc: float
    n_pos: int
    n_neg: int


@dataclass
class EvalReport:
    """Comparison rows over one evaluation set; positives are churners."""

    rows: list[EvalRow]
    ref: str

    def sorted_rows(self) -> list[EvalRow]:
        rank = {m: i for i, m in enumerate(METHOD_ORDER)}
        return sorted(self.rows, key=lambda r: (rank.get(r.method, len(rank)), r.params))

    def to_json(self) -> str:
        payload = {"ref": self.ref, "rows": [asdict(r) for r in self.sorted_rows()]}
        return json.dumps(payload, indent=2) + "\n"

    def to_table(self) -> str:
        rows = self.sorted_rows()
        names = [METHOD_LABELS.get(r.method, r.method) for r in rows]
        width_m = max([len("Method")] + [len(n) for n in names])
        width_p = max([len("Parameters")] + [len(r.params) for r in rows])
        lines = [
            f"{'Method':<{width_m}} | {'Parameters':<{width_p}} | AUC",
            f"{'-' * width_m}-+-{'-' * width_p}-+-------",
        ]
        for name, row in zip(names, rows):
            lines.append(f"{name:<{width_m}} | {row.params:<{width_p}} | {row.auc:.4f}")
        return "\n".join(lines) + "\n"


def evaluate(scores, labels, method: str, params: str) -> EvalRow:
    """One report row; ``labels`` mark churners with 1."""
    y = np.asarray(labels)
    return EvalRow(
        method=method,
        params=params,
        auc=auc(scores, labels),
        n_pos=int((y == 1).sum()),
        n_neg=int((y == 0).sum()),
    )


def write_report(report: EvalReport, out_json=None, out_table=None) -> None:
    if out_json is not None:
        with open(out_json, "w", encoding="utf-8") as f:
            f.write(report.to_json())
    if out_table is not None:
        with open(out_table, "w", encoding="utf-8") as f:
            f.write(report.to_table())


def read_report(path) -> EvalReport:
    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: malformed report ({exc.msg})") from exc
    rows = [EvalRow(**row) for row in doc.get("rows", [])]
    return EvalReport(rows=rows, ref=doc.get("ref", ""))
