"""Candidate selection, window labeling, and feature extraction.

Windows share a common end time ``ref_time``; candidates are selected at
``ref_time - op`` and every feature reads strictly from data before that
selection time, so nothing inside the labeling window can leak into the
features.

Feature-space layout (``dim`` total):

* static one-hots: age bucket (6), gender (3), city (50), account-age
  bucket (6), user level (5), days-since-last-login bucket (6) -- 76 slots;
* per-lookback counts: login count, pay count, log1p of pay amount sum --
  3 slots per lookback, raw values;
* per-lookback login-count bucket one-hots (7 slots per lookback); the same
  bucket ids feed the crosses;
* the remaining tail is the hashed cross-feature region.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .data import DAY, EventLog, FeatureVector, KIND_LOGIN, KIND_PAY, SampleSet
from .errors import ConfigError, DataError

CANDIDATE_WINDOW_DAYS = 30
CANDIDATE_MAX_LOGINS = 12

_AGE_EDGES = np.array([18, 25, 35, 45, 60])
_REGISTER_AGE_EDGES = np.array([30, 90, 180, 365, 730])
_RECENCY_EDGES = np.array([1, 3, 7, 15, 30])
_COUNT_BUCKET_EDGES = np.array([1, 2, 3, 5, 9, 17])

N_AGE = 6
N_GENDER = 3
N_CITY = 50
N_REGISTER_AGE = 6
N_LEVEL = 5
N_RECENCY = 6
N_COUNT_BUCKETS = 7
STATIC_SLOTS = N_AGE + N_GENDER + N_CITY + N_REGISTER_AGE + N_LEVEL + N_RECENCY

DEFAULT_LOOKBACKS = (7, 15, 30)
DEFAULT_CROSS_SLOTS = 4096

_GENDER_CODE = {"m": 0, "f": 1, "u": 2}


@dataclass(frozen=True)
class WindowSpec:
    """End-anchored labeling window: OP covers ``[ref_time - op, ref_time)``."""

    ref_time: int
    op: int
    cp: int
    lookbacks: tuple[int, ...] = DEFAULT_LOOKBACKS

    def __post_init__(self):
        if self.op < 1:
            raise ConfigError(f"op must be at least one day, got {self.op}")
        if self.cp < 1:
            raise ConfigError(f"cp must be at least one day, got {self.cp}")
        lbs = tuple(int(x) for x in self.lookbacks)
        if any(x < 1 for x in lbs) or any(b <= a for a, b in zip(lbs, lbs[1:])):
            raise ConfigError(f"lookbacks must be strictly increasing day counts, got {lbs}")
        object.__setattr__(self, "lookbacks", lbs)


def count_slots(lookbacks=DEFAULT_LOOKBACKS) -> int:
    return (3 + N_COUNT_BUCKETS) * len(lookbacks)


def default_dim(lookbacks=DEFAULT_LOOKBACKS) -> int:
    return STATIC_SLOTS + count_slots(lookbacks) + DEFAULT_CROSS_SLOTS


def _positions(log: EventLog, user_ids) -> tuple[np.ndarray, np.ndarray]:
    """Indices of ``user_ids`` in the log's user table plus a found mask."""
    query = np.asarray(user_ids)
    if len(log.users) == 0 or query.size == 0:
        return np.zeros(query.size, dtype=np.int64), np.zeros(query.size, dtype=bool)
    pos = np.searchsorted(log.users, query)
    clipped = np.minimum(pos, len(log.users) - 1)
    found = log.users[clipped] == query.astype(log.users.dtype)
    return clipped, found


def _window_counts(log: EventLog, user_ids, start: int, end: int, kind: int,
                   weighted: bool = False) -> np.ndarray:
    mask = (log.ts >= start) & (log.ts < end) & (log.kind == kind)
    weights = log.amount[mask] if weighted else None
    per_user = np.bincount(log.user_idx[mask], weights=weights, minlength=len(log.users))
    pos, found = _positions(log, user_ids)
    out = np.where(found, per_user[pos], 0)
    return out if weighted else out.astype(np.int64)


def login_counts(log: EventLog, user_ids, start: int, end: int) -> np.ndarray:
    return _window_counts(log, user_ids, start, end, KIND_LOGIN)


def pay_counts(log: EventLog, user_ids, start: int, end: int) -> np.ndarray:
    return _window_counts(log, user_ids, start, end, KIND_PAY)


def pay_amounts(log: EventLog, user_ids, start: int, end: int) -> np.ndarray:
    return _window_counts(log, user_ids, start, end, KIND_PAY, weighted=True)


def days_since_last_login(log: EventLog, user_ids, at: int) -> tuple[np.ndarray, np.ndarray]:
    """Whole days since the last login strictly before ``at``.

    Returns ``(days, has_login)``; ``days`` is meaningless where
    ``has_login`` is false.
    """
    mask = (log.ts < at) & (log.kind == KIND_LOGIN)
    last = np.full(len(log.users), -1, dtype=np.int64)
    last[log.user_idx[mask]] = log.ts[mask]  # ts ascending: final write wins
    pos, found = _positions(log, user_ids)
    last_q = np.where(found, last[pos], -1)
    has = last_q >= 0
    days = np.where(has, (at - last_q) // DAY, 0)
    return days, has


def select_candidates(log: EventLog, profiles, op_start: int) -> list[str]:
    """Users with 1..12 logins in the 30 days before ``op_start``.

    Heavy users are dropped because they essentially never churn and would
    swamp the positive class.
    """
    start = op_start - CANDIDATE_WINDOW_DAYS * DAY
    if start < log.t_start:
        raise DataError(
            f"candidate window [{start}, {op_start}) needs history before the "
            f"log horizon start {log.t_start}"
        )
    counts = login_counts(log, log.users, start, op_start)
    ok = (counts >= 1) & (counts <= CANDIDATE_MAX_LOGINS)
    return sorted(str(u) for u in log.users[ok] if str(u) in profiles)


def label_window(log: EventLog, candidates, spec: WindowSpec) -> SampleSet:
    """Split candidates into P (logged in during OP) and U or N.

    When the observation period covers the full churn period the
    non-positives are confirmed negatives; otherwise they stay unlabeled.
    Feature vectors are empty placeholders until features are attached.
    """
    t = spec.ref_time
    start = t - spec.op * DAY
    if start < log.t_start or t > log.t_end:
        raise DataError(
            f"labeling window [{start}, {t}) falls outside log horizon "
            f"[{log.t_start}, {log.t_end})"
        )
    candidates = sorted(candidates)
    logged = login_counts(log, candidates, start, t) >= 1
    empty = FeatureVector.empty(0)
    p = {uid: empty for uid, hit in zip(candidates, logged) if hit}
    rest = {uid: empty for uid, hit in zip(candidates, logged) if not hit}
    if spec.op >= spec.cp:
        return SampleSet(P=p, U={}, N=rest, ref_time=t, dim=0)
    return SampleSet(P=p, U=rest, N={}, ref_time=t, dim=0)


def cross(a: tuple[str, int], b: tuple[str, int], dim: int) -> int:
    """Stable hashed index in ``[0, dim)`` for a pair of categorical values."""
    if dim <= 0:
        raise ConfigError(f"cross region size must be positive, got {dim}")
    key = f"{a[0]}={a[1]}|{b[0]}={b[1]}".encode()
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


def count_bucket(count) -> np.ndarray:
    """Categorical id for a login/pay count, used to build crosses."""
    return np.searchsorted(_COUNT_BUCKET_EDGES, np.asarray(count), side="right")


def recency_bucket(days, has_login) -> np.ndarray:
    """Bucket id for days-since-last-login; the last bucket means 30+/never."""
    b = np.searchsorted(_RECENCY_EDGES, np.asarray(days), side="left")
    return np.where(np.asarray(has_login), np.minimum(b, N_RECENCY - 1), N_RECENCY - 1)


def extract_features(log: EventLog, profiles, candidates, at: int,
                     lookbacks=DEFAULT_LOOKBACKS, dim: int | None = None,
                     ) -> dict[str, FeatureVector]:
    """Feature vectors per candidate, reading only events strictly before ``at``."""
    lookbacks = tuple(int(x) for x in lookbacks)
    if dim is None:
        dim = default_dim(lookbacks)
    prefix = STATIC_SLOTS + count_slots(lookbacks)
    cross_slots = dim - prefix
    if cross_slots < 1:
        raise ConfigError(f"dim={dim} leaves no room for the cross region (needs > {prefix})")
    if at - max(lookbacks) * DAY < log.t_start:
        raise DataError(
            f"lookback of {max(lookbacks)} days before {at} falls before the "
            f"log horizon start {log.t_start}"
        )
    candidates = sorted(candidates)
    n = len(candidates)
    missing = [uid for uid in candidates if uid not in profiles]
    if missing:
        raise DataError(f"missing profile for user {missing[0]!r}")

    age = np.array([profiles[u].age for u in candidates])
    gender = np.array([_GENDER_CODE[profiles[u].gender] for u in candidates])
    city = np.array([profiles[u].city % N_CITY for u in candidates])
    reg_days = np.array([(at - profiles[u].register_ts) // DAY for u in candidates])
    level = np.clip([profiles[u].user_level for u in candidates], 1, N_LEVEL)

    age_b = np.searchsorted(_AGE_EDGES, age, side="right")
    reg_b = np.searchsorted(_REGISTER_AGE_EDGES, np.maximum(reg_days, 0), side="right")
    rec_days, rec_has = days_since_last_login(log, candidates, at)
    rec_b = recency_bucket(rec_days, rec_has)

    base = 0
    cols_idx = [base + age_b]
    base += N_AGE
    cols_idx.append(base + gender)
    base += N_GENDER
    cols_idx.append(base + city)
    base += N_CITY
    cols_idx.append(base + reg_b)
    base += N_REGISTER_AGE
    cols_idx.append(base + level - 1)
    base += N_LEVEL
    cols_idx.append(base + rec_b)
    cols_val = [np.ones(n)] * len(cols_idx)
    cols_ok = [np.ones(n, dtype=bool)] * len(cols_idx)

    login_by_lb = {}
    bucket_base = STATIC_SLOTS + 3 * len(lookbacks)
    for j, lb in enumerate(lookbacks):
        start = at - lb * DAY
        logins = login_counts(log, candidates, start, at)
        pays = pay_counts(log, candidates, start, at)
        spent = pay_amounts(log, candidates, start, at)
        login_by_lb[lb] = logins
        col = STATIC_SLOTS + 3 * j
        for offset, vals in ((0, logins.astype(float)), (1, pays.astype(float)),
                             (2, np.log1p(spent))):
            cols_idx.append(np.full(n, col + offset))
            cols_val.append(vals)
            cols_ok.append(vals != 0.0)
        cols_idx.append(bucket_base + N_COUNT_BUCKETS * j + count_bucket(logins))
        cols_val.append(np.ones(n))
        cols_ok.append(np.ones(n, dtype=bool))

    # Crosses pair an attribute bucket with a behavior bucket; indices land
    # in the hashed tail region.
    lb_short = lookbacks[0]
    lb_long = lookbacks[-1]
    short_b = count_bucket(login_by_lb[lb_short])
    long_b = count_bucket(login_by_lb[lb_long])
    for a_name, a_vals, b_name, b_vals in (
        ("age_bucket", age_b, f"login_{lb_short}d_bucket", short_b),
        ("user_level", level, f"login_{lb_long}d_bucket", long_b),
        ("city", city, "recency_bucket", rec_b),
    ):
        idx = np.fromiter(
            (cross((a_name, int(a)), (b_name, int(b)), cross_slots)
             for a, b in zip(a_vals, b_vals)),
            dtype=np.int64, count=n,
        )
        cols_idx.append(prefix + idx)
        cols_val.append(np.ones(n))
        cols_ok.append(np.ones(n, dtype=bool))

    idx_mat = np.column_stack(cols_idx).astype(np.int64)
    val_mat = np.column_stack(cols_val)
    ok_mat = np.column_stack(cols_ok)

    idx_mat = np.where(ok_mat, idx_mat, dim)  # park dropped slots past the end
    order = np.argsort(idx_mat, axis=1, kind="stable")
    rows = np.arange(n)[:, None]
    idx_sorted = idx_mat[rows, order]
    val_sorted = val_mat[rows, order]
    nnz = (idx_sorted < dim).sum(axis=1)

    dup_rows = np.flatnonzero((np.diff(idx_sorted, axis=1) == 0).any(axis=1))
    out: dict[str, FeatureVector] = {}
    dup_set = set(dup_rows.tolist())
    for i, uid in enumerate(candidates):
        k = nnz[i]
        idx = idx_sorted[i, :k]
        val = val_sorted[i, :k]
        if i in dup_set:
            idx, inverse = np.unique(idx, return_inverse=True)
            merged = np.zeros(idx.shape[0])
            np.add.at(merged, inverse, val)
            val = merged
        out[uid] = FeatureVector(idx.copy(), val.copy(), dim)
    return out
