"""Domain types and the JSON-lines file formats shared by every other module.

Timestamps are integer epoch seconds; all window arithmetic happens in whole
days of 86400 seconds. Values are immutable once constructed and safe to read
from any number of threads.

File formats (one JSON object per line, compact separators):

* event log -- header ``{"version": 1, "t_start": int, "t_end": int}``
  followed by ``{"user_id": str, "ts": int, "kind": "login"|"pay",
  "amount": number?}``; ``amount`` is present exactly when ``kind`` is pay.
* profiles -- ``{"user_id", "age", "gender": "m"|"f"|"u", "city",
  "register_ts", "user_level"}``.
* churn truth -- ``{"user_id", "churn_ts": int|null}``.
* sample set -- header ``{"version": 1, "dim": int, "ref_time": int}``
  followed by ``{"user_id", "set": "P"|"U"|"N", "features": [[i, v], ...]}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import DataError

DAY = 86_400
SCHEMA_VERSION = 1

KIND_LOGIN = 0
KIND_PAY = 1
_KIND_NAMES = ("login", "pay")
GENDERS = ("m", "f", "u")

_JSON_SEP = (",", ":")


def _dumps(obj) -> str:
    return json.dumps(obj, separators=_JSON_SEP)


@dataclass(frozen=True)
class Event:
    """One time-stamped behavior event; ``amount`` is set only for pay."""

    user_id: str
    ts: int
    kind: str
    amount: float | None = None


@dataclass(frozen=True)
class Profile:
    user_id: str
    age: int
    gender: str
    city: int
    register_ts: int
    user_level: int


class EventLog:
    """Columnar store of events, canonically sorted by (ts, user_id, kind).

    The arrays are shared, never mutated. ``users`` holds the distinct user
    ids in ascending order; ``user_idx`` maps each event onto that table.
    Construct through :meth:`from_events` / :func:`read_event_log` for
    untrusted input; the raw constructor trusts its arguments.
    """

    __slots__ = ("users", "user_idx", "ts", "kind", "amount", "horizon")

    def __init__(self, users, user_idx, ts, kind, amount, horizon):
        self.users = np.asarray(users)
        self.user_idx = np.asarray(user_idx, dtype=np.int32)
        self.ts = np.asarray(ts, dtype=np.int64)
        self.kind = np.asarray(kind, dtype=np.uint8)
        self.amount = np.asarray(amount, dtype=np.float64)
        self.horizon = (int(horizon[0]), int(horizon[1]))

    @property
    def t_start(self) -> int:
        return self.horizon[0]

    @property
    def t_end(self) -> int:
        return self.horizon[1]

    def __len__(self) -> int:
        return int(self.ts.shape[0])

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            a = self.amount[i]
            yield Event(
                user_id=str(self.users[self.user_idx[i]]),
                ts=int(self.ts[i]),
                kind=_KIND_NAMES[self.kind[i]],
                amount=None if math.isnan(a) else float(a),
            )

    def to_events(self) -> list[Event]:
        return list(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventLog):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.user_idx, other.user_idx)
            and np.array_equal(self.ts, other.ts)
            and np.array_equal(self.kind, other.kind)
            and np.array_equal(self.amount, other.amount, equal_nan=True)
        )

    @classmethod
    def from_events(cls, events: Iterable[Event], horizon: tuple[int, int]) -> "EventLog":
        uids, tss, kinds, amounts = [], [], [], []
        for i, ev in enumerate(events):
            _check_event(ev.user_id, ev.ts, ev.kind, ev.amount, horizon, f"event {i}")
            uids.append(ev.user_id)
            tss.append(ev.ts)
            kinds.append(KIND_PAY if ev.kind == "pay" else KIND_LOGIN)
            amounts.append(math.nan if ev.amount is None else float(ev.amount))
        return cls._from_columns(uids, tss, kinds, amounts, horizon)

    @classmethod
    def _from_columns(cls, uids, tss, kinds, amounts, horizon) -> "EventLog":
        if int(horizon[0]) >= int(horizon[1]):
            raise DataError(f"empty horizon {horizon!r}")
        if not uids:
            return cls(
                np.empty(0, dtype=str),
                np.empty(0, np.int32),
                np.empty(0, np.int64),
                np.empty(0, np.uint8),
                np.empty(0, np.float64),
                horizon,
            )
        users, user_idx = np.unique(np.asarray(uids), return_inverse=True)
        ts = np.asarray(tss, dtype=np.int64)
        kind = np.asarray(kinds, dtype=np.uint8)
        amount = np.asarray(amounts, dtype=np.float64)
        order = np.lexsort((kind, user_idx, ts))
        return cls(users, user_idx[order], ts[order], kind[order], amount[order], horizon)


def _check_event(user_id, ts, kind, amount, horizon, where: str) -> None:
    if not isinstance(user_id, str) or not user_id:
        raise DataError(f"{where}: user_id must be a nonempty string")
    if not isinstance(ts, int):
        raise DataError(f"{where}: ts must be an integer timestamp")
    if kind not in _KIND_NAMES:
        raise DataError(f"{where}: unknown event kind {kind!r}")
    if kind == "pay":
        if amount is None or not isinstance(amount, (int, float)):
            raise DataError(f"{where}: pay event requires a numeric amount")
        if amount < 0:
            raise DataError(f"{where}: negative amount {amount!r}")
        if not math.isfinite(amount):
            raise DataError(f"{where}: non-finite amount")
    elif amount is not None:
        raise DataError(f"{where}: login event must not carry an amount")
    if not (horizon[0] <= ts < horizon[1]):
        raise DataError(f"{where}: ts {ts} outside horizon [{horizon[0]}, {horizon[1]})")


def read_event_log(path) -> EventLog:
    """Parse an event-log file; unordered input is sorted canonically."""
    path = Path(path)
    uids: list[str] = []
    tss: list[int] = []
    kinds: list[int] = []
    amounts: list[float] = []
    horizon = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from exc
            if horizon is None:
                version = obj.get("version")
                if version != SCHEMA_VERSION:
                    raise DataError(f"{path}: unsupported event log version {version!r}")
                try:
                    horizon = (int(obj["t_start"]), int(obj["t_end"]))
                except (KeyError, TypeError, ValueError) as exc:
                    raise DataError(f"{path}: line {lineno}: bad horizon header") from exc
                if horizon[0] >= horizon[1]:
                    raise DataError(f"{path}: line {lineno}: empty horizon {horizon!r}")
                continue
            kind = obj.get("kind")
            try:
                _check_event(
                    obj.get("user_id"), obj.get("ts"), kind, obj.get("amount"),
                    horizon, f"{path}: line {lineno}",
                )
            except DataError:
                raise
            uids.append(obj["user_id"])
            tss.append(obj["ts"])
            kinds.append(KIND_PAY if kind == "pay" else KIND_LOGIN)
            amounts.append(math.nan if kind == "login" else float(obj["amount"]))
    if horizon is None:
        raise DataError(f"{path}: missing header line with declared horizon")
    return EventLog._from_columns(uids, tss, kinds, amounts, horizon)


def write_event_log(log: EventLog, path) -> None:
    path = Path(path)
    quoted = [json.dumps(str(u)) for u in log.users]
    with open(path, "w", encoding="utf-8") as f:
        f.write(_dumps({"version": SCHEMA_VERSION, "t_start": log.t_start, "t_end": log.t_end}))
        f.write("\n")
        chunk = 200_000
        for lo in range(0, len(log), chunk):
            hi = min(lo + chunk, len(log))
            uix = log.user_idx[lo:hi]
            tss = log.ts[lo:hi]
            kinds = log.kind[lo:hi]
            ams = log.amount[lo:hi]
            lines = []
            for i in range(hi - lo):
                if kinds[i] == KIND_LOGIN:
                    lines.append('{"user_id":%s,"ts":%d,"kind":"login"}' % (quoted[uix[i]], tss[i]))
                else:
                    lines.append(
                        '{"user_id":%s,"ts":%d,"kind":"pay","amount":%s}'
                        % (quoted[uix[i]], tss[i], repr(float(ams[i])))
                    )
            f.write("\n".join(lines))
            f.write("\n")


def read_profiles(path) -> dict[str, Profile]:
    path = Path(path)
    out: dict[str, Profile] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from exc
            where = f"{path}: line {lineno}"
            uid = obj.get("user_id")
            if not isinstance(uid, str) or not uid:
                raise DataError(f"{where}: user_id must be a nonempty string")
            if uid in out:
                raise DataError(f"{where}: duplicate profile for {uid!r}")
            age = obj.get("age")
            if not isinstance(age, int) or age < 0:
                raise DataError(f"{where}: age must be a nonnegative integer")
            gender = obj.get("gender")
            if gender not in GENDERS:
                raise DataError(f"{where}: gender must be one of {GENDERS}")
            for key in ("city", "register_ts", "user_level"):
                if not isinstance(obj.get(key), int):
                    raise DataError(f"{where}: {key} must be an integer")
            out[uid] = Profile(
                user_id=uid, age=age, gender=gender, city=obj["city"],
                register_ts=obj["register_ts"], user_level=obj["user_level"],
            )
    return out


def write_profiles(profiles: Iterable[Profile] | Mapping[str, Profile], path) -> None:
    if isinstance(profiles, Mapping):
        profiles = profiles.values()
    with open(path, "w", encoding="utf-8") as f:
        for p in profiles:
            f.write(_dumps({
                "user_id": p.user_id, "age": int(p.age), "gender": p.gender,
                "city": int(p.city), "register_ts": int(p.register_ts),
                "user_level": int(p.user_level),
            }))
            f.write("\n")


def read_truths(path) -> dict[str, int | None]:
    """Churn timestamps by user; ``None`` marks a user that never churns."""
    path = Path(path)
    out: dict[str, int | None] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: malformed JSON ({exc.msg})") from exc
            uid = obj.get("user_id")
            churn_ts = obj.get("churn_ts")
            if not isinstance(uid, str) or not uid:
                raise DataError(f"{path}: line {lineno}: user_id must be a nonempty string")
            if churn_ts is not None and not isinstance(churn_ts, int):
                raise DataError(f"{path}: line {lineno}: churn_ts must be an integer or null")
            out[uid] = churn_ts
    return out


def write_truths(churn_ts_by_user: Mapping[str, int | None], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for uid, ts in churn_ts_by_user.items():
            f.write(_dumps({"user_id": uid, "churn_ts": ts}))
            f.write("\n")


@dataclass(eq=False)
class FeatureVector:
    """Sparse vector: strictly increasing indices below ``dim``, finite values."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.indices.ndim != 1 or self.values.ndim != 1:
            raise DataError("feature indices and values must be 1-d")
        if self.indices.shape != self.values.shape:
            raise DataError("feature indices and values must have equal length")
        if self.indices.size:
            if self.indices[0] < 0 or self.indices[-1] >= self.dim:
                raise DataError(
                    f"feature index out of range for dim={self.dim}: "
                    f"[{self.indices[0]}, {self.indices[-1]}]"
                )
            if np.any(np.diff(self.indices) <= 0):
                raise DataError("feature indices must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise DataError("feature values must be finite")

    @classmethod
    def from_pairs(cls, pairs: Iterable, dim: int) -> "FeatureVector":
        idx, vals = [], []
        for pair in pairs:
            i, v = pair
            idx.append(int(i))
            vals.append(float(v))
        return cls(np.asarray(idx, dtype=np.int64), np.asarray(vals, dtype=np.float64), dim)

    @classmethod
    def empty(cls, dim: int = 0) -> "FeatureVector":
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64), dim)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def pairs(self) -> list[list]:
        return [[int(i), float(v)] for i, v in zip(self.indices, self.values)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )


@dataclass
class WeightedInstance:
    """(features, binary label, weight) row consumed by the trainers."""

    features: FeatureVector
    label: int
    weight: float

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r}")
        if not (0.0 <= self.weight <= 1.0):
            raise DataError(f"weight must lie in [0, 1], got {self.weight!r}")


@dataclass
class SampleSet:
    """Positive / unlabeled / negative instances anchored at ``ref_time``.

    ``N`` may be nonempty only when ``U`` is empty and vice versa: a window
    either yields confirmed negatives or leaves non-positives unlabeled.
    """

    P: dict[str, FeatureVector]
    U: dict[str, FeatureVector]
    N: dict[str, FeatureVector]
    ref_time: int
    dim: int

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        p, u, n = set(self.P), set(self.U), set(self.N)
        if p & u or p & n or u & n:
            clash = sorted((p & u) | (p & n) | (u & n))[:3]
            raise DataError(f"P, U, N must be disjoint by user_id; overlap includes {clash}")
        if self.U and self.N:
            raise DataError("a sample set cannot hold both unlabeled and negative instances")
        for group in (self.P, self.U, self.N):
            for uid, fv in group.items():
                if fv.dim != self.dim:
                    raise DataError(
                        f"feature dim mismatch for {uid!r}: {fv.dim} != {self.dim}"
                    )

    @property
    def n_rows(self) -> int:
        return len(self.P) + len(self.U) + len(self.N)

    def with_features(self, features: Mapping[str, FeatureVector], dim: int) -> "SampleSet":
        """Same membership with feature vectors swapped in."""
        def remap(group: dict[str, FeatureVector]) -> dict[str, FeatureVector]:
            try:
                return {uid: features[uid] for uid in group}
            except KeyError as exc:
                raise DataError(f"no feature vector for user {exc.args[0]!r}") from exc

        return SampleSet(remap(self.P), remap(self.U), remap(self.N), self.ref_time, dim)


def write_sample_set(sample_set: SampleSet, path) -> None:
    sample_set.validate()
    with open(path, "w", encoding="utf-8") as f:
        f.write(_dumps({
            "version": SCHEMA_VERSION,
            "dim": sample_set.dim,
            "ref_time": sample_set.ref_time,
        }))
        f.write("\n")
        for tag, group in (("P", sample_set.P), ("U", sample_set.U), ("N", sample_set.N)):
            for uid in sorted(group):
                f.write(_dumps({"user_id": uid, "set": tag, "features": group[uid].pairs()}))
                f.write("\n")


def read_sample_set(path) -> SampleSet:
    path = Path(path)
    header = None
    groups: dict[str, dict[str, FeatureVector]] = {"P": {}, "U": {}, "N": {}}
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
                    raise DataError(f"{path}: unsupported sample set version {version!r}")
                header = obj
                continue
            tag = obj.get("set")
            if tag not in groups:
                raise DataError(f"{path}: line {lineno}: unknown set tag {tag!r}")
            uid = obj.get("user_id")
            if not isinstance(uid, str) or not uid:
                raise DataError(f"{path}: line {lineno}: user_id must be a nonempty string")
            try:
                fv = FeatureVector.from_pairs(obj.get("features", []), int(header["dim"]))
            except (DataError, TypeError, ValueError) as exc:
                raise DataError(f"{path}: line {lineno}: bad feature list ({exc})") from exc
            groups[tag][uid] = fv
    if header is None:
        raise DataError(f"{path}: missing sample set header")
    return SampleSet(
        P=groups["P"], U=groups["U"], N=groups["N"],
        ref_time=int(header["ref_time"]), dim=int(header["dim"]),
    )
