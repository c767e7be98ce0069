import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from puchurn.data import (
    DAY, Event, EventLog, FeatureVector, Profile, SampleSet, WeightedInstance,
    read_event_log, read_profiles, read_sample_set, read_truths,
    write_event_log, write_profiles, write_sample_set, write_truths,
)
from puchurn.errors import DataError

T0 = 1_470_009_600


def make_log(events, span_days=10):
    return EventLog.from_events(events, (T0, T0 + span_days * DAY))


class TestEventLogIngestion:
    def test_empty_file_with_declared_horizon(self, tmp_path):
        path = tmp_path / "events.jsonl"
        path.write_text('{"version":1,"t_start":%d,"t_end":%d}\n' % (T0, T0 + DAY))
        log = read_event_log(path)
        assert len(log) == 0
        assert log.horizon == (T0, T0 + DAY)

    def test_out_of_order_input_is_sorted(self, tmp_path):
        path = tmp_path / "events.jsonl"
        lines = [
            json.dumps({"version": 1, "t_start": T0, "t_end": T0 + DAY}),
            json.dumps({"user_id": "b", "ts": T0 + 500, "kind": "login"}),
            json.dumps({"user_id": "a", "ts": T0 + 100, "kind": "login"}),
        ]
        path.write_text("\n".join(lines) + "\n")
        log = read_event_log(path)
        assert [e.ts for e in log] == [T0 + 100, T0 + 500]
        assert [e.user_id for e in log] == ["a", "b"]

    def test_negative_amount_names_the_line(self, tmp_path):
        path = tmp_path / "events.jsonl"
        lines = [
            json.dumps({"version": 1, "t_start": T0, "t_end": T0 + DAY}),
            json.dumps({"user_id": "a", "ts": T0, "kind": "login"}),
            json.dumps({"user_id": "a", "ts": T0 + 5, "kind": "pay", "amount": -1}),
        ]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="line 3"):
            read_event_log(path)

    def test_out_of_horizon_event_rejected(self, tmp_path):
        path = tmp_path / "events.jsonl"
        lines = [
            json.dumps({"version": 1, "t_start": T0, "t_end": T0 + DAY}),
            json.dumps({"user_id": "a", "ts": T0 + 2 * DAY, "kind": "login"}),
        ]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="horizon"):
            read_event_log(path)

    def test_unknown_version_rejected(self, tmp_path):
        path = tmp_path / "events.jsonl"
        path.write_text('{"version":9,"t_start":%d,"t_end":%d}\n' % (T0, T0 + DAY))
        with pytest.raises(DataError, match="version"):
            read_event_log(path)

    def test_login_with_amount_rejected(self):
        with pytest.raises(DataError, match="amount"):
            make_log([Event("a", T0, "login", amount=3.0)])

    def test_tie_break_by_user_id(self):
        log = make_log([Event("b", T0, "login"), Event("a", T0, "login")])
        assert [e.user_id for e in log] == ["a", "b"]

    def test_total_order_after_ingestion(self):
        rng = np.random.default_rng(3)
        events = [
            Event(f"u{rng.integers(5)}", T0 + int(rng.integers(0, 9 * DAY)), "login")
            for _ in range(64)
        ]
        log = make_log(events)
        keys = [(e.ts, e.user_id) for e in log]
        assert keys == sorted(keys)


class TestEventLogRoundTrip:
    def test_round_trip_identity(self, tmp_path):
        events = [
            Event("a", T0 + 10, "login"),
            Event("a", T0 + 10, "pay", amount=12.5),
            Event("b", T0 + 3 * DAY, "login"),
        ]
        log = make_log(events)
        path = tmp_path / "events.jsonl"
        write_event_log(log, path)
        assert read_event_log(path) == log

    @settings(max_examples=25, deadline=None)
    @given(st.lists(
        st.tuples(
            st.sampled_from(["u1", "u2", "u3"]),
            st.integers(min_value=0, max_value=10 * DAY - 1),
            st.booleans(),
            st.floats(min_value=0, max_value=1e6, allow_nan=False),
        ),
        max_size=40,
    ))
    def test_round_trip_property(self, tmp_path_factory, rows):
        events = [
            Event(uid, T0 + off, "pay" if pay else "login", round(amt, 2) if pay else None)
            for uid, off, pay, amt in rows
        ]
        log = make_log(events)
        path = tmp_path_factory.mktemp("ev") / "events.jsonl"
        write_event_log(log, path)
        assert read_event_log(path) == log


class TestProfilesAndTruths:
    def test_profiles_round_trip(self, tmp_path):
        profiles = {
            "a": Profile("a", 30, "f", 4, T0 - 100 * DAY, 3),
            "b": Profile("b", 55, "m", 11, T0 - 990 * DAY, 1),
        }
        path = tmp_path / "profiles.jsonl"
        write_profiles(profiles, path)
        assert read_profiles(path) == profiles

    def test_duplicate_profile_rejected(self, tmp_path):
        path = tmp_path / "profiles.jsonl"
        row = json.dumps({"user_id": "a", "age": 30, "gender": "f", "city": 1,
                          "register_ts": 0, "user_level": 2})
        path.write_text(row + "\n" + row + "\n")
        with pytest.raises(DataError, match="duplicate"):
            read_profiles(path)

    def test_truths_round_trip(self, tmp_path):
        truth = {"a": T0 + 5 * DAY, "b": None}
        path = tmp_path / "truth.jsonl"
        write_truths(truth, path)
        assert read_truths(path) == truth


def fv(pairs, dim):
    return FeatureVector.from_pairs(pairs, dim)


class TestFeatureVector:
    def test_rejects_unsorted_indices(self):
        with pytest.raises(DataError, match="strictly increasing"):
            FeatureVector(np.array([3, 1]), np.array([1.0, 1.0]), 5)

    def test_rejects_duplicate_indices(self):
        with pytest.raises(DataError, match="strictly increasing"):
            FeatureVector(np.array([1, 1]), np.array([1.0, 1.0]), 5)

    def test_rejects_out_of_range(self):
        with pytest.raises(DataError, match="out of range"):
            fv([[0, 1.0], [5, 2.0]], 5)

    def test_rejects_non_finite(self):
        with pytest.raises(DataError, match="finite"):
            fv([[0, float("inf")]], 2)

    def test_weighted_instance_bounds(self):
        x = fv([[0, 1.0]], 2)
        with pytest.raises(DataError, match="weight"):
            WeightedInstance(x, 1, 1.5)
        with pytest.raises(DataError, match="label"):
            WeightedInstance(x, 2, 0.5)


@st.composite
def sample_sets(draw):
    dim = draw(st.integers(min_value=1, max_value=12))
    users = draw(st.lists(st.integers(0, 30), min_size=0, max_size=10, unique=True))
    use_n = draw(st.booleans())
    p, other = {}, {}
    for i, u in enumerate(users):
        nnz = draw(st.integers(0, min(3, dim)))
        idx = sorted(draw(st.lists(st.integers(0, dim - 1), min_size=nnz, max_size=nnz,
                                   unique=True)))
        vals = draw(st.lists(st.floats(-100, 100, allow_nan=False, width=32),
                             min_size=nnz, max_size=nnz))
        vec = FeatureVector(np.array(idx, dtype=np.int64), np.array(vals), dim)
        (p if i % 2 == 0 else other)[f"u{u}"] = vec
    if use_n:
        return SampleSet(P=p, U={}, N=other, ref_time=T0, dim=dim)
    return SampleSet(P=p, U=other, N={}, ref_time=T0, dim=dim)


class TestSampleSet:
    def test_round_trip_small(self, tmp_path):
        s = SampleSet(P={"a": fv([[0, 1.5]], 4)}, U={"b": fv([[2, -2.0]], 4)},
                      N={}, ref_time=T0, dim=4)
        path = tmp_path / "set.jsonl"
        write_sample_set(s, path)
        assert read_sample_set(path) == s

    @settings(max_examples=30, deadline=None)
    @given(sample_sets())
    def test_round_trip_property(self, tmp_path_factory, s):
        path = tmp_path_factory.mktemp("ss") / "set.jsonl"
        write_sample_set(s, path)
        assert read_sample_set(path) == s

    def test_both_u_and_n_rejected(self, tmp_path):
        s = SampleSet(P={}, U={"a": fv([], 2)}, N={}, ref_time=T0, dim=2)
        s.N["b"] = fv([], 2)  # sneak past construction-time validation
        with pytest.raises(DataError, match="unlabeled and negative"):
            write_sample_set(s, tmp_path / "bad.jsonl")

    def test_overlapping_groups_rejected(self):
        with pytest.raises(DataError, match="disjoint"):
            SampleSet(P={"a": fv([], 2)}, U={"a": fv([], 2)}, N={},
                      ref_time=T0, dim=2)

    def test_unknown_version_rejected(self, tmp_path):
        path = tmp_path / "set.jsonl"
        path.write_text('{"version":2,"dim":4,"ref_time":0}\n')
        with pytest.raises(DataError, match="version"):
            read_sample_set(path)
