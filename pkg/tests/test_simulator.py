import numpy as np
import pytest

from puchurn.data import DAY
from puchurn.errors import ConfigError, DataError
from puchurn.sim import (
    SimConfig, attribute_signals, generate_population, ground_truth_labels,
    hazard_matrix, pay_affinity, simulate_events, truths_to_map,
)

T0 = 1_470_009_600


def cfg(**kw):
    base = dict(n_users=400, t_start=T0, t_end=T0 + 60 * DAY, seed=5)
    base.update(kw)
    return SimConfig(**base)


class TestGeneratePopulation:
    def test_deterministic_for_fixed_seed(self):
        a = generate_population(cfg())
        b = generate_population(cfg())
        assert a == b

    def test_zero_users(self):
        profiles, truths = generate_population(cfg(n_users=0))
        assert profiles == [] and truths == []

    def test_zero_hazard_means_no_churn(self):
        _, truths = generate_population(cfg(churn_hazard=0.0))
        assert all(t.churn_ts is None for t in truths)

    def test_churn_ts_inside_horizon(self):
        _, truths = generate_population(cfg(churn_hazard=0.05))
        for t in truths:
            if t.churn_ts is not None:
                assert T0 <= t.churn_ts < T0 + 60 * DAY

    def test_churn_fraction_matches_geometric_expectation(self):
        # With drift 0 each user's hazard is constant, so the churn count is
        # a sum of independent Bernoullis with p_i = 1 - (1 - h_i)^D.
        c = cfg(n_users=20_000, churn_hazard=0.01, drift_strength=0.0, seed=11)
        profiles, truths = generate_population(c)
        z = attribute_signals(profiles, c.t_start)
        eng = np.array([t.engagement for t in truths])
        h = hazard_matrix(c, z, eng, 1, pay_affinity(c, c.n_users))[:, 0]
        p = 1.0 - (1.0 - h) ** c.n_days
        expected = p.sum()
        sigma = float(np.sqrt((p * (1.0 - p)).sum()))
        observed = sum(t.churn_ts is not None for t in truths)
        assert abs(observed - expected) <= 3.0 * sigma

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError):
            cfg(t_end=T0).validate()
        with pytest.raises(ConfigError):
            cfg(pay_prob=1.5).validate()
        with pytest.raises(ConfigError):
            cfg(t_end=T0 + DAY + 1).validate()


class TestSimulateEvents:
    def test_deterministic(self):
        profiles, truths = generate_population(cfg())
        a = simulate_events(profiles, truths, cfg())
        b = simulate_events(profiles, truths, cfg())
        assert a == b

    def test_no_events_at_or_after_churn(self):
        c = cfg(churn_hazard=0.04)
        profiles, truths = generate_population(c)
        log = simulate_events(profiles, truths, c)
        churn = truths_to_map(truths)
        for e in log:
            if churn[e.user_id] is not None:
                assert e.ts < churn[e.user_id]

    def test_churned_at_start_emits_nothing(self):
        c = cfg(n_users=3, churn_hazard=0.0)
        profiles, truths = generate_population(c)
        truths = [type(t)(t.user_id, t.engagement, c.t_start if i == 0 else None)
                  for i, t in enumerate(truths)]
        log = simulate_events(profiles, truths, c)
        assert all(e.user_id != profiles[0].user_id for e in log)

    def test_zero_pay_prob_means_no_pay_events(self):
        c = cfg(pay_prob=0.0)
        profiles, truths = generate_population(c)
        log = simulate_events(profiles, truths, c)
        assert not any(e.kind == "pay" for e in log)

    def test_pay_events_carry_amounts(self):
        c = cfg(pay_prob=1.0)
        profiles, truths = generate_population(c)
        log = simulate_events(profiles, truths, c)
        pays = [e for e in log if e.kind == "pay"]
        assert pays and all(e.amount is not None and e.amount >= 0 for e in pays)

    def test_no_drift_day_counts_are_exchangeable(self):
        # Oracle: with drift 0 and no churn, per-day totals are i.i.d.
        # Poisson, so two disjoint window means agree within noise.
        c = cfg(n_users=2000, drift_strength=0.0, churn_hazard=0.0, seed=9)
        profiles, truths = generate_population(c)
        log = simulate_events(profiles, truths, c)
        day = (log.ts[log.kind == 0] - c.t_start) // DAY
        half = c.n_days // 2
        first = np.bincount(day[day < half].astype(int), minlength=half)
        second = np.bincount((day[day >= half] - half).astype(int), minlength=half)
        pooled = np.concatenate([first, second]).std(ddof=1)
        se = pooled * np.sqrt(2.0 / half)
        assert abs(first.mean() - second.mean()) <= 4.0 * se

    def test_misaligned_inputs_rejected(self):
        profiles, truths = generate_population(cfg())
        with pytest.raises(DataError, match="aligned"):
            simulate_events(profiles, list(reversed(truths)), cfg())


class TestGroundTruthLabels:
    def test_active_user_retained_and_churned_user_churned(self):
        c = cfg(churn_hazard=0.03, seed=2)
        profiles, truths = generate_population(c)
        log = simulate_events(profiles, truths, c)
        t = c.t_start + 10 * DAY
        labels = ground_truth_labels(truths, log, t, 30)
        for tr in truths:
            if tr.churn_ts is not None and tr.churn_ts <= t:
                assert labels[tr.user_id] is True

    def test_matches_brute_force_log_scan(self):
        c = cfg(n_users=300, churn_hazard=0.02, seed=13)
        profiles, truths = generate_population(c)
        log = simulate_events(profiles, truths, c)
        t = c.t_start + 5 * DAY
        cp = 20
        labels = ground_truth_labels(truths, log, t, cp)
        events = log.to_events()
        for tr in truths:
            logged = any(
                e.user_id == tr.user_id and e.kind == "login" and t <= e.ts < t + cp * DAY
                for e in events
            )
            expected = (tr.churn_ts is not None and tr.churn_ts <= t) or not logged
            assert labels[tr.user_id] == expected

    def test_window_beyond_horizon_rejected(self):
        c = cfg()
        profiles, truths = generate_population(c)
        log = simulate_events(profiles, truths, c)
        with pytest.raises(DataError, match="horizon"):
            ground_truth_labels(truths, log, c.t_start + 50 * DAY, 30)
