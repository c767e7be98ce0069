"""Synthetic population and event-log generator with controllable drift.

The generator stands in for production behavior logs: it produces profiles,
a latent per-user engagement level, an absorbing churn time drawn from a
daily hazard, and login/pay events from a daily Poisson process. Because the
churn times are known exactly, downstream evaluation can score predictions
against an oracle.

The hazard combines channels every model era can learn (engagement, a fixed
attribute direction, an attribute interaction, account lifecycle) with a
regime-dependent direction over attributes and pay affinity. Under drift the
population moves from the old regime to the new one around 58% of the way
through the horizon, scaled by ``drift_strength``; models trained on old
windows carry coefficients whose sign has flipped by test time. The per-day
population mean of the regime factor is divided out, so drift reshuffles who
churns rather than how many.

With ``drift_strength = 0`` the regime never moves and the event process is
stationary: per-user event counts are exchangeable across days and the churn
time follows the per-day hazard exactly, giving closed-form expectations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import DAY, EventLog, Profile
from .errors import ConfigError, DataError

# Shared hazard channels: active in every regime, so any trained model can
# exploit them regardless of window placement. The interaction term pairs
# youth with city parity; additive models cannot express it.
_ATTR_SHARED = np.array([0.21, -0.27, 0.15, -0.24])
_INTERACTION_SHARED = 0.6
_PAY_SHARED = -0.45

# Regime-dependent channels: their sign flips between the old and the new
# world. The transition is a logistic ramp centered at _REGIME_MID_FRAC of
# the horizon with width _REGIME_WIDTH_FRAC, scaled by drift_strength.
_ATTR_REGIME = np.array([0.9, -0.5, 0.0, 0.7])
_PAY_REGIME = 1.0
_REGIME_MID_FRAC = 0.40
_REGIME_WIDTH_FRAC = 0.05

_SECULAR_DAYS = 1200.0
_HAZARD_CAP = 0.30

# Event-rate drift: per-segment sinusoidal multiplier.
_RATE_WAVE = 0.35
_RATE_DAYS = 180.0

# Latent payment affinity: shifts each user's per-login pay probability and
# moves churn hazard, so pay behavior carries churn signal beyond logins.
_PAY_AFFINITY_SPREAD = 1.0

# Share of users who register inside the simulated horizon. Churn is
# absorbing, so without inflow every later cohort would be smaller than the
# one before it; replenishment keeps the active population roughly steady.
_NEW_USER_SHARE = 0.5

# Lifecycle: young accounts churn at a multiple of their long-run hazard,
# decaying with account age. Established accounts are additionally thinned
# for the churn they would have suffered before the horizon started, so the
# population begins at its steady state instead of in a depletion transient.
# Young accounts also log in more while they explore, which keeps their
# elevated churn invisible to pure recency/frequency rules.
_NEW_ACCOUNT_BOOST = 2.5
_NEW_ACCOUNT_DECAY_DAYS = 45.0
_ONBOARDING_RATE_BOOST = 1.0
_ONBOARDING_DECAY_DAYS = 21.0

_POPULATION_STREAM = 11
_EVENT_STREAM = 23
_PAY_STREAM = 29


@dataclass(frozen=True)
class SimConfig:
    n_users: int
    t_start: int
    t_end: int
    login_rate_median: float = 0.18
    login_rate_sigma: float = 1.0
    pay_prob: float = 0.30
    drift_strength: float = 0.0
    churn_hazard: float = 0.010
    hazard_engagement_scale: float = 2.2
    seed: int = 0

    def validate(self) -> None:
        if self.n_users < 0:
            raise ConfigError(f"n_users must be nonnegative, got {self.n_users}")
        if self.t_start >= self.t_end:
            raise ConfigError(f"t_start must precede t_end, got [{self.t_start}, {self.t_end})")
        if (self.t_end - self.t_start) % DAY != 0:
            raise ConfigError("simulation horizon must span whole days")
        if not (0.0 <= self.pay_prob <= 1.0):
            raise ConfigError(f"pay_prob must lie in [0, 1], got {self.pay_prob}")
        if not (0.0 <= self.churn_hazard <= 1.0):
            raise ConfigError(f"churn_hazard must lie in [0, 1], got {self.churn_hazard}")
        for name in ("login_rate_median", "login_rate_sigma", "drift_strength",
                     "hazard_engagement_scale"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")

    @property
    def n_days(self) -> int:
        return (self.t_end - self.t_start) // DAY


@dataclass(frozen=True)
class UserTruth:
    user_id: str
    engagement: float
    churn_ts: int | None


def truths_to_map(truths) -> dict[str, int | None]:
    return {t.user_id: t.churn_ts for t in truths}


def pay_affinity(cfg: SimConfig, n_users: int) -> np.ndarray:
    """Latent standard-normal pay affinity per user, derived from the seed
    alone so every generation stage sees the same values."""
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _PAY_STREAM)))
    return rng.normal(0.0, 1.0, n_users)


def attribute_signals(profiles, t_start: int) -> np.ndarray:
    """+-1 signals per user over (age, level, city parity, account age)."""
    n = len(profiles)
    z = np.empty((n, 4))
    for i, p in enumerate(profiles):
        z[i, 0] = 1.0 if p.age < 28 else -1.0
        z[i, 1] = 1.0 if p.user_level <= 2 else -1.0
        z[i, 2] = 1.0 if p.city % 2 == 0 else -1.0
        z[i, 3] = 1.0 if (t_start - p.register_ts) < 365 * DAY else -1.0
    return z


def account_age_boost(age_days) -> np.ndarray:
    """Hazard multiplier from account age; decays to 1 for old accounts."""
    a = np.maximum(np.asarray(age_days, dtype=np.float64), 0.0)
    return 1.0 + _NEW_ACCOUNT_BOOST * np.exp(-a / _NEW_ACCOUNT_DECAY_DAYS)


# Population shares of the +1 outcome per attribute signal (age < 28 over
# ages 16..75; bottom two user-level quintiles; even city; young account)
# used to normalize hazard levels analytically.
_SIGNAL_POS_SHARE = np.array([0.2, 0.4, 0.5, 0.55])


def _mean_regime_factor(flip: np.ndarray) -> np.ndarray:
    """E[exp(shared + regime * flip)] over the latent population, per day.

    Signals are treated as independent +-1 draws with the shares above and
    pay affinity as standard normal, which holds by construction.
    """
    coef = _ATTR_SHARED[None, :] + np.outer(flip, _ATTR_REGIME)  # (D, 4)
    p = _SIGNAL_POS_SHARE[None, :]
    mean = np.prod(p * np.exp(coef) + (1.0 - p) * np.exp(-coef), axis=1)
    mean = mean * np.cosh(_INTERACTION_SHARED)  # interaction is +-1 half/half
    pay_coef = _PAY_SHARED + _PAY_REGIME * flip
    return mean * np.exp(pay_coef ** 2 / 2.0)


def regime_flip(cfg: SimConfig, days: np.ndarray) -> np.ndarray:
    """Sign of the regime channels per day: +drift early, -drift late.

    Without drift the population sits at the neutral midpoint and the
    regime channels are silent, so tuning them cannot disturb the
    stationary case.
    """
    days = np.asarray(days, dtype=np.float64)
    if cfg.drift_strength == 0.0:
        return np.zeros(days.shape)
    mid = _REGIME_MID_FRAC * cfg.n_days
    width = max(_REGIME_WIDTH_FRAC * cfg.n_days, 1.0)
    ramp = 1.0 / (1.0 + np.exp(-(days - mid) / width))
    return cfg.drift_strength * (1.0 - 2.0 * ramp)


def hazard_matrix(cfg: SimConfig, signals: np.ndarray, engagement: np.ndarray,
                  n_days: int, affinity: np.ndarray | None = None,
                  register_day: np.ndarray | None = None) -> np.ndarray:
    """Per-user per-day churn probability, shape (n_users, n_days).

    Hazard falls with engagement, is spread by the shared and the
    regime-dependent directions over attributes and pay affinity, is boosted
    for young accounts, and rises slowly with drift-shifted time. Zero
    before a user registers; clipped to stay a probability.
    """
    n = signals.shape[0]
    if affinity is None:
        affinity = np.zeros(n)
    if register_day is None:
        register_day = np.full(n, -10_000, dtype=np.int64)
    days = np.arange(n_days, dtype=np.float64)

    shared = (signals @ _ATTR_SHARED
              + _INTERACTION_SHARED * signals[:, 0] * signals[:, 2]
              + _PAY_SHARED * affinity)  # (n,)
    regime = signals @ _ATTR_REGIME + _PAY_REGIME * affinity  # (n,)
    flip = regime_flip(cfg, days)  # (D,): +drift in the old world, -drift in the new
    factor = np.exp(shared[:, None] + regime[:, None] * flip[None, :])
    factor = factor / _mean_regime_factor(flip)[None, :]

    base = cfg.churn_hazard * np.exp(-cfg.hazard_engagement_scale * engagement)
    secular = 1.0 + cfg.drift_strength * days / _SECULAR_DAYS
    age = days[None, :] - register_day[:, None]
    h = base[:, None] * factor * account_age_boost(age) * secular[None, :]
    h = h * (age >= 0)
    return np.clip(h, 0.0, _HAZARD_CAP)


def daily_hazard(cfg: SimConfig, signals: np.ndarray, engagement: float,
                 day_index: int, affinity: float = 0.0,
                 register_day: int = -10_000) -> float:
    """Scalar hazard of a single user on one day; mirrors :func:`hazard_matrix`."""
    h = hazard_matrix(cfg, np.asarray(signals, dtype=float).reshape(1, 4),
                      np.asarray([engagement], dtype=float), day_index + 1,
                      np.asarray([affinity], dtype=float),
                      np.asarray([register_day], dtype=np.int64))
    return float(h[0, day_index])


def pre_horizon_survival(cfg: SimConfig, signals: np.ndarray,
                         engagement: np.ndarray, affinity: np.ndarray,
                         pre_days: np.ndarray) -> np.ndarray:
    """Probability an established account is still alive at the horizon start.

    Uses the day-zero hazard and the integrated lifecycle boost over the
    account's pre-horizon lifetime.
    """
    h0 = hazard_matrix(cfg, signals, engagement, 1, affinity,
                       np.zeros(signals.shape[0], dtype=np.int64))[:, 0]
    h0 = h0 / account_age_boost(0.0)  # long-run hazard component
    pre = np.maximum(np.asarray(pre_days, dtype=np.float64), 0.0)
    exposure = pre + _NEW_ACCOUNT_BOOST * _NEW_ACCOUNT_DECAY_DAYS * (
        1.0 - np.exp(-pre / _NEW_ACCOUNT_DECAY_DAYS))
    return np.exp(-h0 * exposure)


def generate_population(cfg: SimConfig) -> tuple[list[Profile], list[UserTruth]]:
    """Draw profiles and ground-truth churn times; deterministic per config."""
    cfg.validate()
    n = cfg.n_users
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _POPULATION_STREAM)))
    ids = [f"u{i:07d}" for i in range(n)]
    age = rng.integers(16, 76, n)
    gender = rng.choice(np.array(["m", "f", "u"]), size=n, p=[0.48, 0.48, 0.04])
    city = rng.integers(0, 50, n)
    # Established accounts registered long before the horizon; the rest form
    # a continuous arrival pipeline from shortly before it to its end, so the
    # stock of young accounts is already filled when the horizon opens.
    new_user = rng.random(n) < _NEW_USER_SHARE
    pipeline_start = -180
    register_ts = np.where(
        new_user,
        cfg.t_start + rng.integers(pipeline_start, max(cfg.n_days, 1), n) * DAY,
        cfg.t_start - rng.integers(200, 2000, n) * DAY,
    )
    engagement = rng.lognormal(
        mean=math.log(cfg.login_rate_median) if cfg.login_rate_median > 0 else -math.inf,
        sigma=cfg.login_rate_sigma, size=n,
    )
    # User level loosely tracks engagement so static features carry signal.
    level_score = np.log(np.maximum(engagement, 1e-12)) + rng.normal(0.0, 0.6, n)
    ranks = np.argsort(np.argsort(level_score))
    user_level = 1 + (5 * ranks) // max(n, 1)

    profiles = [
        Profile(
            user_id=ids[i], age=int(age[i]), gender=str(gender[i]), city=int(city[i]),
            register_ts=int(register_ts[i]), user_level=int(user_level[i]),
        )
        for i in range(n)
    ]
    if n == 0:
        return [], []

    d = cfg.n_days
    signals = attribute_signals(profiles, cfg.t_start)
    affinity = pay_affinity(cfg, n)
    register_day = (register_ts - cfg.t_start) // DAY
    h = hazard_matrix(cfg, signals, engagement, d, affinity,
                      np.asarray(register_day, dtype=np.int64))
    fired = rng.random((n, d)) < h
    first_day = np.argmax(fired, axis=1)
    ever = fired.any(axis=1)
    # Established accounts already lived through their pre-horizon lifetime;
    # the ones that would have churned out there start the horizon churned.
    pre_days = np.maximum(-register_day, 0)
    survival = pre_horizon_survival(cfg, signals, engagement, affinity, pre_days)
    dead_at_start = (pre_days > 0) & (rng.random(n) >= survival)
    truths = []
    for i in range(n):
        if dead_at_start[i]:
            churn_ts = int(cfg.t_start)
        elif ever[i]:
            churn_ts = int(cfg.t_start + first_day[i] * DAY)
        else:
            churn_ts = None
        truths.append(UserTruth(user_id=ids[i], engagement=float(engagement[i]),
                                churn_ts=churn_ts))
    return profiles, truths


def simulate_events(profiles, truths, cfg: SimConfig) -> EventLog:
    """Daily Poisson logins per user, each paying with ``pay_prob``.

    No user emits anything at or after its churn timestamp: churn is
    absorbing. Output ordering is canonical regardless of generation order.
    """
    cfg.validate()
    if [p.user_id for p in profiles] != [t.user_id for t in truths]:
        raise DataError("profiles and truths must be aligned by user_id")
    n = len(profiles)
    d = cfg.n_days
    horizon = (cfg.t_start, cfg.t_end)
    if n == 0:
        return EventLog._from_columns([], [], [], [], horizon)

    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _EVENT_STREAM)))
    engagement = np.array([t.engagement for t in truths])
    churn_day = np.array(
        [d if t.churn_ts is None else max(0, (t.churn_ts - cfg.t_start) // DAY)
         for t in truths],
        dtype=np.int64,
    )
    days = np.arange(d, dtype=np.float64)
    phase = np.array([(p.city % 4) * (np.pi / 2.0) for p in profiles])
    wave = np.sin(2.0 * np.pi * days[None, :] / _RATE_DAYS + phase[:, None])
    mult = np.exp(_RATE_WAVE * cfg.drift_strength * wave)
    register_day = np.array(
        [(p.register_ts - cfg.t_start) // DAY for p in profiles])
    age = days[None, :] - register_day[:, None]
    onboarding = 1.0 + _ONBOARDING_RATE_BOOST * np.exp(
        -np.maximum(age, 0.0) / _ONBOARDING_DECAY_DAYS)
    alive = (days[None, :] < churn_day[:, None]) & (age >= 0)
    lam = engagement[:, None] * mult * onboarding * alive
    counts = rng.poisson(lam)

    total = int(counts.sum())
    cell = np.repeat(np.arange(n * d, dtype=np.int64), counts.ravel())
    user = (cell // d).astype(np.int32)
    day = cell % d
    ts_login = cfg.t_start + day * DAY + rng.integers(0, DAY, total)

    if 0.0 < cfg.pay_prob < 1.0:
        logit_base = np.log(cfg.pay_prob / (1.0 - cfg.pay_prob))
        shift = _PAY_AFFINITY_SPREAD * pay_affinity(cfg, n)
        per_user_prob = 1.0 / (1.0 + np.exp(-(logit_base + shift)))
    else:
        per_user_prob = np.full(n, cfg.pay_prob)
    pays = rng.random(total) < per_user_prob[user]
    n_pay = int(pays.sum())
    amounts = np.round(rng.lognormal(3.0, 1.0, n_pay), 2)

    user_idx = np.concatenate([user, user[pays]])
    ts = np.concatenate([ts_login, ts_login[pays]])
    kind = np.concatenate([np.zeros(total, np.uint8), np.ones(n_pay, np.uint8)])
    amount = np.concatenate([np.full(total, np.nan), amounts])

    ids = np.array([p.user_id for p in profiles])
    present = np.unique(user_idx)
    remap = np.searchsorted(present, user_idx).astype(np.int32)
    order = np.lexsort((kind, remap, ts))
    return EventLog(ids[present], remap[order], ts[order], kind[order], amount[order], horizon)


def ground_truth_labels(churn_ts_by_user, log: EventLog, t: int, cp_days: int) -> dict[str, bool]:
    """True churn status at anchor ``t``: ``True`` means churned.

    A user counts as churned when its churn timestamp is at or before ``t``,
    or when the log holds no login inside ``[t, t + cp)``.
    """
    if not isinstance(churn_ts_by_user, dict):
        churn_ts_by_user = truths_to_map(churn_ts_by_user)
    end = t + cp_days * DAY
    if t < log.t_start or end > log.t_end:
        raise DataError(
            f"label window [{t}, {end}) falls outside log horizon "
            f"[{log.t_start}, {log.t_end})"
        )
    in_window = (log.ts >= t) & (log.ts < end) & (log.kind == 0)
    seen = np.zeros(len(log.users), dtype=bool)
    seen[log.user_idx[in_window]] = True
    active = {str(u) for u in log.users[seen]}
    out: dict[str, bool] = {}
    for uid, churn_ts in churn_ts_by_user.items():
        churned = (churn_ts is not None and churn_ts <= t) or uid not in active
        out[uid] = churned
    return out
