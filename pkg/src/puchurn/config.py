"""Flat key-value configuration shared by the CLI commands.

A config file holds ``key = value`` lines (``#`` starts a comment). Every
key has a typed default below; unknown keys are rejected by name.
Precedence is command-line flag over file value over default.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError
from .features import DEFAULT_LOOKBACKS, default_dim
from .models import TrainConfig
from .sim import SimConfig

DEFAULT_ANCHOR = 1_470_009_600  # 2016-08-01T00:00:00Z
DEFAULT_HISTORY_DAYS = 150
DEFAULT_FUTURE_DAYS = 90


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_list(raw) -> tuple[int, ...]:
    if isinstance(raw, (tuple, list)):
        return tuple(int(x) for x in raw)
    return tuple(int(part) for part in str(raw).split(",") if part.strip())


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(x) for x in value)
    return str(value)


# key -> (parser, default, help)
CONFIG_KEYS: dict[str, tuple] = {
    "mode": (str, "tccp", "pipeline mode: tccp | supervised_lr | supervised_fm | "
                          "rule_recency | rule_frequency"),
    "seed": (int, 7, "master seed; every random stream derives from it"),
    "users": (int, 50_000, "population size for simulation"),
    "anchor": (int, DEFAULT_ANCHOR, "shared end time of the training windows"),
    "history_days": (int, DEFAULT_HISTORY_DAYS, "log span before the anchor"),
    "future_days": (int, DEFAULT_FUTURE_DAYS, "log span after the anchor"),
    "drift": (float, 1.0, "behavior drift strength; 0 freezes the population"),
    "login_rate_median": (float, 0.18, "median daily login rate"),
    "login_rate_sigma": (float, 1.0, "log-normal sigma of the login rate"),
    "pay_prob": (float, 0.30, "probability a login carries a pay event"),
    "churn_hazard": (float, 0.010, "base daily churn hazard"),
    "hazard_engagement_scale": (float, 2.2, "how strongly engagement protects"),
    "op": (int, 15, "observation period in days"),
    "cp": (int, 90, "churn period in days"),
    "lookbacks": (_parse_int_list, DEFAULT_LOOKBACKS, "behavior lookback windows, days"),
    "dim": (int, default_dim(DEFAULT_LOOKBACKS), "total feature-space size"),
    "c_method": (str, "historical", "label-frequency estimator: e1 | e2 | e3 | historical"),
    "c_holdout": (float, 0.2, "validation share for score-based estimators"),
    "rule_threshold": (int, 7, "rule parameter: silent days L or login cutoff M"),
    "rule_days": (int, 15, "frequency-rule counting window D, days"),
    "learning_rate": (float, 0.005, "gradient step size"),
    "epochs": (int, 20, "training passes over the data"),
    "batch_size": (int, 512, "rows per gradient step"),
    "l2_linear": (float, 1e-6, "l2 penalty on linear weights"),
    "l2_factor": (float, 1e-5, "l2 penalty on interaction factors"),
    "k": (int, 8, "factorization dimension"),
    "init_scale": (float, 0.05, "stddev of the factor initialization"),
    "shuffle": (_parse_bool, True, "shuffle rows each epoch"),
    "out_dir": (str, "runs/out", "artifact directory"),
}


def defaults() -> dict:
    return {key: default for key, (_, default, _) in CONFIG_KEYS.items()}


def parse_config(path) -> dict:
    """Parse a key-value file; values are type-checked, defaults applied."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    out = defaults()
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
            parser = CONFIG_KEYS[key][0]
            try:
                out[key] = parser(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(
                    f"{path}: line {lineno}: bad value for {key!r}: {exc}"
                ) from exc
    validate_config(out)
    return out


def dump_config(cfg: dict, path) -> None:
    unknown = set(cfg) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    with open(path, "w", encoding="utf-8") as f:
        for key in CONFIG_KEYS:
            if key in cfg:
                f.write(f"{key} = {_fmt(cfg[key])}\n")


def merge(base: dict, overrides: dict) -> dict:
    """Apply non-None overrides (flag > file > default)."""
    out = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = value
    validate_config(out)
    return out


def validate_config(cfg: dict) -> None:
    if cfg["mode"] == "tccp" and cfg["op"] >= cfg["cp"]:
        raise ConfigError(
            f"mode tccp needs op < cp, got op={cfg['op']}, cp={cfg['cp']}"
        )
    if cfg["op"] < 1 or cfg["cp"] < 1:
        raise ConfigError("op and cp must be at least one day")
    lbs = cfg["lookbacks"]
    if any(b <= a for a, b in zip(lbs, lbs[1:])):
        raise ConfigError(f"lookbacks must be strictly increasing, got {lbs}")


def sim_config_from(cfg: dict) -> SimConfig:
    from .data import DAY

    return SimConfig(
        n_users=cfg["users"],
        t_start=cfg["anchor"] - cfg["history_days"] * DAY,
        t_end=cfg["anchor"] + cfg["future_days"] * DAY,
        login_rate_median=cfg["login_rate_median"],
        login_rate_sigma=cfg["login_rate_sigma"],
        pay_prob=cfg["pay_prob"],
        drift_strength=cfg["drift"],
        churn_hazard=cfg["churn_hazard"],
        hazard_engagement_scale=cfg["hazard_engagement_scale"],
        seed=cfg["seed"],
    )


def train_config_from(cfg: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg["learning_rate"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        l2_linear=cfg["l2_linear"],
        l2_factor=cfg["l2_factor"],
        k=cfg["k"],
        init_scale=cfg["init_scale"],
        seed=cfg["seed"],
        shuffle=cfg["shuffle"],
    )
