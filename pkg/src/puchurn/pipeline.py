"""End-to-end runs: from an event log to a comparison report.

The flow for the PU mode mirrors the weighting recipe end to end:
candidates -> window labels -> features -> labeled-vs-rest logistic
classifier -> label-frequency estimate -> duplicate-and-weight -> final
factorization machine -> AUC on the held-out fully labeled test window.

All training windows share one end anchor; the test window starts at that
anchor and spans a full churn period, so its labels are complete. Every
intermediate artifact can be persisted and each stage reloaded from file
reproduces the in-memory result exactly.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix

from .data import DAY, EventLog, Profile, SampleSet, write_sample_set
from .errors import ConfigError, DataError, PuChurnError
from .features import (
    WindowSpec, days_since_last_login, default_dim, extract_features,
    label_window, login_counts, select_candidates,
)
from .metrics import EvalReport, EvalRow, auc, evaluate, frequency_predict, recency_predict
from .models import (
    FMModel, LogisticModel, TrainConfig, fm_predict, fm_train, lr_predict,
    lr_train, write_model,
)
from .sim import SimConfig, generate_population, simulate_events
from .weighting import (
    LabelFrequency, METHOD_HISTORICAL, PROV_UNLABELED_NEG,
    build_weighted_training_set, estimate_c_from_counts, estimate_c_max,
    estimate_c_mean, estimate_c_ratio, plain_training_set, write_weighted_set,
)

# 2016-08-01T00:00:00Z; a fixed, day-aligned demo anchor.
DEFAULT_ANCHOR = 1_470_009_600

MODES = ("tccp", "supervised_lr", "supervised_fm", "rule_recency", "rule_frequency")
# Candidates always logged in within 30 days of selection, so a 30-day
# silence threshold can never fire; the grid tops out below that.
RECENCY_GRID = (1, 3, 7, 15, 25)
FREQUENCY_GRID = (1, 2, 3, 5, 8)
DEFAULT_OPS = (3, 7, 15, 30, 60, 90)

_GPRIME_STREAM = 41
_FM_STREAM = 43
_HOLDOUT_STREAM = 47
_SUPERVISED_STREAM = 53


@dataclass
class RunConfig:
    mode: str
    window: WindowSpec
    train: TrainConfig = field(default_factory=TrainConfig)
    c_method: str = METHOD_HISTORICAL
    c_holdout: float = 0.2
    rule_threshold: int | None = None
    rule_days: int = 15
    dim: int | None = None
    seed: int = 0
    out_dir: Path | None = None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.mode == "tccp" and self.window.op >= self.window.cp:
            raise ConfigError(
                f"tccp needs op < cp (got op={self.window.op}, cp={self.window.cp}); "
                "use a supervised mode for fully labeled windows"
            )
        if self.mode.startswith("supervised") and self.window.op < self.window.cp:
            raise ConfigError(
                f"supervised modes need op >= cp (got op={self.window.op}, "
                f"cp={self.window.cp})"
            )
        if self.mode.startswith("rule") and self.rule_threshold is None:
            raise ConfigError(f"mode {self.mode} needs rule_threshold")
        if not (0.0 < self.c_holdout < 1.0):
            raise ConfigError(f"c_holdout must lie in (0, 1), got {self.c_holdout}")


@dataclass
class TestSet:
    """Fully labeled evaluation window; churners carry label 1."""

    users: list[str]
    x: csr_matrix
    labels: np.ndarray
    sample_set: SampleSet
    ref: str


@dataclass
class TccpResult:
    model: FMModel
    gprime: LogisticModel
    c: LabelFrequency
    row: EvalRow
    sample_set: SampleSet


@dataclass
class SupervisedResult:
    model: LogisticModel | FMModel
    row: EvalRow
    sample_set: SampleSet


def _derive_seed(base: int, stream: int) -> int:
    return int(np.random.SeedSequence((base, stream)).generate_state(1)[0])


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except PuChurnError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


def simulate_bundle(cfg: SimConfig):
    """Population, truths and event log in one call."""
    profiles, truths = generate_population(cfg)
    log = simulate_events(profiles, truths, cfg)
    return log, {p.user_id: p for p in profiles}, truths


def rows_to_matrix(groups, dim: int) -> csr_matrix:
    """Stack feature vectors from (user -> FeatureVector) groups into CSR."""
    vectors = [fv for group in groups for fv in (group[uid] for uid in sorted(group))]
    n = len(vectors)
    indptr = np.zeros(n + 1, dtype=np.int64)
    for i, fv in enumerate(vectors):
        indptr[i + 1] = indptr[i] + fv.nnz
    if n:
        indices = np.concatenate([fv.indices for fv in vectors])
        values = np.concatenate([fv.values for fv in vectors])
    else:
        indices = np.empty(0, np.int64)
        values = np.empty(0, np.float64)
    return csr_matrix((values, indices, indptr), shape=(n, dim))


def featurized_window(log, profiles, spec: WindowSpec, dim: int) -> SampleSet:
    """Candidates, labels and features for one end-anchored window."""
    sel_time = spec.ref_time - spec.op * DAY
    with _stage("select_candidates"):
        candidates = select_candidates(log, profiles, sel_time)
    with _stage("label_window"):
        membership = label_window(log, candidates, spec)
    with _stage("extract_features"):
        feats = extract_features(log, profiles, candidates, sel_time,
                                 spec.lookbacks, dim)
    return membership.with_features(feats, dim)


def build_test_set(log, profiles, anchor: int, cp: int,
                   lookbacks=(7, 15, 30), dim: int | None = None) -> TestSet:
    """Evaluation window [anchor, anchor + cp) with complete labels."""
    if dim is None:
        dim = default_dim(lookbacks)
    spec = WindowSpec(ref_time=anchor + cp * DAY, op=cp, cp=cp, lookbacks=lookbacks)
    sset = featurized_window(log, profiles, spec, dim)
    users = sorted(sset.P) + sorted(sset.N)
    labels = np.concatenate([np.zeros(len(sset.P)), np.ones(len(sset.N))])
    x = rows_to_matrix((sset.P, sset.N), dim)
    return TestSet(users=users, x=x, labels=labels, sample_set=sset,
                   ref=f"test@{anchor}+{cp}d")


def churn_scores(model, test: TestSet) -> np.ndarray:
    """Higher means more likely to churn."""
    if isinstance(model, FMModel):
        return -np.asarray(fm_predict(model, test.x))
    return 1.0 - np.asarray(lr_predict(model, test.x))


def historical_label_frequency(log, profiles, anchor: int, op: int, cp: int) -> LabelFrequency:
    """Short-to-full positive ratio on the cohort anchored a churn period back.

    The cohort at ``anchor - cp`` is the most recent one whose full window is
    already observed at training time.
    """
    t0 = anchor - cp * DAY
    cohort = select_candidates(log, profiles, t0)
    if not cohort:
        raise DataError("historical cohort is empty")
    short = int((login_counts(log, cohort, t0, t0 + op * DAY) >= 1).sum())
    full = int((login_counts(log, cohort, t0, t0 + cp * DAY) >= 1).sum())
    return estimate_c_from_counts(short, full)


def _estimate_c_holdout(sset: SampleSet, method: str, holdout: float,
                        train_cfg: TrainConfig, seed: int):
    """Score-based estimate on a held-out slice; returns (c, scorer model)."""
    ids_p = sorted(sset.P)
    ids_u = sorted(sset.U)
    all_ids = ids_p + ids_u
    rng = np.random.default_rng(np.random.SeedSequence((seed, _HOLDOUT_STREAM)))
    order = rng.permutation(len(all_ids))
    n_val = max(1, int(round(holdout * len(all_ids))))
    val_ids = {all_ids[i] for i in order[:n_val]}
    fit_p = {u: sset.P[u] for u in ids_p if u not in val_ids}
    fit_u = {u: sset.U[u] for u in ids_u if u not in val_ids}
    if not fit_p or not fit_u:
        raise DataError("holdout split left an empty class for the scorer")
    gprime = lr_train(
        plain_training_set(fit_p, fit_u, sset.dim, negative_tag=PROV_UNLABELED_NEG),
        replace(train_cfg, seed=_derive_seed(seed, _GPRIME_STREAM)),
    )
    val_sorted = sorted(val_ids)
    feats = {**sset.P, **sset.U}
    x_val = rows_to_matrix(({u: feats[u] for u in val_sorted},), sset.dim)
    scores = np.asarray(lr_predict(gprime, x_val))
    labeled = np.array([u in sset.P for u in val_sorted])
    if method == "e1":
        if not labeled.any():
            raise DataError("holdout slice contains no labeled positives")
        return estimate_c_mean(scores[labeled]), gprime
    if method == "e2":
        return estimate_c_ratio(scores[labeled], scores), gprime
    if method == "e3":
        return estimate_c_max(scores), gprime
    raise ConfigError(f"unknown c estimator {method!r}")


def train_tccp(cfg: RunConfig, log, profiles):
    """Train the PU pipeline; returns (fm, gprime, c, sample_set, weighted)."""
    dim = cfg.dim or default_dim(cfg.window.lookbacks)
    sset = featurized_window(log, profiles, cfg.window, dim)
    if not sset.P or not sset.U:
        raise DataError(
            f"window produced |P|={len(sset.P)}, |U|={len(sset.U)}; "
            "both classes are required"
        )
    if cfg.c_method == METHOD_HISTORICAL:
        with _stage("fit_gprime"):
            gprime = lr_train(
                plain_training_set(sset.P, sset.U, dim, negative_tag=PROV_UNLABELED_NEG),
                replace(cfg.train, seed=_derive_seed(cfg.seed, _GPRIME_STREAM)),
            )
        with _stage("estimate_c"):
            c = historical_label_frequency(
                log, profiles, cfg.window.ref_time, cfg.window.op, cfg.window.cp)
    else:
        with _stage("estimate_c"):
            c, gprime = _estimate_c_holdout(
                sset, cfg.c_method, cfg.c_holdout, cfg.train, cfg.seed)
    ids_u = sorted(sset.U)
    x_u = rows_to_matrix((sset.U,), dim)
    u_scores = dict(zip(ids_u, np.asarray(lr_predict(gprime, x_u)).tolist()))
    with _stage("weight_samples"):
        weighted = build_weighted_training_set(sset.P, sset.U, u_scores, c)
    with _stage("fit_final"):
        fm = fm_train(weighted, replace(cfg.train, seed=_derive_seed(cfg.seed, _FM_STREAM)))
    return fm, gprime, c, sset, weighted


def run_tccp(cfg: RunConfig, log, profiles, test: TestSet | None = None) -> TccpResult:
    cfg.validate()
    if cfg.mode != "tccp":
        raise ConfigError(f"run_tccp needs mode 'tccp', got {cfg.mode!r}")
    fm, gprime, c, sset, weighted = train_tccp(cfg, log, profiles)
    if test is None:
        with _stage("build_test_set"):
            test = build_test_set(log, profiles, cfg.window.ref_time, cfg.window.cp,
                                  cfg.window.lookbacks, cfg.dim)
    with _stage("evaluate"):
        row = evaluate(churn_scores(fm, test), test.labels, "tccp",
                       f"OP={cfg.window.op}")
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sample_set(sset, out / "sample_set_tccp.jsonl")
        write_weighted_set(weighted, out / "weighted_set.jsonl")
        write_model(gprime, out / "model_gprime.json", cfg=cfg.train, c=c)
        write_model(fm, out / "model_tccp.json", cfg=cfg.train, c=c)
    return TccpResult(model=fm, gprime=gprime, c=c, row=row, sample_set=sset)


def run_supervised(cfg: RunConfig, log, profiles, test: TestSet | None = None) -> SupervisedResult:
    cfg.validate()
    if cfg.mode not in ("supervised_lr", "supervised_fm"):
        raise ConfigError(f"run_supervised needs a supervised mode, got {cfg.mode!r}")
    dim = cfg.dim or default_dim(cfg.window.lookbacks)
    sset = featurized_window(log, profiles, cfg.window, dim)
    if not sset.N:
        raise DataError(
            "fully labeled window produced no negatives; check the window placement"
        )
    data = plain_training_set(sset.P, sset.N, dim)
    train_cfg = replace(cfg.train, seed=_derive_seed(cfg.seed, _SUPERVISED_STREAM))
    with _stage("fit_supervised"):
        if cfg.mode == "supervised_lr":
            model = lr_train(data, train_cfg)
        else:
            model = fm_train(data, train_cfg)
    if test is None:
        with _stage("build_test_set"):
            test = build_test_set(log, profiles, cfg.window.ref_time, cfg.window.cp,
                                  cfg.window.lookbacks, cfg.dim)
    with _stage("evaluate"):
        row = evaluate(churn_scores(model, test), test.labels, cfg.mode, "-")
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sample_set(sset, out / f"sample_set_{cfg.mode}.jsonl")
        write_model(model, out / f"model_{cfg.mode}.json", cfg=cfg.train)
    return SupervisedResult(model=model, row=row, sample_set=sset)


def _rule_scores(mode: str, log, test: TestSet, anchor: int, threshold: int,
                 days: int) -> np.ndarray:
    if mode == "rule_recency":
        since, has = days_since_last_login(log, test.users, anchor)
        since = np.where(has, since, 10 ** 6)
        return recency_predict(since, threshold).astype(float)
    counts = login_counts(log, test.users, anchor - days * DAY, anchor)
    return frequency_predict(counts, threshold).astype(float)


def run_rule(cfg: RunConfig, log, profiles, test: TestSet | None = None) -> EvalRow:
    cfg.validate()
    if cfg.mode not in ("rule_recency", "rule_frequency"):
        raise ConfigError(f"run_rule needs a rule mode, got {cfg.mode!r}")
    anchor = cfg.window.ref_time
    if test is None:
        test = build_test_set(log, profiles, anchor, cfg.window.cp,
                              cfg.window.lookbacks, cfg.dim)
    scores = _rule_scores(cfg.mode, log, test, anchor, cfg.rule_threshold, cfg.rule_days)
    if np.all(scores == scores[0]):
        raise DataError(
            f"rule threshold {cfg.rule_threshold} is degenerate on this window: "
            "every prediction is identical, AUC is undefined"
        )
    if cfg.mode == "rule_recency":
        method, params = "recency_rule", f"L={cfg.rule_threshold}"
    else:
        method, params = "frequency_rule", f"M={cfg.rule_threshold}, D={cfg.rule_days}"
    return evaluate(scores, test.labels, method, params)


def rule_curve(mode: str, log, test: TestSet, anchor: int, grid,
               days: int = 15) -> list[tuple[int, float]]:
    """AUC per rule threshold on a shared test set; degenerate points skipped."""
    out = []
    for threshold in grid:
        scores = _rule_scores(mode, log, test, anchor, threshold, days)
        if np.all(scores == scores[0]):
            continue
        out.append((int(threshold), auc(scores, test.labels)))
    return out


def sweep_op(log, profiles, ops, cp: int, anchor: int, train_cfg: TrainConfig,
             seed: int = 0, lookbacks=(7, 15, 30), dim: int | None = None,
             test: TestSet | None = None) -> list[tuple[int, float]]:
    """Train per observation period on common-end windows; evaluate on the
    shared full-churn-period test window. Periods >= cp degenerate to
    supervised training."""
    if test is None:
        test = build_test_set(log, profiles, anchor, cp, lookbacks, dim)
    out = []
    for op in ops:
        window = WindowSpec(ref_time=anchor, op=int(op), cp=cp, lookbacks=lookbacks)
        if op < cp:
            cfg = RunConfig(mode="tccp", window=window, train=train_cfg,
                            dim=dim, seed=seed)
            row = run_tccp(cfg, log, profiles, test=test).row
        else:
            cfg = RunConfig(mode="supervised_fm", window=window, train=train_cfg,
                            dim=dim, seed=seed)
            row = run_supervised(cfg, log, profiles, test=test).row
        out.append((int(op), row.auc))
    return out


@dataclass
class ComparisonResult:
    report: EvalReport
    recency_curve: list[tuple[int, float]]
    frequency_curve: list[tuple[int, float]]
    test: TestSet


def run_comparison(log, profiles, anchor: int, cp: int, train_cfg: TrainConfig,
                   seed: int = 0, op_tccp: int = 15, lookbacks=(7, 15, 30),
                   dim: int | None = None, out_dir: Path | None = None,
                   recency_grid=RECENCY_GRID, frequency_grid=FREQUENCY_GRID,
                   rule_days: int = 15) -> ComparisonResult:
    """The five-method comparison on one log: rules at their best grid
    point, both supervised trainers on the stale full-label window, and the
    PU pipeline on the recent short window."""
    test = build_test_set(log, profiles, anchor, cp, lookbacks, dim)
    rows: list[EvalRow] = []

    rec = rule_curve("rule_recency", log, test, anchor, recency_grid)
    if rec:
        best_l, best_auc = max(rec, key=lambda t: t[1])
        rows.append(EvalRow("recency_rule", f"L={best_l}", best_auc,
                            int(test.labels.sum()), int((1 - test.labels).sum())))
    freq = rule_curve("rule_frequency", log, test, anchor, frequency_grid, rule_days)
    if freq:
        best_m, best_auc = max(freq, key=lambda t: t[1])
        rows.append(EvalRow("frequency_rule", f"M={best_m}, D={rule_days}", best_auc,
                            int(test.labels.sum()), int((1 - test.labels).sum())))

    full = WindowSpec(ref_time=anchor, op=cp, cp=cp, lookbacks=lookbacks)
    for mode in ("supervised_lr", "supervised_fm"):
        cfg = RunConfig(mode=mode, window=full, train=train_cfg, dim=dim,
                        seed=seed, out_dir=out_dir)
        rows.append(run_supervised(cfg, log, profiles, test=test).row)

    short = WindowSpec(ref_time=anchor, op=op_tccp, cp=cp, lookbacks=lookbacks)
    tccp_cfg = RunConfig(mode="tccp", window=short, train=train_cfg, dim=dim,
                         seed=seed, out_dir=out_dir)
    rows.append(run_tccp(tccp_cfg, log, profiles, test=test).row)

    report = EvalReport(rows=rows, ref=test.ref)
    return ComparisonResult(report=report, recency_curve=rec,
                            frequency_curve=freq, test=test)
