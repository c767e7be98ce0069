"""Command-line surface: simulate, featurize, train, evaluate, sweep,
report, and the one-shot reproduce experiment.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
divergence.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np

from . import config as cfgmod
from .data import (
    DAY, read_event_log, read_profiles, read_sample_set, write_event_log,
    write_profiles, write_sample_set, write_truths,
)
from .errors import ConfigError, DataError, DivergenceError, PuChurnError
from .features import WindowSpec, default_dim, extract_features, label_window, select_candidates
from .metrics import EvalReport, EvalRow, evaluate, read_report, write_report
from .models import fm_predict, lr_predict, read_model
from .pipeline import (
    DEFAULT_OPS, RunConfig, build_test_set, churn_scores, run_comparison,
    run_rule, run_supervised, run_tccp, simulate_bundle, sweep_op,
)
from .sim import truths_to_map

_EXIT_CODES = ((ConfigError, 2), (DataError, 3), (DivergenceError, 4))


def _fail_with_code(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except PuChurnError as exc:
            for kind, code in _EXIT_CODES:
                if isinstance(exc, kind):
                    click.echo(f"error: {exc}", err=True)
                    raise SystemExit(code)
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(3)
    return wrapper


def _load_cfg(config_path, **flags) -> dict:
    base = cfgmod.parse_config(config_path) if config_path else cfgmod.defaults()
    return cfgmod.merge(base, flags)


@click.group()
def cli():
    """Positive-unlabeled learning toolkit for time-sensitive churn prediction."""


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Key-value config file; flags override it.")
@click.option("--users", type=int, default=None)
@click.option("--start", "t_start", type=int, default=None, help="Log horizon start (epoch s).")
@click.option("--end", "t_end", type=int, default=None, help="Log horizon end (epoch s).")
@click.option("--drift", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out-events", type=click.Path(), required=True)
@click.option("--out-profiles", type=click.Path(), required=True)
@click.option("--out-truth", type=click.Path(), required=True)
@_fail_with_code
def simulate(config_path, users, t_start, t_end, drift, seed,
             out_events, out_profiles, out_truth):
    """Generate a synthetic population and its event log."""
    cfg = _load_cfg(config_path, users=users, drift=drift, seed=seed)
    sim_cfg = cfgmod.sim_config_from(cfg)
    if t_start is not None or t_end is not None:
        from dataclasses import replace
        sim_cfg = replace(
            sim_cfg,
            t_start=t_start if t_start is not None else sim_cfg.t_start,
            t_end=t_end if t_end is not None else sim_cfg.t_end,
        )
    log, profiles, truths = simulate_bundle(sim_cfg)
    write_event_log(log, out_events)
    write_profiles(profiles, out_profiles)
    write_truths(truths_to_map(truths), out_truth)
    click.echo(f"simulated {len(profiles)} users, {len(log)} events "
               f"over [{sim_cfg.t_start}, {sim_cfg.t_end})")


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--events", type=click.Path(exists=True), required=True)
@click.option("--profiles", "profiles_path", type=click.Path(exists=True), required=True)
@click.option("--ref-time", type=int, default=None, help="Window end anchor (epoch s).")
@click.option("--op", type=int, default=None)
@click.option("--cp", type=int, default=None)
@click.option("--lookbacks", type=str, default=None, help="Comma-separated day counts.")
@click.option("--dim", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@_fail_with_code
def featurize(config_path, events, profiles_path, ref_time, op, cp, lookbacks,
              dim, out_path):
    """Label one window and attach features, writing a sample set."""
    cfg = _load_cfg(config_path, anchor=ref_time, op=op, cp=cp,
                    lookbacks=lookbacks, dim=dim)
    log = read_event_log(events)
    profiles = read_profiles(profiles_path)
    spec = WindowSpec(ref_time=cfg["anchor"], op=cfg["op"], cp=cfg["cp"],
                      lookbacks=cfg["lookbacks"])
    sel_time = spec.ref_time - spec.op * DAY
    candidates = select_candidates(log, profiles, sel_time)
    membership = label_window(log, candidates, spec)
    feats = extract_features(log, profiles, candidates, sel_time,
                             spec.lookbacks, cfg["dim"])
    sset = membership.with_features(feats, cfg["dim"])
    write_sample_set(sset, out_path)
    click.echo(f"wrote {sset.n_rows} rows (|P|={len(sset.P)}, |U|={len(sset.U)}, "
               f"|N|={len(sset.N)}) to {out_path}")


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--mode", type=click.Choice(["tccp", "lr", "fm"]), required=True)
@click.option("--events", type=click.Path(exists=True), required=True)
@click.option("--profiles", "profiles_path", type=click.Path(exists=True), required=True)
@click.option("--ref-time", type=int, default=None)
@click.option("--op", type=int, default=None)
@click.option("--cp", type=int, default=None)
@click.option("--c-method", type=click.Choice(["e1", "e2", "e3", "historical"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--out-dir", type=click.Path(), default=None)
@_fail_with_code
def train(config_path, mode, events, profiles_path, ref_time, op, cp, c_method,
          seed, epochs, learning_rate, out_dir):
    """Train one method on its window and report its test AUC."""
    cfg = _load_cfg(config_path, anchor=ref_time, op=op, cp=cp, c_method=c_method,
                    seed=seed, epochs=epochs, learning_rate=learning_rate,
                    out_dir=out_dir)
    log = read_event_log(events)
    profiles = read_profiles(profiles_path)
    train_cfg = cfgmod.train_config_from(cfg)
    out = Path(cfg["out_dir"])
    if mode == "tccp":
        window = WindowSpec(cfg["anchor"], cfg["op"], cfg["cp"], cfg["lookbacks"])
        run_cfg = RunConfig(mode="tccp", window=window, train=train_cfg,
                            c_method=cfg["c_method"], c_holdout=cfg["c_holdout"],
                            dim=cfg["dim"], seed=cfg["seed"], out_dir=out)
        result = run_tccp(run_cfg, log, profiles)
        click.echo(f"c = {result.c.value:.4f} ({result.c.method}, "
                   f"support {result.c.support})")
        row = result.row
    else:
        window = WindowSpec(cfg["anchor"], cfg["cp"], cfg["cp"], cfg["lookbacks"])
        run_cfg = RunConfig(mode=f"supervised_{mode}", window=window, train=train_cfg,
                            dim=cfg["dim"], seed=cfg["seed"], out_dir=out)
        row = run_supervised(run_cfg, log, profiles).row
    report = EvalReport(rows=[row], ref=f"test@{cfg['anchor']}+{cfg['cp']}d")
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out_json=out / f"row_{row.method}.json")
    click.echo(report.to_table())


@cli.command("evaluate")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--events", type=click.Path(exists=True), required=True)
@click.option("--profiles", "profiles_path", type=click.Path(exists=True), required=True)
@click.option("--ref-time", type=int, default=None, help="Evaluation anchor (epoch s).")
@click.option("--cp", type=int, default=None)
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--rule", type=click.Choice(["recency", "frequency"]), default=None)
@click.option("--threshold", type=int, default=None, help="Rule parameter L or M.")
@click.option("--days", type=int, default=None, help="Frequency-rule window D.")
@click.option("--out-json", type=click.Path(), default=None)
@click.option("--out-table", type=click.Path(), default=None)
@_fail_with_code
def evaluate_cmd(config_path, events, profiles_path, ref_time, cp, model_path,
                 rule, threshold, days, out_json, out_table):
    """Score a saved model or a rule on the fully labeled test window."""
    cfg = _load_cfg(config_path, anchor=ref_time, cp=cp, rule_threshold=threshold,
                    rule_days=days)
    if (model_path is None) == (rule is None):
        raise ConfigError("pass exactly one of --model or --rule")
    log = read_event_log(events)
    profiles = read_profiles(profiles_path)
    anchor = cfg["anchor"]
    if rule is not None:
        window = WindowSpec(anchor, cfg["cp"], cfg["cp"], cfg["lookbacks"])
        run_cfg = RunConfig(mode=f"rule_{rule}", window=window,
                            rule_threshold=cfg["rule_threshold"],
                            rule_days=cfg["rule_days"], dim=cfg["dim"])
        row = run_rule(run_cfg, log, profiles)
    else:
        model, _meta = read_model(model_path)
        test = build_test_set(log, profiles, anchor, cfg["cp"],
                              cfg["lookbacks"], cfg["dim"])
        name = "supervised_fm" if type(model).__name__ == "FMModel" else "supervised_lr"
        row = evaluate(churn_scores(model, test), test.labels, name, "-")
    report = EvalReport(rows=[row], ref=f"test@{anchor}+{cfg['cp']}d")
    write_report(report, out_json=out_json, out_table=out_table)
    click.echo(report.to_table())


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--events", type=click.Path(exists=True), required=True)
@click.option("--profiles", "profiles_path", type=click.Path(exists=True), required=True)
@click.option("--ref-time", type=int, default=None)
@click.option("--ops", type=str, default="3,7,15,30,60,90",
              help="Comma-separated observation periods to sweep.")
@click.option("--cp", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="CSV of op,auc rows.")
@_fail_with_code
def sweep(config_path, events, profiles_path, ref_time, ops, cp, seed, out_path):
    """Train per observation period and write the AUC curve."""
    cfg = _load_cfg(config_path, anchor=ref_time, cp=cp, seed=seed)
    log = read_event_log(events)
    profiles = read_profiles(profiles_path)
    op_list = [int(x) for x in ops.split(",") if x.strip()]
    curve = sweep_op(log, profiles, op_list, cfg["cp"], cfg["anchor"],
                     cfgmod.train_config_from(cfg), seed=cfg["seed"],
                     lookbacks=cfg["lookbacks"], dim=cfg["dim"])
    with open(out_path, "w", encoding="utf-8") as f:
        f.write("op,auc\n")
        for op, score in curve:
            f.write(f"{op},{score:.6f}\n")
    for op, score in curve:
        click.echo(f"OP={op:>3}: AUC {score:.4f}")


@cli.command()
@click.option("--rows", "row_paths", type=click.Path(exists=True), multiple=True,
              required=True, help="Report JSON files to merge.")
@click.option("--out-json", type=click.Path(), default=None)
@click.option("--out-table", type=click.Path(), default=None)
@_fail_with_code
def report(row_paths, out_json, out_table):
    """Merge per-method report rows into one comparison table."""
    rows: list[EvalRow] = []
    ref = ""
    for path in row_paths:
        part = read_report(path)
        rows.extend(part.rows)
        ref = ref or part.ref
    merged = EvalReport(rows=rows, ref=ref)
    write_report(merged, out_json=out_json, out_table=out_table)
    click.echo(merged.to_table())


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--users", type=int, default=None)
@click.option("--drift", type=float, default=None)
@click.option("--op", type=int, default=None, help="Observation period for the PU run.")
@click.option("--epochs", type=int, default=None)
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--skip-events-file", is_flag=True, default=False,
              help="Skip writing the (large) simulated event log.")
@_fail_with_code
def reproduce(config_path, seed, users, drift, op, epochs, out_dir, skip_events_file):
    """Simulate, run all five methods, sweep the observation period, and
    write the comparison table plus the sweep curve."""
    cfg = _load_cfg(config_path, seed=seed, users=users, drift=drift, op=op,
                    epochs=epochs, out_dir=out_dir)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.dump_config(cfg, out / "config.txt")

    sim_cfg = cfgmod.sim_config_from(cfg)
    log, profiles, truths = simulate_bundle(sim_cfg)
    click.echo(f"simulated {len(profiles)} users, {len(log)} events")
    if not skip_events_file:
        write_event_log(log, out / "events.jsonl")
    write_profiles(profiles, out / "profiles.jsonl")
    write_truths(truths_to_map(truths), out / "truth.jsonl")

    train_cfg = cfgmod.train_config_from(cfg)
    comparison = run_comparison(
        log, profiles, anchor=cfg["anchor"], cp=cfg["cp"], train_cfg=train_cfg,
        seed=cfg["seed"], op_tccp=cfg["op"], lookbacks=cfg["lookbacks"],
        dim=cfg["dim"], out_dir=out, rule_days=cfg["rule_days"],
    )
    write_report(comparison.report, out_json=out / "report.json",
                 out_table=out / "report.txt")

    curve = sweep_op(log, profiles, list(DEFAULT_OPS), cfg["cp"],
                     cfg["anchor"], train_cfg, seed=cfg["seed"],
                     lookbacks=cfg["lookbacks"], dim=cfg["dim"],
                     test=comparison.test)
    with open(out / "sweep.csv", "w", encoding="utf-8") as f:
        f.write("op,auc\n")
        for op_days, score in curve:
            f.write(f"{op_days},{score:.6f}\n")

    click.echo(comparison.report.to_table())
    click.echo("sweep (op -> auc): " + ", ".join(f"{o}->{a:.4f}" for o, a in curve))
    click.echo(f"artifacts in {out}")


def main():
    cli(prog_name="puchurn")


if __name__ == "__main__":
    main()
