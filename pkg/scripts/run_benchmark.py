#!/usr/bin/env python3
"""Multi-seed benchmark: five-method comparison plus the OP sweep.

Prints per-seed AUCs, the TCCP margin over the best supervised model, the
learned-over-rules margin, and the shape of the sweep and rule curves.

    python3 scripts/run_benchmark.py --users 50000 --seeds 1-10 --drift 1.0
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from puchurn.data import DAY
from puchurn.models import TrainConfig
from puchurn.pipeline import DEFAULT_OPS, run_comparison, simulate_bundle, sweep_op
from puchurn.sim import SimConfig

DEFAULT_ANCHOR = 1_470_009_600


def parse_seeds(raw: str) -> list[int]:
    if "-" in raw:
        lo, hi = raw.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in raw.split(",")]


def is_unimodal(values) -> bool:
    peak = max(range(len(values)), key=values.__getitem__)
    rising = all(values[i] <= values[i + 1] for i in range(peak))
    falling = all(values[i] >= values[i + 1] for i in range(peak, len(values) - 1))
    return rising and falling


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--users", type=int, default=50_000)
    ap.add_argument("--seeds", type=parse_seeds, default=parse_seeds("1-10"))
    ap.add_argument("--drift", type=float, default=1.0)
    ap.add_argument("--cp", type=int, default=90)
    ap.add_argument("--op", type=int, default=15)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--sweep", action="store_true", help="also run the OP sweep")
    args = ap.parse_args()

    margins, rule_margins = [], []
    t_all = time.time()
    for seed in args.seeds:
        t0 = time.time()
        sim = SimConfig(
            n_users=args.users,
            t_start=DEFAULT_ANCHOR - 150 * DAY,
            t_end=DEFAULT_ANCHOR + args.cp * DAY,
            drift_strength=args.drift,
            seed=seed,
        )
        log, profiles, truths = simulate_bundle(sim)
        train_cfg = TrainConfig(seed=seed, epochs=args.epochs)
        res = run_comparison(log, profiles, DEFAULT_ANCHOR, args.cp, train_cfg,
                             seed=seed, op_tccp=args.op)
        by_method = {r.method: r.auc for r in res.report.rows}
        tccp = by_method["tccp"]
        sup = max(by_method["supervised_lr"], by_method["supervised_fm"])
        rules = max(by_method.get("recency_rule", 0), by_method.get("frequency_rule", 0))
        learned_min = min(by_method["supervised_lr"], by_method["supervised_fm"], tccp)
        margins.append(tccp - sup)
        rule_margins.append(learned_min - rules)
        rec = [a for _, a in res.recency_curve]
        freq = [a for _, a in res.frequency_curve]
        line = (f"seed {seed:>2}: tccp={tccp:.4f} lr={by_method['supervised_lr']:.4f} "
                f"fm={by_method['supervised_fm']:.4f} rules={rules:.4f} "
                f"margin={tccp - sup:+.4f} rule_margin={learned_min - rules:+.4f} "
                f"rec_unimodal={is_unimodal(rec)} freq_mono="
                f"{all(a >= b for a, b in zip(freq, freq[1:]))}")
        if args.sweep:
            curve = sweep_op(log, profiles, list(DEFAULT_OPS), args.cp,
                             DEFAULT_ANCHOR, train_cfg, seed=seed, test=res.test)
            aucs = [a for _, a in curve]
            peak = max(range(len(aucs)), key=aucs.__getitem__)
            line += (f" sweep={['%.3f' % a for a in aucs]} peak_op={curve[peak][0]}"
                     f" d90={aucs[-1] - by_method['supervised_fm']:+.4f}")
        print(line + f"  [{time.time() - t0:.1f}s]", flush=True)

    n = len(margins)
    print(f"\nmargin mean {sum(margins) / n:+.4f}  >=0.01 in "
          f"{sum(m >= 0.01 for m in margins)}/{n} seeds")
    print(f"rule margin mean {sum(rule_margins) / n:+.4f}  >=0.05 in "
          f"{sum(m >= 0.05 for m in rule_margins)}/{n} seeds")
    print(f"total {time.time() - t_all:.0f}s")


if __name__ == "__main__":
    main()
