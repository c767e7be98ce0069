"""Synthetic draws under selected-completely-at-random labeling.

Used to check label-frequency estimators and posterior calibration against
exact generative truth. The construction keeps two things true at once:

* the labeled-vs-rest probability is an exact sigmoid of the feature, so a
  logistic scorer is correctly specified, and
* the positive posterior is almost always near 0 or 1, the regime in which
  the mean-of-positive-scores estimator is consistent.

A fraction of users sits at the "certain positive" point where the
labeling probability equals the label frequency exactly; the rest sit far
down the sigmoid where the positive posterior is negligible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit


@dataclass
class ScarDraw:
    x: np.ndarray          # (n, 2): informative feature and pure noise
    y: np.ndarray          # true class
    s: np.ndarray          # observed label (subset of y == 1)
    posterior: np.ndarray  # exact p(y=1 | x)
    p_labeled: np.ndarray  # exact p(s=1 | x) = c * posterior
    c: float


def make_scar_draw(n: int, c: float, seed: int = 0, certain_share: float = 0.55) -> ScarDraw:
    if not (0.0 < c <= 1.0):
        raise ValueError(f"label frequency must lie in (0, 1], got {c}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 61)))
    anchor = logit(c) if c < 1.0 else 36.0
    certain = rng.random(n) < certain_share
    v = np.where(certain, anchor, anchor - 5.0 - rng.exponential(2.0, n))
    p_labeled = expit(v)
    posterior = np.minimum(1.0, p_labeled / c)
    y = rng.random(n) < posterior
    s = y & (rng.random(n) < c)
    x = np.column_stack([v, rng.normal(0.0, 1.0, n)])
    return ScarDraw(x=x, y=y.astype(np.int64), s=s.astype(np.int64),
                    posterior=posterior, p_labeled=p_labeled, c=c)
