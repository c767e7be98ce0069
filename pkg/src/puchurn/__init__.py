"""Positive-unlabeled learning toolkit for time-sensitive churn prediction."""

from .data import (
    DAY, Event, EventLog, FeatureVector, Profile, SampleSet, WeightedInstance,
    read_event_log, read_profiles, read_sample_set, read_truths,
    write_event_log, write_profiles, write_sample_set, write_truths,
)
from .errors import ConfigError, DataError, DivergenceError, PuChurnError
from .features import (
    WindowSpec, cross, default_dim, extract_features, label_window,
    select_candidates,
)
from .metrics import EvalReport, EvalRow, auc, evaluate, frequency_predict, recency_predict
from .models import (
    FMModel, LogisticModel, PlattParams, TrainConfig, fm_predict, fm_train,
    lr_predict, lr_train, platt_apply, platt_fit, posterior_probability,
    read_model, write_model,
)
from .pipeline import (
    RunConfig, build_test_set, run_comparison, run_rule, run_supervised,
    run_tccp, simulate_bundle, sweep_op,
)
from .sim import SimConfig, UserTruth, generate_population, ground_truth_labels, simulate_events
from .weighting import (
    LabelFrequency, WeightedTrainingSet, build_weighted_training_set,
    compute_weight, estimate_c_from_counts, estimate_c_max, estimate_c_mean,
    estimate_c_ratio, read_weighted_set, write_weighted_set,
)

__version__ = "0.1.0"
