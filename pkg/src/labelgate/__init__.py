"""Noise-robust verification training on synthetic speaker corpora.

The package builds Gaussian-cluster corpora with symmetric label noise,
trains a margin-softmax embedding model in two stages (full training,
then backprop gated on a per-sample top-k match history), and evaluates
open-set verification with interpolated equal error rate.
"""

from .dataset import (
    CorpusConfig,
    NoisyCorpus,
    Sample,
    TrialList,
    generate_corpus,
    inject_symmetric_noise,
    load_corpus,
    load_trials,
    make_trials,
    save_corpus,
    save_trials,
)
from .errors import (
    ConfigurationError,
    FormatError,
    InputError,
    NumericError,
    ParseError,
    SampleNotFoundError,
    ShapeError,
    StateError,
)
from .metrics import (
    ScoredTrials,
    SelectionReport,
    compute_eer,
    score_trials,
    selection_metrics,
)
from .model import (
    ModelConfig,
    ModelState,
    OptimizerConfig,
    adam_step,
    am_softmax_backward,
    am_softmax_forward,
    cosine_score,
    embed,
    embed_batch,
    forward_batch,
    init_model,
    load_model,
    loss_and_gradients,
    lr_at_epoch,
    save_model,
)
from .selector import Decision, PredictionStore, SelfMovingAverage, topk_labels
from .trainer import (
    MODES,
    EpochLog,
    RunResult,
    TrainConfig,
    default_top_k,
    run_experiment,
    train_epoch_all,
    train_epoch_gated,
)
from .cli import (
    DEFAULT_MODES,
    DEFAULT_NOISE_RATES,
    ExperimentPlan,
    ResultRow,
    ResultsTable,
    default_plan,
    emit_tables,
    load_results,
    run_plan,
)

__version__ = "0.1.0"

__all__ = [
    "CorpusConfig",
    "NoisyCorpus",
    "Sample",
    "TrialList",
    "generate_corpus",
    "inject_symmetric_noise",
    "make_trials",
    "save_corpus",
    "load_corpus",
    "save_trials",
    "load_trials",
    "Decision",
    "PredictionStore",
    "SelfMovingAverage",
    "topk_labels",
    "ModelConfig",
    "OptimizerConfig",
    "ModelState",
    "init_model",
    "embed",
    "embed_batch",
    "am_softmax_forward",
    "am_softmax_backward",
    "forward_batch",
    "loss_and_gradients",
    "adam_step",
    "lr_at_epoch",
    "cosine_score",
    "save_model",
    "load_model",
    "ScoredTrials",
    "SelectionReport",
    "score_trials",
    "compute_eer",
    "selection_metrics",
    "MODES",
    "TrainConfig",
    "EpochLog",
    "RunResult",
    "default_top_k",
    "train_epoch_all",
    "train_epoch_gated",
    "run_experiment",
    "ExperimentPlan",
    "ResultsTable",
    "ResultRow",
    "DEFAULT_MODES",
    "DEFAULT_NOISE_RATES",
    "default_plan",
    "run_plan",
    "emit_tables",
    "load_results",
    "ConfigurationError",
    "StateError",
    "ShapeError",
    "NumericError",
    "ParseError",
    "FormatError",
    "InputError",
    "SampleNotFoundError",
]
