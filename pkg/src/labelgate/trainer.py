"""Two-stage training with selective backpropagation.

Every run starts with ``early_epochs`` of training on all samples while
their top-k prediction sets are recorded. From then on each epoch splits
the corpus: samples whose observed label has matched a past prediction
set train normally, the rest get a forward pass only (their predictions
keep being recorded, so they can be admitted later). The ``baseline``
mode trains on everything throughout; ``self_baseline`` gates on the
moving-average argmax instead of the top-k match history.

Recorded predictions always come from the same forward pass the loss
uses, so the margin penalty on the observed label applies to them, and
a forward-only sample influences nothing but its own record.
"""

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import NoisyCorpus, TrialList
from .errors import ConfigurationError
from .metrics import compute_eer, format_metric, score_trials, selection_metrics
from .model import (
    ModelConfig,
    ModelState,
    OptimizerConfig,
    adam_step,
    forward_batch,
    init_model,
    loss_and_gradients,
    lr_at_epoch,
    save_model,
)
from .selector import PredictionStore, SelfMovingAverage

logger = logging.getLogger(__name__)

MODES = ("baseline", "orgate", "orgate_no_early", "orgate_k1", "self_baseline")

# top-k defaults to about 7% of the number of classes, which is the ratio
# that transfers across corpus sizes
_TOP_K_FRACTION = 0.07


def default_top_k(num_classes: int) -> int:
    return max(1, round(_TOP_K_FRACTION * num_classes))


@dataclass
class TrainConfig:
    """Everything a single run needs besides the data.

    ``early_epochs`` is the length of the train-on-everything stage and
    ``top_k`` the size of the recorded prediction sets (default: about 7%
    of the classes). The ablation modes override these: mode
    ``orgate_no_early`` forces ``early_epochs = 0`` and ``orgate_k1``
    forces ``top_k = 1``.
    """

    mode: str
    model: ModelConfig
    optimizer: OptimizerConfig = OptimizerConfig()
    early_epochs: int = 5
    top_k: int | None = None
    max_epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    self_momentum: float = 0.9

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.mode == "orgate_no_early":
            self.early_epochs = 0
        if self.mode == "orgate_k1":
            self.top_k = 1
        if self.top_k is None:
            self.top_k = default_top_k(self.model.num_classes)
        if self.max_epochs < 1:
            raise ConfigurationError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not (0 <= self.early_epochs < self.max_epochs):
            raise ConfigurationError(
                f"early_epochs must lie in [0, max_epochs), got {self.early_epochs}"
            )
        if not (1 <= self.top_k <= self.model.num_classes):
            raise ConfigurationError(
                f"top_k must lie in [1, {self.model.num_classes}], got {self.top_k}"
            )
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0.0 <= self.self_momentum <= 1.0):
            raise ConfigurationError(
                f"self_momentum must lie in [0, 1], got {self.self_momentum}"
            )


@dataclass
class EpochLog:
    """Per-epoch record of what was trained and how it scored."""

    epoch: int
    mean_training_loss: float | None
    num_selected: int
    num_rejected: int
    selection_precision: float | None
    selection_recall: float | None
    learning_rate: float
    eer_on_trials: float | None = None


@dataclass
class RunResult:
    """Outcome of one experiment: the full epoch trail plus final numbers."""

    config: TrainConfig
    epoch_logs: list[EpochLog]
    final_eer: float
    duration_seconds: float
    model_state: ModelState = field(repr=False)
    checkpoint_path: Path | None = None


@dataclass
class _Arrays:
    features: np.ndarray
    observed: np.ndarray


def _corpus_arrays(corpus: NoisyCorpus) -> _Arrays:
    return _Arrays(features=corpus.features_matrix(), observed=corpus.observed_labels())


def _epoch_pass(
    state: ModelState,
    arrays: _Arrays,
    train_mask: np.ndarray | None,
    epoch: int,
    lr: float,
    batch_size: int,
    shuffle_seed: int,
    optimizer: OptimizerConfig,
    store: PredictionStore | None,
    ma: SelfMovingAverage | None,
) -> float | None:
    """One pass over the corpus in seeded shuffled batches.

    Samples outside ``train_mask`` contribute no gradient: their batch
    members are trained as a compact sub-batch and they themselves only
    get a recorded forward pass. Both forwards happen before the update,
    so every recorded prediction is pre-update.
    """
    n = arrays.features.shape[0]
    rng = np.random.default_rng([int(shuffle_seed), int(epoch)])
    order = rng.permutation(n)
    total_loss = 0.0
    total_trained = 0
    for start in range(0, n, batch_size):
        batch = order[start : start + batch_size]
        if train_mask is None:
            train_ids = batch
            rest = batch[:0]
        else:
            mask = train_mask[batch]
            train_ids = batch[mask]
            rest = batch[~mask]
        grads = None
        if train_ids.size:
            losses, P, grads = loss_and_gradients(
                state, arrays.features[train_ids], arrays.observed[train_ids]
            )
            if store is not None:
                store.record_epoch_batch(train_ids, P, epoch)
            if ma is not None:
                ma.update_batch(train_ids, P)
            total_loss += float(losses.sum())
            total_trained += int(train_ids.size)
        if rest.size:
            _, P_rest = forward_batch(state, arrays.features[rest], arrays.observed[rest])
            if store is not None:
                store.record_epoch_batch(rest, P_rest, epoch)
            if ma is not None:
                ma.update_batch(rest, P_rest)
        if grads is not None:
            adam_step(state, grads, lr, optimizer)
    return total_loss / total_trained if total_trained else None


def train_epoch_all(
    state: ModelState,
    corpus: NoisyCorpus,
    store: PredictionStore | None,
    epoch: int,
    lr: float,
    *,
    batch_size: int = 64,
    shuffle_seed: int = 0,
    optimizer: OptimizerConfig = OptimizerConfig(),
    ma: SelfMovingAverage | None = None,
    arrays: _Arrays | None = None,
) -> EpochLog:
    """Train every sample with its observed label; record all predictions."""
    arrays = arrays if arrays is not None else _corpus_arrays(corpus)
    mean_loss = _epoch_pass(
        state, arrays, None, epoch, lr, batch_size, shuffle_seed, optimizer, store, ma
    )
    return EpochLog(
        epoch=epoch,
        mean_training_loss=mean_loss,
        num_selected=corpus.num_samples,
        num_rejected=0,
        selection_precision=None,
        selection_recall=None,
        learning_rate=lr,
    )


def _gated_pass(
    state: ModelState,
    corpus: NoisyCorpus,
    arrays: _Arrays,
    selected: np.ndarray,
    store: PredictionStore | None,
    epoch: int,
    lr: float,
    batch_size: int,
    shuffle_seed: int,
    optimizer: OptimizerConfig,
    ma: SelfMovingAverage | None,
) -> EpochLog:
    if not selected.any():
        logger.warning(
            "epoch %d: no samples selected; proceeding forward-only for all", epoch
        )
    mean_loss = _epoch_pass(
        state, arrays, selected, epoch, lr, batch_size, shuffle_seed, optimizer, store, ma
    )
    report = selection_metrics(selected, corpus)
    return EpochLog(
        epoch=epoch,
        mean_training_loss=mean_loss,
        num_selected=report.num_selected,
        num_rejected=corpus.num_samples - report.num_selected,
        selection_precision=report.precision,
        selection_recall=report.recall,
        learning_rate=lr,
    )


def train_epoch_gated(
    state: ModelState,
    corpus: NoisyCorpus,
    store: PredictionStore,
    epoch: int,
    lr: float,
    *,
    batch_size: int = 64,
    shuffle_seed: int = 0,
    optimizer: OptimizerConfig = OptimizerConfig(),
    ma: SelfMovingAverage | None = None,
    arrays: _Arrays | None = None,
) -> EpochLog:
    """Gate on the match history frozen at epoch start, then train the
    selected samples and forward the rest."""
    arrays = arrays if arrays is not None else _corpus_arrays(corpus)
    selected = store.decisions_at_epoch(arrays.observed, epoch)
    return _gated_pass(
        state, corpus, arrays, selected, store, epoch, lr,
        batch_size, shuffle_seed, optimizer, ma,
    )


def _evaluate(state, test_corpus, trials) -> float:
    scored = score_trials(state, test_corpus, trials)
    eer, _ = compute_eer(scored)
    return eer


def run_experiment(
    config: TrainConfig,
    corpus: NoisyCorpus,
    test_corpus: NoisyCorpus,
    trials: TrialList,
    *,
    eval_interval: int = 1,
    run_dir: str | Path | None = None,
) -> RunResult:
    """Run one mode end to end and return the full epoch trail.

    EER on the held-out trials is evaluated every ``eval_interval`` epochs
    and always at the last epoch. When ``run_dir`` is given, the config,
    per-epoch table, final checkpoint, and a result summary are written
    there.
    """
    if config.model.num_classes != corpus.num_classes:
        raise ConfigurationError(
            f"model expects {config.model.num_classes} classes, "
            f"corpus has {corpus.num_classes}"
        )
    if config.model.feature_dim != corpus.config.feature_dim:
        raise ConfigurationError(
            f"model expects {config.model.feature_dim}-dim features, "
            f"corpus provides {corpus.config.feature_dim}"
        )
    if eval_interval < 1:
        raise ConfigurationError(f"eval_interval must be >= 1, got {eval_interval}")

    start_time = time.perf_counter()
    state = init_model(config.model)
    arrays = _corpus_arrays(corpus)
    n = corpus.num_samples
    c = corpus.num_classes

    store: PredictionStore | None = None
    ma: SelfMovingAverage | None = None
    if config.mode in ("orgate", "orgate_no_early", "orgate_k1"):
        store = PredictionStore(n, c, config.top_k, observed_labels=arrays.observed)
    elif config.mode == "self_baseline":
        ma = SelfMovingAverage(n, c, config.self_momentum)

    logger.info(
        "run start: mode=%s n=%d classes=%d epochs=%d early=%d k=%d",
        config.mode, n, c, config.max_epochs, config.early_epochs, config.top_k,
    )
    logs: list[EpochLog] = []
    for epoch in range(config.max_epochs):
        lr = lr_at_epoch(config.optimizer, epoch)
        common = dict(
            batch_size=config.batch_size,
            shuffle_seed=config.seed,
            optimizer=config.optimizer,
            arrays=arrays,
        )
        if config.mode == "baseline":
            log = train_epoch_all(state, corpus, None, epoch, lr, **common)
        elif config.mode == "self_baseline":
            if epoch < config.early_epochs:
                log = train_epoch_all(state, corpus, None, epoch, lr, ma=ma, **common)
            else:
                selected = ma.decisions(arrays.observed, require_initialized=False)
                log = _gated_pass(
                    state, corpus, arrays, selected, None, epoch, lr,
                    config.batch_size, config.seed, config.optimizer, ma,
                )
        else:
            if epoch < config.early_epochs:
                log = train_epoch_all(state, corpus, store, epoch, lr, **common)
            else:
                log = train_epoch_gated(state, corpus, store, epoch, lr, **common)
        is_last = epoch == config.max_epochs - 1
        if is_last or (epoch + 1) % eval_interval == 0:
            log.eer_on_trials = _evaluate(state, test_corpus, trials)
        logs.append(log)
        logger.debug(
            "epoch %d: loss=%s selected=%d eer=%s",
            epoch, log.mean_training_loss, log.num_selected, log.eer_on_trials,
        )

    duration = time.perf_counter() - start_time
    final_eer = logs[-1].eer_on_trials
    assert final_eer is not None
    result = RunResult(
        config=config,
        epoch_logs=logs,
        final_eer=final_eer,
        duration_seconds=duration,
        model_state=state,
    )
    if run_dir is not None:
        result.checkpoint_path = _write_run_artifacts(Path(run_dir), result)
    logger.info("run done: mode=%s final_eer=%.4f (%.1fs)", config.mode, final_eer, duration)
    return result


_EPOCH_COLUMNS = (
    "epoch",
    "mean_training_loss",
    "num_selected",
    "num_rejected",
    "selection_precision",
    "selection_recall",
    "learning_rate",
    "eer_on_trials",
)


def write_epoch_table(logs: list[EpochLog], path: Path) -> None:
    """One CSV row per epoch; reals carry 6 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_EPOCH_COLUMNS)
        for log in logs:
            writer.writerow(
                [
                    log.epoch,
                    format_metric(log.mean_training_loss),
                    log.num_selected,
                    log.num_rejected,
                    format_metric(log.selection_precision),
                    format_metric(log.selection_recall),
                    format_metric(log.learning_rate),
                    format_metric(log.eer_on_trials),
                ]
            )


def read_epoch_table(path: Path) -> list[EpochLog]:
    """Parse a table written by ``write_epoch_table``."""
    logs = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            logs.append(
                EpochLog(
                    epoch=int(row["epoch"]),
                    mean_training_loss=float(row["mean_training_loss"])
                    if row["mean_training_loss"]
                    else None,
                    num_selected=int(row["num_selected"]),
                    num_rejected=int(row["num_rejected"]),
                    selection_precision=float(row["selection_precision"])
                    if row["selection_precision"]
                    else None,
                    selection_recall=float(row["selection_recall"])
                    if row["selection_recall"]
                    else None,
                    learning_rate=float(row["learning_rate"]),
                    eer_on_trials=float(row["eer_on_trials"]) if row["eer_on_trials"] else None,
                )
            )
    return logs


def _write_run_artifacts(run_dir: Path, result: RunResult) -> Path:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(asdict(result.config), indent=2) + "\n")
    write_epoch_table(result.epoch_logs, run_dir / "epochs.csv")
    checkpoint = run_dir / "checkpoint.npz"
    save_model(result.model_state, checkpoint)
    last = result.epoch_logs[-1]
    summary = {
        "mode": result.config.mode,
        "final_eer": float(format_metric(result.final_eer)),
        "final_precision": last.selection_precision,
        "final_recall": last.selection_recall,
        "num_epochs": len(result.epoch_logs),
        "duration_seconds": round(result.duration_seconds, 3),
    }
    (run_dir / "result.json").write_text(json.dumps(summary, indent=2) + "\n")
    return checkpoint
