"""Verification scoring and selection-quality metrics.

EER is found on the threshold axis: false-accept and false-reject rates
are evaluated at every distinct score (acceptance rule: score >= t), and
when the two rates cross between adjacent operating points the crossing
is located by linear interpolation. The resulting rate depends only on
the score ordering, so any strictly increasing transform of the scores
leaves it unchanged.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError, SampleNotFoundError, ShapeError
from .dataset import NoisyCorpus, TrialList
from .model import ModelState, embed_batch
from .selector import Decision

_SIG_DIGITS = 6


def format_metric(value: float | None) -> str:
    """Serialize a metric with 6 significant digits; absent values are empty."""
    return "" if value is None else f"{value:.{_SIG_DIGITS}g}"


@dataclass
class ScoredTrials:
    """Trial scores aligned with their target/nontarget flags."""

    scores: np.ndarray
    is_target: np.ndarray

    def __post_init__(self) -> None:
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.is_target = np.asarray(self.is_target, dtype=bool)
        if self.scores.ndim != 1 or self.is_target.ndim != 1:
            raise ShapeError("scores and is_target must be 1-D arrays")
        if self.scores.shape != self.is_target.shape:
            raise InputError(
                f"scores and flags disagree in length: "
                f"{self.scores.shape[0]} vs {self.is_target.shape[0]}"
            )

    def __len__(self) -> int:
        return int(self.scores.shape[0])


@dataclass
class SelectionReport:
    """How well a clean/noisy split matches the ground-truth corruption flags.

    Precision is the clean fraction of the selected set and is undefined
    (None) when nothing was selected; recall is the selected fraction of
    all clean samples.
    """

    num_selected: int
    num_selected_clean: int
    num_clean_total: int
    precision: float | None
    recall: float | None


def score_trials(state: ModelState, test_corpus: NoisyCorpus, trials: TrialList) -> ScoredTrials:
    """Cosine-score every trial with the model's embeddings.

    Output order matches the trial list. Trials referencing samples the
    corpus does not hold raise ``SampleNotFoundError``.
    """
    n = test_corpus.num_samples
    if len(trials) == 0:
        raise InputError("empty trial list cannot be scored")
    ids = sorted({t[0] for t in trials.trials} | {t[1] for t in trials.trials})
    for sid in ids:
        if not (0 <= sid < n):
            raise SampleNotFoundError(f"trial references sample {sid}, corpus holds [0, {n})")
    X = np.stack([test_corpus.samples[sid].features for sid in ids])
    E = embed_batch(state, X)
    norms = np.sqrt((E**2).sum(axis=1, keepdims=True))
    if np.any(norms == 0.0):
        raise InputError("a trial sample embeds to the zero vector; cosine undefined")
    U = E / norms
    row_of = {sid: i for i, sid in enumerate(ids)}
    a_idx = np.array([row_of[a] for a, _, _ in trials.trials])
    b_idx = np.array([row_of[b] for _, b, _ in trials.trials])
    scores = (U[a_idx] * U[b_idx]).sum(axis=1)
    is_target = np.array([t for _, _, t in trials.trials], dtype=bool)
    return ScoredTrials(scores=scores, is_target=is_target)


def compute_eer(scored: ScoredTrials) -> tuple[float, float]:
    """Equal error rate and the threshold where it occurs.

    Thresholds sweep the distinct scores (plus sentinels past both ends);
    a trial is accepted when its score is >= the threshold. FAR falls and
    FRR rises with the threshold; the crossing is interpolated linearly
    between the bracketing operating points.
    """
    targets = np.sort(scored.scores[scored.is_target])
    nontargets = np.sort(scored.scores[~scored.is_target])
    if targets.size == 0 or nontargets.size == 0:
        raise InputError("EER needs at least one target and one nontarget trial")
    distinct = np.unique(scored.scores)
    thresholds = np.concatenate(([distinct[0] - 1.0], distinct, [distinct[-1] + 1.0]))
    far = (nontargets.size - np.searchsorted(nontargets, thresholds, side="left")) / nontargets.size
    frr = np.searchsorted(targets, thresholds, side="left") / targets.size
    diff = far - frr
    # diff starts at +1, ends at -1, and never increases
    idx = int(np.argmax(diff <= 0.0))
    if diff[idx] == 0.0:
        return float(far[idx]), float(thresholds[idx])
    lam = diff[idx - 1] / (diff[idx - 1] - diff[idx])
    eer = far[idx - 1] + lam * (far[idx] - far[idx - 1])
    threshold = thresholds[idx - 1] + lam * (thresholds[idx] - thresholds[idx - 1])
    return float(eer), float(threshold)


def selection_metrics(decisions, corpus: NoisyCorpus) -> SelectionReport:
    """Precision/recall of a clean/noisy split against the corpus flags.

    ``decisions`` may be a boolean mask (True = selected as clean) or a
    sequence of ``Decision`` values, one per sample in corpus order.
    """
    n = corpus.num_samples
    if isinstance(decisions, np.ndarray) and decisions.dtype == bool:
        selected = decisions
    else:
        decisions = list(decisions)
        if all(isinstance(d, Decision) for d in decisions):
            selected = np.array([d is Decision.CLEAN for d in decisions], dtype=bool)
        else:
            selected = np.asarray(decisions, dtype=bool)
    if selected.shape != (n,):
        raise InputError(f"decisions must cover all {n} samples, got shape {selected.shape}")
    clean = ~corpus.corrupted_mask()
    num_selected = int(selected.sum())
    num_selected_clean = int((selected & clean).sum())
    num_clean_total = int(clean.sum())
    precision = None if num_selected == 0 else num_selected_clean / num_selected
    recall = None if num_clean_total == 0 else num_selected_clean / num_clean_total
    return SelectionReport(
        num_selected=num_selected,
        num_selected_clean=num_selected_clean,
        num_clean_total=num_clean_total,
        precision=precision,
        recall=recall,
    )
