"""Clean-sample selection state.

Two selection rules live here. The first records, for every sample and
every epoch, the set of k labels the model ranked highest; a sample is
judged clean as soon as its observed label has appeared in any past
epoch's set (an OR over the history, so the judgment is monotone). The
second keeps an exponential moving average of each sample's predicted
distribution and judges a sample clean when the average's argmax equals
the observed label.
"""

from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    NumericError,
    SampleNotFoundError,
    ShapeError,
    StateError,
)


class Decision(Enum):
    """Per-sample label judgment used to gate backpropagation."""

    CLEAN = "clean"
    NOISY = "noisy"


def _validate_probs(probabilities, num_classes: int | None = None) -> np.ndarray:
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 1:
        raise ShapeError(f"probabilities must be a 1-D vector, got shape {p.shape}")
    if num_classes is not None and p.shape[0] != num_classes:
        raise ShapeError(f"expected a length-{num_classes} vector, got length {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise NumericError("probabilities contain NaN or infinity")
    return p


def topk_labels(probabilities, k: int) -> set[int]:
    """Labels of the k largest probabilities; ties go to the lower index."""
    p = _validate_probs(probabilities)
    c = p.shape[0]
    if not (1 <= k <= c):
        raise ConfigurationError(f"k must lie in [1, {c}], got {k}")
    order = np.argsort(-p, kind="stable")
    return {int(i) for i in order[:k]}


def _topk_matrix(probabilities: np.ndarray, k: int) -> np.ndarray:
    """Row-wise top-k label indices (ties to the lower index), shape (B, k)."""
    if not np.all(np.isfinite(probabilities)):
        raise NumericError("probabilities contain NaN or infinity")
    return np.argsort(-probabilities, axis=1, kind="stable")[:, :k]


class PredictionStore:
    """Per-sample record of top-k prediction sets, one entry per epoch.

    By default only a compressed summary is kept: whether the sample's
    observed label has ever appeared in a recorded set, plus the epoch of
    the first such match. That summary answers the OR-over-history gate
    exactly. With ``retain_history=True`` the full sets are kept and the
    gate is answered by scanning them, which also allows querying labels
    other than the bound ones.
    """

    def __init__(
        self,
        num_samples: int,
        num_classes: int,
        k: int,
        observed_labels=None,
        retain_history: bool = False,
    ) -> None:
        if num_samples < 1:
            raise ConfigurationError(f"num_samples must be >= 1, got {num_samples}")
        if num_classes < 1:
            raise ConfigurationError(f"num_classes must be >= 1, got {num_classes}")
        if not (1 <= k <= num_classes):
            raise ConfigurationError(f"k must lie in [1, {num_classes}], got {k}")
        if observed_labels is None and not retain_history:
            raise ConfigurationError(
                "a compressed store needs observed_labels; "
                "pass them or set retain_history=True"
            )
        self.num_samples = num_samples
        self.num_classes = num_classes
        self.k = k
        self.retain_history = retain_history
        self._labels: np.ndarray | None = None
        if observed_labels is not None:
            labels = np.asarray(observed_labels, dtype=np.int64)
            if labels.shape != (num_samples,):
                raise ShapeError(
                    f"observed_labels must have shape ({num_samples},), got {labels.shape}"
                )
            if labels.min() < 0 or labels.max() >= num_classes:
                raise ConfigurationError("observed_labels contain values outside [0, num_classes)")
            self._labels = labels
        self._epochs = np.zeros(num_samples, dtype=np.int64)
        self._history: list[list[np.ndarray]] | None = (
            [[] for _ in range(num_samples)] if retain_history else None
        )
        if self._labels is not None:
            self._matched = np.zeros(num_samples, dtype=bool)
            self._first_match = np.full(num_samples, -1, dtype=np.int64)

    def _check_sample(self, sample_id: int) -> int:
        sid = int(sample_id)
        if not (0 <= sid < self.num_samples):
            raise SampleNotFoundError(f"sample id {sample_id} not in [0, {self.num_samples})")
        return sid

    @property
    def num_epochs_recorded(self) -> int:
        """Number of fully recorded epochs (the minimum across samples)."""
        return int(self._epochs.min())

    def epochs_recorded(self, sample_id: int) -> int:
        return int(self._epochs[self._check_sample(sample_id)])

    def record_epoch(self, sample_id: int, probabilities, epoch: int) -> None:
        """Append one sample's prediction for ``epoch``.

        Epochs must arrive in order 0, 1, 2, ... per sample; anything else,
        including a duplicate write, raises ``StateError`` and leaves the
        store unchanged.
        """
        sid = self._check_sample(sample_id)
        p = _validate_probs(probabilities, self.num_classes)
        expected = int(self._epochs[sid])
        if epoch != expected:
            raise StateError(
                f"sample {sid}: epochs are append-only; expected epoch {expected}, got {epoch}"
            )
        top = np.argsort(-p, kind="stable")[: self.k]
        self._store_row(sid, top, epoch)

    def record_epoch_batch(self, sample_ids, probabilities, epoch: int) -> None:
        """Vectorized ``record_epoch`` over a batch of samples."""
        ids = np.asarray(sample_ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ShapeError(f"sample_ids must be 1-D, got shape {ids.shape}")
        if ids.size == 0:
            return
        if ids.min() < 0 or ids.max() >= self.num_samples:
            raise SampleNotFoundError("sample_ids contain ids outside the corpus")
        P = np.asarray(probabilities, dtype=np.float64)
        if P.shape != (ids.size, self.num_classes):
            raise ShapeError(
                f"probabilities must have shape ({ids.size}, {self.num_classes}), got {P.shape}"
            )
        bad = self._epochs[ids] != epoch
        if bad.any():
            sid = int(ids[bad][0])
            raise StateError(
                f"sample {sid}: epochs are append-only; "
                f"expected epoch {int(self._epochs[sid])}, got {epoch}"
            )
        tops = _topk_matrix(P, self.k)
        if self._history is not None:
            for row, sid in enumerate(ids):
                self._history[int(sid)].append(tops[row].copy())
        if self._labels is not None:
            hit = (tops == self._labels[ids, None]).any(axis=1)
            new = hit & ~self._matched[ids]
            new_ids = ids[new]
            self._matched[new_ids] = True
            self._first_match[new_ids] = epoch
        self._epochs[ids] = epoch + 1

    def _store_row(self, sid: int, top: np.ndarray, epoch: int) -> None:
        if self._history is not None:
            self._history[sid].append(top.copy())
        if self._labels is not None and not self._matched[sid]:
            if self._labels[sid] in top:
                self._matched[sid] = True
                self._first_match[sid] = epoch
        self._epochs[sid] = epoch + 1

    def or_gate_decision(self, sample_id: int, observed_label: int, epoch: int) -> Decision:
        """Clean iff ``observed_label`` appeared in any recorded set of an
        epoch strictly before ``epoch``. An empty history means noisy."""
        sid = self._check_sample(sample_id)
        if not (0 <= observed_label < self.num_classes):
            raise ConfigurationError(
                f"observed_label {observed_label} out of range [0, {self.num_classes})"
            )
        if epoch < 0:
            raise ConfigurationError(f"epoch must be nonnegative, got {epoch}")
        if epoch > self._epochs[sid]:
            raise StateError(
                f"sample {sid}: history holds {int(self._epochs[sid])} epochs; "
                f"cannot decide for epoch {epoch}"
            )
        if self._history is not None:
            hist = self._history[sid]
            matched = any(observed_label in hist[j] for j in range(epoch))
            return Decision.CLEAN if matched else Decision.NOISY
        assert self._labels is not None
        if observed_label != self._labels[sid]:
            raise ConfigurationError(
                f"compressed store is bound to observed label {int(self._labels[sid])} "
                f"for sample {sid}; cannot answer for label {observed_label}"
            )
        if self._matched[sid] and self._first_match[sid] < epoch:
            return Decision.CLEAN
        return Decision.NOISY

    def decisions_at_epoch(self, observed_labels, epoch: int) -> np.ndarray:
        """Boolean clean-mask over all samples for the start of ``epoch``."""
        labels = np.asarray(observed_labels, dtype=np.int64)
        if labels.shape != (self.num_samples,):
            raise ShapeError(
                f"observed_labels must have shape ({self.num_samples},), got {labels.shape}"
            )
        if (self._epochs < epoch).any():
            short = int(np.argmax(self._epochs < epoch))
            raise StateError(
                f"sample {short}: history holds {int(self._epochs[short])} epochs; "
                f"cannot decide for epoch {epoch}"
            )
        if self._history is None:
            assert self._labels is not None
            if not np.array_equal(labels, self._labels):
                raise ConfigurationError(
                    "compressed store is bound to per-sample observed labels; "
                    "the query labels differ"
                )
            return self._matched & (self._first_match < epoch)
        out = np.zeros(self.num_samples, dtype=bool)
        for sid in range(self.num_samples):
            hist = self._history[sid]
            out[sid] = any(labels[sid] in hist[j] for j in range(epoch))
        return out

    def first_match_epoch(self, sample_id: int) -> int:
        """Epoch of the first match for the bound label, or -1 if none yet."""
        sid = self._check_sample(sample_id)
        if self._labels is None:
            raise ConfigurationError("store was built without observed labels")
        return int(self._first_match[sid])

    def history(self, sample_id: int) -> list[set[int]]:
        """Recorded top-k sets for one sample (full-history stores only)."""
        sid = self._check_sample(sample_id)
        if self._history is None:
            raise ConfigurationError("store was built without retain_history")
        return [set(int(v) for v in row) for row in self._history[sid]]

    def write_diagnostics(self, path: str | Path, epoch: int) -> None:
        """Dump per-sample match state as of the end of ``epoch``.

        One line per sample: ``sample_id,epoch,matched,first_match_epoch``
        where ``matched`` covers recorded epochs <= ``epoch``.
        """
        if self._labels is None:
            raise ConfigurationError("diagnostics need a store built with observed labels")
        if (self._epochs <= epoch).any():
            raise StateError(f"epoch {epoch} is not fully recorded yet")
        lines = ["sample_id,epoch,matched,first_match_epoch"]
        for sid in range(self.num_samples):
            first = int(self._first_match[sid])
            matched = int(first >= 0 and first <= epoch)
            lines.append(f"{sid},{epoch},{matched},{first if matched else -1}")
        Path(path).write_text("\n".join(lines) + "\n")


class SelfMovingAverage:
    """Exponential moving average of per-sample predicted distributions.

    The first update initializes a sample's average to the raw prediction;
    later updates blend ``momentum * old + (1 - momentum) * new``.
    """

    def __init__(self, num_samples: int, num_classes: int, momentum: float) -> None:
        if num_samples < 1:
            raise ConfigurationError(f"num_samples must be >= 1, got {num_samples}")
        if num_classes < 1:
            raise ConfigurationError(f"num_classes must be >= 1, got {num_classes}")
        if not (0.0 <= momentum <= 1.0):
            raise ConfigurationError(f"momentum must lie in [0, 1], got {momentum}")
        self.num_samples = num_samples
        self.num_classes = num_classes
        self.momentum = float(momentum)
        self._mean = np.zeros((num_samples, num_classes), dtype=np.float64)
        self._initialized = np.zeros(num_samples, dtype=bool)

    def _check_sample(self, sample_id: int) -> int:
        sid = int(sample_id)
        if not (0 <= sid < self.num_samples):
            raise SampleNotFoundError(f"sample id {sample_id} not in [0, {self.num_samples})")
        return sid

    def is_initialized(self, sample_id: int) -> bool:
        return bool(self._initialized[self._check_sample(sample_id)])

    def update(self, sample_id: int, probabilities) -> None:
        sid = self._check_sample(sample_id)
        p = _validate_probs(probabilities, self.num_classes)
        if self._initialized[sid]:
            self._mean[sid] = self.momentum * self._mean[sid] + (1.0 - self.momentum) * p
        else:
            self._mean[sid] = p
            self._initialized[sid] = True

    def update_batch(self, sample_ids, probabilities) -> None:
        ids = np.asarray(sample_ids, dtype=np.int64)
        if ids.size == 0:
            return
        if ids.min() < 0 or ids.max() >= self.num_samples:
            raise SampleNotFoundError("sample_ids contain ids outside the corpus")
        P = np.asarray(probabilities, dtype=np.float64)
        if P.shape != (ids.size, self.num_classes):
            raise ShapeError(
                f"probabilities must have shape ({ids.size}, {self.num_classes}), got {P.shape}"
            )
        if not np.all(np.isfinite(P)):
            raise NumericError("probabilities contain NaN or infinity")
        init = self._initialized[ids]
        blended = self.momentum * self._mean[ids] + (1.0 - self.momentum) * P
        self._mean[ids] = np.where(init[:, None], blended, P)
        self._initialized[ids] = True

    def mean_prediction(self, sample_id: int) -> np.ndarray:
        sid = self._check_sample(sample_id)
        if not self._initialized[sid]:
            raise StateError(f"sample {sid} has no recorded predictions yet")
        return self._mean[sid].copy()

    def decision(self, sample_id: int, observed_label: int) -> Decision:
        """Clean iff the average's argmax (ties to the lower index) equals
        the observed label."""
        sid = self._check_sample(sample_id)
        if not (0 <= observed_label < self.num_classes):
            raise ConfigurationError(
                f"observed_label {observed_label} out of range [0, {self.num_classes})"
            )
        if not self._initialized[sid]:
            raise StateError(f"sample {sid} has no recorded predictions yet")
        return Decision.CLEAN if int(np.argmax(self._mean[sid])) == observed_label else Decision.NOISY

    def decisions(self, observed_labels, require_initialized: bool = True) -> np.ndarray:
        """Boolean clean-mask over all samples.

        With ``require_initialized=False`` samples that have never been
        updated are reported noisy instead of raising.
        """
        labels = np.asarray(observed_labels, dtype=np.int64)
        if labels.shape != (self.num_samples,):
            raise ShapeError(
                f"observed_labels must have shape ({self.num_samples},), got {labels.shape}"
            )
        if require_initialized and not self._initialized.all():
            sid = int(np.argmax(~self._initialized))
            raise StateError(f"sample {sid} has no recorded predictions yet")
        return self._initialized & (np.argmax(self._mean, axis=1) == labels)
