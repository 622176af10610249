"""Synthetic multi-speaker corpora with controlled label corruption.

Speakers are isotropic Gaussian clusters in feature space. Corpora are
generated clean and corrupted afterwards by a symmetric label-noise channel:
each flipped sample receives a label drawn uniformly from the other classes.
Everything is deterministic given the seeds, and corpora round-trip through
a plain text format bit-exactly.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, NumericError, ParseError, StateError

_CORPUS_MAGIC = "labelgate-corpus"
_TRIALS_MAGIC = "labelgate-trials"
_FORMAT_VERSION = 1

# Independent rng streams per purpose, so e.g. adding a speaker does not
# reshuffle the noise mask of an otherwise identical corpus.
_STREAM_MEANS = 0
_STREAM_FEATURES = 1
_STREAM_FLIPS = 2
_STREAM_TRIALS = 3

NOISE_MODES = ("bernoulli", "exact")


def _stream(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(tag)])


@dataclass(frozen=True)
class CorpusConfig:
    """Geometry and size of a synthetic corpus.

    ``class_separation`` is the typical distance between neighbouring class
    means (the median nearest-neighbour distance of the layout);
    ``within_class_stddev`` is the per-dimension standard deviation of
    samples around their mean.
    """

    num_speakers: int
    utterances_per_speaker: int
    feature_dim: int
    class_separation: float
    within_class_stddev: float
    seed: int

    def __post_init__(self) -> None:
        if self.num_speakers < 2:
            raise ConfigurationError(f"num_speakers must be >= 2, got {self.num_speakers}")
        if self.utterances_per_speaker < 2:
            raise ConfigurationError(
                f"utterances_per_speaker must be >= 2, got {self.utterances_per_speaker}"
            )
        if self.feature_dim < 1:
            raise ConfigurationError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if not np.isfinite(self.class_separation) or self.class_separation < 0:
            raise ConfigurationError(
                f"class_separation must be a nonnegative real, got {self.class_separation}"
            )
        if not np.isfinite(self.within_class_stddev) or self.within_class_stddev <= 0:
            raise ConfigurationError(
                f"within_class_stddev must be positive, got {self.within_class_stddev}"
            )

    @property
    def num_samples(self) -> int:
        return self.num_speakers * self.utterances_per_speaker


@dataclass(eq=False)
class Sample:
    """One utterance: a feature vector plus its true and observed labels."""

    id: int
    features: np.ndarray
    true_label: int
    observed_label: int
    is_corrupted: bool

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.id == other.id
            and self.true_label == other.true_label
            and self.observed_label == other.observed_label
            and self.is_corrupted == other.is_corrupted
            and np.array_equal(self.features, other.features)
        )


@dataclass(eq=False)
class NoisyCorpus:
    """A corpus plus the record of how (and whether) it was corrupted.

    ``noise_rate`` is the requested rate; the realized number of flips is
    whatever the flags say (``num_corrupted``), never assumed equal.
    """

    config: CorpusConfig
    samples: list[Sample] = field(default_factory=list)
    noise_rate: float = 0.0
    noise_seed: int | None = None
    noise_mode: str | None = None

    @property
    def num_samples(self) -> int:
        return len(self.samples)

    @property
    def num_classes(self) -> int:
        return self.config.num_speakers

    @property
    def num_corrupted(self) -> int:
        return sum(1 for s in self.samples if s.is_corrupted)

    def features_matrix(self) -> np.ndarray:
        return np.stack([s.features for s in self.samples])

    def true_labels(self) -> np.ndarray:
        return np.array([s.true_label for s in self.samples], dtype=np.int64)

    def observed_labels(self) -> np.ndarray:
        return np.array([s.observed_label for s in self.samples], dtype=np.int64)

    def corrupted_mask(self) -> np.ndarray:
        return np.array([s.is_corrupted for s in self.samples], dtype=bool)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NoisyCorpus):
            return NotImplemented
        return (
            self.config == other.config
            and self.noise_rate == other.noise_rate
            and self.noise_seed == other.noise_seed
            and self.noise_mode == other.noise_mode
            and self.samples == other.samples
        )


@dataclass
class TrialList:
    """Verification trials: (sample_id_a, sample_id_b, is_target) triples."""

    trials: list[tuple[int, int, bool]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def num_target(self) -> int:
        return sum(1 for _, _, t in self.trials if t)

    @property
    def num_nontarget(self) -> int:
        return len(self.trials) - self.num_target


def _class_means(config: CorpusConfig) -> np.ndarray:
    """Class means drawn from the seed, rescaled so the median over classes
    of the nearest-neighbour distance equals ``class_separation``.

    Scaling by the median (rather than the single closest pair) makes
    class_separation track the typical confusability of the layout instead
    of its worst outlier pair."""
    rng = _stream(config.seed, _STREAM_MEANS)
    raw = rng.standard_normal((config.num_speakers, config.feature_dim))
    deltas = raw[:, None, :] - raw[None, :, :]
    dists = np.sqrt((deltas**2).sum(axis=2))
    np.fill_diagonal(dists, np.inf)
    nearest = dists.min(axis=1)
    ref_dist = float(np.median(nearest))
    if not np.isfinite(ref_dist) or ref_dist <= 0.0:
        raise NumericError("degenerate class means: coincident seeds")
    return raw * (config.class_separation / ref_dist)


def generate_corpus(config: CorpusConfig) -> NoisyCorpus:
    """Generate a clean corpus: ``num_speakers * utterances_per_speaker``
    samples grouped by speaker, observed labels equal to true labels."""
    means = _class_means(config)
    rng = _stream(config.seed, _STREAM_FEATURES)
    n = config.num_samples
    noise = rng.standard_normal((n, config.feature_dim))
    samples = []
    idx = 0
    for speaker in range(config.num_speakers):
        for _ in range(config.utterances_per_speaker):
            features = means[speaker] + config.within_class_stddev * noise[idx]
            samples.append(
                Sample(
                    id=idx,
                    features=features,
                    true_label=speaker,
                    observed_label=speaker,
                    is_corrupted=False,
                )
            )
            idx += 1
    return NoisyCorpus(config=config, samples=samples)


def inject_symmetric_noise(
    corpus: NoisyCorpus,
    noise_rate: float,
    seed: int,
    mode: str = "bernoulli",
) -> NoisyCorpus:
    """Return a corrupted copy of a clean corpus.

    In ``bernoulli`` mode each sample flips independently with probability
    ``noise_rate``; in ``exact`` mode exactly ``floor(noise_rate * n)``
    samples are flipped. A flipped sample's observed label is uniform over
    the other ``num_classes - 1`` labels, so every corrupted sample has
    ``observed_label != true_label``.
    """
    if not (0.0 <= noise_rate < 1.0):
        raise ConfigurationError(f"noise_rate must lie in [0, 1), got {noise_rate}")
    if mode not in NOISE_MODES:
        raise ConfigurationError(f"unknown noise mode {mode!r}; expected one of {NOISE_MODES}")
    if any(s.is_corrupted for s in corpus.samples):
        raise StateError("corpus already carries corrupted samples; refusing to corrupt twice")

    n = corpus.num_samples
    c = corpus.num_classes
    rng = _stream(seed, _STREAM_FLIPS)
    if mode == "bernoulli":
        flip = rng.random(n) < noise_rate
    else:
        count = int(noise_rate * n)
        flip = np.zeros(n, dtype=bool)
        flip[rng.permutation(n)[:count]] = True

    # Uniform over the c-1 wrong labels: draw an offset in [0, c-1) and skip
    # over the true label.
    offsets = rng.integers(0, c - 1, size=int(flip.sum()))
    new_samples = []
    flipped_idx = 0
    for sample in corpus.samples:
        if flip[sample.id]:
            off = int(offsets[flipped_idx])
            flipped_idx += 1
            observed = off if off < sample.true_label else off + 1
            new_samples.append(
                Sample(
                    id=sample.id,
                    features=sample.features,
                    true_label=sample.true_label,
                    observed_label=observed,
                    is_corrupted=True,
                )
            )
        else:
            new_samples.append(replace(sample))
    return NoisyCorpus(
        config=corpus.config,
        samples=new_samples,
        noise_rate=noise_rate,
        noise_seed=seed,
        noise_mode=mode,
    )


def make_trials(
    test_corpus: NoisyCorpus,
    num_target: int,
    num_nontarget: int,
    seed: int,
) -> TrialList:
    """Sample verification trials from a held-out corpus.

    Target trials pair two distinct utterances of one speaker; nontarget
    trials pair utterances of two distinct speakers. No sample is ever
    paired with itself. Pairing uses true labels; the test corpus is
    expected to be clean.
    """
    if num_target < 0 or num_nontarget < 0:
        raise ConfigurationError("trial counts must be nonnegative")
    by_speaker: dict[int, list[int]] = {}
    for s in test_corpus.samples:
        by_speaker.setdefault(s.true_label, []).append(s.id)
    speakers = sorted(by_speaker)
    pairable = [spk for spk in speakers if len(by_speaker[spk]) >= 2]
    if num_target > 0 and not pairable:
        raise ConfigurationError("no speaker has two samples; target trials unsatisfiable")
    if num_nontarget > 0 and len(speakers) < 2:
        raise ConfigurationError("fewer than two speakers; nontarget trials unsatisfiable")

    rng = _stream(seed, _STREAM_TRIALS)
    trials: list[tuple[int, int, bool]] = []
    for _ in range(num_target):
        spk = pairable[int(rng.integers(len(pairable)))]
        a, b = rng.choice(len(by_speaker[spk]), size=2, replace=False)
        trials.append((by_speaker[spk][int(a)], by_speaker[spk][int(b)], True))
    for _ in range(num_nontarget):
        i, j = rng.choice(len(speakers), size=2, replace=False)
        ids_a = by_speaker[speakers[int(i)]]
        ids_b = by_speaker[speakers[int(j)]]
        a = ids_a[int(rng.integers(len(ids_a)))]
        b = ids_b[int(rng.integers(len(ids_b)))]
        trials.append((a, b, False))
    return TrialList(trials=trials)


def _format_optional_int(value: int | None) -> str:
    return "none" if value is None else str(value)


def save_corpus(corpus: NoisyCorpus, path: str | Path) -> None:
    """Write a corpus as versioned text; ``load_corpus`` restores it bit-exactly.

    Features are serialized with ``repr``, which round-trips float64 exactly.
    """
    cfg = corpus.config
    lines = [
        f"{_CORPUS_MAGIC} v{_FORMAT_VERSION}",
        f"num_speakers {cfg.num_speakers}",
        f"utterances_per_speaker {cfg.utterances_per_speaker}",
        f"feature_dim {cfg.feature_dim}",
        f"class_separation {cfg.class_separation!r}",
        f"within_class_stddev {cfg.within_class_stddev!r}",
        f"seed {cfg.seed}",
        f"noise_rate {corpus.noise_rate!r}",
        f"noise_seed {_format_optional_int(corpus.noise_seed)}",
        f"noise_mode {corpus.noise_mode or 'none'}",
        f"num_samples {corpus.num_samples}",
        "---",
    ]
    for s in corpus.samples:
        feats = " ".join(repr(float(v)) for v in s.features)
        lines.append(f"{s.id},{s.true_label},{s.observed_label},{int(s.is_corrupted)},{feats}")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_header_value(header: dict[str, str], key: str, lineno: dict[str, int]) -> str:
    if key not in header:
        raise ParseError(f"corpus header is missing the {key!r} field")
    return header[key]


def load_corpus(path: str | Path) -> NoisyCorpus:
    """Parse a corpus file written by ``save_corpus``.

    Malformed content raises ``ParseError`` naming the offending line;
    an unknown magic string or version raises ``FormatError``.
    """
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file is not a corpus")
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != _CORPUS_MAGIC:
        raise FormatError(f"{path}: not a corpus file (bad magic line {lines[0]!r})")
    if magic[1] != f"v{_FORMAT_VERSION}":
        raise FormatError(f"{path}: unsupported corpus format version {magic[1]!r}")

    header: dict[str, str] = {}
    header_lineno: dict[str, int] = {}
    body_start = None
    for i, line in enumerate(lines[1:], start=2):
        if line == "---":
            body_start = i
            break
        parts = line.split(maxsplit=1)
        if len(parts) != 2:
            raise ParseError(f"{path}:{i}: malformed header line {line!r}")
        header[parts[0]] = parts[1]
        header_lineno[parts[0]] = i
    if body_start is None:
        raise ParseError(f"{path}: missing '---' separator; file truncated?")

    def header_int(key: str) -> int:
        raw = _parse_header_value(header, key, header_lineno)
        try:
            return int(raw)
        except ValueError as exc:
            raise ParseError(f"{path}:{header_lineno[key]}: {key} is not an integer: {raw!r}") from exc

    def header_float(key: str) -> float:
        raw = _parse_header_value(header, key, header_lineno)
        try:
            return float(raw)
        except ValueError as exc:
            raise ParseError(f"{path}:{header_lineno[key]}: {key} is not a real: {raw!r}") from exc

    def header_optional_int(key: str) -> int | None:
        raw = _parse_header_value(header, key, header_lineno)
        return None if raw == "none" else header_int(key)

    try:
        config = CorpusConfig(
            num_speakers=header_int("num_speakers"),
            utterances_per_speaker=header_int("utterances_per_speaker"),
            feature_dim=header_int("feature_dim"),
            class_separation=header_float("class_separation"),
            within_class_stddev=header_float("within_class_stddev"),
            seed=header_int("seed"),
        )
    except ConfigurationError as exc:
        raise ParseError(f"{path}: header describes an invalid corpus: {exc}") from exc
    noise_rate = header_float("noise_rate")
    noise_seed = header_optional_int("noise_seed")
    noise_mode_raw = _parse_header_value(header, "noise_mode", header_lineno)
    noise_mode = None if noise_mode_raw == "none" else noise_mode_raw
    if noise_mode is not None and noise_mode not in NOISE_MODES:
        raise ParseError(f"{path}: unknown noise_mode {noise_mode!r}")
    declared = header_int("num_samples")

    samples: list[Sample] = []
    c = config.num_speakers
    for i, line in enumerate(lines[body_start:], start=body_start + 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(f"{path}:{i}: expected 5 comma-separated fields, got {len(parts)}")
        try:
            sid = int(parts[0])
            true_label = int(parts[1])
            observed_label = int(parts[2])
            corrupted_flag = int(parts[3])
            features = np.array([float(v) for v in parts[4].split()], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"{path}:{i}: malformed record: {exc}") from exc
        if sid != len(samples):
            raise ParseError(f"{path}:{i}: sample ids must be 0..n-1 in order, got {sid}")
        if not (0 <= true_label < c):
            raise ParseError(f"{path}:{i}: true_label {true_label} out of range [0, {c})")
        if not (0 <= observed_label < c):
            raise ParseError(f"{path}:{i}: observed_label {observed_label} out of range [0, {c})")
        if corrupted_flag not in (0, 1):
            raise ParseError(f"{path}:{i}: is_corrupted flag must be 0 or 1, got {corrupted_flag}")
        if bool(corrupted_flag) != (observed_label != true_label):
            raise ParseError(
                f"{path}:{i}: corruption flag inconsistent with labels "
                f"(true={true_label}, observed={observed_label}, flag={corrupted_flag})"
            )
        if features.shape[0] != config.feature_dim:
            raise ParseError(
                f"{path}:{i}: expected {config.feature_dim} features, got {features.shape[0]}"
            )
        samples.append(
            Sample(
                id=sid,
                features=features,
                true_label=true_label,
                observed_label=observed_label,
                is_corrupted=bool(corrupted_flag),
            )
        )
    if len(samples) != declared:
        raise ParseError(
            f"{path}: header declares {declared} samples but file holds {len(samples)}; truncated?"
        )
    return NoisyCorpus(
        config=config,
        samples=samples,
        noise_rate=noise_rate,
        noise_seed=noise_seed,
        noise_mode=noise_mode,
    )


def save_trials(trials: TrialList, path: str | Path) -> None:
    """Write a trial list as versioned text, one trial per line."""
    lines = [
        f"{_TRIALS_MAGIC} v{_FORMAT_VERSION}",
        f"num_trials {len(trials)}",
        "---",
    ]
    for a, b, is_target in trials.trials:
        lines.append(f"{a},{b},{int(is_target)}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_trials(path: str | Path) -> TrialList:
    """Parse a trial list written by ``save_trials``."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file is not a trial list")
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != _TRIALS_MAGIC:
        raise FormatError(f"{path}: not a trial list (bad magic line {lines[0]!r})")
    if magic[1] != f"v{_FORMAT_VERSION}":
        raise FormatError(f"{path}: unsupported trial format version {magic[1]!r}")
    if len(lines) < 3 or not lines[1].startswith("num_trials ") or lines[2] != "---":
        raise ParseError(f"{path}: malformed trial header")
    try:
        declared = int(lines[1].split()[1])
    except ValueError as exc:
        raise ParseError(f"{path}:2: num_trials is not an integer") from exc
    trials: list[tuple[int, int, bool]] = []
    for i, line in enumerate(lines[3:], start=4):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError(f"{path}:{i}: expected 3 comma-separated fields, got {len(parts)}")
        try:
            a, b, flag = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ParseError(f"{path}:{i}: malformed trial record: {exc}") from exc
        if flag not in (0, 1):
            raise ParseError(f"{path}:{i}: is_target flag must be 0 or 1, got {flag}")
        if a == b:
            raise ParseError(f"{path}:{i}: self-pair trial ({a}, {b})")
        trials.append((a, b, bool(flag)))
    if len(trials) != declared:
        raise ParseError(f"{path}: header declares {declared} trials but file holds {len(trials)}")
    return TrialList(trials=trials)
