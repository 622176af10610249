"""Experiment plans, the sweep driver, result tables, and the command line.

A plan is a grid: noise rates x modes x repeats. Within one repeat every
mode sees byte-identical corpora (the clean corpus and each rate's noisy
variant are generated once and shared), so mode columns are comparable.
All derived seeds come from the plan's base seed, which makes two runs of
the same plan reproduce each other's tables byte for byte.
"""

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import (
    CorpusConfig,
    NoisyCorpus,
    TrialList,
    generate_corpus,
    inject_symmetric_noise,
    load_corpus,
    load_trials,
    make_trials,
    save_corpus,
    save_trials,
    NOISE_MODES,
)
from .errors import ConfigurationError, InputError
from .metrics import format_metric
from .model import ModelConfig, OptimizerConfig
from .trainer import (
    MODES,
    RunResult,
    TrainConfig,
    read_epoch_table,
    run_experiment,
)

logger = logging.getLogger(__name__)

DEFAULT_NOISE_RATES = (0.0, 0.05, 0.10, 0.20, 0.30, 0.50)
DEFAULT_MODES = ("baseline", "orgate")

# desk-scale benchmark: large enough for the selection dynamics to show,
# small enough that a full default grid finishes in minutes. The feature
# dimension is deliberately generous relative to the corpus so embedding
# quality stays sample-hungry: selectors that discard clean data pay for it.
_BENCH_TRAIN_SPEAKERS = 50
_BENCH_TRAIN_UTTERANCES = 100
_BENCH_TEST_SPEAKERS = 20
_BENCH_TEST_UTTERANCES = 20
_BENCH_FEATURE_DIM = 40
_BENCH_SEPARATION = 5.0
_BENCH_STDDEV = 1.0
_BENCH_TARGET_TRIALS = 2000
_BENCH_NONTARGET_TRIALS = 2000
# the tiny float64 MLP tolerates (and needs) a far larger step size than a
# full-scale deep net; 40 epochs leave the decayed tail long enough for the
# selection sets to finish accumulating
_BENCH_INITIAL_LR = 1.6e-2
_BENCH_MAX_EPOCHS = 40


def derive_seed(base: int, *tags) -> int:
    """Deterministic child seed from a base seed and a tag path."""
    material = [int(base)]
    for tag in tags:
        if isinstance(tag, str):
            material.extend(ord(ch) for ch in tag)
        else:
            material.append(int(tag))
    words = np.random.SeedSequence(material).generate_state(2)
    return int(words[0]) << 32 | int(words[1])


@dataclass
class ExperimentPlan:
    """Full description of a sweep: data, grid, and training template."""

    output_dir: Path
    corpus: CorpusConfig
    train: TrainConfig
    noise_rates: list[float] = field(default_factory=lambda: list(DEFAULT_NOISE_RATES))
    modes: list[str] = field(default_factory=lambda: list(DEFAULT_MODES))
    repeats: int = 1
    eval_interval: int = 1
    snapshot_epochs: list[int] = field(default_factory=list)
    test_num_speakers: int = _BENCH_TEST_SPEAKERS
    test_utterances_per_speaker: int = _BENCH_TEST_UTTERANCES
    num_target_trials: int = _BENCH_TARGET_TRIALS
    num_nontarget_trials: int = _BENCH_NONTARGET_TRIALS
    noise_mode: str = "bernoulli"

    def __post_init__(self) -> None:
        self.output_dir = Path(self.output_dir)
        for rate in self.noise_rates:
            if not (0.0 <= rate < 1.0):
                raise ConfigurationError(f"noise rates must lie in [0, 1), got {rate}")
        if len(set(self.noise_rates)) != len(self.noise_rates):
            raise ConfigurationError("noise rates must be distinct")
        for mode in self.modes:
            if mode not in MODES:
                raise ConfigurationError(f"unknown mode {mode!r}; expected one of {MODES}")
        if len(set(self.modes)) != len(self.modes):
            raise ConfigurationError("modes must be distinct")
        if self.repeats < 1:
            raise ConfigurationError(f"repeats must be >= 1, got {self.repeats}")
        if self.eval_interval < 1:
            raise ConfigurationError(f"eval_interval must be >= 1, got {self.eval_interval}")
        for e in self.snapshot_epochs:
            if not (0 <= e < self.train.max_epochs):
                raise ConfigurationError(
                    f"snapshot epoch {e} outside [0, {self.train.max_epochs})"
                )
        if self.noise_mode not in NOISE_MODES:
            raise ConfigurationError(f"unknown noise mode {self.noise_mode!r}")


def default_plan(output_dir: str | Path, seed: int = 7, **overrides) -> ExperimentPlan:
    """The standard desk-scale benchmark plan."""
    corpus = CorpusConfig(
        num_speakers=_BENCH_TRAIN_SPEAKERS,
        utterances_per_speaker=_BENCH_TRAIN_UTTERANCES,
        feature_dim=_BENCH_FEATURE_DIM,
        class_separation=_BENCH_SEPARATION,
        within_class_stddev=_BENCH_STDDEV,
        seed=seed,
    )
    model = ModelConfig(
        feature_dim=corpus.feature_dim,
        num_classes=corpus.num_speakers,
        seed=seed,
    )
    train = TrainConfig(
        mode="orgate",
        model=model,
        optimizer=OptimizerConfig(initial_lr=_BENCH_INITIAL_LR),
        max_epochs=_BENCH_MAX_EPOCHS,
    )
    plan = ExperimentPlan(
        output_dir=Path(output_dir),
        corpus=corpus,
        train=train,
        snapshot_epochs=[train.early_epochs],
    )
    return replace(plan, **overrides) if overrides else plan


@dataclass
class ResultRow:
    """One plan cell: final metrics plus the requested snapshot metrics."""

    mode: str
    noise_rate: float
    repeat: int
    final_eer: float
    final_precision: float | None
    final_recall: float | None
    snapshots: dict[int, tuple[float | None, float | None]] = field(default_factory=dict)


@dataclass
class ResultsTable:
    """All rows of a finished sweep, keyed by (mode, noise rate, repeat)."""

    modes: list[str]
    noise_rates: list[float]
    repeats: int
    snapshot_epochs: list[int]
    rows: list[ResultRow] = field(default_factory=list)


def _eta_tag(rate: float) -> str:
    return "eta" + f"{rate:g}".replace(".", "p")


def _row_from_result(
    mode: str, rate: float, repeat: int, result: RunResult, snapshot_epochs: list[int]
) -> ResultRow:
    last = result.epoch_logs[-1]
    snapshots = {}
    for e in snapshot_epochs:
        log = result.epoch_logs[e]
        snapshots[e] = (log.selection_precision, log.selection_recall)
    return ResultRow(
        mode=mode,
        noise_rate=rate,
        repeat=repeat,
        final_eer=result.final_eer,
        final_precision=last.selection_precision,
        final_recall=last.selection_recall,
        snapshots=snapshots,
    )


def _plan_to_json(plan: ExperimentPlan) -> dict:
    data = dataclasses.asdict(plan)
    data["output_dir"] = str(plan.output_dir)
    return data


def _plan_from_json(data: dict) -> ExperimentPlan:
    corpus = CorpusConfig(**data["corpus"])
    train_data = dict(data["train"])
    model = ModelConfig(**{**train_data["model"], "hidden_dims": tuple(train_data["model"]["hidden_dims"])})
    optimizer = OptimizerConfig(**train_data["optimizer"])
    train_data["model"] = model
    train_data["optimizer"] = optimizer
    train = TrainConfig(**train_data)
    fields = {f.name for f in dataclasses.fields(ExperimentPlan)}
    rest = {k: v for k, v in data.items() if k in fields and k not in ("corpus", "train")}
    return ExperimentPlan(corpus=corpus, train=train, **rest)


def run_plan(plan: ExperimentPlan) -> ResultsTable:
    """Execute every cell of the plan and emit the aggregate tables.

    Per repeat, the clean corpus, the held-out test corpus, and the trial
    list are generated once; per noise rate, one corrupted corpus is shared
    by all modes. A failing cell aborts the sweep, naming the cell.
    """
    if not plan.modes:
        raise InputError("plan has no modes; nothing to run")
    if not plan.noise_rates:
        raise InputError("plan has no noise rates; nothing to run")
    out = plan.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_text(json.dumps(_plan_to_json(plan), indent=2) + "\n")

    base = plan.corpus.seed
    rows: list[ResultRow] = []
    for repeat in range(plan.repeats):
        repeat_dir = out / f"repeat{repeat}"
        repeat_dir.mkdir(parents=True, exist_ok=True)
        clean = generate_corpus(replace(plan.corpus, seed=derive_seed(base, "corpus", repeat)))
        test_cfg = CorpusConfig(
            num_speakers=plan.test_num_speakers,
            utterances_per_speaker=plan.test_utterances_per_speaker,
            feature_dim=plan.corpus.feature_dim,
            class_separation=plan.corpus.class_separation,
            within_class_stddev=plan.corpus.within_class_stddev,
            seed=derive_seed(base, "test", repeat),
        )
        test_corpus = generate_corpus(test_cfg)
        trials = make_trials(
            test_corpus,
            plan.num_target_trials,
            plan.num_nontarget_trials,
            derive_seed(base, "trials", repeat),
        )
        save_corpus(test_corpus, repeat_dir / "test.corpus")
        save_trials(trials, repeat_dir / "trials.txt")

        model_seed = derive_seed(base, "model", repeat)
        shuffle_seed = derive_seed(base, "shuffle", repeat)
        for rate_idx, rate in enumerate(plan.noise_rates):
            noisy = inject_symmetric_noise(
                clean, rate, derive_seed(base, "noise", repeat, rate_idx), plan.noise_mode
            )
            eta_dir = repeat_dir / _eta_tag(rate)
            eta_dir.mkdir(parents=True, exist_ok=True)
            save_corpus(noisy, eta_dir / "train.corpus")
            for mode in plan.modes:
                cell = f"mode={mode} noise_rate={rate:g} repeat={repeat}"
                try:
                    config = TrainConfig(
                        mode=mode,
                        model=replace(
                            plan.train.model,
                            feature_dim=plan.corpus.feature_dim,
                            num_classes=plan.corpus.num_speakers,
                            seed=model_seed,
                        ),
                        optimizer=plan.train.optimizer,
                        early_epochs=plan.train.early_epochs,
                        top_k=None if mode == "orgate_k1" else plan.train.top_k,
                        max_epochs=plan.train.max_epochs,
                        batch_size=plan.train.batch_size,
                        seed=shuffle_seed,
                        self_momentum=plan.train.self_momentum,
                    )
                    result = run_experiment(
                        config,
                        noisy,
                        test_corpus,
                        trials,
                        eval_interval=plan.eval_interval,
                        run_dir=eta_dir / mode,
                    )
                except Exception as exc:
                    raise RuntimeError(f"plan cell failed ({cell}): {exc}") from exc
                rows.append(_row_from_result(mode, rate, repeat, result, plan.snapshot_epochs))
                logger.info("cell done: %s final_eer=%.4f", cell, result.final_eer)

    table = ResultsTable(
        modes=list(plan.modes),
        noise_rates=list(plan.noise_rates),
        repeats=plan.repeats,
        snapshot_epochs=list(plan.snapshot_epochs),
        rows=rows,
    )
    emit_tables(table, out)
    return table


def emit_tables(table: ResultsTable, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``results.csv`` and ``results.json``.

    Rows are ordered by (mode position in the plan, noise rate, repeat);
    re-emitting the same table yields byte-identical files. A table that
    does not exactly cover its grid is rejected before anything is written.
    """
    if not table.modes:
        raise InputError("results table has no modes")
    if not table.noise_rates:
        raise InputError("results table has no noise rates")
    expected = {
        (mode, rate, repeat)
        for mode in table.modes
        for rate in table.noise_rates
        for repeat in range(table.repeats)
    }
    got = {(r.mode, r.noise_rate, r.repeat) for r in table.rows}
    if len(got) != len(table.rows):
        raise InputError("results table holds duplicate (mode, noise_rate, repeat) rows")
    if got != expected:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise InputError(
            f"results table does not cover the plan grid; missing={missing} extra={extra}"
        )
    mode_rank = {mode: i for i, mode in enumerate(table.modes)}
    ordered = sorted(table.rows, key=lambda r: (mode_rank[r.mode], r.noise_rate, r.repeat))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "results.csv"
    json_path = out_dir / "results.json"

    columns = ["mode", "noise_rate", "repeat", "final_eer", "final_precision", "final_recall"]
    for e in table.snapshot_epochs:
        columns.append(f"epoch{e}_precision")
        columns.append(f"epoch{e}_recall")
    lines = [",".join(columns)]
    for r in ordered:
        cells = [
            r.mode,
            f"{r.noise_rate:g}",
            str(r.repeat),
            format_metric(r.final_eer),
            format_metric(r.final_precision),
            format_metric(r.final_recall),
        ]
        for e in table.snapshot_epochs:
            precision, recall = r.snapshots.get(e, (None, None))
            cells.append(format_metric(precision))
            cells.append(format_metric(recall))
        lines.append(",".join(cells))
    csv_path.write_text("\n".join(lines) + "\n")

    def _num(value: float | None) -> float | None:
        return None if value is None else float(format_metric(value))

    records = []
    for r in ordered:
        records.append(
            {
                "mode": r.mode,
                "noise_rate": r.noise_rate,
                "repeat": r.repeat,
                "final_eer": _num(r.final_eer),
                "final_precision": _num(r.final_precision),
                "final_recall": _num(r.final_recall),
                "snapshots": {
                    str(e): {
                        "precision": _num(r.snapshots.get(e, (None, None))[0]),
                        "recall": _num(r.snapshots.get(e, (None, None))[1]),
                    }
                    for e in table.snapshot_epochs
                },
            }
        )
    payload = {
        "modes": table.modes,
        "noise_rates": table.noise_rates,
        "repeats": table.repeats,
        "snapshot_epochs": table.snapshot_epochs,
        "rows": records,
    }
    json_path.write_text(json.dumps(payload, indent=2) + "\n")
    return csv_path, json_path


def load_results(results_dir: str | Path) -> ResultsTable:
    """Rebuild a results table from a sweep directory's stored artifacts."""
    results_dir = Path(results_dir)
    plan_path = results_dir / "plan.json"
    if not plan_path.exists():
        raise InputError(f"{results_dir} holds no plan.json; not a sweep directory")
    plan = _plan_from_json(json.loads(plan_path.read_text()))
    rows = []
    for repeat in range(plan.repeats):
        for rate in plan.noise_rates:
            for mode in plan.modes:
                run_dir = results_dir / f"repeat{repeat}" / _eta_tag(rate) / mode
                epochs_path = run_dir / "epochs.csv"
                if not epochs_path.exists():
                    raise InputError(f"missing epochs table for cell {run_dir}")
                logs = read_epoch_table(epochs_path)
                last = logs[-1]
                if last.eer_on_trials is None:
                    raise InputError(f"{epochs_path}: final epoch carries no EER")
                snapshots = {}
                for e in plan.snapshot_epochs:
                    snapshots[e] = (logs[e].selection_precision, logs[e].selection_recall)
                rows.append(
                    ResultRow(
                        mode=mode,
                        noise_rate=rate,
                        repeat=repeat,
                        final_eer=last.eer_on_trials,
                        final_precision=last.selection_precision,
                        final_recall=last.selection_recall,
                        snapshots=snapshots,
                    )
                )
    return ResultsTable(
        modes=list(plan.modes),
        noise_rates=list(plan.noise_rates),
        repeats=plan.repeats,
        snapshot_epochs=list(plan.snapshot_epochs),
        rows=rows,
    )


def _parse_rate_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _parse_mode_list(text: str) -> list[str]:
    return [tok.strip() for tok in text.split(",") if tok.strip()]


def _add_generate_parser(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("generate", help="generate a corpus (optionally corrupted) and trials")
    p.add_argument("--out", required=True, type=Path, help="corpus file to write")
    p.add_argument("--num-speakers", type=int, default=_BENCH_TRAIN_SPEAKERS)
    p.add_argument("--utterances-per-speaker", type=int, default=_BENCH_TRAIN_UTTERANCES)
    p.add_argument("--feature-dim", type=int, default=_BENCH_FEATURE_DIM)
    p.add_argument("--class-separation", type=float, default=_BENCH_SEPARATION)
    p.add_argument("--within-class-stddev", type=float, default=_BENCH_STDDEV)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--noise-rate", type=float, default=0.0)
    p.add_argument("--noise-seed", type=int, default=None)
    p.add_argument("--noise-mode", choices=NOISE_MODES, default="bernoulli")
    p.add_argument("--trials-out", type=Path, default=None, help="also sample a trial list")
    p.add_argument("--num-target", type=int, default=_BENCH_TARGET_TRIALS)
    p.add_argument("--num-nontarget", type=int, default=_BENCH_NONTARGET_TRIALS)


def _cmd_generate(args: argparse.Namespace) -> int:
    config = CorpusConfig(
        num_speakers=args.num_speakers,
        utterances_per_speaker=args.utterances_per_speaker,
        feature_dim=args.feature_dim,
        class_separation=args.class_separation,
        within_class_stddev=args.within_class_stddev,
        seed=args.seed,
    )
    corpus = generate_corpus(config)
    if args.noise_rate > 0.0:
        noise_seed = args.noise_seed if args.noise_seed is not None else derive_seed(args.seed, "noise")
        corpus = inject_symmetric_noise(corpus, args.noise_rate, noise_seed, args.noise_mode)
    save_corpus(corpus, args.out)
    print(f"wrote {corpus.num_samples} samples ({corpus.num_corrupted} corrupted) to {args.out}")
    if args.trials_out is not None:
        trials = make_trials(
            corpus, args.num_target, args.num_nontarget, derive_seed(args.seed, "trials")
        )
        save_trials(trials, args.trials_out)
        print(f"wrote {len(trials)} trials to {args.trials_out}")
    return 0


def _add_train_parser(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("train", help="train one mode on stored corpora")
    p.add_argument("--train-corpus", required=True, type=Path)
    p.add_argument("--test-corpus", required=True, type=Path)
    p.add_argument("--trials", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="run directory")
    p.add_argument("--mode", choices=MODES, default="orgate")
    p.add_argument("--early-epochs", type=int, default=5)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--self-momentum", type=float, default=0.9)
    p.add_argument("--hidden-dims", type=str, default="128,128")
    p.add_argument("--embedding-dim", type=int, default=64)
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--scale", type=float, default=30.0)
    p.add_argument("--lr", type=float, default=None, help="initial learning rate")
    p.add_argument("--lr-decay-factor", type=float, default=None)
    p.add_argument("--lr-decay-interval", type=int, default=None)
    p.add_argument("--eval-interval", type=int, default=1)


def _cmd_train(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.train_corpus)
    test_corpus = load_corpus(args.test_corpus)
    trials = load_trials(args.trials)
    hidden = tuple(_parse_int_list(args.hidden_dims))
    model = ModelConfig(
        feature_dim=corpus.config.feature_dim,
        num_classes=corpus.num_classes,
        hidden_dims=hidden,
        embedding_dim=args.embedding_dim,
        margin=args.margin,
        scale=args.scale,
        seed=args.seed,
    )
    opt_kwargs = {}
    if args.lr is not None:
        opt_kwargs["initial_lr"] = args.lr
    if args.lr_decay_factor is not None:
        opt_kwargs["lr_decay_factor"] = args.lr_decay_factor
    if args.lr_decay_interval is not None:
        opt_kwargs["lr_decay_interval"] = args.lr_decay_interval
    config = TrainConfig(
        mode=args.mode,
        model=model,
        optimizer=OptimizerConfig(**opt_kwargs),
        early_epochs=args.early_epochs,
        top_k=args.top_k,
        max_epochs=args.max_epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        self_momentum=args.self_momentum,
    )
    result = run_experiment(
        config, corpus, test_corpus, trials,
        eval_interval=args.eval_interval, run_dir=args.out,
    )
    last = result.epoch_logs[-1]
    print(f"mode={config.mode} final_eer={format_metric(result.final_eer)}")
    if last.selection_precision is not None:
        print(
            f"selection precision={format_metric(last.selection_precision)} "
            f"recall={format_metric(last.selection_recall)}"
        )
    print(f"artifacts in {args.out}")
    return 0


def _add_sweep_parser(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("sweep", help="run a full noise-rate x mode grid")
    p.add_argument("--config", type=Path, default=None, help="JSON plan file")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--noise-rates", type=str, default=None, help="comma-separated rates")
    p.add_argument("--modes", type=str, default=None, help="comma-separated modes")
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="base seed")
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--early-epochs", type=int, default=None)
    p.add_argument("--eval-interval", type=int, default=None)
    p.add_argument("--snapshot-epochs", type=str, default=None, help="comma-separated epochs")
    p.add_argument("--num-speakers", type=int, default=None)
    p.add_argument("--utterances-per-speaker", type=int, default=None)


def _cmd_sweep(args: argparse.Namespace) -> int:
    if args.config is not None:
        data = json.loads(Path(args.config).read_text())
        plan = _plan_from_json(data)
    else:
        if args.out is None:
            print("sweep: --out is required without --config", file=sys.stderr)
            return 2
        plan = default_plan(args.out)
    # flags override whatever the config file supplied
    if args.out is not None:
        plan = replace(plan, output_dir=Path(args.out))
    if args.noise_rates is not None:
        plan = replace(plan, noise_rates=_parse_rate_list(args.noise_rates))
    if args.modes is not None:
        plan = replace(plan, modes=_parse_mode_list(args.modes))
    if args.repeats is not None:
        plan = replace(plan, repeats=args.repeats)
    if args.eval_interval is not None:
        plan = replace(plan, eval_interval=args.eval_interval)
    if args.snapshot_epochs is not None:
        plan = replace(plan, snapshot_epochs=_parse_int_list(args.snapshot_epochs))
    corpus_changes = {}
    if args.seed is not None:
        corpus_changes["seed"] = args.seed
    if args.num_speakers is not None:
        corpus_changes["num_speakers"] = args.num_speakers
    if args.utterances_per_speaker is not None:
        corpus_changes["utterances_per_speaker"] = args.utterances_per_speaker
    if corpus_changes:
        plan = replace(plan, corpus=replace(plan.corpus, **corpus_changes))
    train_changes = {}
    if args.max_epochs is not None:
        train_changes["max_epochs"] = args.max_epochs
    if args.early_epochs is not None:
        train_changes["early_epochs"] = args.early_epochs
    if train_changes:
        # one combined replace, so lowering max_epochs below the template's
        # early stage only needs both flags, not a particular order
        plan = replace(plan, train=replace(plan.train, **train_changes))
    table = run_plan(plan)
    print(f"{len(table.rows)} cells done; tables in {plan.output_dir}")
    return 0


def _add_report_parser(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("report", help="re-emit tables from a sweep directory")
    p.add_argument("--results-dir", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None, help="defaults to the results dir")


def _cmd_report(args: argparse.Namespace) -> int:
    table = load_results(args.results_dir)
    out = args.out if args.out is not None else args.results_dir
    csv_path, json_path = emit_tables(table, out)
    print(f"wrote {csv_path} and {json_path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="labelgate",
        description="noise-robust verification training on synthetic corpora",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_generate_parser(sub)
    _add_train_parser(sub)
    _add_sweep_parser(sub)
    _add_report_parser(sub)
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "generate": _cmd_generate,
        "train": _cmd_train,
        "sweep": _cmd_sweep,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # surface a clean one-liner, nonzero exit
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
