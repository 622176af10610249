"""Acceptance gate for the whole package.

Criteria 1 to 6 are exact property suites: noise-channel statistics, gate
oracle equivalence, gradient correctness, EER oracle equivalence, moving
average arithmetic, and byte-level sweep determinism. Criteria 7 to 11 run
the default benchmark grid (five modes, four noise rates, three seeded
repeats, one shared session fixture) and check the directional outcomes;
each directional criterion must hold in at least 2 of the 3 repeats.

Every test prints one `CRITERION n: PASS/FAIL` line on the real stdout,
bypassing capture, so a full run always shows the scorecard.
"""

import time

import numpy as np
import pytest
from scipy import stats

from labelgate.cli import default_plan, run_plan
from labelgate.dataset import CorpusConfig, generate_corpus, inject_symmetric_noise
from labelgate.model import ModelConfig, am_softmax_backward, am_softmax_forward, init_model
from labelgate.metrics import ScoredTrials, compute_eer
from labelgate.selector import Decision, PredictionStore, SelfMovingAverage, topk_labels

BENCH_RATES = [0.0, 0.2, 0.3, 0.5]
BENCH_MODES = ["baseline", "orgate", "orgate_k1", "orgate_no_early", "self_baseline"]
BENCH_REPEATS = 3
STAGE_ONE_END = 5  # first gated epoch of the benchmark plan


def report(capsys, number: int, passed: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}")


def head_state(num_classes: int, dim: int, seed: int, margin: float, scale: float):
    config = ModelConfig(
        feature_dim=dim,
        num_classes=num_classes,
        hidden_dims=(),
        embedding_dim=dim,
        margin=margin,
        scale=scale,
        seed=seed,
    )
    return init_model(config)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(num / den)


def sweep_eer_oracle(scores: np.ndarray, is_target: np.ndarray) -> float:
    """Exhaustive sweep coded independently of compute_eer: both error rates
    evaluated by direct comparison at every distinct score, crossing point
    interpolated linearly."""
    targets = scores[is_target]
    nontargets = scores[~is_target]
    distinct = np.unique(scores)
    thresholds = np.concatenate(([distinct[0] - 1.0], distinct, [distinct[-1] + 1.0]))
    points = [
        (float((nontargets >= t).mean()), float((targets < t).mean())) for t in thresholds
    ]
    for i, (far, frr) in enumerate(points):
        if far - frr <= 0.0:
            if far == frr:
                return far
            prev_far, prev_frr = points[i - 1]
            prev_diff = prev_far - prev_frr
            lam = prev_diff / (prev_diff - (far - frr))
            return prev_far + lam * (far - prev_far)
    raise AssertionError("no crossing found")


class TestNoiseChannel:
    def test_criterion_1(self, capsys):
        """Flip count within 4 binomial sigma of the expectation; flipped
        labels uniform over the wrong classes by chi-square at 0.01."""
        started = time.perf_counter()
        c, per_speaker, rate = 10, 1000, 0.3
        corpus = generate_corpus(
            CorpusConfig(
                num_speakers=c,
                utterances_per_speaker=per_speaker,
                feature_dim=4,
                class_separation=5.0,
                within_class_stddev=1.0,
                seed=101,
            )
        )
        n = corpus.num_samples
        noisy = inject_symmetric_noise(corpus, rate, seed=202)

        flips = noisy.num_corrupted
        sigma = np.sqrt(n * rate * (1.0 - rate))
        count_ok = abs(flips - n * rate) <= 4.0 * sigma

        # uniformity over the c-1 wrong labels, pooled by offset so every
        # corrupted sample contributes one draw from the same law
        offsets = []
        for s in noisy.samples:
            if s.is_corrupted:
                wrong = [label for label in range(c) if label != s.true_label]
                offsets.append(wrong.index(s.observed_label))
        counts = np.bincount(offsets, minlength=c - 1)
        _, p_value = stats.chisquare(counts)
        uniform_ok = p_value >= 0.01

        duration = time.perf_counter() - started
        passed = count_ok and uniform_ok and duration < 1.0
        report(
            capsys, 1, passed,
            f"flips={flips} (expected {n * rate:.0f} +/- {4 * sigma:.0f}), "
            f"chi-square p={p_value:.3f}, {duration:.2f}s",
        )
        assert count_ok, f"flip count {flips} outside 4 sigma of {n * rate}"
        assert uniform_ok, f"wrong-label distribution not uniform (p={p_value:.4f})"
        assert duration < 1.0


class TestGateOracle:
    def test_criterion_2(self, capsys):
        """1000 random prediction histories: the gate equals a brute-force OR
        over past top-k memberships at every epoch, and the compressed store
        answers exactly like the full-history store."""
        started = time.perf_counter()
        rng = np.random.default_rng(2002)
        histories = 1000
        mismatches = 0
        for _ in range(histories):
            c = int(rng.integers(2, 21))
            epochs = int(rng.integers(1, 31))
            k = int(rng.integers(1, c + 1))
            label = int(rng.integers(c))
            P = rng.random((epochs, c))

            compressed = PredictionStore(1, c, k, observed_labels=[label])
            full = PredictionStore(1, c, k, observed_labels=[label], retain_history=True)
            for e in range(epochs):
                compressed.record_epoch(0, P[e], e)
                full.record_epoch(0, P[e], e)

            matched = False
            for q in range(epochs + 1):
                expected = Decision.CLEAN if matched else Decision.NOISY
                if compressed.or_gate_decision(0, label, q) is not expected:
                    mismatches += 1
                if full.or_gate_decision(0, label, q) is not expected:
                    mismatches += 1
                if q < epochs and label in topk_labels(P[q], k):
                    matched = True

        duration = time.perf_counter() - started
        passed = mismatches == 0 and duration < 5.0
        report(
            capsys, 2, passed,
            f"{histories} histories, {mismatches} mismatches, {duration:.2f}s",
        )
        assert mismatches == 0
        assert duration < 5.0


class TestGradientCorrectness:
    def test_criterion_3(self, capsys):
        """Analytic margin-head gradients match central finite differences to
        a relative error below 1e-4 on 100 random instances."""
        started = time.perf_counter()
        rng = np.random.default_rng(303)
        h = 1e-5
        worst = 0.0
        for i in range(100):
            c = int(rng.integers(2, 9))
            d = int(rng.integers(2, 9))
            margin = float(rng.uniform(0.0, 0.4))
            scale = float(rng.uniform(5.0, 40.0))
            state = head_state(c, d, i, margin, scale)
            while True:
                state.class_weights = rng.standard_normal((c, d))
                e = rng.standard_normal(d)
                label = int(rng.integers(c))
                loss, _ = am_softmax_forward(state, e, label)
                # a fully saturated loss leaves only rounding noise for the
                # central differences to measure, so degenerate draws retry
                if loss >= 1e-6:
                    break
            dE, dW = am_softmax_backward(state, e, label)

            fd_e = np.zeros(d)
            for j in range(d):
                bump = np.zeros(d)
                bump[j] = h
                up, _ = am_softmax_forward(state, e + bump, label)
                down, _ = am_softmax_forward(state, e - bump, label)
                fd_e[j] = (up - down) / (2 * h)
            fd_w = np.zeros_like(state.class_weights)
            for r in range(c):
                for j in range(d):
                    original = state.class_weights[r, j]
                    state.class_weights[r, j] = original + h
                    up, _ = am_softmax_forward(state, e, label)
                    state.class_weights[r, j] = original - h
                    down, _ = am_softmax_forward(state, e, label)
                    state.class_weights[r, j] = original
                    fd_w[r, j] = (up - down) / (2 * h)
            worst = max(worst, relative_error(dE, fd_e), relative_error(dW, fd_w))

        duration = time.perf_counter() - started
        passed = worst < 1e-4 and duration < 5.0
        report(
            capsys, 3, passed,
            f"100 instances, worst relative error {worst:.2e}, {duration:.2f}s",
        )
        assert worst < 1e-4
        assert duration < 5.0


class TestEerOracle:
    def test_criterion_4(self, capsys):
        """compute_eer matches an independent exhaustive threshold sweep to
        1e-9 on 100 random trial sets and is exactly invariant under strictly
        increasing score transforms."""
        started = time.perf_counter()
        rng = np.random.default_rng(404)
        worst_gap = 0.0
        invariance_breaks = 0
        for _ in range(100):
            n_t = int(rng.integers(2, 60))
            n_n = int(rng.integers(2, 60))
            # one-decimal quantization forces ties across the two trial kinds
            targets = np.round(rng.normal(0.6, 0.3, size=n_t), 1)
            nontargets = np.round(rng.normal(0.4, 0.3, size=n_n), 1)
            scores = np.concatenate([targets, nontargets])
            flags = np.concatenate([np.ones(n_t, bool), np.zeros(n_n, bool)])
            eer, _ = compute_eer(ScoredTrials(scores=scores, is_target=flags))
            worst_gap = max(worst_gap, abs(eer - sweep_eer_oracle(scores, flags)))
            for transform in (np.exp, np.tanh, lambda x: 3.0 * x - 1.0):
                mapped, _ = compute_eer(
                    ScoredTrials(scores=transform(scores), is_target=flags)
                )
                if mapped != eer:
                    invariance_breaks += 1

        duration = time.perf_counter() - started
        passed = worst_gap <= 1e-9 and invariance_breaks == 0 and duration < 10.0
        report(
            capsys, 4, passed,
            f"100 trial sets, worst oracle gap {worst_gap:.2e}, "
            f"{invariance_breaks} invariance breaks, {duration:.2f}s",
        )
        assert worst_gap <= 1e-9
        assert invariance_breaks == 0
        assert duration < 10.0


class TestMovingAverageArithmetic:
    def test_criterion_5(self, capsys):
        """Momentum endpoints reproduce the raw streams bit-exactly; random
        convex combinations match the reference recurrence to 1e-12."""
        rng = np.random.default_rng(505)

        endpoint_ok = True
        first = rng.dirichlet(np.ones(4))
        last = rng.dirichlet(np.ones(4))
        track_latest = SelfMovingAverage(1, 4, momentum=0.0)
        freeze_first = SelfMovingAverage(1, 4, momentum=1.0)
        for ma in (track_latest, freeze_first):
            ma.update(0, first)
            ma.update(0, rng.dirichlet(np.ones(4)))
            ma.update(0, last)
        endpoint_ok &= np.array_equal(track_latest.mean_prediction(0), last)
        endpoint_ok &= np.array_equal(freeze_first.mean_prediction(0), first)

        worst = 0.0
        for _ in range(50):
            n = int(rng.integers(1, 6))
            c = int(rng.integers(2, 8))
            momentum = float(rng.random())
            steps = int(rng.integers(2, 20))
            ma = SelfMovingAverage(n, c, momentum=momentum)
            expected = np.zeros((n, c))
            for t in range(steps):
                P = rng.dirichlet(np.ones(c), size=n)
                ma.update_batch(np.arange(n), P)
                expected = P if t == 0 else momentum * expected + (1.0 - momentum) * P
            for sid in range(n):
                worst = max(worst, float(np.abs(ma.mean_prediction(sid) - expected[sid]).max()))

        passed = endpoint_ok and worst <= 1e-12
        report(
            capsys, 5, passed,
            f"endpoints exact={endpoint_ok}, worst convex-combination gap {worst:.2e}",
        )
        assert endpoint_ok
        assert worst <= 1e-12


class TestSweepDeterminism:
    def test_criterion_6(self, capsys, tmp_path):
        """Two full runs of the default sweep with identical seeds emit
        byte-identical results tables."""
        first = default_plan(tmp_path / "first")
        second = default_plan(tmp_path / "second")
        run_plan(first)
        run_plan(second)
        csv_same = (
            (tmp_path / "first" / "results.csv").read_bytes()
            == (tmp_path / "second" / "results.csv").read_bytes()
        )
        json_same = (
            (tmp_path / "first" / "results.json").read_bytes()
            == (tmp_path / "second" / "results.json").read_bytes()
        )
        passed = csv_same and json_same
        report(capsys, 6, passed, f"results.csv identical={csv_same}, results.json identical={json_same}")
        assert csv_same
        assert json_same


@pytest.fixture(scope="session")
def benchmark(tmp_path_factory):
    """One shared run of the default benchmark grid: five modes, four noise
    rates, three repeats. Evaluation only at the final epoch keeps the grid
    fast; the per-epoch selection metrics are unaffected by that choice."""
    out = tmp_path_factory.mktemp("benchmark")
    plan = default_plan(
        out,
        seed=7,
        modes=list(BENCH_MODES),
        noise_rates=list(BENCH_RATES),
        repeats=BENCH_REPEATS,
        eval_interval=40,
    )
    table = run_plan(plan)
    index = {(r.mode, r.noise_rate, r.repeat): r for r in table.rows}
    return index


def eer(index, mode, rate, repeat) -> float:
    return index[(mode, rate, repeat)].final_eer


def final_recall(index, mode, rate, repeat):
    return index[(mode, rate, repeat)].final_recall


def stage_one_metrics(index, mode, rate, repeat):
    return index[(mode, rate, repeat)].snapshots[STAGE_ONE_END]


def fmt3(values) -> str:
    return "/".join(f"{v:.4f}" for v in values)


class TestBenchmarkTrends:
    def test_criterion_7(self, benchmark, capsys):
        """Training on everything degrades monotonically with the noise rate:
        baseline final EER strictly increases over eta in {0, 0.2, 0.5}."""
        verdicts = []
        for repeat in range(BENCH_REPEATS):
            e0 = eer(benchmark, "baseline", 0.0, repeat)
            e2 = eer(benchmark, "baseline", 0.2, repeat)
            e5 = eer(benchmark, "baseline", 0.5, repeat)
            verdicts.append(e0 < e2 < e5)
        wins = sum(verdicts)
        passed = wins >= 2
        report(
            capsys, 7, passed,
            f"baseline EER increasing in {wins}/3 repeats "
            f"(eta0 {fmt3(eer(benchmark, 'baseline', 0.0, r) for r in range(3))}, "
            f"eta0.5 {fmt3(eer(benchmark, 'baseline', 0.5, r) for r in range(3))})",
        )
        assert passed, f"monotone degradation held in only {wins}/3 repeats"

    def test_criterion_8(self, benchmark, capsys):
        """Gated training beats the baseline under noise, by more than 20%
        relative at the half-corrupted rate."""
        verdicts, gaps = [], []
        for repeat in range(BENCH_REPEATS):
            b3 = eer(benchmark, "baseline", 0.3, repeat)
            o3 = eer(benchmark, "orgate", 0.3, repeat)
            b5 = eer(benchmark, "baseline", 0.5, repeat)
            o5 = eer(benchmark, "orgate", 0.5, repeat)
            gap = (b5 - o5) / b5 if b5 > 0 else 0.0
            gaps.append(gap)
            verdicts.append(o3 < b3 and o5 < b5 and gap > 0.20)
        wins = sum(verdicts)
        passed = wins >= 2
        report(
            capsys, 8, passed,
            f"orgate beats baseline in {wins}/3 repeats, "
            f"relative gap at eta0.5 {fmt3(gaps)}",
        )
        assert passed, f"robustness gap held in only {wins}/3 repeats"

    def test_criterion_9(self, benchmark, capsys):
        """Selection quality: at eta <= 0.3 the first gated epoch is at least
        99% precise and final recall reaches 0.95; at eta 0.5 recall keeps
        growing after the all-samples stage."""
        verdicts = []
        for repeat in range(BENCH_REPEATS):
            ok = True
            for rate in (0.0, 0.2, 0.3):
                precision, _ = stage_one_metrics(benchmark, "orgate", rate, repeat)
                recall = final_recall(benchmark, "orgate", rate, repeat)
                ok &= precision is not None and precision >= 0.99
                ok &= recall is not None and recall >= 0.95
            _, early_recall = stage_one_metrics(benchmark, "orgate", 0.5, repeat)
            late_recall = final_recall(benchmark, "orgate", 0.5, repeat)
            ok &= late_recall is not None and early_recall is not None
            ok &= late_recall > early_recall
            verdicts.append(bool(ok))
        wins = sum(verdicts)
        passed = wins >= 2
        prec3 = [stage_one_metrics(benchmark, "orgate", 0.3, r)[0] for r in range(3)]
        rec3 = [final_recall(benchmark, "orgate", 0.3, r) for r in range(3)]
        report(
            capsys, 9, passed,
            f"selection quality held in {wins}/3 repeats "
            f"(eta0.3 stage-one precision {fmt3(prec3)}, final recall {fmt3(rec3)})",
        )
        assert passed, f"selection quality held in only {wins}/3 repeats"

    def test_criterion_10(self, benchmark, capsys):
        """Both ingredients matter: at eta 0.3 the full method beats the
        single-label variant and the variant that skips the all-samples
        stage."""
        verdicts = []
        for repeat in range(BENCH_REPEATS):
            o = eer(benchmark, "orgate", 0.3, repeat)
            k1 = eer(benchmark, "orgate_k1", 0.3, repeat)
            no_early = eer(benchmark, "orgate_no_early", 0.3, repeat)
            verdicts.append(o < k1 and o < no_early)
        wins = sum(verdicts)
        passed = wins >= 2
        report(
            capsys, 10, passed,
            f"ablation ordering held in {wins}/3 repeats "
            f"(orgate {fmt3(eer(benchmark, 'orgate', 0.3, r) for r in range(3))}, "
            f"k1 {fmt3(eer(benchmark, 'orgate_k1', 0.3, r) for r in range(3))}, "
            f"no_early {fmt3(eer(benchmark, 'orgate_no_early', 0.3, r) for r in range(3))})",
        )
        assert passed, f"ablation ordering held in only {wins}/3 repeats"

    def test_criterion_11(self, benchmark, capsys):
        """The top-k history gate is at least as good as gating on the
        moving-average argmax at eta 0.3."""
        verdicts = []
        for repeat in range(BENCH_REPEATS):
            o = eer(benchmark, "orgate", 0.3, repeat)
            s = eer(benchmark, "self_baseline", 0.3, repeat)
            verdicts.append(o <= s)
        wins = sum(verdicts)
        passed = wins >= 2
        report(
            capsys, 11, passed,
            f"orgate <= moving-average gate in {wins}/3 repeats "
            f"(orgate {fmt3(eer(benchmark, 'orgate', 0.3, r) for r in range(3))}, "
            f"self {fmt3(eer(benchmark, 'self_baseline', 0.3, r) for r in range(3))})",
        )
        assert passed, f"comparison held in only {wins}/3 repeats"
