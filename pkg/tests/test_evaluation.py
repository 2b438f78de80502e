import itertools

import numpy as np
import pytest

from swarmdetect import evaluation as ev
from swarmdetect.errors import EmptyInputError, UndefinedMetricError

POS, NEG = "swarming", "planktonic"


def brute_confusion(scored, t):
    tp = sum(1 for l, s in scored if l == POS and s >= t)
    fn = sum(1 for l, s in scored if l == POS and s < t)
    fp = sum(1 for l, s in scored if l == NEG and s >= t)
    tn = sum(1 for l, s in scored if l == NEG and s < t)
    return tp, fp, tn, fn


def mann_whitney(scored):
    pos = [s for l, s in scored if l == POS]
    neg = [s for l, s in scored if l == NEG]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def random_scored(rng, n=None, tie_prone=False):
    n = n or rng.integers(2, 60)
    labels = [POS, NEG] + [POS if rng.random() < 0.5 else NEG for _ in range(n - 2)]
    if tie_prone:
        scores = rng.integers(0, 5, size=n) / 4.0
    else:
        scores = rng.uniform(size=n)
    return list(zip(labels, scores.tolist()))


class TestConfusion:
    def test_reference_counts(self):
        scored = [(POS, 0.9)] * 38 + [(POS, 0.1)] + [(NEG, 0.1)] * 44
        c = ev.confusion(scored, 0.5)
        assert (c.tp, c.fn, c.tn, c.fp) == (38, 1, 44, 0)

    def test_all_scores_at_threshold_predicted_positive(self):
        scored = [(POS, 0.5), (NEG, 0.5)]
        c = ev.confusion(scored, 0.5)
        assert c.tp == 1 and c.fp == 1 and c.tn == 0 and c.fn == 0

    def test_threshold_above_max(self):
        scored = [(POS, 0.9), (NEG, 0.8)]
        c = ev.confusion(scored, 0.95)
        assert c.tp == 0 and c.fp == 0

    def test_counts_partition(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            scored = random_scored(rng)
            c = ev.confusion(scored, rng.uniform())
            assert c.tp + c.fn == sum(1 for l, _ in scored if l == POS)
            assert c.tn + c.fp == sum(1 for l, _ in scored if l == NEG)

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            ev.confusion([], 0.5)

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            ev.ConfusionCounts(tp=-1, fp=0, tn=0, fn=0)


class TestSensitivitySpecificity:
    @pytest.mark.parametrize(
        "tp,fn,expected",
        [(38, 1, 0.9744), (47, 1, 0.9792), (27, 0, 1.0)],
    )
    def test_sensitivity_reference_values(self, tp, fn, expected):
        c = ev.ConfusionCounts(tp=tp, fp=0, tn=0, fn=fn)
        assert round(ev.sensitivity(c), 4) == expected

    @pytest.mark.parametrize(
        "tn,fp,expected",
        [(44, 0, 1.0), (30, 1, 0.9677), (35, 1, 0.9722)],
    )
    def test_specificity_reference_values(self, tn, fp, expected):
        c = ev.ConfusionCounts(tp=0, fp=fp, tn=tn, fn=0)
        assert round(ev.specificity(c), 4) == expected

    def test_undefined_metrics(self):
        c = ev.ConfusionCounts(tp=0, fp=1, tn=1, fn=0)
        with pytest.raises(UndefinedMetricError):
            ev.sensitivity(c)
        c = ev.ConfusionCounts(tp=1, fp=0, tn=0, fn=1)
        with pytest.raises(UndefinedMetricError):
            ev.specificity(c)


class TestThresholdSweep:
    def test_grid_zero(self):
        scored = [(POS, 0.3), (NEG, 0.7)]
        [(t, sens, spec)] = ev.threshold_sweep(scored, [0.0])
        assert sens == 1.0 and spec == 0.0

    def test_grid_above_one(self):
        scored = [(POS, 0.3), (NEG, 0.7)]
        [(t, sens, spec)] = ev.threshold_sweep(scored, [1.0 + 1e-9])
        assert sens == 0.0 and spec == 1.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        grid = np.linspace(0, 1, 21).tolist()
        for _ in range(20):
            scored = random_scored(rng, tie_prone=True)
            for t, sens, spec in ev.threshold_sweep(scored, grid):
                tp, fp, tn, fn = brute_confusion(scored, t)
                assert sens == tp / (tp + fn)
                assert spec == tn / (tn + fp)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(2)
        grid = np.linspace(0, 1, 31).tolist()
        for _ in range(20):
            sweep = ev.threshold_sweep(random_scored(rng, tie_prone=True), grid)
            sens = [s for _, s, _ in sweep]
            spec = [s for _, _, s in sweep]
            assert all(a >= b for a, b in zip(sens, sens[1:]))
            assert all(a <= b for a, b in zip(spec, spec[1:]))

    def test_unsorted_grid_rejected(self):
        with pytest.raises(ValueError):
            ev.threshold_sweep([(POS, 0.5), (NEG, 0.4)], [0.5, 0.2])


class TestRocAuc:
    def test_perfect_separation(self):
        scored = [(POS, 0.9), (POS, 0.8), (NEG, 0.2), (NEG, 0.1)]
        _, auc = ev.roc_auc(scored)
        assert auc == 1.0

    def test_all_ties(self):
        scored = [(POS, 0.5)] * 3 + [(NEG, 0.5)] * 4
        _, auc = ev.roc_auc(scored)
        assert auc == 0.5

    def test_three_of_four_pairs(self):
        scored = [(POS, 0.9), (POS, 0.4), (NEG, 0.6), (NEG, 0.1)]
        _, auc = ev.roc_auc(scored)
        assert auc == 0.75

    def test_staircase_shape(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            roc, _ = ev.roc_auc(random_scored(rng, tie_prone=True))
            assert roc[0] == (0.0, 0.0) and roc[-1] == (1.0, 1.0)
            xs = [x for x, _ in roc]
            ys = [y for _, y in roc]
            assert all(a <= b for a, b in zip(xs, xs[1:]))
            assert all(a <= b for a, b in zip(ys, ys[1:]))

    def test_exhaustive_mann_whitney_identity(self):
        # all labelled score multisets of size 4 over a 5-value alphabet
        values = [0.0, 0.25, 0.5, 0.75, 1.0]
        for scores in itertools.combinations_with_replacement(values, 4):
            for labels in itertools.product([POS, NEG], repeat=4):
                scored = list(zip(labels, scores))
                if len({l for l, _ in scored}) < 2:
                    continue
                _, auc = ev.roc_auc(scored)
                assert auc == pytest.approx(mann_whitney(scored), abs=1e-12)

    def test_single_class_errors(self):
        with pytest.raises(UndefinedMetricError):
            ev.roc_auc([(POS, 0.9), (POS, 0.4)])

    def test_permutation_invariant(self):
        rng = np.random.default_rng(4)
        scored = random_scored(rng, n=30)
        _, auc = ev.roc_auc(scored)
        rng.shuffle(scored)
        _, auc2 = ev.roc_auc(scored)
        assert auc == auc2


class TestBuildReport:
    @pytest.fixture
    def per_well(self):
        rng = np.random.default_rng(5)
        out = []
        for i in range(12):
            label = POS if i % 2 == 0 else NEG
            base = 0.7 if label == POS else 0.3
            out.append((f"w{i}", label, float(np.clip(base + rng.normal(0, 0.2), 0, 1))))
        return out

    def test_confusion_agrees_with_sweep(self, per_well):
        report = ev.build_report(per_well, threshold=0.5)
        entry = next(x for x in report.sweep if x[0] == 0.5)
        assert entry[1] == report.sensitivity
        assert entry[2] == report.specificity

    def test_auc_matches_roc_auc(self, per_well):
        report = ev.build_report(per_well)
        scored = [(l, s) for _, l, s in per_well]
        _, auc = ev.roc_auc(scored)
        assert report.auc == auc

    def test_round_trip(self, per_well, tmp_path):
        report = ev.build_report(per_well, extra={"note": "x"})
        report.save(tmp_path / "r.json")
        back = ev.EvalReport.load(tmp_path / "r.json")
        assert back == report

    def test_plots_emitted(self, per_well, tmp_path):
        report = ev.build_report(per_well)
        paths = ev.plot_report(report, tmp_path, run_id="t")
        assert len(paths) == 3
        assert all(p.exists() and p.stat().st_size > 0 for p in paths)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            ev.build_report([])
