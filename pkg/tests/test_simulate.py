"""Simulator tests: noise rates, confidence modes, determinism."""

import numpy as np
import pytest
from scipy import stats

from aedkit.align import (
    DELETE,
    EQUAL,
    ERROR,
    INSERT,
    NOT_ERROR,
    SUBSTITUTE,
    align,
    label_errors,
)
from aedkit.errors import ConfigurationError
from aedkit.simulate import (
    SimulatorConfig,
    assign_confidence,
    corrupt,
    generate_corpus,
    preset_config,
    sample_reference,
)


def _flat_labels(examples):
    return [lab for ex in examples for lab in ex.labels]


def _flat_confidences(examples):
    return [c for ex in examples for c in ex.confidences]


class TestConfig:
    def test_rate_validation(self):
        with pytest.raises(ConfigurationError):
            SimulatorConfig(sub_rate=0.8, del_rate=0.3)
        with pytest.raises(ConfigurationError):
            SimulatorConfig(ins_rate=1.0)
        with pytest.raises(ConfigurationError):
            SimulatorConfig(sub_rate=-0.1)
        with pytest.raises(ConfigurationError):
            SimulatorConfig(beta_correct=(0.0, 1.0))

    def test_dict_roundtrip(self):
        cfg = preset_config("other", seed=7)
        assert SimulatorConfig.from_dict(cfg.to_dict()) == cfg


class TestCorrupt:
    def test_zero_rates_is_identity(self):
        cfg = SimulatorConfig(sub_rate=0.0, del_rate=0.0, ins_rate=0.0, seed=1)
        rng = np.random.default_rng(1)
        for _ in range(20):
            ref = sample_reference(cfg, rng)
            hyp, ops = corrupt(ref, cfg, rng)
            assert hyp == ref
            assert all(op.kind == EQUAL for op in ops.ops)
            assert ops.cost == 0

    def test_all_substitutions(self):
        cfg = SimulatorConfig(sub_rate=1.0, del_rate=0.0, ins_rate=0.0, seed=2)
        rng = np.random.default_rng(2)
        ref = sample_reference(cfg, rng)
        hyp, ops = corrupt(ref, cfg, rng)
        assert len(hyp) == len(ref)
        assert all(op.kind == SUBSTITUTE for op in ops.ops)
        labels = label_errors(align(hyp, ref), len(hyp))
        assert labels == [ERROR] * len(hyp)

    def test_true_ops_reach_reference(self):
        # replaying the generating edits on the hypothesis must rebuild ref
        cfg = SimulatorConfig(sub_rate=0.15, del_rate=0.1, ins_rate=0.1, seed=3)
        rng = np.random.default_rng(3)
        for _ in range(50):
            ref = sample_reference(cfg, rng)
            hyp, path = corrupt(ref, cfg, rng)
            rebuilt = []
            for op in path.ops:
                if op.kind in (EQUAL,):
                    rebuilt.append(hyp[op.hyp_index])
                elif op.kind in (SUBSTITUTE, INSERT):
                    rebuilt.append(ref[op.ref_index])
                elif op.kind == DELETE:
                    pass
            assert rebuilt == ref
            path.validate(len(hyp), len(ref))

    def test_substitution_rate_monte_carlo(self):
        cfg = SimulatorConfig(
            sub_rate=0.10, del_rate=0.0, ins_rate=0.0, seed=11,
            sentence_len_range=(8, 12),
        )
        bundle = generate_corpus(10_000, 0, 0, cfg)
        words = sum(len(ex.hyp_words) for ex in bundle.train)
        errors = sum(ex.labels.count(ERROR) for ex in bundle.train)
        assert words > 90_000
        assert 0.09 <= errors / words <= 0.11


class TestConfidenceModes:
    def test_beta_separated_means_ordered(self):
        cfg = SimulatorConfig(seed=5)
        rng = np.random.default_rng(5)
        correct = [assign_confidence(True, cfg, rng) for _ in range(2000)]
        wrong = [assign_confidence(False, cfg, rng) for _ in range(2000)]
        assert np.mean(correct) > np.mean(wrong)
        assert np.mean(correct) == pytest.approx(0.9, abs=0.02)
        assert np.mean(wrong) == pytest.approx(2 / 7, abs=0.02)

    def test_uninformative_distributions_indistinguishable(self):
        cfg = SimulatorConfig(confidence_mode="uninformative", seed=6)
        bundle = generate_corpus(9000, 0, 0, cfg)
        labels = np.array(_flat_labels(bundle.train))
        confs = np.array(_flat_confidences(bundle.train))
        correct = confs[labels == NOT_ERROR][:10_000]
        wrong = confs[labels == ERROR][:10_000]
        assert len(wrong) >= 5000
        result = stats.ks_2samp(correct, wrong)
        assert result.pvalue > 0.01

    def test_beta_separated_distributions_distinguishable(self):
        cfg = SimulatorConfig(seed=6)
        bundle = generate_corpus(2000, 0, 0, cfg)
        labels = np.array(_flat_labels(bundle.train))
        confs = np.array(_flat_confidences(bundle.train))
        result = stats.ks_2samp(confs[labels == NOT_ERROR], confs[labels == ERROR])
        assert result.pvalue < 1e-6

    def test_calibrated_brier_at_point_eight(self):
        # near-degenerate Beta keeps p within 4e-4 of 0.8
        cfg = SimulatorConfig(
            confidence_mode="calibrated",
            beta_correct=(0.8e6, 0.2e6),
            seed=8,
            sentence_len_range=(8, 12),
        )
        bundle = generate_corpus(5200, 0, 0, cfg)
        labels = _flat_labels(bundle.train)
        confs = _flat_confidences(bundle.train)
        assert len(labels) >= 50_000
        y = np.array([1.0 if lab == NOT_ERROR else 0.0 for lab in labels])
        c = np.array(confs)
        brier = float(np.mean((c - y) ** 2))
        assert brier == pytest.approx(0.16, abs=0.01)

    def test_calibrated_reliability(self):
        cfg = SimulatorConfig(
            confidence_mode="calibrated", beta_correct=(2.0, 2.0), seed=9,
            sentence_len_range=(8, 12),
        )
        bundle = generate_corpus(4000, 0, 0, cfg)
        labels = np.array(_flat_labels(bundle.train)) == NOT_ERROR
        confs = np.array(_flat_confidences(bundle.train))
        for lo in np.arange(0.0, 1.0, 0.05):
            mask = (confs >= lo) & (confs < lo + 0.05)
            if mask.sum() >= 500:
                frac_correct = labels[mask].mean()
                assert abs(frac_correct - (lo + 0.025)) <= 0.05


class TestGenerateCorpus:
    def test_deterministic(self):
        cfg = preset_config("clean", seed=123)
        b1 = generate_corpus(50, 10, 10, cfg)
        b2 = generate_corpus(50, 10, 10, cfg)
        assert b1.train == b2.train
        assert b1.dev == b2.dev
        assert b1.test == b2.test

    def test_different_seeds_differ(self):
        a = generate_corpus(20, 0, 0, preset_config("clean", seed=1)).train
        b = generate_corpus(20, 0, 0, preset_config("clean", seed=2)).train
        assert a != b

    def test_labels_come_from_alignment(self):
        cfg = preset_config("other", seed=4)
        bundle = generate_corpus(100, 0, 0, cfg)
        for ex in bundle.train:
            expected = label_errors(align(ex.hyp_words, ex.ref_words), len(ex.hyp_words))
            assert ex.labels == expected

    def test_empty_split_is_valid(self):
        bundle = generate_corpus(0, 5, 5, preset_config("clean", seed=3))
        assert bundle.train == []
        assert len(bundle.dev) == 5

    def test_split_ids_disjoint(self):
        bundle = generate_corpus(5, 5, 5, preset_config("clean", seed=3))
        ids = [ex.id for split in bundle.splits().values() for ex in split]
        assert len(set(ids)) == len(ids)

    def test_preset_error_rates_separate(self):
        clean = generate_corpus(2000, 0, 0, preset_config("clean", seed=10)).train
        other = generate_corpus(2000, 0, 0, preset_config("other", seed=10)).train

        def rate(examples):
            words = sum(len(ex.hyp_words) for ex in examples)
            return sum(ex.labels.count(ERROR) for ex in examples) / words

        assert 0.085 <= rate(clean) <= 0.115
        assert 0.18 <= rate(other) <= 0.23
