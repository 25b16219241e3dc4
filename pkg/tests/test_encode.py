"""Vocabulary, tokenization, and binning tests."""

import numpy as np
import pytest

from aedkit.align import ERROR, NOT_ERROR, LabeledExample
from aedkit.encode import (
    CLS_ID,
    PAD_ID,
    SEP_ID,
    UNK_ID,
    BinningConfig,
    Vocabulary,
    bin_equal_width,
    build_vocab,
    encode_example,
    fit_quantile_bins,
    propagate_confidence,
    tokenize,
    tokenize_word,
)
from aedkit.errors import ConfigurationError, DataError


class TestBuildVocab:
    def test_frequent_word_kept_whole(self):
        vocab = build_vocab([["cat"]], target_size=64)
        assert "cat" in vocab.pieces
        assert tokenize_word("cat", vocab) == [vocab.piece_to_id["cat"]]

    def test_minimum_size_is_character_level(self):
        corpus = [["cat", "dog"]]
        alphabet = sorted(set("catdog"))
        vocab = build_vocab(corpus, target_size=5 + len(alphabet))
        assert len(vocab) == 5 + len(alphabet)
        assert len(tokenize_word("cat", vocab)) == 3

    def test_deterministic(self):
        corpus = [["abba", "baab", "ab"], ["ba", "abba"]]
        v1 = build_vocab(corpus, target_size=20)
        v2 = build_vocab(corpus, target_size=20)
        assert v1.pieces == v2.pieces

    def test_too_small_target_raises(self):
        with pytest.raises(ConfigurationError):
            build_vocab([["abc"]], target_size=6)

    def test_save_load_roundtrip(self, tmp_path):
        vocab = build_vocab([["hello", "world"]], target_size=40)
        path = tmp_path / "vocab.txt"
        vocab.save(path)
        assert Vocabulary.load(path) == vocab


class TestTokenize:
    def test_single_word(self):
        vocab = build_vocab([["cat"]], target_size=64)
        ids, w2t, attention_len = tokenize(["cat"], vocab, max_len=8)
        assert ids[:3] == [CLS_ID, vocab.piece_to_id["cat"], SEP_ID]
        assert ids[3:] == [PAD_ID] * 5
        assert w2t == [(1, 2)]
        assert attention_len == 3

    def test_multi_piece_word(self):
        # "catdog" is rare so it splits into the frequent pieces
        corpus = [["cat"] * 10 + ["dog"] * 10 + ["catdog"]]
        vocab = build_vocab(corpus, target_size=5 + len(set("catdog")) + 2)
        ids, w2t, _ = tokenize(["catdog"], vocab, max_len=16)
        start, end = w2t[0]
        assert end - start == 2
        pieces = [vocab.pieces[i] for i in ids[start:end]]
        assert "".join(pieces) == "catdog"

    def test_unknown_character_becomes_unk(self):
        vocab = build_vocab([["abc"]], target_size=16)
        assert UNK_ID in tokenize_word("axc", vocab)

    def test_truncation_keeps_whole_words(self):
        vocab = build_vocab([["w"]], target_size=8)
        words = ["w"] * 200
        ids, w2t, attention_len = tokenize(words, vocab, max_len=128)
        assert len(w2t) == 126
        assert attention_len == 128
        assert ids[127] == SEP_ID

    def test_truncation_never_splits_a_word(self):
        corpus = [["aa", "bbb", "cc"]]
        vocab = build_vocab(corpus, target_size=32)
        # room for CLS + 3 tokens + SEP; the three words are single pieces
        ids, w2t, attention_len = tokenize(["aa", "bbb", "aa", "cc"], vocab, max_len=5)
        assert len(w2t) == 3
        assert attention_len == 5

    def test_roundtrip_concatenation(self):
        rng = np.random.default_rng(7)
        alphabet = "abcdef"
        words = [
            "".join(alphabet[k] for k in rng.integers(0, 6, size=rng.integers(1, 9)))
            for _ in range(200)
        ]
        vocab = build_vocab([words], target_size=80)
        for word in words:
            pieces = [vocab.pieces[i] for i in tokenize_word(word, vocab)]
            assert "".join(pieces) == word


class TestEqualWidthBinning:
    def test_formula_cases(self):
        assert bin_equal_width(0.0, 10) == 0
        assert bin_equal_width(1.0, 10) == 9
        assert bin_equal_width(0.55, 10) == 5

    def test_out_of_range_raises(self):
        with pytest.raises(ValueError):
            bin_equal_width(-0.01, 10)
        with pytest.raises(ValueError):
            bin_equal_width(1.01, 10)

    def test_monotone_over_random_pairs(self):
        rng = np.random.default_rng(99)
        for num_bins in (1, 10, 100):
            cfg = BinningConfig("equal_width", num_bins)
            s = rng.random(2000)
            for a, b in zip(s[::2], s[1::2]):
                lo, hi = sorted((a, b))
                assert cfg.assign(lo) <= cfg.assign(hi)


class TestQuantileBinning:
    def test_uniform_grid_matches_equal_width(self):
        grid = [0.005 + 0.01 * i for i in range(100)]
        cfg = fit_quantile_bins(grid, 10)
        for s in grid:
            assert cfg.assign(s) == bin_equal_width(s, 10)

    def test_identical_scores_all_bin_zero(self):
        cfg = fit_quantile_bins([0.7] * 50, 10)
        assert cfg.assign(0.7) == 0
        assert cfg.assign(0.69) == 0
        assert cfg.assign(0.71) == 9  # everything above the collapsed boundary

    def test_single_bin(self):
        cfg = fit_quantile_bins([0.1, 0.5, 0.9], 1)
        assert cfg.assign(0.0) == 0
        assert cfg.assign(1.0) == 0

    def test_empty_scores_raise(self):
        with pytest.raises(DataError):
            fit_quantile_bins([], 10)

    def test_monotone_over_random_pairs(self):
        rng = np.random.default_rng(3)
        cfg = fit_quantile_bins(rng.beta(2.0, 1.0, size=500).tolist(), 10)
        s = rng.random(2000)
        for a, b in zip(s[::2], s[1::2]):
            lo, hi = sorted((a, b))
            assert cfg.assign(lo) <= cfg.assign(hi)

    def test_roundtrip_dict(self):
        cfg = fit_quantile_bins([0.2, 0.4, 0.9], 4)
        again = BinningConfig.from_dict(cfg.to_dict())
        assert again == cfg


class TestPropagateConfidence:
    def test_word_split_across_tokens(self):
        cfg = BinningConfig("equal_width", 10)
        bins = propagate_confidence([0.95], [(1, 3)], cfg, num_tokens=5)
        assert bins == [10, 9, 9, 10, 10]

    def test_specials_get_dedicated_bin(self):
        cfg = BinningConfig("equal_width", 10)
        bins = propagate_confidence([], [], cfg, num_tokens=2)
        assert bins == [10, 10]

    def test_gap_in_coverage_raises(self):
        cfg = BinningConfig("equal_width", 10)
        with pytest.raises(DataError):
            propagate_confidence([0.5, 0.5], [(1, 2), (3, 4)], cfg, num_tokens=6)

    def test_more_ranges_than_scores_raises(self):
        cfg = BinningConfig("equal_width", 10)
        with pytest.raises(DataError):
            propagate_confidence([0.5], [(1, 2), (2, 3)], cfg, num_tokens=5)


class TestEncodeExample:
    def _vocab(self):
        return build_vocab([["cat", "dog", "fish"]], target_size=48)

    def test_full_assembly(self):
        ex = LabeledExample(
            id="e1",
            hyp_words=["cat", "dog"],
            confidences=[0.95, 0.15],
            labels=[NOT_ERROR, ERROR],
        )
        enc = encode_example(ex, self._vocab(), BinningConfig("equal_width", 10), max_len=8)
        assert enc.token_ids[0] == CLS_ID
        assert enc.attention_len == 4
        assert enc.conf_bins.tolist() == [10, 9, 1, 10, 10, 10, 10, 10]
        assert enc.conf_scores.tolist() == [0.0, 0.95, 0.15, 0.0, 0.0, 0.0, 0.0, 0.0]
        assert enc.labels_tok.tolist() == [0, 0, 1, 0, 0, 0, 0, 0]

    def test_content_bins_in_range(self):
        rng = np.random.default_rng(11)
        vocab = self._vocab()
        cfg = BinningConfig("equal_width", 10)
        for _ in range(50):
            n = int(rng.integers(1, 5))
            ex = LabeledExample(
                id="r",
                hyp_words=[["cat", "dog", "fish"][k] for k in rng.integers(0, 3, n)],
                confidences=rng.random(n).tolist(),
                labels=[NOT_ERROR] * n,
            )
            enc = encode_example(ex, vocab, cfg, max_len=32)
            content = np.zeros(32, dtype=bool)
            for start, end in enc.word_to_tokens:
                content[start:end] = True
            assert (enc.conf_bins[content] <= 9).all()
            assert (enc.conf_bins[~content] == 10).all()
