"""Subword vocabulary, tokenization, and confidence-score quantization.

Words are segmented greedy-longest-match against a frequency-built piece
inventory. Confidence scores are quantized into ``B`` integer bins; special
tokens (CLS/SEP/PAD) take the dedicated extra bin ``B`` since they carry no
confidence of their own.
"""

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .align import ERROR
from .errors import ConfigurationError, DataError

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_PIECES = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)

EQUAL_WIDTH = "equal_width"
QUANTILE = "quantile"


@dataclass(frozen=True)
class Vocabulary:
    """Ordered piece inventory; indices 0..4 are reserved for specials."""

    pieces: tuple[str, ...]

    def __post_init__(self):
        if self.pieces[: len(SPECIAL_PIECES)] != SPECIAL_PIECES:
            raise ConfigurationError("vocabulary must start with the special pieces")
        if len(set(self.pieces)) != len(self.pieces):
            raise ConfigurationError("vocabulary pieces must be unique")

    def __len__(self) -> int:
        return len(self.pieces)

    @property
    def piece_to_id(self) -> dict[str, int]:
        cached = self.__dict__.get("_piece_to_id")
        if cached is None:
            cached = {p: i for i, p in enumerate(self.pieces)}
            object.__setattr__(self, "_piece_to_id", cached)
        return cached

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(p + "\n" for p in self.pieces), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        pieces = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(pieces))


def build_vocab(corpus: Iterable[Sequence[str]], target_size: int) -> Vocabulary:
    """Frequency-greedy subword inventory over a corpus of word sequences.

    All single characters seen in the corpus are always included so every
    word stays tokenizable; remaining slots go to the most frequent
    substrings (whole words included), longest first on frequency ties.
    """
    word_freq = Counter()
    for words in corpus:
        word_freq.update(words)
    if not word_freq:
        raise DataError("cannot build a vocabulary from an empty corpus")

    alphabet = sorted({ch for w in word_freq for ch in w})
    base = len(SPECIAL_PIECES) + len(alphabet)
    if target_size < base:
        raise ConfigurationError(
            f"target_size {target_size} below specials+alphabet minimum {base}"
        )

    substr_freq = Counter()
    for word, freq in word_freq.items():
        seen = set()
        for i in range(len(word)):
            for j in range(i + 2, len(word) + 1):
                seen.add(word[i:j])
        for s in seen:
            substr_freq[s] += freq

    ranked = sorted(substr_freq.items(), key=lambda kv: (-kv[1], -len(kv[0]), kv[0]))
    pieces = list(SPECIAL_PIECES) + alphabet
    for piece, _ in ranked:
        if len(pieces) >= target_size:
            break
        pieces.append(piece)
    return Vocabulary(tuple(pieces))


def tokenize_word(word: str, vocab: Vocabulary) -> list[int]:
    """Greedy longest-match segmentation; unknown characters become UNK."""
    table = vocab.piece_to_id
    ids: list[int] = []
    pos = 0
    while pos < len(word):
        for end in range(len(word), pos, -1):
            pid = table.get(word[pos:end])
            if pid is not None:
                ids.append(pid)
                pos = end
                break
        else:
            ids.append(UNK_ID)
            pos += 1
    return ids


def tokenize(
    words: Sequence[str], vocab: Vocabulary, max_len: int = 128
) -> tuple[list[int], list[tuple[int, int]], int]:
    """Token ids for a word sequence, padded to ``max_len``.

    Returns ``(token_ids, word_to_tokens, attention_len)`` where
    ``word_to_tokens[w]`` is the half-open token range of word ``w``.
    Truncation drops whole trailing words (never splits a word), then SEP is
    re-appended; dropped words have no entry in ``word_to_tokens``.
    """
    ids = [CLS_ID]
    word_to_tokens: list[tuple[int, int]] = []
    for word in words:
        piece_ids = tokenize_word(word, vocab)
        if len(ids) + len(piece_ids) > max_len - 1:
            break
        word_to_tokens.append((len(ids), len(ids) + len(piece_ids)))
        ids.extend(piece_ids)
    ids.append(SEP_ID)
    attention_len = len(ids)
    ids.extend([PAD_ID] * (max_len - attention_len))
    return ids, word_to_tokens, attention_len


@dataclass
class BinningConfig:
    """Quantization scheme for confidence scores."""

    algorithm: str = EQUAL_WIDTH
    num_bins: int = 10
    quantile_boundaries: list[float] | None = None

    def __post_init__(self):
        if self.algorithm not in (EQUAL_WIDTH, QUANTILE):
            raise ConfigurationError(f"unknown binning algorithm {self.algorithm!r}")
        if self.num_bins < 1:
            raise ConfigurationError("num_bins must be >= 1")

    def assign(self, score: float) -> int:
        if self.algorithm == EQUAL_WIDTH:
            return bin_equal_width(score, self.num_bins)
        if self.quantile_boundaries is None:
            raise ConfigurationError("quantile binning used before fitting")
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"score {score} outside [0, 1]")
        idx = int(np.searchsorted(self.quantile_boundaries, score, side="left"))
        return min(idx, self.num_bins - 1)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "num_bins": self.num_bins,
            "quantile_boundaries": self.quantile_boundaries,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BinningConfig":
        return cls(
            algorithm=d["algorithm"],
            num_bins=d["num_bins"],
            quantile_boundaries=d.get("quantile_boundaries"),
        )


def bin_equal_width(score: float, num_bins: int) -> int:
    """min(floor(score * B), B - 1); rejects scores outside [0, 1]."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score {score} outside [0, 1]")
    return min(int(score * num_bins), num_bins - 1)


def fit_quantile_bins(train_scores: Sequence[float], num_bins: int) -> BinningConfig:
    """Equal-sized buckets: boundaries at empirical quantiles i/B.

    Assignment counts boundaries strictly below the score, so duplicate
    boundaries (degenerate score distributions) collapse to low bins.
    """
    if len(train_scores) == 0:
        raise DataError("cannot fit quantile bins on an empty score list")
    scores = np.asarray(train_scores, dtype=np.float64)
    qs = np.arange(1, num_bins) / num_bins
    boundaries = np.quantile(scores, qs).tolist()
    return BinningConfig(QUANTILE, num_bins, quantile_boundaries=boundaries)


def propagate_confidence(
    word_scores: Sequence[float],
    word_to_tokens: Sequence[tuple[int, int]],
    binning: BinningConfig,
    num_tokens: int,
) -> list[int]:
    """Per-token confidence bins: each token inherits its word's bin.

    Positions not covered by any word (CLS, SEP, PAD) get the dedicated
    special bin ``num_bins``. Content tokens must form one contiguous block
    starting at index 1.
    """
    if len(word_to_tokens) > len(word_scores):
        raise DataError(
            f"{len(word_to_tokens)} token ranges but only {len(word_scores)} scores"
        )
    bins = [binning.num_bins] * num_tokens
    expected_start = 1
    for w, (start, end) in enumerate(word_to_tokens):
        if start != expected_start or end <= start or end > num_tokens - 1:
            raise DataError(f"word {w} token range ({start}, {end}) is not contiguous")
        b = binning.assign(word_scores[w])
        for t in range(start, end):
            bins[t] = b
        expected_start = end
    return bins


@dataclass
class TokenizedExample:
    """Model-ready input: ids, bins, raw scores, and expanded labels."""

    example_id: str
    token_ids: np.ndarray  # (max_len,) int
    word_to_tokens: list[tuple[int, int]]
    conf_bins: np.ndarray  # (max_len,) int, special positions = num_bins
    conf_scores: np.ndarray  # (max_len,) float, special positions = 0.0
    attention_len: int
    labels_tok: np.ndarray | None = None  # (max_len,) int, 1 = Error
    word_labels: list[str] | None = field(default=None, repr=False)


def encode_example(
    example,
    vocab: Vocabulary,
    binning: BinningConfig,
    max_len: int = 128,
    with_labels: bool = True,
) -> TokenizedExample:
    """Tokenize a labeled example and attach per-token bins/scores/labels.

    Every token of an Error word is labeled Error; CLS and SEP are labeled
    NotError and participate in the tagging loss (PAD does not).
    """
    ids, word_to_tokens, attention_len = tokenize(example.hyp_words, vocab, max_len)
    bins = propagate_confidence(
        example.confidences, word_to_tokens, binning, len(ids)
    )
    scores = np.zeros(len(ids), dtype=np.float64)
    for w, (start, end) in enumerate(word_to_tokens):
        scores[start:end] = example.confidences[w]

    labels_tok = None
    if with_labels:
        labels_tok = np.zeros(len(ids), dtype=np.int64)
        for w, (start, end) in enumerate(word_to_tokens):
            if example.labels[w] == ERROR:
                labels_tok[start:end] = 1

    return TokenizedExample(
        example_id=example.id,
        token_ids=np.asarray(ids, dtype=np.int64),
        word_to_tokens=word_to_tokens,
        conf_bins=np.asarray(bins, dtype=np.int64),
        conf_scores=scores,
        attention_len=attention_len,
        labels_tok=labels_tok,
        word_labels=list(example.labels) if with_labels else None,
    )
