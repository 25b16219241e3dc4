"""Synthetic (reference, hypothesis, confidence) corpus generation.

Stands in for a cloud ASR system: reference sentences are drawn from a
synthetic language, corrupted by substitution/deletion/insertion noise, and
given word-level confidence scores whose informativeness is controlled by
``confidence_mode``:

``beta_separated``
    correct words draw from ``Beta(beta_correct)``, errors from
    ``Beta(beta_error)``.
``uninformative``
    every word draws from ``Beta(beta_correct)``; scores carry no signal.
``calibrated``
    each word draws p from ``Beta(beta_correct)``, is corrupted with
    probability 1 - p, and reports confidence exactly p (substitution-only).

The language itself is a first-order Markov chain over a Zipf-weighted
pseudo-word vocabulary: each word has a small set of allowed successors, so
most corruptions are detectable from text alone, the way real ASR errors
tend to be contextually implausible. A fraction of substitutions is drawn
from the allowed successors of the preceding word, emulating acoustically
confusable errors that read fine and only the confidence score can expose.
The language is a pure function of ``vocab_size``, so corpora generated
with different rates or seeds stay mutually intelligible (needed for
cross-distribution train/test runs).
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .align import (
    DELETE,
    EQUAL,
    INSERT,
    SUBSTITUTE,
    EditOp,
    EditPath,
    LabeledExample,
    NormalizerConfig,
    align,
    label_errors,
)
from .errors import ConfigurationError

BETA_SEPARATED = "beta_separated"
CALIBRATED = "calibrated"
UNINFORMATIVE = "uninformative"
_MODES = (BETA_SEPARATED, CALIBRATED, UNINFORMATIVE)

# Language shape: fixed internal conventions, not per-corpus knobs.
_LANGUAGE_SEED = 0x0A5C11
_ZIPF_EXPONENT = 1.0
_SUCCESSORS_PER_WORD = 3
_PLAUSIBLE_SUB_FRACTION = 0.25

_ONSETS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass(frozen=True)
class SimulatorConfig:
    vocab_size: int = 300
    sentence_len_range: tuple[int, int] = (6, 14)
    sub_rate: float = 0.085
    del_rate: float = 0.02
    ins_rate: float = 0.015
    confidence_mode: str = BETA_SEPARATED
    beta_correct: tuple[float, float] = (9.0, 1.0)
    beta_error: tuple[float, float] = (2.0, 5.0)
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ConfigurationError("vocab_size must be >= 2")
        lo, hi = self.sentence_len_range
        if not 1 <= lo <= hi:
            raise ConfigurationError(f"bad sentence_len_range {self.sentence_len_range}")
        if (
            min(self.sub_rate, self.del_rate, self.ins_rate) < 0
            or self.sub_rate + self.del_rate > 1
            or self.ins_rate >= 1  # geometric insertion draws must terminate
        ):
            raise ConfigurationError(
                "edit rates must satisfy 0 <= sub+del <= 1 and 0 <= ins < 1"
            )
        if self.confidence_mode not in _MODES:
            raise ConfigurationError(f"unknown confidence_mode {self.confidence_mode!r}")
        for a, b in (self.beta_correct, self.beta_error):
            if a <= 0 or b <= 0:
                raise ConfigurationError("beta shape parameters must be positive")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "sentence_len_range": list(self.sentence_len_range),
            "sub_rate": self.sub_rate,
            "del_rate": self.del_rate,
            "ins_rate": self.ins_rate,
            "confidence_mode": self.confidence_mode,
            "beta_correct": list(self.beta_correct),
            "beta_error": list(self.beta_error),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulatorConfig":
        kwargs = dict(d)
        for key in ("sentence_len_range", "beta_correct", "beta_error"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def preset_config(name: str, seed: int = 0, **overrides) -> SimulatorConfig:
    """Named rate presets: "clean" (~10% errors) and "other" (~20%)."""
    presets = {
        "clean": dict(sub_rate=0.085, del_rate=0.02, ins_rate=0.015),
        "other": dict(sub_rate=0.17, del_rate=0.03, ins_rate=0.03),
    }
    if name not in presets:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {list(presets)}")
    return SimulatorConfig(seed=seed, **{**presets[name], **overrides})


@dataclass
class CorpusBundle:
    train: list[LabeledExample]
    dev: list[LabeledExample]
    test: list[LabeledExample]

    def splits(self):
        return {"train": self.train, "dev": self.dev, "test": self.test}


@dataclass(frozen=True)
class _Language:
    words: tuple[str, ...]
    unigram: np.ndarray  # Zipf weights, sum 1
    successors: np.ndarray  # (V, k) allowed next-word ids


def _make_words(rng: np.random.Generator, count: int) -> tuple[str, ...]:
    syllables = [o + v for o in _ONSETS for v in _VOWELS]
    words: list[str] = []
    seen = set()
    while len(words) < count:
        n = int(rng.integers(2, 4))
        w = "".join(syllables[k] for k in rng.integers(0, len(syllables), size=n))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return tuple(words)


@lru_cache(maxsize=8)
def _language(vocab_size: int) -> _Language:
    rng = np.random.default_rng([_LANGUAGE_SEED, vocab_size])
    words = _make_words(rng, vocab_size)
    ranks = np.arange(1, vocab_size + 1, dtype=np.float64)
    unigram = ranks**-_ZIPF_EXPONENT
    unigram /= unigram.sum()
    k = min(_SUCCESSORS_PER_WORD, vocab_size - 1)
    successors = np.empty((vocab_size, k), dtype=np.int64)
    for w in range(vocab_size):
        weights = unigram.copy()
        weights[w] = 0.0
        weights /= weights.sum()
        successors[w] = rng.choice(vocab_size, size=k, replace=False, p=weights)
    return _Language(words, unigram, successors)


def sample_reference(cfg: SimulatorConfig, rng: np.random.Generator) -> list[str]:
    """One reference sentence: Zipf start, then a walk over successor sets."""
    lang = _language(cfg.vocab_size)
    lo, hi = cfg.sentence_len_range
    length = int(rng.integers(lo, hi + 1))
    ids = [int(rng.choice(cfg.vocab_size, p=lang.unigram))]
    while len(ids) < length:
        ids.append(int(lang.successors[ids[-1]][rng.integers(0, lang.successors.shape[1])]))
    return [lang.words[i] for i in ids]


def assign_confidence(
    is_correct: bool, cfg: SimulatorConfig, rng: np.random.Generator
) -> float:
    """Draw one word-level confidence score.

    In calibrated mode this is the p draw; the caller couples correctness to
    it upstream (see :func:`corrupt`).
    """
    if cfg.confidence_mode == BETA_SEPARATED:
        a, b = cfg.beta_correct if is_correct else cfg.beta_error
    else:
        a, b = cfg.beta_correct
    return float(rng.beta(a, b))


def _substitute_word(
    word_id: int, prev_hyp_id: int | None, lang: _Language, rng: np.random.Generator
) -> int:
    """Replacement draw: usually uniform over the rest of the vocabulary,
    sometimes a valid successor of the preceding word (a plausible error)."""
    if prev_hyp_id is not None and rng.random() < _PLAUSIBLE_SUB_FRACTION:
        candidates = [s for s in lang.successors[prev_hyp_id] if s != word_id]
        if candidates:
            return int(candidates[rng.integers(0, len(candidates))])
    repl = int(rng.integers(0, len(lang.words) - 1))
    return repl + 1 if repl >= word_id else repl


def corrupt(
    ref: list[str], cfg: SimulatorConfig, rng: np.random.Generator
) -> tuple[list[str], EditPath]:
    """Apply ASR-style noise to a reference sentence.

    Returns the hypothesis and the generating edit path (hypothesis ->
    reference orientation: junk insertions appear as Delete ops, omitted
    reference words as Insert ops).
    """
    hyp, ops, _ = _corrupt_impl(ref, cfg, rng)
    return hyp, ops


def _corrupt_impl(ref, cfg, rng):
    lang = _language(cfg.vocab_size)
    word_to_id = {w: i for i, w in enumerate(lang.words)}
    ref_ids = [word_to_id[w] for w in ref]

    calibrated = cfg.confidence_mode == CALIBRATED
    hyp_ids: list[int] = []
    confidences: list[float] = []
    ops: list[EditOp] = []
    cost = 0

    def insertions():
        nonlocal cost
        if calibrated:
            return
        while rng.random() < cfg.ins_rate:
            junk = int(rng.integers(0, cfg.vocab_size))
            ops.append(EditOp(DELETE, hyp_index=len(hyp_ids)))
            hyp_ids.append(junk)
            confidences.append(assign_confidence(False, cfg, rng))
            cost += 1

    for j, wid in enumerate(ref_ids):
        insertions()
        prev = hyp_ids[-1] if hyp_ids else None
        if calibrated:
            p = assign_confidence(True, cfg, rng)
            if rng.random() < 1.0 - p:
                ops.append(EditOp(SUBSTITUTE, hyp_index=len(hyp_ids), ref_index=j))
                hyp_ids.append(_substitute_word(wid, prev, lang, rng))
                cost += 1
            else:
                ops.append(EditOp(EQUAL, hyp_index=len(hyp_ids), ref_index=j))
                hyp_ids.append(wid)
            confidences.append(p)
            continue
        u = rng.random()
        if u < cfg.sub_rate:
            ops.append(EditOp(SUBSTITUTE, hyp_index=len(hyp_ids), ref_index=j))
            hyp_ids.append(_substitute_word(wid, prev, lang, rng))
            confidences.append(assign_confidence(False, cfg, rng))
            cost += 1
        elif u < cfg.sub_rate + cfg.del_rate:
            ops.append(EditOp(INSERT, ref_index=j))
            cost += 1
        else:
            ops.append(EditOp(EQUAL, hyp_index=len(hyp_ids), ref_index=j))
            hyp_ids.append(wid)
            confidences.append(assign_confidence(True, cfg, rng))
    insertions()

    path = EditPath(ops=tuple(ops), cost=cost)
    path.validate(len(hyp_ids), len(ref_ids))
    return [lang.words[i] for i in hyp_ids], path, confidences


def generate_examples(
    count: int, split: str, cfg: SimulatorConfig, rng: np.random.Generator
) -> list[LabeledExample]:
    """Labeled examples for one split; labels come from the alignment
    module on (hyp, ref), not from the generating edits."""
    norm = NormalizerConfig()
    out = []
    for i in range(count):
        ref = sample_reference(cfg, rng)
        hyp, _, confidences = _corrupt_impl(ref, cfg, rng)
        labels = label_errors(align(hyp, ref, norm), len(hyp))
        ex = LabeledExample(
            id=f"{split}-{i:06d}",
            hyp_words=hyp,
            confidences=confidences,
            labels=labels,
            ref_words=ref,
        )
        ex.validate()
        out.append(ex)
    return out


def generate_corpus(
    n_train: int, n_dev: int, n_test: int, cfg: SimulatorConfig
) -> CorpusBundle:
    """Deterministic corpus bundle from a single seeded stream."""
    rng = np.random.default_rng(cfg.seed)
    return CorpusBundle(
        train=generate_examples(n_train, "train", cfg, rng),
        dev=generate_examples(n_dev, "dev", cfg, rng),
        test=generate_examples(n_test, "test", cfg, rng),
    )
