"""Word-level edit-distance alignment and error labeling.

A transcription hypothesis is aligned against the reference transcript with
minimum edit distance; every hypothesis word consumed by a substitution or
deletion operation is labeled ``Error``, the rest ``NotError``. Insertions
(reference words missing from the hypothesis) produce no label, so isolated
omissions are unrepresented by design.
"""

import re
from dataclasses import dataclass, field

from .errors import DataError

ERROR = "Error"
NOT_ERROR = "NotError"

# Edit operation kinds, phrased hypothesis -> reference: DELETE removes an
# extra hypothesis word, INSERT adds a reference word the hypothesis lacks.
EQUAL = "equal"
SUBSTITUTE = "substitute"
DELETE = "delete"
INSERT = "insert"

_PUNCT_RE = re.compile(r"[^\w\s]", re.UNICODE)


@dataclass(frozen=True)
class NormalizerConfig:
    """Text normalization applied to both sequences before alignment."""

    lowercase: bool = True
    strip_punctuation: bool = False


@dataclass(frozen=True)
class EditOp:
    kind: str
    hyp_index: int | None = None
    ref_index: int | None = None

    def __post_init__(self):
        if self.kind in (EQUAL, SUBSTITUTE):
            ok = self.hyp_index is not None and self.ref_index is not None
        elif self.kind == DELETE:
            ok = self.hyp_index is not None and self.ref_index is None
        elif self.kind == INSERT:
            ok = self.hyp_index is None and self.ref_index is not None
        else:
            raise DataError(f"unknown edit op kind: {self.kind!r}")
        if not ok:
            raise DataError(f"edit op {self.kind} carries wrong indices")


@dataclass(frozen=True)
class EditPath:
    """Ordered edit operations turning a hypothesis into a reference."""

    ops: tuple[EditOp, ...]
    cost: int

    def validate(self, hyp_len: int, ref_len: int) -> None:
        """Check index coverage, ordering, and cost bookkeeping."""
        hyp_seen = [op.hyp_index for op in self.ops if op.hyp_index is not None]
        ref_seen = [op.ref_index for op in self.ops if op.ref_index is not None]
        if hyp_seen != list(range(hyp_len)):
            raise DataError(
                f"hyp indices {hyp_seen} do not cover 0..{hyp_len - 1} in order"
            )
        if ref_seen != list(range(ref_len)):
            raise DataError(
                f"ref indices {ref_seen} do not cover 0..{ref_len - 1} in order"
            )
        n_edits = sum(1 for op in self.ops if op.kind != EQUAL)
        if self.cost != n_edits:
            raise DataError(f"cost {self.cost} != {n_edits} non-Equal ops")


@dataclass
class LabeledExample:
    """One annotated utterance: hypothesis words, confidences, labels."""

    id: str
    hyp_words: list[str]
    confidences: list[float]
    labels: list[str]
    ref_words: list[str] | None = None

    def validate(self) -> None:
        n = len(self.hyp_words)
        if len(self.confidences) != n or len(self.labels) != n:
            raise DataError(
                f"example {self.id}: {n} words, {len(self.confidences)} "
                f"confidences, {len(self.labels)} labels"
            )
        if any(w == "" for w in self.hyp_words):
            raise DataError(f"example {self.id}: empty hypothesis word")
        if self.ref_words is not None and any(w == "" for w in self.ref_words):
            raise DataError(f"example {self.id}: empty reference word")
        for c in self.confidences:
            if not 0.0 <= c <= 1.0:
                raise DataError(f"example {self.id}: confidence {c} outside [0,1]")
        for lab in self.labels:
            if lab not in (ERROR, NOT_ERROR):
                raise DataError(f"example {self.id}: bad label {lab!r}")


@dataclass
class DatasetStats:
    num_examples: int
    num_words: int
    num_errors: int
    error_rate: float
    empty: bool = field(default=False)


def normalize_words(words: list[str], norm: NormalizerConfig) -> list[str]:
    """Normalize words for comparison. Idempotent; never drops positions."""
    out = words
    if norm.lowercase:
        out = [w.lower() for w in out]
    if norm.strip_punctuation:
        out = [_PUNCT_RE.sub("", w) for w in out]
    return out


def levenshtein_distance(hyp: list[str], ref: list[str]) -> int:
    """Unit-cost word edit distance, rolling-array formulation.

    Kept independent of :func:`align` so the two can cross-check each other.
    """
    if not hyp:
        return len(ref)
    if not ref:
        return len(hyp)
    prev = list(range(len(ref) + 1))
    for i, h in enumerate(hyp, start=1):
        cur = [i] + [0] * len(ref)
        for j, r in enumerate(ref, start=1):
            cur[j] = min(
                prev[j] + 1,  # delete hyp word
                cur[j - 1] + 1,  # insert ref word
                prev[j - 1] + (0 if h == r else 1),
            )
        prev = cur
    return prev[len(ref)]


def align(
    hyp: list[str],
    ref: list[str],
    norm: NormalizerConfig = NormalizerConfig(),
) -> EditPath:
    """Minimum-edit-distance alignment of hypothesis against reference.

    Unit costs for substitute/delete/insert. Ties are broken by backtracing
    from the end preferring the diagonal (Equal, else Substitute), then
    Delete, then Insert, which makes the returned path deterministic.
    """
    h = normalize_words(hyp, norm)
    r = normalize_words(ref, norm)
    n, m = len(h), len(r)

    # d[i][j] = cost of turning hyp[:i] into ref[:j]
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        row, above = d[i], d[i - 1]
        hi = h[i - 1]
        for j in range(1, m + 1):
            row[j] = min(
                above[j] + 1,
                row[j - 1] + 1,
                above[j - 1] + (0 if hi == r[j - 1] else 1),
            )

    ops: list[EditOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            diag_cost = 0 if h[i - 1] == r[j - 1] else 1
            if d[i][j] == d[i - 1][j - 1] + diag_cost:
                kind = EQUAL if diag_cost == 0 else SUBSTITUTE
                ops.append(EditOp(kind, hyp_index=i - 1, ref_index=j - 1))
                i -= 1
                j -= 1
                continue
        if i > 0 and d[i][j] == d[i - 1][j] + 1:
            ops.append(EditOp(DELETE, hyp_index=i - 1))
            i -= 1
            continue
        ops.append(EditOp(INSERT, ref_index=j - 1))
        j -= 1
    ops.reverse()

    path = EditPath(ops=tuple(ops), cost=d[n][m])
    path.validate(n, m)
    return path


def label_errors(path: EditPath, hyp_len: int) -> list[str]:
    """Per-word labels from an edit path: Error iff substituted or deleted."""
    labels = [None] * hyp_len
    for op in path.ops:
        if op.hyp_index is None:
            continue
        if not 0 <= op.hyp_index < hyp_len:
            raise DataError(f"hyp index {op.hyp_index} outside 0..{hyp_len - 1}")
        if labels[op.hyp_index] is not None:
            raise DataError(f"hyp index {op.hyp_index} consumed twice")
        labels[op.hyp_index] = ERROR if op.kind in (SUBSTITUTE, DELETE) else NOT_ERROR
    missing = [i for i, lab in enumerate(labels) if lab is None]
    if missing:
        raise DataError(f"path leaves hyp indices {missing} unconsumed")
    return labels


def label_hypothesis(
    hyp: list[str],
    ref: list[str],
    norm: NormalizerConfig = NormalizerConfig(),
) -> list[str]:
    """Convenience wrapper: align then label."""
    return label_errors(align(hyp, ref, norm), len(hyp))


def dataset_stats(examples: list[LabeledExample]) -> DatasetStats:
    """Corpus-level counts; an empty corpus is flagged, not an error."""
    num_words = sum(len(ex.hyp_words) for ex in examples)
    num_errors = sum(ex.labels.count(ERROR) for ex in examples)
    if num_words == 0:
        return DatasetStats(len(examples), 0, 0, 0.0, empty=True)
    return DatasetStats(len(examples), num_words, num_errors, num_errors / num_words)
