"""Tag alphabet and span codecs for BIES-with-polarity sequence labeling.

The alphabet has 13 tags: O plus every (position, polarity) combination with
position in {B, I, E, S} and polarity in {POS, NEU, NEG}.  Integer ids are
frozen so datasets and serialized classifier heads stay interchangeable:

    0=O, 1=B-POS, 2=I-POS, 3=E-POS, 4=S-POS, 5=B-NEU, ... 12=S-NEG
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Polarity(Enum):
    POS = "POS"
    NEU = "NEU"
    NEG = "NEG"


POLARITIES = (Polarity.POS, Polarity.NEU, Polarity.NEG)

O_TAG = 0
NUM_TAGS = 13

# Position offsets inside each polarity block of 4 tags.
_B, _I, _E, _S = 0, 1, 2, 3

TAG_STRINGS = ["O"] + [
    f"{pos}-{pol.value}" for pol in POLARITIES for pos in ("B", "I", "E", "S")
]
_TAG_IDS = {s: i for i, s in enumerate(TAG_STRINGS)}


def tag_id(name: str) -> int:
    """Map a tag string like "B-POS" to its frozen integer id."""
    try:
        return _TAG_IDS[name]
    except KeyError:
        raise ValueError(f"unknown tag string {name!r}") from None


def tag_string(tid: int) -> str:
    if not 0 <= tid < NUM_TAGS:
        raise ValueError(f"tag id {tid} outside 0..{NUM_TAGS - 1}")
    return TAG_STRINGS[tid]


def _block(pol: Polarity) -> int:
    return 1 + 4 * POLARITIES.index(pol)


def begin_tag(pol: Polarity) -> int:
    return _block(pol) + _B


def inside_tag(pol: Polarity) -> int:
    return _block(pol) + _I


def end_tag(pol: Polarity) -> int:
    return _block(pol) + _E


def single_tag(pol: Polarity) -> int:
    return _block(pol) + _S


def _split(tid: int) -> tuple[str, Polarity]:
    """Return (position letter, polarity) for a non-O tag id."""
    pol = POLARITIES[(tid - 1) // 4]
    pos = "BIES"[(tid - 1) % 4]
    return pos, pol


@dataclass(frozen=True)
class AspectSpan:
    """Inclusive token span carrying one sentiment polarity."""

    start: int
    end: int
    polarity: Polarity

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise SpanError(f"invalid span ({self.start}, {self.end})", self)

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def sort_spans(spans) -> list[AspectSpan]:
    """Deterministic span order: by start, end, then polarity id."""
    return sorted(spans, key=lambda s: (s.start, s.end, POLARITIES.index(s.polarity)))


class SpanError(ValueError):
    """A span set cannot be encoded (overlap or out of range)."""

    def __init__(self, message: str, span=None):
        super().__init__(message)
        self.span = span


class TagSequenceError(ValueError):
    """A tag sequence violates the strict BIES grammar."""

    def __init__(self, index: int, reason: str):
        super().__init__(f"malformed tag sequence at index {index}: {reason}")
        self.index = index
        self.reason = reason


def encode(spans, length: int) -> list[int]:
    """Encode non-overlapping spans as a tag-id sequence of the given length.

    Single-token spans become S-pol; longer ones B-pol (I-pol)* E-pol; every
    other position is O.
    """
    tags = [O_TAG] * length
    prev_end = -1
    for span in sort_spans(spans):
        if span.end >= length:
            raise SpanError(
                f"span ({span.start}, {span.end}) exceeds sentence length {length}",
                span,
            )
        if span.start <= prev_end:
            raise SpanError(
                f"span ({span.start}, {span.end}) overlaps a preceding span", span
            )
        prev_end = span.end
        if span.length == 1:
            tags[span.start] = single_tag(span.polarity)
        else:
            tags[span.start] = begin_tag(span.polarity)
            for i in range(span.start + 1, span.end):
                tags[i] = inside_tag(span.polarity)
            tags[span.end] = end_tag(span.polarity)
    return tags


def decode_strict(tags) -> set[AspectSpan]:
    """Exact inverse of :func:`encode`; raises on any malformed transition."""
    spans: set[AspectSpan] = set()
    n = len(tags)
    i = 0
    while i < n:
        tid = tags[i]
        if tid == O_TAG:
            i += 1
            continue
        pos, pol = _split(tid)
        if pos == "S":
            spans.add(AspectSpan(i, i, pol))
            i += 1
            continue
        if pos != "B":
            raise TagSequenceError(i, f"{tag_string(tid)} without a preceding B")
        j = i + 1
        while j < n and tags[j] == inside_tag(pol):
            j += 1
        if j >= n:
            raise TagSequenceError(n - 1, f"span opened by {tag_string(tid)} never closed")
        if tags[j] != end_tag(pol):
            raise TagSequenceError(
                j,
                f"expected I-{pol.value} or E-{pol.value}, found {tag_string(tags[j])}",
            )
        spans.add(AspectSpan(i, j, pol))
        i = j + 1
    return spans


def decode_lenient(tags) -> set[AspectSpan]:
    """Decode a possibly malformed prediction, dropping broken fragments.

    Emits a span for every maximal well-formed segment (a lone S-pol, or
    B-pol (I-pol)* E-pol with one uniform polarity); anything else yields
    nothing.  Total on all 13^n sequences.
    """
    spans: set[AspectSpan] = set()
    n = len(tags)
    i = 0
    while i < n:
        tid = tags[i]
        if tid == O_TAG:
            i += 1
            continue
        pos, pol = _split(tid)
        if pos == "S":
            spans.add(AspectSpan(i, i, pol))
            i += 1
            continue
        if pos == "B":
            j = i + 1
            while j < n and tags[j] == inside_tag(pol):
                j += 1
            if j < n and tags[j] == end_tag(pol):
                spans.add(AspectSpan(i, j, pol))
                i = j + 1
                continue
        i += 1
    return spans
