"""Shared value types, interval arithmetic and edit-distance based accuracy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

NOLETTER = "∅"  # the no-letter symbol separating fingerspelled words


class ValidationError(ValueError):
    """Raised when a value violates a documented invariant."""


@dataclass(frozen=True)
class Alphabet:
    """Output label inventory of a CTC recognizer.

    ``letters`` fill the label columns in order, skipping the reserved
    ``blank_index`` and (optional) ``noletter_index`` columns. By default the
    blank is appended right after the letters and the no-letter symbol after
    the blank.
    """

    letters: tuple[str, ...]
    blank_index: Optional[int] = None
    noletter_index: Optional[int] = None
    has_noletter: bool = False
    _symbols: tuple[Optional[str], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        letters = tuple(self.letters)
        object.__setattr__(self, "letters", letters)
        if len(set(letters)) != len(letters):
            raise ValidationError("alphabet letters must be unique")
        if NOLETTER in letters:
            raise ValidationError("the no-letter symbol cannot be a letter")
        if any(not isinstance(s, str) or s == "" for s in letters):
            raise ValidationError("letters must be non-empty strings")
        has_noletter = self.has_noletter or self.noletter_index is not None
        object.__setattr__(self, "has_noletter", has_noletter)
        size = len(letters) + 1 + int(has_noletter)
        blank = len(letters) if self.blank_index is None else self.blank_index
        noletter = self.noletter_index
        if has_noletter and noletter is None:
            noletter = len(letters) + 1 if blank != len(letters) + 1 else len(letters)
        object.__setattr__(self, "blank_index", blank)
        object.__setattr__(self, "noletter_index", noletter)
        reserved = [blank] + ([noletter] if has_noletter else [])
        if len(set(reserved)) != len(reserved):
            raise ValidationError("blank and no-letter indices must differ")
        if any(not 0 <= r < size for r in reserved):
            raise ValidationError(f"reserved indices must lie in [0, {size})")
        symbols: list[Optional[str]] = [None] * size
        if has_noletter:
            symbols[noletter] = NOLETTER
        it = iter(letters)
        for i in range(size):
            if i != blank and i != noletter:
                symbols[i] = next(it)
        object.__setattr__(self, "_symbols", tuple(symbols))

    @property
    def num_labels(self) -> int:
        return len(self._symbols)

    @property
    def symbols(self) -> tuple[Optional[str], ...]:
        """Per-column symbol; ``None`` marks the blank column."""
        return self._symbols

    def symbol(self, index: int) -> Optional[str]:
        if not 0 <= index < self.num_labels:
            raise ValidationError(f"label index {index} out of range")
        return self._symbols[index]

    def index(self, symbol: str) -> int:
        try:
            return self._symbols.index(symbol)
        except ValueError:
            raise ValidationError(f"symbol {symbol!r} not in alphabet") from None


@dataclass(frozen=True, order=True)
class TimeSegment:
    """Half-open frame interval ``[start, end)``."""

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValidationError(f"invalid segment [{self.start}, {self.end})")

    @classmethod
    def from_inclusive(cls, first: int, last: int) -> "TimeSegment":
        return cls(first, last + 1)

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def center(self) -> float:
        return (self.start + self.end) / 2.0


@dataclass(frozen=True)
class LabeledSegment:
    segment: TimeSegment
    transcript: str
    video_id: str = ""

    def __post_init__(self):
        if not self.transcript:
            raise ValidationError("labeled segment needs a non-empty transcript")


@dataclass(frozen=True)
class ScoredSegment:
    """Predicted interval with a confidence in [0, 1].

    ``transcript`` optionally carries the recognizer output for the interval.
    """

    segment: TimeSegment
    score: float
    transcript: Optional[str] = None
    video_id: str = ""

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class Box2D:
    x1: float
    y1: float
    x2: float
    y2: float
    score: float = 1.0

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValidationError(f"degenerate box {self}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def coords(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def _intersection(a: TimeSegment, b: TimeSegment) -> int:
    return max(0, min(a.end, b.end) - max(a.start, b.start))


def temporal_iou(a: TimeSegment, b: TimeSegment) -> float:
    inter = _intersection(a, b)
    return inter / (a.length + b.length - inter)


def temporal_is(x: TimeSegment, y: TimeSegment) -> float:
    """Fraction of ``y`` covered by ``x``."""
    return _intersection(x, y) / y.length


def box_iou(a: Box2D, b: Box2D) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0 or h <= 0:
        return 0.0
    inter = w * h
    return inter / (a.area + b.area - inter)


def edit_distance(ref: Sequence, hyp: Sequence) -> int:
    """Levenshtein distance with unit costs."""
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h))
        prev = cur
    return prev[-1]


def normalized_edit_distance(a: Sequence, b: Sequence) -> float:
    """Edit distance divided by the longer length; 0 for two empty inputs."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return edit_distance(a, b) / longest


def letter_accuracy(ref: Sequence, hyp: Sequence) -> float:
    """``1 - D(ref, hyp) / |ref|``; negative when the hypothesis is long and wrong."""
    if len(ref) == 0:
        raise ValidationError("letter accuracy needs a non-empty reference")
    # (n - D) / n is exact where 1 - D / n can round past a threshold
    return (len(ref) - edit_distance(ref, hyp)) / len(ref)
