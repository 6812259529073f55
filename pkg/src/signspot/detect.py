"""Proposal post-processing: posterior runs, anchors, box deltas and temporal NMS."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from .core import ScoredSegment, TimeSegment, ValidationError, temporal_iou

DEFAULT_THRESHOLDS = (0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1)

# search-network anchor scales (multiples of the stride)
SEARCH_ANCHOR_SCALES = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 14, 16, 18, 20, 24, 32, 40, 60, 75)


@dataclass(frozen=True)
class DetectConfig:
    pos_iou: float = 0.7
    neg_iou: float = 0.3
    nms_iou: float = 0.7
    min_confidence: float = 0.5

    def __post_init__(self):
        if not 0 <= self.neg_iou <= self.pos_iou <= 1:
            raise ValidationError("need 0 <= neg_iou <= pos_iou <= 1")


@dataclass(frozen=True)
class AnchorSet:
    """Multi-scale anchors centred at ``(p + 0.5) * stride`` for each position.

    Anchors are clipped to ``[0, num_positions * stride)``.
    """

    lengths: tuple[int, ...]
    stride: int = 8
    num_positions: int = 1

    def __post_init__(self):
        lengths = tuple(self.lengths)
        object.__setattr__(self, "lengths", lengths)
        if not lengths or any(l < 1 for l in lengths):
            raise ValidationError("anchor lengths must be positive")
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ValidationError("anchor lengths must be ascending and distinct")
        if self.stride < 1 or self.num_positions < 1:
            raise ValidationError("stride and num_positions must be positive")

    @classmethod
    def search_default(cls, stride: int = 4, num_positions: int = 1) -> "AnchorSet":
        return cls(tuple(s * stride for s in SEARCH_ANCHOR_SCALES), stride, num_positions)

    @classmethod
    def geometric(cls, count: int = 12, lo: int = 8, hi: int = 320, stride: int = 8,
                  num_positions: int = 1) -> "AnchorSet":
        """``count`` lengths spaced geometrically from ``lo`` to ``hi``."""
        ratio = (hi / lo) ** (1 / (count - 1))
        lengths = sorted({round_half_up(lo * ratio ** i) for i in range(count)})
        return cls(tuple(lengths), stride, num_positions)

    def segments(self) -> list[TimeSegment]:
        total = self.num_positions * self.stride
        out = []
        for p in range(self.num_positions):
            c = (p + 0.5) * self.stride
            for l in self.lengths:
                start = max(0, math.floor(c - l / 2))
                end = min(total, math.floor(c - l / 2) + l)
                out.append(TimeSegment(start, max(end, start + 1)))
        return out


class AnchorLabel(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    IGNORE = "ignore"


class AnchorAssignment(NamedTuple):
    label: AnchorLabel
    gt_index: Optional[int]
    iou: float


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def frame_probs_to_segments(
    probs: Sequence[float], thresholds: Sequence[float] = DEFAULT_THRESHOLDS
) -> list[ScoredSegment]:
    """Maximal runs with ``prob >= threshold`` for each threshold, scored by mean posterior.

    Identical intervals found at several thresholds are merged, keeping the
    higher score. Output is sorted by (start, end).
    """
    if any(not 0 <= p <= 1 for p in probs):
        raise ValidationError("frame probabilities must lie in [0, 1]")
    best: dict[tuple[int, int], float] = {}
    for thr in thresholds:
        t = 0
        n = len(probs)
        while t < n:
            if probs[t] < thr:
                t += 1
                continue
            s = t
            while t < n and probs[t] >= thr:
                t += 1
            score = sum(probs[s:t]) / (t - s)
            best[(s, t)] = max(best.get((s, t), 0.0), score)
    return [ScoredSegment(TimeSegment(s, e), min(1.0, sc)) for (s, e), sc in sorted(best.items())]


def label_anchors(
    anchors: Sequence[TimeSegment], gts: Sequence[TimeSegment], cfg: DetectConfig = DetectConfig()
) -> list[AnchorAssignment]:
    out = []
    for a in anchors:
        best_j, best = None, 0.0
        for j, g in enumerate(gts):
            iou = temporal_iou(a, g)
            if iou > best:
                best_j, best = j, iou
        if best_j is not None and best > cfg.pos_iou:
            out.append(AnchorAssignment(AnchorLabel.POSITIVE, best_j, best))
        elif best < cfg.neg_iou:
            out.append(AnchorAssignment(AnchorLabel.NEGATIVE, None, best))
        else:
            out.append(AnchorAssignment(AnchorLabel.IGNORE, None, best))
    return out


def delta_encode(anchor: TimeSegment, gt: TimeSegment) -> tuple[float, float]:
    """Centre offset in anchor lengths and log length ratio."""
    dc = (gt.center - anchor.center) / anchor.length
    dl = math.log(gt.length / anchor.length)
    return dc, dl


def delta_decode_real(anchor: TimeSegment, dc: float, dl: float) -> tuple[float, float]:
    """Real-valued ``(start, end)`` before rounding."""
    c = anchor.center + dc * anchor.length
    l = anchor.length * math.exp(dl)
    return c - l / 2, c + l / 2


def delta_decode(anchor: TimeSegment, dc: float, dl: float) -> tuple[TimeSegment, bool]:
    """Decode and round half-up to frames.

    Returns the segment and a flag set when it had to be clamped to start at
    0 or to span at least one frame.
    """
    s, e = delta_decode_real(anchor, dc, dl)
    start, end = round_half_up(s), round_half_up(e)
    clamped = False
    if start < 0:
        start, clamped = 0, True
    if end - start < 1:
        end, clamped = start + 1, True
    return TimeSegment(start, end), clamped


def temporal_nms(segs: Sequence[ScoredSegment], iou_threshold: float = 0.7) -> list[ScoredSegment]:
    """Greedy NMS; segments from different videos never suppress each other."""
    order = sorted(range(len(segs)), key=lambda i: (-segs[i].score, i))
    kept: list[ScoredSegment] = []
    for i in order:
        cur = segs[i]
        if all(k.video_id != cur.video_id or temporal_iou(cur.segment, k.segment) <= iou_threshold
               for k in kept):
            kept.append(cur)
    return kept


def filter_confidence(segs: Sequence[ScoredSegment], min_confidence: float = 0.5) -> list[ScoredSegment]:
    return [s for s in segs if s.score > min_confidence]
