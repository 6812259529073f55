"""Detection, recognition-aware, translation and retrieval metrics."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Mapping, Optional, Sequence

from .core import NOLETTER, LabeledSegment, ScoredSegment, ValidationError, edit_distance, letter_accuracy, temporal_iou
from .detect import temporal_nms


@dataclass(frozen=True)
class MetricConfig:
    iou_thresholds: tuple[float, ...] = (0.1, 0.3, 0.5)
    acc_thresholds: tuple[float, ...] = (0.0, 0.2, 0.4)
    acc_iou_threshold: float = 0.0
    recall_levels: int = 100
    msa_grid: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if any(not 0 <= t <= 1 for t in self.iou_thresholds):
            raise ValidationError("IoU thresholds must lie in [0, 1]")
        if any(t > 1 for t in self.acc_thresholds):
            raise ValidationError("accuracy thresholds must be <= 1")
        if self.recall_levels < 1:
            raise ValidationError("recall_levels must be >= 1")


# --------------------------------------------------------------------------
# precision / recall machinery

def interpolated_ap(hits: Sequence[bool], num_positive: int, recall_levels: int = 100) -> float:
    """Mean over recall levels ``0, 1/N, ..., 1`` of the best precision at recall >= level.

    ``hits`` lists, in rank order, whether each prediction is a true positive.
    """
    precisions, recalls = pr_curve(hits, num_positive)
    # best precision at recall >= r, swept from the right
    best_from = [0.0] * (len(precisions) + 1)
    for i in range(len(precisions) - 1, -1, -1):
        best_from[i] = max(precisions[i], best_from[i + 1])
    total = 0.0
    j = 0
    for level in range(recall_levels + 1):
        r = level / recall_levels
        while j < len(recalls) and recalls[j] < r - 1e-12:
            j += 1
        total += best_from[j] if j < len(recalls) else 0.0
    return total / (recall_levels + 1)


def pr_curve(hits: Sequence[bool], num_positive: int) -> tuple[list[float], list[float]]:
    tp = 0
    precisions, recalls = [], []
    for i, h in enumerate(hits, 1):
        tp += bool(h)
        precisions.append(tp / i)
        recalls.append(tp / num_positive)
    return precisions, recalls


def _rank(preds: Sequence[ScoredSegment]) -> list[int]:
    return sorted(range(len(preds)), key=lambda i: (-preds[i].score, preds[i].video_id,
                                                  preds[i].segment.start, preds[i].segment.end, i))


def greedy_match(
    preds: Sequence[ScoredSegment], gts: Sequence[LabeledSegment],
    quality: Callable[[ScoredSegment, LabeledSegment], Optional[float]],
) -> list[tuple[int, Optional[int]]]:
    """Sequentially match predictions, best score first, to the free gt of highest quality.

    ``quality`` returns ``None`` for an inadmissible pair. Ties between gts go
    to the lower index. Returns ``(pred index, gt index or None)`` in rank order.
    """
    taken: set[int] = set()
    out = []
    by_video: dict[str, list[int]] = defaultdict(list)
    for j, g in enumerate(gts):
        by_video[g.video_id].append(j)
    for i in _rank(preds):
        p = preds[i]
        best_j, best_q = None, -math.inf
        for j in by_video.get(p.video_id, ()):
            if j in taken:
                continue
            q = quality(p, gts[j])
            if q is not None and q > best_q:
                best_j, best_q = j, q
        if best_j is not None:
            taken.add(best_j)
        out.append((i, best_j))
    matched = [j for _, j in out if j is not None]
    assert len(matched) == len(set(matched)), "a ground-truth segment was matched twice"
    return out


def ap_at_iou(
    preds: Sequence[ScoredSegment], gts: Sequence[LabeledSegment], iou_threshold: float,
    recall_levels: int = 100,
) -> Optional[float]:
    """AP where a prediction matches the free gt of highest IoU above the threshold."""
    if not gts:
        return None

    def quality(p, g):
        iou = temporal_iou(p.segment, g.segment)
        return iou if iou > iou_threshold else None

    hits = [j is not None for _, j in greedy_match(preds, gts, quality)]
    return interpolated_ap(hits, len(gts), recall_levels)


def ap_at_acc(
    preds: Sequence[ScoredSegment], gts: Sequence[LabeledSegment], acc_threshold: float,
    iou_threshold: float = 0.0, recall_levels: int = 100,
) -> Optional[float]:
    """AP where matching maximises the letter accuracy of the prediction's transcript.

    A pair is admissible when IoU > ``iou_threshold`` and accuracy > ``acc_threshold``.
    A missing transcript counts as empty.
    """
    if not gts:
        return None

    def quality(p, g):
        if temporal_iou(p.segment, g.segment) <= iou_threshold:
            return None
        acc = letter_accuracy(g.transcript, p.transcript or "")
        return acc if acc > acc_threshold else None

    hits = [j is not None for _, j in greedy_match(preds, gts, quality)]
    return interpolated_ap(hits, len(gts), recall_levels)


def video_letter_sequence(segments: Iterable[tuple[int, int, str]], num_frames: int) -> list[str]:
    """Concatenate transcripts in time order, with the no-letter symbol over uncovered frames.

    ``segments`` are non-overlapping ``(start, end, transcript)`` triples.
    A separator appears only where at least one uncovered frame exists.
    """
    out: list[str] = []
    cursor = 0
    for start, end, text in sorted(segments, key=lambda s: (s[0], s[1])):
        if start > cursor:
            out.append(NOLETTER)
        out.extend(text)
        cursor = max(cursor, end)
    if num_frames > cursor:
        out.append(NOLETTER)
    return out


@dataclass(frozen=True)
class MSAResult:
    msa: float
    threshold: Optional[float]
    per_threshold: dict = field(default_factory=dict)


def msa(
    preds: Sequence[ScoredSegment], gts: Sequence[LabeledSegment], num_frames: Mapping[str, int] | int,
    grid: Optional[Sequence[float]] = None, nms_iou: float = 0.0,
) -> MSAResult:
    """Maximum over score thresholds of the pooled full-video letter accuracy.

    For each threshold predictions scoring below it are dropped, the rest go
    through NMS (at IoU 0 by default, so survivors never overlap) and their
    transcripts are joined per video. Accuracy is pooled over videos as
    ``1 - sum D / sum |L*|``. The grid defaults to the distinct prediction
    scores; ties between thresholds go to the lowest.
    """
    videos = sorted({g.video_id for g in gts} | {p.video_id for p in preds})
    if isinstance(num_frames, int):
        lengths = {v: num_frames for v in videos}
    else:
        lengths = dict(num_frames)
        missing = [v for v in videos if v not in lengths]
        if missing:
            raise ValidationError(f"no frame count for videos {missing}")
    refs = {}
    for v in videos:
        vg = [(g.segment.start, g.segment.end, g.transcript) for g in gts if g.video_id == v]
        for (s1, e1, _), (s2, e2, _) in zip(sorted(vg), sorted(vg)[1:]):
            if s2 < e1:
                raise ValidationError(f"ground-truth segments overlap in video {v!r}")
        refs[v] = video_letter_sequence(vg, lengths[v])
    ref_len = sum(len(r) for r in refs.values())
    if ref_len == 0:
        raise ValidationError("MSA needs a non-empty reference sequence")

    thresholds = sorted(set(grid) if grid is not None else {p.score for p in preds})
    if not thresholds:
        thresholds = [math.inf]
    per = {}
    best_acc, best_thr = -math.inf, None
    for thr in thresholds:
        kept = temporal_nms([p for p in preds if p.score >= thr], nms_iou)
        dist = 0
        for v in videos:
            hyp = video_letter_sequence(
                [(p.segment.start, p.segment.end, p.transcript or "") for p in kept if p.video_id == v],
                lengths[v])
            dist += edit_distance(refs[v], hyp)
        acc = (ref_len - dist) / ref_len
        per[thr] = acc
        if acc > best_acc:
            best_acc, best_thr = acc, thr
    return MSAResult(best_acc, None if best_thr == math.inf else best_thr, per)


def frame_ap(
    frame_scores: Sequence[float], frame_labels: Sequence[int], recall_levels: int = 100,
) -> tuple[tuple[list[float], list[float]], Optional[float]]:
    """Ranked PR curve of frame classification and its interpolated AP."""
    if len(frame_scores) != len(frame_labels):
        raise ValidationError("scores and labels differ in length")
    if any(l not in (0, 1) for l in frame_labels):
        raise ValidationError("frame labels must be binary")
    pos = sum(frame_labels)
    order = sorted(range(len(frame_scores)), key=lambda i: (-frame_scores[i], i))
    hits = [frame_labels[i] == 1 for i in order]
    if pos == 0:
        return ([], []), None
    curve = pr_curve(hits, pos)
    return curve, interpolated_ap(hits, pos, recall_levels)


# --------------------------------------------------------------------------
# translation metrics

def tokenize(text: str) -> list[str]:
    return text.lower().split()


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]], max_n: int = 4) -> float:
    """Corpus BLEU with uniform weights over 1..max_n and a single reference per hypothesis."""
    if len(hyps) != len(refs):
        raise ValidationError("hypothesis and reference counts differ")
    if not hyps:
        raise ValidationError("BLEU needs a non-empty corpus")
    if not 1 <= max_n <= 4:
        raise ValidationError("max_n must be in 1..4")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for h, r in zip(hyps, refs):
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_n + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(0, len(h) - n + 1)
    if hyp_len == 0 or any(m == 0 for m in matches):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_n
    bp = 1.0 if hyp_len >= ref_len else math.exp(1 - ref_len / hyp_len)
    return bp * math.exp(log_p)


def _lcs(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]]) -> float:
    """Mean sentence-level ROUGE-L F1."""
    if len(hyps) != len(refs) or not hyps:
        raise ValidationError("ROUGE-L needs equally many, non-zero hypotheses and references")
    total = 0.0
    for h, r in zip(hyps, refs):
        l = _lcs(h, r)
        if l:
            p, rc = l / len(h), l / len(r)
            total += 2 * p * rc / (p + rc)
    return total / len(hyps)


# --------------------------------------------------------------------------
# retrieval metrics

def retrieval_ap_f1(ranked: Sequence[tuple[Hashable, float]], relevant: set) -> tuple[Optional[float], Optional[float]]:
    """Non-interpolated AP and the best F1 over rank cutoffs.

    ``ranked`` must already be in rank order; relevant items absent from it
    contribute zero precision.
    """
    if not relevant:
        return None, None
    hits = 0
    ap = 0.0
    best_f1 = 0.0
    for k, (item, _) in enumerate(ranked, 1):
        if item in relevant:
            hits += 1
            ap += hits / k
            p, r = hits / k, hits / len(relevant)
            best_f1 = max(best_f1, 2 * p * r / (p + r))
    return ap / len(relevant), best_f1


def precision_recall_at_n(ranked: Sequence[tuple[Hashable, float]], relevant: set, n: int) -> tuple[float, float]:
    if n < 1:
        raise ValidationError("N must be >= 1")
    correct = sum(1 for item, _ in ranked[:n] if item in relevant)
    recall = correct / len(relevant) if relevant else 0.0
    return correct / n, recall
