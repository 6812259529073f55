"""Cross-modal matching for fingerspelling search: pair filtering, semi-hard negatives,
triplet loss, detection-weighted scoring and FWS/FVS evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Mapping, Optional, Sequence

import numpy as np

from .core import LabeledSegment, ScoredSegment, TimeSegment, ValidationError, normalized_edit_distance, \
    temporal_iou, temporal_is
from .metrics import precision_recall_at_n, retrieval_ap_f1


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 1.0
    is_threshold: float = 0.8
    num_sampled: int = 5
    margin: float = 0.45
    num_negatives: int = 5
    beta: float = 1.0
    lambda_det: float = 0.1
    num_test_proposals: int = 50

    def __post_init__(self):
        if not 0 <= self.iou_threshold <= 1 or not 0 <= self.is_threshold <= 1:
            raise ValidationError("IoU/IS thresholds must lie in [0, 1]")
        if self.num_sampled < 0 or self.num_negatives < 0 or self.num_test_proposals < 1:
            raise ValidationError("counts must be non-negative (test proposals positive)")
        if self.margin < 0 or self.beta < 0 or self.lambda_det < 0:
            raise ValidationError("margin, beta and lambda_det must be non-negative")


def cosine_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValidationError("cosine distance of a zero vector")
    return float(1.0 - a @ b / (na * nb))


def _iou_gate(iou: float, threshold: float) -> bool:
    # a strict test against 1.0 can never pass, so 1.0 means "exact overlap"
    return iou >= threshold if threshold >= 1.0 else iou > threshold


def build_positive_set(
    gts: Sequence[LabeledSegment], proposals: Sequence[TimeSegment], cfg: MatchConfig = MatchConfig(),
    rng_seed: int = 0,
) -> list[LabeledSegment]:
    """Ground-truth segments plus up to K sampled proposals close to one of them.

    A proposal qualifies when its IoU and its coverage of a gt pass the
    thresholds; it takes the word of the qualifying gt with the highest IoU
    (ties: lower index). Proposals are sampled uniformly without replacement
    from the qualifying set using ``rng_seed``.
    """
    qualifying = []
    for prop in sorted(set(proposals)):
        best = None
        for j, g in enumerate(gts):
            iou = temporal_iou(prop, g.segment)
            if _iou_gate(iou, cfg.iou_threshold) and temporal_is(prop, g.segment) > cfg.is_threshold:
                if best is None or iou > best[0]:
                    best = (iou, j)
        if best is not None:
            g = gts[best[1]]
            qualifying.append(LabeledSegment(prop, g.transcript, g.video_id))
    rng = np.random.default_rng(rng_seed)
    k = min(cfg.num_sampled, len(qualifying))
    picked = sorted(rng.choice(len(qualifying), size=k, replace=False).tolist()) if k else []
    out = list(gts)
    seen = set(gts)
    for i in picked:
        if qualifying[i] not in seen:
            seen.add(qualifying[i])
            out.append(qualifying[i])
    return out


def semi_hard_negatives(
    anchor_v, pos_word_x, candidate_words_x: Sequence, candidate_segments_v: Sequence, limit: int = 5,
) -> tuple[list[int], list[int]]:
    """Indices of candidate words and segments farther than the positive pair.

    Words are measured against the anchor segment, segments against the
    positive word. Each list keeps the ``limit`` closest qualifying
    candidates, nearest first (ties: lower index).
    """
    d_pos = cosine_distance(anchor_v, pos_word_x)

    def pick(dists):
        ok = [(d, i) for i, d in enumerate(dists) if d > d_pos]
        return [i for _, i in sorted(ok)[:limit]]

    n_w = pick([cosine_distance(anchor_v, w) for w in candidate_words_x])
    n_v = pick([cosine_distance(v, pos_word_x) for v in candidate_segments_v])
    return n_w, n_v


@dataclass(frozen=True)
class TripletTerm:
    """One positive pair with its negative embeddings."""

    segment_v: np.ndarray
    word_x: np.ndarray
    negative_words_x: tuple = ()
    negative_segments_v: tuple = ()


def triplet_loss(pairs: Sequence[TripletTerm], margin: float = 0.45) -> float:
    """Sum over pairs of the word-side and segment-side hinges.

    A term whose negative set is empty contributes nothing.
    """
    total = 0.0
    for p in pairs:
        d_pos = cosine_distance(p.segment_v, p.word_x)
        if len(p.negative_words_x):
            neg = np.mean([cosine_distance(p.segment_v, w) for w in p.negative_words_x])
            total += max(margin + d_pos - neg, 0.0)
        if len(p.negative_segments_v):
            neg = np.mean([cosine_distance(v, p.word_x) for v in p.negative_segments_v])
            total += max(margin + d_pos - neg, 0.0)
    return float(total)


def total_loss(detection_loss: float, matching_loss: float, lambda_det: float = 0.1) -> float:
    return lambda_det * detection_loss + matching_loss


def score_clip(word_x, proposals: Sequence[tuple[ScoredSegment, object]], beta: float = 1.0) -> tuple[float, int]:
    """Best ``p_det**beta * (1 - d)`` over the proposals and its index (ties: earliest)."""
    if not proposals:
        raise ValidationError("cannot score a clip without proposals")
    best, best_i = -np.inf, 0
    for i, (seg, emb) in enumerate(proposals):
        s = seg.score ** beta * (1.0 - cosine_distance(emb, word_x))
        if s > best:
            best, best_i = s, i
    return float(best), best_i


def recognizer_baseline_score(hyps: Sequence[str], word: str, separator: str = "<x>") -> float:
    """``1 - min`` normalized edit distance between ``word`` and any word of any hypothesis."""
    if not hyps:
        raise ValidationError("need at least one hypothesis")
    best = 1.0
    for h in hyps:
        for piece in h.split(separator):
            best = min(best, normalized_edit_distance(piece.strip(), word))
    return 1.0 - best


@dataclass(frozen=True)
class QueryResult:
    query: Hashable
    ap: Optional[float]
    max_f1: Optional[float]
    precision_at: dict
    recall_at: dict


@dataclass(frozen=True)
class RetrievalReport:
    per_query: tuple[QueryResult, ...]
    mean_ap: Optional[float]
    mean_f1: Optional[float]
    mean_precision_at: dict
    mean_recall_at: dict


def retrieval_eval(
    scores: np.ndarray, query_ids: Sequence[Hashable], item_ids: Sequence[Hashable],
    relevance: set, top_n: Sequence[int] = (1, 5, 10),
) -> RetrievalReport:
    """Rank items per query (score descending, ties by item id) and average the metrics.

    ``scores`` is queries x items; ``relevance`` holds ``(query, item)`` pairs.
    Queries without any relevant item are reported but left out of the means.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(query_ids), len(item_ids)):
        raise ValidationError("score matrix shape does not match the id lists")
    if not np.all(np.isfinite(scores)):
        raise ValidationError("score matrix must be complete and finite")
    results = []
    for qi, q in enumerate(query_ids):
        ranked = sorted(zip(item_ids, scores[qi].tolist()), key=lambda x: (-x[1], x[0]))
        relevant = {it for it in item_ids if (q, it) in relevance}
        ap, f1 = retrieval_ap_f1(ranked, relevant)
        pr = {n: precision_recall_at_n(ranked, relevant, n) for n in top_n}
        results.append(QueryResult(q, ap, f1, {n: v[0] for n, v in pr.items()}, {n: v[1] for n, v in pr.items()}))
    scored = [r for r in results if r.ap is not None]

    def mean(xs):
        return float(np.mean(xs)) if xs else None

    return RetrievalReport(
        tuple(results),
        mean([r.ap for r in scored]),
        mean([r.max_f1 for r in scored]),
        {n: mean([r.precision_at[n] for r in scored]) for n in top_n},
        {n: mean([r.recall_at[n] for r in scored]) for n in top_n},
    )


def search_eval(
    scores: np.ndarray, video_ids: Sequence[str], words: Sequence[str], relevance: set,
    mode: str, top_n: Sequence[int] = (1, 5, 10),
) -> RetrievalReport:
    """Evaluate a video x word score matrix.

    ``fws`` ranks words for each video, ``fvs`` ranks videos for each word;
    ``relevance`` holds ``(video, word)`` pairs in both cases.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if mode == "fws":
        return retrieval_eval(scores, video_ids, words, relevance, top_n)
    if mode == "fvs":
        flipped = {(w, v) for v, w in relevance}
        return retrieval_eval(scores.T, words, video_ids, flipped, top_n)
    raise ValidationError(f"unknown search mode {mode!r}")


def score_matrix(
    video_proposals: Mapping[str, Sequence[tuple[ScoredSegment, object]]], word_embeddings: Mapping[str, object],
    beta: float = 1.0, max_proposals: int = 50,
) -> tuple[list[str], list[str], np.ndarray]:
    """Clip score for every (video, word), using each video's top proposals by detection score."""
    videos = sorted(video_proposals)
    words = sorted(word_embeddings)
    out = np.zeros((len(videos), len(words)))
    for vi, v in enumerate(videos):
        props = sorted(video_proposals[v], key=lambda p: (-p[0].score, p[0].segment))[:max_proposals]
        for wi, w in enumerate(words):
            out[vi, wi] = score_clip(word_embeddings[w], props, beta)[0] if props else 0.0
    return videos, words, out
