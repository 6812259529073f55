"""Sign spotting: label candidate intervals with words of the accompanying sentence."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .core import ScoredSegment, TimeSegment, ValidationError, normalized_edit_distance


@dataclass(frozen=True)
class SpotConfig:
    window_len: int = 32
    stride: int = 8
    lexical_threshold: float = 0.6
    fs_threshold: float = 0.2
    detector_min_confidence: float = 0.5

    def __post_init__(self):
        if not 0 <= self.lexical_threshold <= 1 or not 0 <= self.fs_threshold <= 1:
            raise ValidationError("spotting thresholds must lie in [0, 1]")
        if self.window_len < 1 or self.stride < 1:
            raise ValidationError("window_len and stride must be positive")


class Spotted(NamedTuple):
    segment: TimeSegment
    word: str
    score: float
    kind: str  # "lexical" or "fingerspelling"


@dataclass(frozen=True)
class WindowProbs:
    """Sliding-window recognizer output: one probability vector per window."""

    windows: tuple[tuple[TimeSegment, np.ndarray], ...]
    vocab: Mapping[str, int]

    def __post_init__(self):
        for seg, p in self.windows:
            p = np.asarray(p)
            if p.shape != (len(self.vocab),):
                raise ValidationError(f"window {seg} has {p.shape} probabilities for {len(self.vocab)} words")
            if np.any(p < 0) or p.sum() > 1 + 1e-6:
                raise ValidationError(f"window {seg}: probabilities must be non-negative and sum to <= 1")


_PUNCT = re.compile(r"[^\w\s']|_", re.UNICODE)


def normalize_word(word: str) -> str:
    return _PUNCT.sub("", word).strip().lower()


def sentence_words(sentence: str) -> list[str]:
    words = [normalize_word(w) for w in sentence.split()]
    return [w for w in words if w]


def sliding_windows(num_frames: int, window_len: int = 32, stride: int = 8) -> list[TimeSegment]:
    """Windows of ``window_len`` frames every ``stride`` frames; a short clip yields one window."""
    if num_frames < 1:
        return []
    if num_frames <= window_len:
        return [TimeSegment(0, num_frames)]
    return [TimeSegment(s, s + window_len) for s in range(0, num_frames - window_len + 1, stride)]


def spot_lexical(wp: WindowProbs, words: Sequence[str], threshold: float = 0.6) -> list[Spotted]:
    """Best window per sentence word among those with probability >= threshold.

    Ties go to the earliest window.
    """
    wanted = []
    for w in words:
        w = normalize_word(w)
        if w and w not in wanted:
            wanted.append(w)
    vocab = {normalize_word(k): v for k, v in wp.vocab.items()}
    windows = sorted(wp.windows, key=lambda x: (x[0].start, x[0].end))
    out = []
    for w in wanted:
        if w not in vocab:
            continue
        idx = vocab[w]
        best = None
        for seg, p in windows:
            pw = float(p[idx])
            if pw >= threshold and (best is None or pw > best[1]):
                best = (seg, pw)
        if best is not None:
            out.append(Spotted(best[0], w, best[1], "lexical"))
    return sorted(out, key=lambda s: (s.segment, s.word))


def spot_fingerspelling(
    proposals: Sequence[ScoredSegment], hyps: Sequence[str], words: Sequence[str],
    threshold: float = 0.2, min_confidence: float = 0.5,
) -> list[Spotted]:
    """Assign each confident proposal the sentence word nearest its hypothesis.

    Distance is edit distance over the longer length, computed on normalized
    (lowercased, punctuation-free) strings. A proposal keeps its nearest word
    (ties: earlier in the sentence) only when the distance is <= threshold, and
    each word keeps its best proposal (ties: higher confidence, then earlier).
    The score of a spotted pair is ``1 - distance``.
    """
    if len(proposals) != len(hyps):
        raise ValidationError("need one hypothesis per proposal")
    cand = []
    for w in words:
        w = normalize_word(w)
        if w and w not in cand:
            cand.append(w)
    order = sorted(range(len(proposals)), key=lambda i: (proposals[i].segment, -proposals[i].score, i))
    best: dict[str, tuple[float, float, int]] = {}
    for i in order:
        prop = proposals[i]
        if prop.score <= min_confidence or not cand:
            continue
        hyp = normalize_word(hyps[i])
        dists = [normalized_edit_distance(w, hyp) for w in cand]
        j = int(np.argmin(dists))
        d = dists[j]
        if d > threshold:
            continue
        key = (d, -prop.score)
        w = cand[j]
        if w not in best or key < best[w][:2]:
            best[w] = (d, -prop.score, i)
    out = [Spotted(proposals[i].segment, w, 1.0 - d, "fingerspelling") for w, (d, _, i) in best.items()]
    return sorted(out, key=lambda s: (s.segment, s.word))
