"""CTC path probabilities, greedy decoding and prefix beam search with a character LM."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

import numpy as np

from .core import Alphabet, ValidationError

if TYPE_CHECKING:
    from .lm import NGramModel

ROW_SUM_TOL = 1e-6


@dataclass(frozen=True)
class Posteriorgram:
    """T x L matrix of per-frame label probabilities."""

    alphabet: Alphabet
    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValidationError("posteriorgram must be a non-empty T x L matrix")
        if frames.shape[1] != self.alphabet.num_labels:
            raise ValidationError(
                f"posteriorgram has {frames.shape[1]} columns, alphabet has {self.alphabet.num_labels} labels"
            )
        bad = bad_rows(frames)
        if bad:
            t, why = bad[0]
            raise ValidationError(f"frame {t}: {why}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def bad_rows(frames: np.ndarray) -> list[tuple[int, str]]:
    """Rows that are not probability distributions, with a reason for each."""
    out = []
    for t, row in enumerate(frames):
        if not np.all(np.isfinite(row)):
            out.append((t, "non-finite probability"))
        elif np.any(row < 0):
            out.append((t, "negative probability"))
        elif abs(row.sum() - 1.0) > ROW_SUM_TOL:
            out.append((t, f"probabilities sum to {row.sum():.6g}, expected 1"))
    return out


@dataclass(frozen=True)
class BeamConfig:
    beam_width: int = 10
    lm_weight: float = 0.0
    insertion_bias: float = 0.0

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValidationError("beam_width must be >= 1")
        if self.lm_weight < 0:
            raise ValidationError("lm_weight must be >= 0")


def collapse(path: Iterable[int], alphabet: Alphabet) -> str:
    """Merge repeated labels, then drop blanks."""
    out = []
    prev = None
    for k in path:
        sym = alphabet.symbol(k)
        if k != prev and sym is not None:
            out.append(sym)
        prev = k
    return "".join(out)


def min_frames(labels: Sequence[str]) -> int:
    """Shortest posteriorgram that can emit ``labels`` (repeats need a blank between)."""
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def is_feasible(labels: Sequence[str], num_frames: int) -> bool:
    return min_frames(labels) <= num_frames


def sequence_log_prob(post: Posteriorgram, labels: Sequence[str]) -> float:
    """Natural-log CTC marginal of ``labels``; ``-inf`` when no alignment exists."""
    alphabet = post.alphabet
    ids = [alphabet.index(s) for s in labels]
    T = post.num_frames
    if not is_feasible(labels, T):
        return -math.inf
    blank = alphabet.blank_index
    ext = [blank]
    for k in ids:
        ext += [k, blank]
    S = len(ext)
    with np.errstate(divide="ignore"):
        logy = np.log(post.frames)
    alpha = np.full(S, -np.inf)
    alpha[0] = logy[0, ext[0]]
    if S > 1:
        alpha[1] = logy[0, ext[1]]
    # skip transitions allowed into non-blank states whose label differs from two back
    can_skip = np.array([s >= 2 and ext[s] != blank and ext[s] != ext[s - 2] for s in range(S)])
    ext_idx = np.array(ext)
    for t in range(1, T):
        stay = alpha
        step = np.concatenate(([-np.inf], alpha[:-1]))
        skip = np.where(can_skip, np.concatenate(([-np.inf, -np.inf], alpha))[:S], -np.inf)
        alpha = np.logaddexp(np.logaddexp(stay, step), skip) + logy[t, ext_idx]
    total = np.logaddexp(alpha[-1], alpha[-2]) if S > 1 else alpha[-1]
    return float(total)


def greedy_decode(post: Posteriorgram) -> tuple[str, tuple[int, ...]]:
    path = tuple(int(k) for k in np.argmax(post.frames, axis=1))
    return collapse(path, post.alphabet), path


def _lm_step(lm: Optional["NGramModel"], prefix: Sequence[str], sym: str) -> float:
    if lm is None:
        return 0.0
    return lm.log_prob(sym, prefix)


def _lm_end(lm: Optional["NGramModel"], prefix: Sequence[str]) -> float:
    if lm is None:
        return 0.0
    return lm.log_prob_end(prefix)


def beam_decode(
    post: Posteriorgram, lm: Optional["NGramModel"] = None, cfg: BeamConfig = BeamConfig()
) -> list[tuple[str, float]]:
    """Prefix beam search; returns ``(hypothesis, combined score)`` best first.

    combined = log P_ctc(prefix) + lm_weight * log P_lm(prefix + eos)
               + insertion_bias * len(prefix)

    The LM term is applied as each symbol is appended, the end-of-sequence
    term when the final beam is ranked.
    """
    alphabet = post.alphabet
    use_lm = lm is not None and cfg.lm_weight > 0
    if use_lm:
        missing = [s for s in alphabet.symbols if s is not None and s not in lm.vocab]
        if missing:
            raise ValidationError(f"language model vocabulary lacks {missing}")
    lm_ = lm if use_lm else None
    blank = alphabet.blank_index
    with np.errstate(divide="ignore"):
        logy = np.log(post.frames)
    symbols = [(k, s) for k, s in enumerate(alphabet.symbols) if s is not None]

    # prefix -> [log p ending in blank, log p ending in non-blank, accumulated lm log prob]
    beams: dict[tuple[str, ...], list[float]] = {(): [0.0, -math.inf, 0.0]}

    def rank_key(item):
        prefix, (pb, pnb, lmlp) = item
        score = np.logaddexp(pb, pnb) + cfg.lm_weight * lmlp + cfg.insertion_bias * len(prefix)
        return (-score, prefix)

    for t in range(post.num_frames):
        row = logy[t]
        nxt: dict[tuple[str, ...], list[float]] = {}
        for prefix, (pb, pnb, lmlp) in beams.items():
            total = np.logaddexp(pb, pnb)
            e = nxt.setdefault(prefix, [-math.inf, -math.inf, lmlp])
            e[0] = np.logaddexp(e[0], total + row[blank])
            if prefix:
                e[1] = np.logaddexp(e[1], pnb + row[alphabet.index(prefix[-1])])
            for k, sym in symbols:
                p = row[k]
                if p == -math.inf:
                    continue
                ext = prefix + (sym,)
                if ext not in nxt:
                    nxt[ext] = [-math.inf, -math.inf, lmlp + _lm_step(lm_, prefix, sym)]
                e2 = nxt[ext]
                # a repeated symbol only extends the prefix across a blank
                src = pb if prefix and prefix[-1] == sym else total
                e2[1] = np.logaddexp(e2[1], src + p)
        ranked = sorted(nxt.items(), key=rank_key)
        beams = dict(ranked[: cfg.beam_width])

    results = []
    for prefix, (pb, pnb, lmlp) in beams.items():
        ctc = float(np.logaddexp(pb, pnb))
        lm_total = lmlp + _lm_end(lm_, prefix)
        score = ctc + cfg.lm_weight * lm_total + cfg.insertion_bias * len(prefix)
        if score > -math.inf:
            results.append(("".join(prefix), float(score)))
    results.sort(key=lambda r: (-r[1], r[0]))
    return results
