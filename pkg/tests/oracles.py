"""Brute-force reference computations used to check the fast implementations."""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np


def edit_distance(a, b) -> int:
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def collapse(path, blank):
    out = []
    prev = None
    for k in path:
        if k != prev and k != blank:
            out.append(k)
        prev = k
    return tuple(out)


def ctc_marginals(frames: np.ndarray, blank: int) -> dict[tuple[int, ...], float]:
    """Probability of every collapsed label sequence, by enumerating all paths."""
    T, L = frames.shape
    out: dict[tuple[int, ...], float] = {}
    for path in itertools.product(range(L), repeat=T):
        p = math.prod(frames[t, k] for t, k in enumerate(path))
        key = collapse(path, blank)
        out[key] = out.get(key, 0.0) + p
    return out


def tube_enumeration(scores, ious, lam):
    """Best (lexicographically first among ties within 1e-12) box sequence and its mean score.

    ``scores[t][i]`` is a box score; ``ious[t][i][j]`` the IoU between box i
    at t and box j at t+1.
    """
    T = len(scores)
    best, best_path = -math.inf, None
    results = []
    for path in itertools.product(*[range(len(s)) for s in scores]):
        if T == 1:
            val = scores[0][path[0]]
        else:
            val = sum(scores[t][path[t]] + scores[t + 1][path[t + 1]] + lam * ious[t][path[t]][path[t + 1]]
                      for t in range(T - 1)) / T
        results.append((path, val))
        best = max(best, val)
    for path, val in results:
        if val >= best - 1e-12:
            best_path = path
            break
    return list(best_path), best


def greedy_nms(items, iou, thr):
    """Plain greedy NMS on ``(score, payload)`` items, stable for ties."""
    order = sorted(range(len(items)), key=lambda i: (-items[i][0], i))
    kept = []
    for i in order:
        if all(iou(items[i][1], items[k][1]) <= thr for k in kept):
            kept.append(i)
    return kept


def interval_iou(a, b):
    inter = max(0, min(a[1], b[1]) - max(a[0], b[0]))
    return inter / (max(a[1], b[1]) - min(a[0], b[0])) if inter else 0.0
