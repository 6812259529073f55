"""Per-frame NMS, Viterbi tube linking, tube smoothing and attention-peak boxes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Box2D, ValidationError, box_iou

FrameBoxes = Sequence[Sequence[Box2D]]


@dataclass(frozen=True)
class LinkConfig:
    """Linking weight, smoothing half-window, peak count and zoom ratio.

    ``lambda_link`` is 0.3 for detector tubes and 0.1 for attention tubes.
    """

    lambda_link: float = 0.3
    smooth_half_window: int = 5
    top_k: int = 3
    zoom_ratio: float = 0.5

    def __post_init__(self):
        if self.lambda_link < 0:
            raise ValidationError("lambda_link must be >= 0")
        if self.smooth_half_window < 0:
            raise ValidationError("smoothing half-window must be >= 0")
        if self.top_k < 1:
            raise ValidationError("top_k must be >= 1")
        if not 0 < self.zoom_ratio <= 1:
            raise ValidationError("zoom_ratio must lie in (0, 1]")


def frame_nms(boxes: Sequence[Box2D], iou_threshold: float = 0.9, max_keep: int = 50) -> list[Box2D]:
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept: list[Box2D] = []
    for i in order:
        if len(kept) >= max_keep:
            break
        if all(box_iou(boxes[i], k) <= iou_threshold for k in kept):
            kept.append(boxes[i])
    return kept


def link_score(a: Box2D, b: Box2D, lambda_link: float) -> float:
    return a.score + b.score + lambda_link * box_iou(a, b)


def link_tube(fb: FrameBoxes, cfg: LinkConfig = LinkConfig()) -> tuple[list[int], float]:
    """Box index per frame maximizing the mean linking score.

    Ties go to the lexicographically smallest index sequence, which is why
    the recursion runs backwards: picking the first maximizer while walking
    forward then yields the smallest optimal sequence.
    """
    T = len(fb)
    if T == 0 or any(len(f) == 0 for f in fb):
        raise ValidationError("every frame needs at least one box")
    if T == 1:
        scores = [b.score for b in fb[0]]
        best = int(np.argmax(scores))
        return [best], float(scores[best])

    # suffix[t][i]: best sum of linking scores from frame t (box i) to the end
    suffix = [np.zeros(len(f)) for f in fb]
    edges = []
    for t in range(T - 2, -1, -1):
        e = np.array([[link_score(a, b, cfg.lambda_link) for b in fb[t + 1]] for a in fb[t]])
        cand = e + suffix[t + 1][None, :]
        suffix[t] = cand.max(axis=1)
        edges.append(cand)
    edges.reverse()

    path = [int(np.argmax(suffix[0]))]
    for t in range(T - 1):
        path.append(int(np.argmax(edges[t][path[-1]])))
    return path, float(suffix[0][path[0]]) / T


def sequence_score(fb: FrameBoxes, path: Sequence[int], lambda_link: float) -> float:
    """Mean linking score of an explicit index sequence (T-1 terms over T)."""
    T = len(fb)
    if T == 1:
        return fb[0][path[0]].score
    total = sum(link_score(fb[t][path[t]], fb[t + 1][path[t + 1]], lambda_link) for t in range(T - 1))
    return total / T


def smooth_tube(boxes: Sequence[Box2D], a: int) -> list[Box2D]:
    """Moving average of coordinates over ``[n-a, n+a]``, window clipped at the ends."""
    if a < 0:
        raise ValidationError("half-window must be >= 0")
    if not boxes:
        return []
    coords = np.array([b.coords() for b in boxes], dtype=np.float64)
    n = len(boxes)
    out = []
    for i, b in enumerate(boxes):
        lo, hi = max(0, i - a), min(n, i + a + 1)
        x1, y1, x2, y2 = coords[lo:hi].mean(axis=0)
        out.append(Box2D(float(x1), float(y1), float(x2), float(y2), b.score))
    return out


def peaks_to_boxes(attn: np.ndarray, k: int, R: float, frame_size: tuple[float, float]) -> list[Box2D]:
    """Boxes of size ``R * frame`` centred on the ``k`` largest attention cells.

    The map is an ``h x w`` grid laid over a ``(width, height)`` frame; cell
    ``(i, j)`` is centred at ``((j + .5) * width / w, (i + .5) * height / h)``.
    Boxes are clipped to the frame and scored with the attention value.
    """
    attn = np.asarray(attn, dtype=np.float64)
    if k < 1:
        raise ValidationError("k must be >= 1")
    if attn.ndim != 2 or attn.size == 0:
        raise ValidationError("attention map must be a non-empty 2-D array")
    if np.any(attn < 0):
        raise ValidationError("attention map must be non-negative")
    width, height = frame_size
    h, w = attn.shape
    flat = attn.ravel()
    # stable sort on the negated map keeps row-major order among ties
    order = np.argsort(-flat, kind="stable")[:k]
    bw, bh = R * width, R * height
    boxes = []
    for idx in order:
        i, j = divmod(int(idx), w)
        cx, cy = (j + 0.5) * width / w, (i + 0.5) * height / h
        x1, x2 = max(0.0, cx - bw / 2), min(float(width), cx + bw / 2)
        y1, y2 = max(0.0, cy - bh / 2), min(float(height), cy + bh / 2)
        boxes.append(Box2D(x1, y1, x2, y2, float(flat[idx])))
    return boxes
