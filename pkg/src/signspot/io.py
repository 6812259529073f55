"""Reading and validating the JSON / JSON-Lines interchange formats, and
deterministic JSON output."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from .core import Alphabet, Box2D, LabeledSegment, ScoredSegment, TimeSegment, ValidationError
from .ctc import Posteriorgram, bad_rows

SIG_DIGITS = 9


class DataError(ValidationError):
    """Input data violates its schema; carries the file and 1-based line."""

    def __init__(self, path, line: Optional[int], message: str):
        self.path, self.line = str(path), line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


# --------------------------------------------------------------------------
# output

def _canonical(obj: Any) -> Any:
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        x = float(f"{x:.{SIG_DIGITS}g}")
        return 0.0 if x == 0 else x
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canonical(obj.tolist())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    """Sorted-key JSON with floats rounded to 9 significant digits."""
    return json.dumps(_canonical(obj), sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def dumps_lines(records: Iterable[Any]) -> str:
    return "".join(dumps(r) + "\n" for r in records)


# --------------------------------------------------------------------------
# input

def _load_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(path, None, f"cannot read file: {exc}") from None


def read_json(path) -> dict:
    try:
        doc = json.loads(_load_text(path))
    except json.JSONDecodeError as exc:
        raise DataError(path, exc.lineno, f"invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise DataError(path, 1, "expected a JSON object")
    return doc


def read_jsonl(path) -> list[tuple[int, dict]]:
    out = []
    for lineno, line in enumerate(_load_text(path).splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(path, lineno, f"invalid JSON: {exc.msg}") from None
        if not isinstance(rec, dict):
            raise DataError(path, lineno, "expected a JSON object")
        out.append((lineno, rec))
    return out


def read_json_or_jsonl(path) -> list[tuple[int, dict]]:
    """One JSON document, or JSON-Lines of documents."""
    text = _load_text(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        return read_jsonl(path)
    if not isinstance(doc, dict):
        raise DataError(path, 1, "expected a JSON object")
    return [(1, doc)]


def read_lines(path) -> list[str]:
    return _load_text(path).splitlines()


def _check_schema(rec: dict, schema: str, path, line):
    if rec.get("schema") != schema:
        raise DataError(path, line, f"expected schema {schema!r}, got {rec.get('schema')!r}")


def _field(rec: dict, name: str, types, path, line, optional=False):
    if name not in rec or rec[name] is None:
        if optional:
            return None
        raise DataError(path, line, f"missing field {name!r}")
    val = rec[name]
    if isinstance(val, bool) or not isinstance(val, types):
        raise DataError(path, line, f"field {name!r} has the wrong type")
    return val


def _number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def parse_posteriorgram(rec: dict, path, line) -> Posteriorgram:
    _check_schema(rec, "pg/1", path, line)
    letters = _field(rec, "alphabet", list, path, line)
    blank = _field(rec, "blank_index", int, path, line)
    noletter = _field(rec, "noletter_index", int, path, line, optional=True)
    frames = _field(rec, "frames", list, path, line)
    try:
        alphabet = Alphabet(tuple(letters), blank, noletter)
    except ValidationError as exc:
        raise DataError(path, line, str(exc)) from None
    if not frames:
        raise DataError(path, line, "posteriorgram has no frames")
    for t, row in enumerate(frames):
        if not isinstance(row, list) or len(row) != alphabet.num_labels or not all(_number(x) for x in row):
            raise DataError(path, line, f"row {t}: expected {alphabet.num_labels} finite numbers")
    arr = np.asarray(frames, dtype=np.float64)
    bad = bad_rows(arr)
    if bad:
        t, why = bad[0]
        raise DataError(path, line, f"row {t}: {why}")
    return Posteriorgram(alphabet, arr)


@dataclass(frozen=True)
class SegmentRecord:
    video_id: str
    segment: TimeSegment
    word: Optional[str]
    score: Optional[float]
    transcript: Optional[str]
    line: Optional[int] = field(default=None, compare=False)

    @property
    def text(self) -> Optional[str]:
        return self.transcript if self.transcript is not None else self.word

    def scored(self) -> ScoredSegment:
        return ScoredSegment(self.segment, self.score, self.text, self.video_id)

    def labeled(self) -> LabeledSegment:
        return LabeledSegment(self.segment, self.text, self.video_id)


def parse_segments(path, require_score=False, require_text=False) -> list[SegmentRecord]:
    out = []
    for line, rec in read_jsonl(path):
        _check_schema(rec, "seg/1", path, line)
        vid = _field(rec, "video_id", str, path, line)
        start = _field(rec, "start", int, path, line)
        end = _field(rec, "end", int, path, line)
        if not 0 <= start < end:
            raise DataError(path, line, f"invalid interval [{start}, {end})")
        word = _field(rec, "word", str, path, line, optional=True)
        score = _field(rec, "score", (int, float), path, line, optional=not require_score)
        if score is not None and not (_number(score) and 0 <= score <= 1):
            raise DataError(path, line, f"score {score} outside [0, 1]")
        transcript = _field(rec, "transcript", str, path, line, optional=True)
        r = SegmentRecord(vid, TimeSegment(start, end), word, None if score is None else float(score), transcript, line)
        if require_text and not r.text:
            raise DataError(path, line, "segment needs a non-empty transcript or word")
        out.append(r)
    return out


def parse_frame_boxes(path) -> dict[str, list[list[Box2D]]]:
    """Boxes grouped per video, frames ``0..T-1`` each present exactly once."""
    frames: dict[str, dict[int, list[Box2D]]] = {}
    for line, rec in read_jsonl(path):
        _check_schema(rec, "fb/1", path, line)
        vid = _field(rec, "video_id", str, path, line)
        frame = _field(rec, "frame", int, path, line)
        raw = _field(rec, "boxes", list, path, line)
        if frame < 0:
            raise DataError(path, line, "negative frame index")
        if not raw:
            raise DataError(path, line, f"frame {frame} has no boxes")
        boxes = []
        for i, b in enumerate(raw):
            if not isinstance(b, dict) or not all(_number(b.get(k)) for k in ("x1", "y1", "x2", "y2", "score")):
                raise DataError(path, line, f"box {i}: need numeric x1, y1, x2, y2, score")
            if not 0 <= b["score"] <= 1:
                raise DataError(path, line, f"box {i}: score outside [0, 1]")
            try:
                boxes.append(Box2D(float(b["x1"]), float(b["y1"]), float(b["x2"]), float(b["y2"]), float(b["score"])))
            except ValidationError as exc:
                raise DataError(path, line, f"box {i}: {exc}") from None
        per = frames.setdefault(vid, {})
        if frame in per:
            raise DataError(path, line, f"duplicate frame {frame} for video {vid!r}")
        per[frame] = boxes
    out = {}
    for vid, per in frames.items():
        if sorted(per) != list(range(len(per))):
            raise DataError(path, None, f"video {vid!r} frames are not contiguous from 0")
        out[vid] = [per[t] for t in range(len(per))]
    return out


def parse_embeddings(path) -> dict[str, dict[str, np.ndarray]]:
    """``{"video_segment": {id: vec}, "text": {id: vec}}``."""
    out: dict[str, dict[str, np.ndarray]] = {"video_segment": {}, "text": {}}
    dim = None
    for line, rec in read_jsonl(path):
        _check_schema(rec, "emb/1", path, line)
        eid = _field(rec, "id", str, path, line)
        kind = _field(rec, "kind", str, path, line)
        vec = _field(rec, "vector", list, path, line)
        if kind not in out:
            raise DataError(path, line, f"unknown embedding kind {kind!r}")
        if not vec or not all(_number(x) for x in vec):
            raise DataError(path, line, "vector must be non-empty and finite")
        arr = np.asarray(vec, dtype=np.float64)
        if not np.any(arr):
            raise DataError(path, line, "zero vector has no direction")
        if dim is not None and len(arr) != dim:
            raise DataError(path, line, f"vector has dimension {len(arr)}, expected {dim}")
        dim = len(arr)
        if eid in out[kind]:
            raise DataError(path, line, f"duplicate {kind} id {eid!r}")
        out[kind][eid] = arr
    return out


def parse_window_probs(path) -> dict[str, list[tuple[TimeSegment, dict[str, float]]]]:
    out: dict[str, list] = {}
    for line, rec in read_jsonl(path):
        _check_schema(rec, "wp/1", path, line)
        vid = _field(rec, "video_id", str, path, line)
        start = _field(rec, "start", int, path, line)
        end = _field(rec, "end", int, path, line)
        probs = _field(rec, "probs", dict, path, line)
        if not 0 <= start < end:
            raise DataError(path, line, f"invalid interval [{start}, {end})")
        if not all(_number(v) and v >= 0 for v in probs.values()):
            raise DataError(path, line, "probabilities must be finite and non-negative")
        if sum(probs.values()) > 1 + 1e-6:
            raise DataError(path, line, f"probabilities sum to {sum(probs.values()):.6g} > 1")
        out.setdefault(vid, []).append((TimeSegment(start, end), {str(k): float(v) for k, v in probs.items()}))
    return out


def parse_sentences(path) -> dict[str, str]:
    out = {}
    for line, rec in read_jsonl(path):
        _check_schema(rec, "sent/1", path, line)
        vid = _field(rec, "video_id", str, path, line)
        if vid in out:
            raise DataError(path, line, f"duplicate sentence for video {vid!r}")
        out[vid] = _field(rec, "text", str, path, line)
    return out


def parse_relevance(path) -> set[tuple[str, str]]:
    out = set()
    for line, rec in read_jsonl(path):
        _check_schema(rec, "rel/1", path, line)
        out.add((_field(rec, "video_id", str, path, line), _field(rec, "word", str, path, line)))
    return out


def parse_lengths(path) -> dict[str, int]:
    doc = read_json(path)
    _check_schema(doc, "len/1", path, 1)
    lengths = _field(doc, "lengths", dict, path, 1)
    for vid, n in lengths.items():
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise DataError(path, 1, f"video {vid!r}: frame count must be a positive integer")
    return dict(lengths)


def segment_record(video_id: str, seg: TimeSegment, word=None, score=None, transcript=None) -> dict:
    return {"schema": "seg/1", "video_id": video_id, "start": seg.start, "end": seg.end,
            "word": word, "score": score, "transcript": transcript}
