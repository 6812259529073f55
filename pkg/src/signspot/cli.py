"""Command-line entry point.

Every command reads and validates all of its inputs, computes its result in
memory and only then writes it, so a failing run leaves no partial output.

Exit codes: 0 success, 1 usage or configuration error, 2 invalid input data.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import __version__
from .core import LabeledSegment, ValidationError
from .ctc import BeamConfig, beam_decode, greedy_decode
from .fusion import gradient_check_suite
from .io import (DataError, dumps, dumps_lines, parse_embeddings, parse_frame_boxes, parse_lengths,
                 parse_posteriorgram, parse_relevance, parse_segments, parse_sentences, parse_window_probs,
                 read_json, read_json_or_jsonl, read_lines, segment_record)
from .linker import LinkConfig, frame_nms, link_tube, smooth_tube
from .lm import NGramModel, perplexity, train_ngram
from .match import MatchConfig, score_matrix, search_eval
from .metrics import MetricConfig, ap_at_acc, ap_at_iou, bleu_n, msa, rouge_l, tokenize
from .spot import SpotConfig, WindowProbs, sentence_words, spot_fingerspelling, spot_lexical


class UsageError(Exception):
    pass


def _float_list(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [s for s in str(text).split(",") if s.strip()]
    try:
        return tuple(float(x) for x in items)
    except (TypeError, ValueError):
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _int_list(text) -> tuple[int, ...]:
    vals = _float_list(text)
    if any(v != int(v) for v in vals):
        raise UsageError(f"expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


@dataclass(frozen=True)
class Param:
    name: str
    type: Callable
    default: Any = None
    help: str = ""
    required: bool = False


COMMON = [
    Param("output", str, None, "output file (default: stdout)"),
    Param("jobs", int, 1, "maximum number of worker threads"),
]

COMMANDS: dict[str, tuple[str, list[Param]]] = {
    "ctc-decode": ("greedy and beam decoding of posteriorgrams", [
        Param("input", str, help="pg/1 JSON document or JSON-Lines of them", required=True),
        Param("lm", str, help="lm/1 character language model"),
        Param("beam_width", int, 10),
        Param("lm_weight", float, 0.0),
        Param("insertion_bias", float, 0.0),
        Param("nbest", int, 1, "beam hypotheses to report"),
    ]),
    "lm-train": ("train an add-k character n-gram model", [
        Param("corpus", str, help="text file, one sequence per line", required=True),
        Param("order", int, 5),
        Param("k", float, 1.0, "add-k smoothing constant"),
        Param("vocab", str, help="symbols of the vocabulary, as one string"),
    ]),
    "lm-ppl": ("perplexity of a language model on a corpus", [
        Param("lm", str, required=True),
        Param("corpus", str, required=True),
    ]),
    "link-tube": ("link per-frame hand boxes into one tube per video", [
        Param("boxes", str, help="fb/1 JSON-Lines", required=True),
        Param("lambda_link", float, 0.3),
        Param("nms_iou", float, 0.9),
        Param("max_keep", int, 50),
        Param("smooth_half_window", int, 5),
    ]),
    "detect-eval": ("AP@IoU, AP@Acc and MSA of detected segments", [
        Param("gt", str, help="seg/1 ground truth with transcripts", required=True),
        Param("pred", str, help="seg/1 predictions with scores", required=True),
        Param("lengths", str, help="len/1 frame counts (default: last segment end)"),
        Param("iou_thresholds", _float_list, (0.1, 0.3, 0.5)),
        Param("acc_thresholds", _float_list, (0.0, 0.2, 0.4)),
        Param("acc_iou_threshold", float, 0.0),
        Param("recall_levels", int, 100),
        Param("msa_nms_iou", float, 0.0),
    ]),
    "spot": ("label windows and proposals with words of the sentence", [
        Param("sentences", str, help="sent/1 JSON-Lines", required=True),
        Param("windows", str, help="wp/1 JSON-Lines"),
        Param("proposals", str, help="seg/1 proposals with scores and recognized transcripts"),
        Param("lexical_threshold", float, 0.6),
        Param("fs_threshold", float, 0.2),
        Param("min_confidence", float, 0.5),
    ]),
    "retrieve-eval": ("fingerspelled word search and video search", [
        Param("embeddings", str, help="emb/1 JSON-Lines", required=True),
        Param("proposals", str, help="seg/1 proposals with detection scores", required=True),
        Param("relevance", str, help="rel/1 JSON-Lines", required=True),
        Param("beta", float, 1.0),
        Param("max_proposals", int, 50),
        Param("top_n", _int_list, (1, 5, 10)),
    ]),
    "bleu": ("corpus BLEU and ROUGE-L", [
        Param("hyps", str, required=True),
        Param("refs", str, required=True),
        Param("max_n", int, 4),
    ]),
    "fusion-check": ("finite-difference checks of the fusion gradients", [
        Param("seed", int, 0),
        Param("instances", int, 20),
        Param("eps", float, 1e-6),
        Param("tol", float, 1e-5),
    ]),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="signspot", description="Fingerspelling and sign spotting toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (help_text, params) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON file of defaults; flags override it")
        for prm in params + COMMON:
            default = "required" if prm.required else f"default: {prm.default}"
            p.add_argument("--" + prm.name.replace("_", "-"), dest=prm.name, default=None,
                           help=f"{prm.help} ({default})".lstrip())
    return parser


def resolve(command: str, ns: argparse.Namespace) -> dict[str, Any]:
    """Merge built-in defaults, the config file and command-line flags."""
    params = {p.name: p for p in COMMANDS[command][1] + COMMON}
    values = {name: p.default for name, p in params.items()}
    if ns.config:
        try:
            doc = json.loads(Path(ns.config).read_text(encoding="utf-8"))
        except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
        for key, val in doc.items():
            name = key.replace("-", "_")
            if name not in params:
                raise UsageError(f"unknown config key {key!r} for {command}")
            values[name] = _convert(params[name], val)
    for name, prm in params.items():
        raw = getattr(ns, name)
        if raw is not None:
            values[name] = _convert(prm, raw)
    missing = [n for n, p in params.items() if p.required and values[n] is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    if values["jobs"] < 1:
        raise UsageError("--jobs must be >= 1")
    return values


def _convert(prm: Param, raw):
    if raw is None:
        return None
    if prm.type in (int, float) and isinstance(raw, bool):
        raise UsageError(f"--{prm.name}: expected a number")
    try:
        val = prm.type(raw)
    except (TypeError, ValueError):
        raise UsageError(f"--{prm.name.replace('_', '-')}: invalid value {raw!r}") from None
    if prm.type is int and isinstance(raw, float) and raw != val:
        raise UsageError(f"--{prm.name.replace('_', '-')}: expected an integer")
    return val


def _pmap(fn, items, jobs: int) -> list:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# commands; each returns the text to write


def cmd_ctc_decode(o) -> str:
    try:
        cfg = BeamConfig(o["beam_width"], o["lm_weight"], o["insertion_bias"])
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    if o["nbest"] < 1:
        raise UsageError("--nbest must be >= 1")
    lm = _load_lm(o["lm"]) if o["lm"] else None
    records = [(line, rec, parse_posteriorgram(rec, o["input"], line)) for line, rec in read_json_or_jsonl(o["input"])]
    if lm is not None and cfg.lm_weight > 0:
        for line, _, pg in records:
            missing = [s for s in pg.alphabet.symbols if s is not None and s not in lm.vocab]
            if missing:
                raise DataError(o["input"], line, f"language model vocabulary lacks {missing}")

    def run(item):
        i, (line, rec, pg) = item
        text, path = greedy_decode(pg)
        beam = beam_decode(pg, lm, cfg)[: o["nbest"]]
        return {"schema": "hyp/1", "index": i, "id": rec.get("id"), "greedy": text, "greedy_path": list(path),
                "beam": [{"text": t, "score": s} for t, s in beam]}

    return dumps_lines(_pmap(run, enumerate(records), o["jobs"]))


def _load_lm(path) -> NGramModel:
    doc = read_json(path)
    try:
        return NGramModel.from_json(doc)
    except ValidationError as exc:
        raise DataError(path, None, str(exc)) from None


def _corpus(path) -> list[str]:
    return [line for line in read_lines(path) if line]


def cmd_lm_train(o) -> str:
    corpus = _corpus(o["corpus"])
    if not corpus:
        raise DataError(o["corpus"], None, "corpus has no non-empty lines")
    if o["order"] < 1 or o["k"] <= 0:
        raise UsageError("--order must be >= 1 and --k > 0")
    vocab = None if o["vocab"] is None else sorted(set(o["vocab"]))
    if vocab is not None:
        for n, line in enumerate(read_lines(o["corpus"]), 1):
            bad = sorted(set(line) - set(vocab))
            if bad:
                raise DataError(o["corpus"], n, f"symbols outside the vocabulary: {bad}")
    model = train_ngram([tuple(s) for s in corpus], o["order"], o["k"], vocab)
    return dumps(model.to_json()) + "\n"


def cmd_lm_ppl(o) -> str:
    model = _load_lm(o["lm"])
    lines = read_lines(o["corpus"])
    for n, line in enumerate(lines, 1):
        bad = sorted(set(line) - set(model.vocab))
        if bad:
            raise DataError(o["corpus"], n, f"symbols outside the model vocabulary: {bad}")
    corpus = [tuple(s) for s in lines if s]
    if not corpus:
        raise DataError(o["corpus"], None, "corpus has no non-empty lines")
    return dumps({"schema": "ppl/1", "perplexity": perplexity(model, corpus), "sequences": len(corpus),
                  "symbols": sum(len(s) + 1 for s in corpus)}) + "\n"


def _box_dict(b) -> dict:
    return {"x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2, "score": b.score}


def cmd_link_tube(o) -> str:
    try:
        cfg = LinkConfig(lambda_link=o["lambda_link"], smooth_half_window=o["smooth_half_window"])
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    if not 0 <= o["nms_iou"] <= 1 or o["max_keep"] < 1:
        raise UsageError("--nms-iou must lie in [0, 1] and --max-keep be >= 1")
    videos = parse_frame_boxes(o["boxes"])

    def run(vid):
        fb = [frame_nms(boxes, o["nms_iou"], o["max_keep"]) for boxes in videos[vid]]
        path, score = link_tube(fb, cfg)
        chosen = [fb[t][i] for t, i in enumerate(path)]
        smoothed = smooth_tube(chosen, cfg.smooth_half_window)
        return {"schema": "tube/1", "video_id": vid, "path": path, "score": score,
                "boxes": [_box_dict(b) for b in chosen], "smoothed": [_box_dict(b) for b in smoothed]}

    return dumps_lines(_pmap(run, sorted(videos), o["jobs"]))


def _metric_name(prefix: str, t: float) -> str:
    return f"{prefix}={t:g}"


def cmd_detect_eval(o) -> str:
    try:
        cfg = MetricConfig(o["iou_thresholds"], o["acc_thresholds"], o["acc_iou_threshold"], o["recall_levels"])
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    gt_recs = parse_segments(o["gt"], require_text=True)
    pred_recs = parse_segments(o["pred"], require_score=True)
    gts = [r.labeled() for r in gt_recs]
    preds = [r.scored() for r in pred_recs]
    if not gts:
        raise DataError(o["gt"], None, "no ground-truth segments")
    if o["lengths"]:
        lengths = parse_lengths(o["lengths"])
        for path, recs in ((o["gt"], gt_recs), (o["pred"], pred_recs)):
            for r in recs:
                if r.video_id not in lengths:
                    raise DataError(path, r.line, f"no frame count for video {r.video_id!r}")
                if r.segment.end > lengths[r.video_id]:
                    raise DataError(path, r.line, f"segment ends after frame {lengths[r.video_id]}")
    else:
        lengths = {}
        for r in gt_recs + pred_recs:
            lengths[r.video_id] = max(lengths.get(r.video_id, 0), r.segment.end)
    by_video: dict[str, list[LabeledSegment]] = {}
    for r in gt_recs:
        prev = by_video.setdefault(r.video_id, [])
        for g in prev:
            if g.segment.start < r.segment.end and r.segment.start < g.segment.end:
                raise DataError(o["gt"], r.line, "ground-truth segments overlap")
        prev.append(r.labeled())

    tasks = [("iou", t) for t in cfg.iou_thresholds] + [("acc", t) for t in cfg.acc_thresholds] + [("msa", None)]

    def run(task):
        kind, t = task
        if kind == "iou":
            return {_metric_name("AP@IoU", t): ap_at_iou(preds, gts, t, cfg.recall_levels)}
        if kind == "acc":
            return {_metric_name("AP@Acc", t): ap_at_acc(preds, gts, t, cfg.acc_iou_threshold, cfg.recall_levels)}
        res = msa(preds, gts, lengths, nms_iou=o["msa_nms_iou"])
        return {"MSA": res.msa, "MSA_threshold": res.threshold}

    report: dict[str, Any] = {"schema": "report/1", "num_gt": len(gts), "num_pred": len(preds)}
    for part in _pmap(run, tasks, o["jobs"]):
        report.update(part)
    return dumps(report) + "\n"


def cmd_spot(o) -> str:
    try:
        cfg = SpotConfig(lexical_threshold=o["lexical_threshold"], fs_threshold=o["fs_threshold"],
                         detector_min_confidence=o["min_confidence"])
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    if not o["windows"] and not o["proposals"]:
        raise UsageError("need --windows, --proposals or both")
    sentences = parse_sentences(o["sentences"])
    windows = parse_window_probs(o["windows"]) if o["windows"] else {}
    props: dict[str, list] = {}
    if o["proposals"]:
        for r in parse_segments(o["proposals"], require_score=True):
            if r.transcript is None:
                raise DataError(o["proposals"], r.line, "proposal needs a recognized transcript")
            props.setdefault(r.video_id, []).append(r)
    for path, table in ((o["windows"], windows), (o["proposals"], props)):
        unknown = sorted(set(table) - set(sentences))
        if unknown:
            raise DataError(path, None, f"no sentence for video {unknown[0]!r}")

    def run(vid):
        words = sentence_words(sentences[vid])
        out = []
        if vid in windows:
            vocab_list = sorted({w for _, probs in windows[vid] for w in probs})
            vocab = {w: i for i, w in enumerate(vocab_list)}
            wins = tuple((seg, np.array([probs.get(w, 0.0) for w in vocab_list])) for seg, probs in windows[vid])
            out += spot_lexical(WindowProbs(wins, vocab), words, cfg.lexical_threshold)
        if vid in props:
            recs = props[vid]
            out += spot_fingerspelling([r.scored() for r in recs], [r.transcript for r in recs], words,
                                       cfg.fs_threshold, cfg.detector_min_confidence)
        out.sort(key=lambda s: (s.segment, s.word, s.kind))
        return [segment_record(vid, s.segment, word=s.word, score=s.score) for s in out]

    rows = _pmap(run, sorted(sentences), o["jobs"])
    return dumps_lines(r for rs in rows for r in rs)


def segment_key(video_id: str, seg) -> str:
    return f"{video_id}:{seg.start}:{seg.end}"


def cmd_retrieve_eval(o) -> str:
    try:
        cfg = MatchConfig(beta=o["beta"], num_test_proposals=o["max_proposals"])
    except ValidationError as exc:
        raise UsageError(str(exc)) from None
    if any(n < 1 for n in o["top_n"]) or not o["top_n"]:
        raise UsageError("--top-n needs positive integers")
    emb = parse_embeddings(o["embeddings"])
    if not emb["text"]:
        raise DataError(o["embeddings"], None, "no text embeddings")
    video_props: dict[str, list] = {}
    for r in parse_segments(o["proposals"], require_score=True):
        key = segment_key(r.video_id, r.segment)
        if key not in emb["video_segment"]:
            raise DataError(o["proposals"], r.line, f"no video_segment embedding with id {key!r}")
        video_props.setdefault(r.video_id, []).append((r.scored(), emb["video_segment"][key]))
    relevance = parse_relevance(o["relevance"])
    for vid, word in sorted(relevance):
        if vid not in video_props or word not in emb["text"]:
            raise DataError(o["relevance"], None, f"relevance pair ({vid!r}, {word!r}) names an unknown video or word")

    videos = sorted(video_props)

    def run(vid):
        return score_matrix({vid: video_props[vid]}, emb["text"], cfg.beta, cfg.num_test_proposals)[2][0]

    scores = np.vstack(_pmap(run, videos, o["jobs"]))
    words = sorted(emb["text"])
    report: dict[str, Any] = {"schema": "retrieval/1"}
    for mode in ("fws", "fvs"):
        r = search_eval(scores, videos, words, relevance, mode, o["top_n"])
        section = {"mAP": r.mean_ap, "mF1": r.mean_f1, "queries": sum(q.ap is not None for q in r.per_query)}
        for n in o["top_n"]:
            section[f"P@{n}"] = r.mean_precision_at[n]
            section[f"R@{n}"] = r.mean_recall_at[n]
        report[mode.upper()] = section
    report["scores"] = [{"video_id": v, "word": w, "score": scores[i, j]}
                        for i, v in enumerate(videos) for j, w in enumerate(words)]
    return dumps(report) + "\n"


def cmd_bleu(o) -> str:
    if o["max_n"] < 1:
        raise UsageError("--max-n must be >= 1")
    hyps, refs = read_lines(o["hyps"]), read_lines(o["refs"])
    if len(hyps) != len(refs):
        raise DataError(o["hyps"], None, f"{len(hyps)} hypotheses but {len(refs)} references")
    if not hyps:
        raise DataError(o["hyps"], None, "no sentences")
    for n, ref in enumerate(refs, 1):
        if not tokenize(ref):
            raise DataError(o["refs"], n, "empty reference")
    h, r = [tokenize(x) for x in hyps], [tokenize(x) for x in refs]
    report = {f"BLEU-{n}": bleu_n(h, r, n) for n in range(1, o["max_n"] + 1)}
    report["ROUGE-L"] = rouge_l(h, r)
    report["schema"] = "bleu/1"
    return dumps(report) + "\n"


def cmd_fusion_check(o) -> str:
    if o["instances"] < 1 or o["eps"] <= 0 or o["tol"] <= 0:
        raise UsageError("--instances, --eps and --tol must be positive")
    jobs = o["jobs"]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            worst = gradient_check_suite(o["seed"], o["instances"], o["eps"], o["tol"], map_fn=pool.map)
    else:
        worst = gradient_check_suite(o["seed"], o["instances"], o["eps"], o["tol"])
    ops = {name: {"max_rel_error": r.max_rel_error, "max_elementwise_error": r.max_elementwise_error,
                  "worst_index": list(r.worst_index), "passed": r.passed} for name, r in worst.items()}
    return dumps({"schema": "gradcheck/1", "ops": ops, "passed": all(r.passed for r in worst.values()),
                  "seed": o["seed"], "instances": o["instances"], "eps": o["eps"], "tol": o["tol"]}) + "\n"


HANDLERS = {
    "ctc-decode": cmd_ctc_decode,
    "lm-train": cmd_lm_train,
    "lm-ppl": cmd_lm_ppl,
    "link-tube": cmd_link_tube,
    "detect-eval": cmd_detect_eval,
    "spot": cmd_spot,
    "retrieve-eval": cmd_retrieve_eval,
    "bleu": cmd_bleu,
    "fusion-check": cmd_fusion_check,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("no command given")
        opts = resolve(ns.command, ns)
        text = HANDLERS[ns.command](opts)
    except UsageError as exc:
        print(f"signspot: error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"signspot: invalid input: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"signspot: invalid input: {exc}", file=sys.stderr)
        return 2
    if opts["output"]:
        try:
            Path(opts["output"]).write_text(text, encoding="utf-8")
        except OSError as exc:
            print(f"signspot: cannot write {opts['output']}: {exc}", file=sys.stderr)
            return 1
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
