import json
from pathlib import Path

import pytest

from signspot.cli import main

DATA = Path(__file__).parent / "data"


def d(name):
    return str(DATA / name)


COMMANDS = {
    "ctc-decode": ["--input", d("pg.jsonl"), "--nbest", "3"],
    "lm-train": ["--corpus", d("corpus.txt"), "--order", "3"],
    "lm-ppl": ["--lm", d("lm.json"), "--corpus", d("corpus.txt")],
    "link-tube": ["--boxes", d("boxes.jsonl")],
    "detect-eval": ["--gt", d("detect_gt.jsonl"), "--pred", d("detect_pred.jsonl"), "--lengths",
                    d("detect_lengths.json")],
    "spot": ["--sentences", d("sentences.jsonl"), "--windows", d("windows.jsonl"), "--proposals",
             d("spot_proposals.jsonl")],
    "retrieve-eval": ["--embeddings", d("emb.jsonl"), "--proposals", d("ret_proposals.jsonl"), "--relevance",
                      d("relevance.jsonl")],
    "bleu": ["--hyps", d("hyps.txt"), "--refs", d("refs.txt")],
    "fusion-check": ["--instances", "3"],
}


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("command", sorted(COMMANDS))
def test_every_command_runs(command, capsys):
    code, out, err = run([command] + COMMANDS[command], capsys)
    assert code == 0, err
    for line in out.splitlines():
        json.loads(line)


def test_ctc_decode_output(capsys):
    code, out, _ = run(["ctc-decode", "--input", d("pg.jsonl")], capsys)
    recs = [json.loads(l) for l in out.splitlines()]
    assert code == 0 and len(recs) == 6
    assert recs[0]["schema"] == "hyp/1" and recs[0]["id"] == "u0"
    assert len(recs[0]["beam"]) == 1


def test_malformed_row_reports_row_index(capsys, tmp_path):
    target = tmp_path / "out.json"
    code, out, err = run(["ctc-decode", "--input", d("pg_bad.json"), "--output", str(target)], capsys)
    assert code == 2
    assert "row 2" in err and "1.5" in err
    assert out == "" and not target.exists()


def test_data_errors_carry_line_numbers(capsys, tmp_path):
    bad = tmp_path / "gt.jsonl"
    lines = (DATA / "detect_gt.jsonl").read_text().splitlines()
    lines[2] = lines[2].replace('"start": 80', '"start": -3')
    bad.write_text("\n".join(lines) + "\n")
    code, _, err = run(["detect-eval", "--gt", str(bad), "--pred", d("detect_pred.jsonl")], capsys)
    assert code == 2 and f"{bad}:3:" in err


def test_detect_eval_matches_golden(capsys):
    code, out, _ = run(["detect-eval"] + COMMANDS["detect-eval"], capsys)
    assert code == 0
    assert out.encode() == (DATA / "detect_report.golden.json").read_bytes()


def test_usage_errors_exit_1(capsys):
    assert run(["bleu", "--hyps", d("hyps.txt")], capsys)[0] == 1
    assert run(["bleu", "--hyps", d("hyps.txt"), "--refs", d("refs.txt"), "--max-n", "x"], capsys)[0] == 1
    assert run(["no-such-command"], capsys)[0] == 1
    assert run([], capsys)[0] == 1
    assert run(["ctc-decode", "--input", d("pg.jsonl"), "--beam-width", "0"], capsys)[0] == 1


def test_config_supplies_defaults_and_flags_override(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"hyps": d("hyps.txt"), "refs": d("refs.txt"), "max_n": 2}))
    code, out, _ = run(["bleu", "--config", str(cfg)], capsys)
    assert code == 0 and "BLEU-3" not in out and "BLEU-2" in out
    code, out, _ = run(["bleu", "--config", str(cfg), "--max-n", "3"], capsys)
    assert code == 0 and "BLEU-3" in out


def test_unknown_config_key_is_a_usage_error(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, err = run(["bleu", "--config", str(cfg), "--hyps", d("hyps.txt"), "--refs", d("refs.txt")], capsys)
    assert code == 1 and "bogus" in err


def test_output_file(capsys, tmp_path):
    target = tmp_path / "r.json"
    code, out, _ = run(["bleu", "--hyps", d("hyps.txt"), "--refs", d("refs.txt"), "--output", str(target)], capsys)
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["schema"] == "bleu/1"


def test_lm_train_then_ppl(capsys, tmp_path):
    model = tmp_path / "lm.json"
    assert run(["lm-train", "--corpus", d("corpus.txt"), "--order", "3", "--output", str(model)], capsys)[0] == 0
    code, out, _ = run(["lm-ppl", "--lm", str(model), "--corpus", d("corpus.txt")], capsys)
    assert code == 0 and json.loads(out)["perplexity"] > 1


def test_spot_output(capsys):
    _, out, _ = run(["spot"] + COMMANDS["spot"], capsys)
    pairs = {(r["video_id"], r["word"]) for r in map(json.loads, out.splitlines())}
    assert pairs == {("s1", "dog"), ("s1", "met"), ("s1", "smith"), ("s1", "boston"), ("s2", "cat"), ("s2", "sat")}


def test_retrieve_eval_rejects_unknown_segment(capsys, tmp_path):
    props = tmp_path / "p.jsonl"
    props.write_text((DATA / "ret_proposals.jsonl").read_text()
                     + '{"schema":"seg/1","video_id":"r1","start":90,"end":99,"word":null,"score":0.5,"transcript":null}\n')
    code, _, err = run(["retrieve-eval", "--embeddings", d("emb.jsonl"), "--proposals", str(props),
                        "--relevance", d("relevance.jsonl")], capsys)
    assert code == 2 and ":13:" in err
