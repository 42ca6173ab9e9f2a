from __future__ import annotations

import json

import pytest

from termdecode.cli import main


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    assert main(["synth", "--seed", "4", "--size", "12", "--out-dir", str(out)]) == 0
    return out


def test_synth_files(suite):
    assert {p.name for p in suite.iterdir()} >= {"tasks.jsonl", "lexicon.json", "dictionary.tsv"}
    assert len(read_jsonl(suite / "tasks.jsonl")) == 12


def test_compile_and_dot(tmp_path, capsys):
    src = tmp_path / "c.jsonl"
    src.write_text(json.dumps({"id": "pair", "constraints": [{"alts": [["a", "b"]]}, {"alts": [["x"], ["y"]]}]}) + "\n")
    out = tmp_path / "acc.jsonl"
    assert main(["compile", str(src), "--out", str(out), "--dot", str(tmp_path / "dot")]) == 0
    (dump,) = read_jsonl(out)
    assert dump["id"] == "pair" and len(dump["states"]) == 6
    dot = (tmp_path / "dot" / "pair.dot").read_text()
    assert dot.count("->") == 12
    assert main(["compile", str(src), "--out", str(out), "--dot", "-"]) == 0
    assert capsys.readouterr().out == dot


def test_compile_errors(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "ok", "constraints": []}\n{not json\n')
    assert main(["compile", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    span = tmp_path / "span.jsonl"
    span.write_text(json.dumps({"id": "r7", "source": ["a"], "constraints": [{"alts": [["x"]], "span": [0, 3]}]}) + "\n")
    assert main(["compile", str(span)]) == 3
    assert "r7" in capsys.readouterr().err


def test_decode_modes_and_stats(suite, tmp_path):
    out, stats = tmp_path / "out.jsonl", tmp_path / "stats.jsonl"
    args = ["decode", str(suite / "tasks.jsonl"), "--lexicon", str(suite / "lexicon.json"), "--beam", "3"]
    assert main(args + ["--mode", "v2", "--out", str(out), "--stats-out", str(stats)]) == 0
    records = read_jsonl(out)
    assert [r["id"] for r in records] == [t["id"] for t in read_jsonl(suite / "tasks.jsonl")]
    assert all(r["stats"]["satisfied"] for r in records)
    rows = read_jsonl(stats)
    assert set(rows[0]) == {"id", "expansions", "stacks_touched", "fallback_used", "satisfied", "wall_micros"}


def test_decode_jobs_are_deterministic(suite, tmp_path):
    args = ["decode", str(suite / "tasks.jsonl"), "--lexicon", str(suite / "lexicon.json"), "--mode", "v1", "--beam", "2"]
    assert main(args + ["--out", str(tmp_path / "a.jsonl")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.jsonl"), "--jobs", "2"]) == 0
    assert (tmp_path / "a.jsonl").read_text() == (tmp_path / "b.jsonl").read_text()


def test_config_file_precedence(suite, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "plain", "beam": 2}))
    args = ["decode", str(suite / "tasks.jsonl"), "--lexicon", str(suite / "lexicon.json"), "--config", str(cfg)]
    assert main(args + ["--out", str(tmp_path / "p.jsonl")]) == 0
    assert not any(r["stats"]["satisfied"] for r in read_jsonl(tmp_path / "p.jsonl"))
    assert main(args + ["--mode", "v1", "--out", str(tmp_path / "v.jsonl")]) == 0
    assert all(r["stats"]["satisfied"] for r in read_jsonl(tmp_path / "v.jsonl"))
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert main(args) == 3


def test_decode_record_errors(suite, tmp_path, capsys):
    tasks = tmp_path / "t.jsonl"
    good = read_jsonl(suite / "tasks.jsonl")[0]
    spanless = dict(good, id="nospan", constraints=[{"alts": c["alts"]} for c in good["constraints"]])
    tasks.write_text(json.dumps(good) + "\n" + json.dumps(spanless) + "\n")
    out = tmp_path / "o.jsonl"
    code = main(["decode", str(tasks), "--lexicon", str(suite / "lexicon.json"), "--mode", "v2", "--out", str(out)])
    assert code == 4
    records = read_jsonl(out)
    assert "tokens" in records[0]
    assert records[1] == {"id": "nospan", "error": "v2 requires spans"}


def test_decode_parse_error(suite, tmp_path):
    tasks = tmp_path / "t.jsonl"
    tasks.write_text("{oops\n")
    assert main(["decode", str(tasks), "--lexicon", str(suite / "lexicon.json")]) == 2


def test_replay_decode(tmp_path):
    assert main(["synth", "--kind", "starving", "--size", "3", "--out-dir", str(tmp_path)]) == 0
    args = ["decode", str(tmp_path / "tasks.jsonl"), "--replay", str(tmp_path / "traces"), "--mode", "v2", "--beam", "2"]
    assert main(args + ["--out", str(tmp_path / "o.jsonl")]) == 0
    assert all(r["stats"]["fallback_used"] for r in read_jsonl(tmp_path / "o.jsonl"))
    assert main(args + ["--no-fallback", "--out", str(tmp_path / "n.jsonl")]) == 4


def test_eval_and_bench(suite, tmp_path, capsys):
    out = tmp_path / "out.jsonl"
    tasks = str(suite / "tasks.jsonl")
    main(["decode", tasks, "--lexicon", str(suite / "lexicon.json"), "--mode", "v2", "--beam", "3", "--out", str(out)])
    report = tmp_path / "report.json"
    assert main(["eval", "--hyp", str(out), "--ref", tasks, "--tasks", tasks, "--report", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["satisfaction"] == 1.0 and 0 <= data["bleu"] <= 100
    capsys.readouterr()
    assert main(["bench", tasks, "--lexicon", str(suite / "lexicon.json"), "--cs", "1", "--beam", "2"]) == 0
    table = capsys.readouterr().out
    assert table.splitlines()[1].split()[:2] == ["plain", "1"]
