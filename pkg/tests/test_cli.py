"""CLI surface: subcommands, exit codes, dry-run, atomic outputs."""

import json

import pytest

from raggate.cli import main
from raggate.corpus import DocChunk
from raggate.embedding import HashEmbedder, embed_texts
from raggate.pipeline import load_traces
from raggate.prompts import (
    ANSWER_NO_RETRIEVAL,
    ANSWER_WITH_RETRIEVAL,
    PSEUDO_CONTEXT,
    render_prompt,
)

from conftest import write_jsonl
from oracles import brute_select

DIM = 16


# per-query parametric logprob: u values 0.0001, 0.002, 0.007, 0.9
U_MAP = {"q00": -0.0001, "q01": -0.002, "q02": -0.007, "q03": -0.9}


def build_world(tmp_path, n_docs=8):
    """Corpus + queries + mock script + config, all on disk."""
    chunks = [
        DocChunk(id=f"d{i:02d}", text=f"offline passage number {i}") for i in range(n_docs)
    ]
    write_jsonl(tmp_path / "docs.jsonl", [{"id": c.id, "text": c.text} for c in chunks])

    embedder = HashEmbedder(dim=DIM)
    doc_vecs = embed_texts([c.embedding_text for c in chunks], embedder)

    queries = []
    script = []
    for qid, logprob in U_MAP.items():
        question = f"question {qid}?"
        queries.append({"id": qid, "question": question, "answers": ["answer"], "gold_doc_ids": ["d00"]})
        confident = qid == "q00"  # only q00 bypasses at threshold 0.001
        script.append(
            {
                "prompt": render_prompt(ANSWER_NO_RETRIEVAL, question),
                "text": "answer" if confident else "unsure guess",
                "token_logprobs": [["t", logprob]],
            }
        )
        pseudo_text = f"pseudo passage about {qid}"
        script.append(
            {
                "prompt": render_prompt(PSEUDO_CONTEXT, question),
                "text": pseudo_text,
                "token_logprobs": [],
            }
        )
        q_vec = embed_texts([question], embedder)[0]
        p_vec = embed_texts([pseudo_text], embedder)[0]
        selected, _ = brute_select(
            [c.id for c in chunks], doc_vecs, q_vec, p_vec, 5, 3
        )
        by_id = {c.id: c for c in chunks}
        script.append(
            {
                "prompt": render_prompt(
                    ANSWER_WITH_RETRIEVAL, question, [by_id[d] for d in selected]
                ),
                "text": "answer",
                "token_logprobs": [],
            }
        )
    write_jsonl(tmp_path / "queries.jsonl", queries)
    write_jsonl(tmp_path / "script.jsonl", script)

    config = {
        "corpus": str(tmp_path / "docs.jsonl"),
        "index": str(tmp_path / "index.flat"),
        "embedder": {"type": "hash", "dim": DIM},
        "generator": {"type": "mock", "script": str(tmp_path / "script.jsonl")},
        "run": {"u_threshold": 0.001, "n_per_path": 5, "k_final": 3},
    }
    (tmp_path / "config.json").write_text(json.dumps(config), encoding="utf-8")
    return tmp_path


class TestIndexCommand:
    def test_two_doc_corpus(self, tmp_path, capsys):
        write_jsonl(
            tmp_path / "docs.jsonl",
            [{"id": "a", "text": "first doc"}, {"id": "b", "text": "second doc"}],
        )
        out_dir = tmp_path / "idx"
        out_dir.mkdir()
        code = main(["index", "--corpus", str(tmp_path / "docs.jsonl"), "--out", str(out_dir)])
        assert code == 0
        assert (out_dir / "index.flat").exists()
        assert "indexed 2 chunks" in capsys.readouterr().out

    def test_missing_corpus_exit_4(self, tmp_path, capsys):
        code = main(["index", "--corpus", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path)])
        assert code == 4
        assert "raggate: data:" in capsys.readouterr().err

    def test_dry_run_writes_nothing(self, tmp_path, capsys):
        write_jsonl(tmp_path / "docs.jsonl", [{"id": "a", "text": "doc"}])
        out = tmp_path / "index.flat"
        code = main(
            ["index", "--corpus", str(tmp_path / "docs.jsonl"), "--out", str(out), "--dry-run"]
        )
        assert code == 0
        assert not out.exists()
        assert "dry-run" in capsys.readouterr().out


class TestRunCommand:
    def test_deterministic_traces(self, tmp_path):
        world = build_world(tmp_path)
        assert main(["index", "--corpus", str(world / "docs.jsonl"), "--out", str(world / "index.flat"), "--config", str(world / "config.json")]) == 0
        args = [
            "run",
            "--queries", str(world / "queries.jsonl"),
            "--mode", "dtr",
            "--config", str(world / "config.json"),
        ]
        assert main(args + ["--out", str(world / "t1.jsonl")]) == 0
        assert main(args + ["--out", str(world / "t2.jsonl")]) == 0
        first = (world / "t1.jsonl").read_bytes()
        assert first == (world / "t2.jsonl").read_bytes()
        traces = load_traces(world / "t1.jsonl")
        assert sum(t.triggered for t in traces) == 3
        # and byte-identical from a separate OS process
        import subprocess
        import sys

        proc = subprocess.run(
            [sys.executable, "-m", "raggate.cli", *args, "--out", str(world / "t3.jsonl")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (world / "t3.jsonl").read_bytes() == first

    def test_mode_falls_back_to_config_key(self, tmp_path):
        world = build_world(tmp_path)
        main(["index", "--corpus", str(world / "docs.jsonl"), "--out", str(world / "index.flat"), "--config", str(world / "config.json")])
        config = json.loads((world / "config.json").read_text())
        config["mode"] = "no_retrieval"
        (world / "config.json").write_text(json.dumps(config))
        code = main(
            [
                "run",
                "--queries", str(world / "queries.jsonl"),
                "--config", str(world / "config.json"),
                "--out", str(world / "t.jsonl"),
            ]
        )
        assert code == 0
        traces = load_traces(world / "t.jsonl")
        assert all(t.mode == "no_retrieval" for t in traces)

    def test_no_mode_anywhere_exit_2(self, tmp_path, capsys):
        world = build_world(tmp_path)
        code = main(
            [
                "run",
                "--queries", str(world / "queries.jsonl"),
                "--config", str(world / "config.json"),
                "--out", str(world / "t.jsonl"),
            ]
        )
        assert code == 2
        assert "no mode given" in capsys.readouterr().err

    def test_unknown_mode_exit_2(self, tmp_path, capsys):
        world = build_world(tmp_path)
        code = main(
            [
                "run",
                "--queries", str(world / "queries.jsonl"),
                "--mode", "bogus",
                "--config", str(world / "config.json"),
                "--out", str(world / "t.jsonl"),
            ]
        )
        assert code == 2
        err = capsys.readouterr().err
        assert "raggate: usage:" in err and "valid modes" in err

    def test_config_missing_generator_exit_3(self, tmp_path, capsys):
        world = build_world(tmp_path)
        main(["index", "--corpus", str(world / "docs.jsonl"), "--out", str(world / "index.flat"), "--config", str(world / "config.json")])
        config = json.loads((world / "config.json").read_text())
        del config["generator"]
        (world / "bad.json").write_text(json.dumps(config))
        code = main(
            [
                "run",
                "--queries", str(world / "queries.jsonl"),
                "--mode", "dtr",
                "--config", str(world / "bad.json"),
                "--out", str(world / "t.jsonl"),
            ]
        )
        assert code == 3
        assert "raggate: config:" in capsys.readouterr().err
        assert not (world / "t.jsonl").exists()

    def test_scripted_miss_marks_trace_and_exit_5(self, tmp_path, capsys):
        world = build_world(tmp_path)
        main(["index", "--corpus", str(world / "docs.jsonl"), "--out", str(world / "index.flat"), "--config", str(world / "config.json")])
        # strip the with-retrieval entries so triggered queries miss the script
        kept = []
        for line in (world / "script.jsonl").read_text().splitlines():
            record = json.loads(line)
            if "based on the above context" not in record["prompt"]:
                kept.append(record)
        write_jsonl(world / "script.jsonl", kept)
        code = main(
            [
                "run",
                "--queries", str(world / "queries.jsonl"),
                "--mode", "dtr",
                "--config", str(world / "config.json"),
                "--out", str(world / "t.jsonl"),
            ]
        )
        assert code == 5
        # the batch still completed: full trace file with error markers
        traces = load_traces(world / "t.jsonl")
        assert len(traces) == 4
        errors = [t for t in traces if t.error]
        assert len(errors) == 3
        assert all(t.error.startswith("backend:") for t in errors)

    def test_dry_run_no_backend_calls(self, tmp_path, capsys):
        world = build_world(tmp_path)
        # generator pointed at a dead endpoint: dry-run must not touch it
        config = json.loads((world / "config.json").read_text())
        config["generator"] = {"type": "http", "base_url": "http://127.0.0.1:9", "model": "m"}
        (world / "config.json").write_text(json.dumps(config))
        code = main(
            [
                "run",
                "--queries", str(world / "queries.jsonl"),
                "--mode", "dtr",
                "--config", str(world / "config.json"),
                "--out", str(world / "t.jsonl"),
                "--dry-run",
            ]
        )
        assert code == 0
        assert not (world / "t.jsonl").exists()
        assert "dry-run" in capsys.readouterr().out


class TestEvalCommand:
    def test_eval_report(self, tmp_path, capsys):
        world = build_world(tmp_path)
        main(["index", "--corpus", str(world / "docs.jsonl"), "--out", str(world / "index.flat"), "--config", str(world / "config.json")])
        main(
            [
                "run",
                "--queries", str(world / "queries.jsonl"),
                "--mode", "dtr",
                "--config", str(world / "config.json"),
                "--out", str(world / "traces.jsonl"),
            ]
        )
        code = main(
            [
                "eval",
                "--traces", str(world / "traces.jsonl"),
                "--queries", str(world / "queries.jsonl"),
                "--out", str(world / "report.txt"),
                "--tsv", str(world / "records.tsv"),
            ]
        )
        assert code == 0
        report = (world / "report.txt").read_text()
        assert "avg_em: 100.00" in report
        assert "trigger_ratio: 75.00" in report
        assert "record q00" in report
        tsv = (world / "records.tsv").read_text()
        assert tsv.startswith("query_id\tem\tf1")
        assert len(tsv.strip().splitlines()) == 5


class TestSweepCommand:
    def test_rows_non_increasing_trigger(self, tmp_path, capsys):
        world = build_world(tmp_path)
        main(["index", "--corpus", str(world / "docs.jsonl"), "--out", str(world / "index.flat"), "--config", str(world / "config.json")])
        code = main(
            [
                "sweep",
                "--queries", str(world / "queries.jsonl"),
                "--thresholds", "0.001,0.005,0.01",
                "--config", str(world / "config.json"),
                "--out", str(world / "sweep.txt"),
            ]
        )
        assert code == 0
        lines = (world / "sweep.txt").read_text().strip().splitlines()
        assert lines[0].startswith("threshold")
        ratios = [float(line.split("\t")[3]) for line in lines[1:]]
        assert ratios == sorted(ratios, reverse=True)
        assert ratios == [pytest.approx(75.0), pytest.approx(50.0), pytest.approx(25.0)]

    def test_bad_threshold_exit_2(self, tmp_path, capsys):
        world = build_world(tmp_path)
        code = main(
            [
                "sweep",
                "--queries", str(world / "queries.jsonl"),
                "--thresholds", "0.001,banana",
                "--config", str(world / "config.json"),
                "--out", str(world / "sweep.txt"),
            ]
        )
        assert code == 2


class TestGoldRankCommand:
    def test_histogram_written(self, tmp_path, capsys):
        world = build_world(tmp_path)
        main(["index", "--corpus", str(world / "docs.jsonl"), "--out", str(world / "index.flat"), "--config", str(world / "config.json")])
        code = main(
            [
                "gold-rank",
                "--queries", str(world / "queries.jsonl"),
                "--index", str(world / "index.flat"),
                "--out", str(world / "ranks.txt"),
            ]
        )
        assert code == 0
        text = (world / "ranks.txt").read_text()
        assert text.startswith("1-3\t") or "1-3\t" in text
        assert "rank q00\t" in text


class TestArgparseBehaviour:
    def test_no_command_exit_2(self, capsys):
        assert main([]) == 2

    def test_embedder_mismatch_exit_3(self, tmp_path, capsys):
        world = build_world(tmp_path)
        main(["index", "--corpus", str(world / "docs.jsonl"), "--out", str(world / "index.flat"), "--config", str(world / "config.json")])
        config = json.loads((world / "config.json").read_text())
        config["embedder"]["dim"] = DIM * 2
        (world / "config.json").write_text(json.dumps(config))
        code = main(
            [
                "run",
                "--queries", str(world / "queries.jsonl"),
                "--mode", "dtr",
                "--config", str(world / "config.json"),
                "--out", str(world / "t.jsonl"),
            ]
        )
        assert code == 3
        assert "built with embedder" in capsys.readouterr().err
