import json
import subprocess
import sys

import pytest

from agentaccel.cli import main


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """fixtures -> build-plan -> precompute-cache, shared by the module."""
    root = tmp_path_factory.mktemp("cli")
    fx = root / "fx"
    assert run_cli("fixtures", "--out", str(fx)) == 0
    assert (
        run_cli(
            "build-plan",
            "--dataset", str(fx / "train.jsonl"),
            "--registry", str(fx / "registry.json"),
            "--examples", str(fx / "examples.jsonl"),
            "--vocab", str(fx / "vocab.json"),
            "--budget", "15",
            "--rank", "8",
            "--seed", "11",
            "--out", str(fx / "plan.json"),
        )
        == 0
    )
    assert (
        run_cli(
            "precompute-cache",
            "--plan", str(fx / "plan.json"),
            "--registry", str(fx / "registry.json"),
            "--vocab", str(fx / "vocab.json"),
            "--geometry", "desk",
            "--out", str(fx / "cache"),
        )
        == 0
    )
    return fx


def test_offline_commands_are_idempotent(workdir, tmp_path):
    plan_a = (workdir / "plan.json").read_bytes()
    out_b = tmp_path / "plan_b.json"
    assert (
        run_cli(
            "build-plan",
            "--dataset", str(workdir / "train.jsonl"),
            "--registry", str(workdir / "registry.json"),
            "--examples", str(workdir / "examples.jsonl"),
            "--vocab", str(workdir / "vocab.json"),
            "--budget", "15",
            "--rank", "8",
            "--seed", "11",
            "--out", str(out_b),
        )
        == 0
    )
    assert out_b.read_bytes() == plan_a


def test_fixture_regeneration_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("fixtures", "--out", str(a)) == 0
    assert run_cli("fixtures", "--out", str(b)) == 0
    for name in ("registry.json", "train.jsonl", "test.jsonl", "examples.jsonl", "vocab.json", "run.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_run_produces_one_record_per_query(workdir):
    assert run_cli("run", "--config", str(workdir / "run.json")) == 0
    lines = [json.loads(l) for l in (workdir / "trace.jsonl").read_text().splitlines() if l.strip()]
    header, records = lines[0], lines[1:]
    assert header["kind"] == "header"
    assert "provenance" in header
    test_count = sum(1 for l in (workdir / "test.jsonl").read_text().splitlines() if l.strip())
    assert len(records) == test_count


def test_selective_modes_agree_on_output_tokens(workdir, tmp_path):
    on = tmp_path / "on.jsonl"
    off = tmp_path / "off.jsonl"
    assert run_cli("run", "--config", str(workdir / "run.json"), "--selective", "on", "--trace", str(on)) == 0
    assert run_cli("run", "--config", str(workdir / "run.json"), "--selective", "off", "--trace", str(off)) == 0

    def outputs(path):
        out = {}
        for line in path.read_text().splitlines():
            doc = json.loads(line)
            if doc.get("kind") == "header":
                continue
            out[doc["query_id"]] = (
                doc["planner"]["output_tokens"],
                doc["arbiter"]["output_tokens"],
            )
        return out

    assert outputs(on) == outputs(off)


def test_simulate_and_report(workdir, tmp_path, capsys):
    trace = workdir / "trace.jsonl"
    if not trace.exists():
        assert run_cli("run", "--config", str(workdir / "run.json")) == 0
    report = tmp_path / "report.json"
    assert run_cli("simulate", "--trace", str(trace), "--device", "m4-pro", "--geometry", "7b-class", "--out", str(report)) == 0
    doc = json.loads(report.read_text())
    assert set(doc["cells"]) == {"baseline", "pw", "es", "pw_es"}
    assert doc["speedups"]["pw_es"] >= max(doc["speedups"]["pw"], doc["speedups"]["es"])
    csv_out = tmp_path / "report.csv"
    assert run_cli("report", "--report", str(report), "--format", "csv", "--out", str(csv_out)) == 0
    lines = csv_out.read_text().splitlines()
    assert lines[0] == "cell,stage,seconds,fraction"
    assert any(line.startswith("pw_es,speedup,") for line in lines)


def test_simulate_missing_trace_fails_cleanly(tmp_path, capsys):
    rc = run_cli("simulate", "--trace", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "r.json"))
    captured = capsys.readouterr()
    assert rc != 0
    err_lines = [l for l in captured.err.strip().splitlines() if l]
    assert len(err_lines) == 1
    assert err_lines[0].startswith("error: ")


def test_weave_emits_prompt_accounting(workdir, tmp_path):
    emit = tmp_path / "prompt.json"
    assert (
        run_cli(
            "weave",
            "--query", "schedule a video call with maria tomorrow at 5pm about the project sync",
            "--plan", str(workdir / "plan.json"),
            "--registry", str(workdir / "registry.json"),
            "--dataset", str(workdir / "train.jsonl"),
            "--examples", str(workdir / "examples.jsonl"),
            "--vocab", str(workdir / "vocab.json"),
            "--cache", str(workdir / "cache"),
            "--k", "1",
            "--emit", str(emit),
        )
        == 0
    )
    doc = json.loads(emit.read_text())
    total = sum(len(seg["tokens"]) for seg in doc["segments"])
    assert doc["total_tokens"] == total
    assert doc["cacheable_tokens"] + doc["uncacheable_tokens"] == total
    assert doc["cacheable_tokens"] > 0  # static prefix must hit the cache


def test_weave_baseline_flag(workdir, tmp_path):
    emit = tmp_path / "base.json"
    assert (
        run_cli(
            "weave",
            "--query", "email maria about the budget review",
            "--plan", str(workdir / "plan.json"),
            "--registry", str(workdir / "registry.json"),
            "--dataset", str(workdir / "train.jsonl"),
            "--examples", str(workdir / "examples.jsonl"),
            "--vocab", str(workdir / "vocab.json"),
            "--baseline",
            "--emit", str(emit),
        )
        == 0
    )
    doc = json.loads(emit.read_text())
    kinds = [seg["kind"] for seg in doc["segments"]]
    assert kinds[0] == "static_system"
    assert doc["uncacheable_tokens"] < doc["total_tokens"]


def test_decode_on_woven_prompt_markov(workdir, tmp_path):
    emit = tmp_path / "prompt.json"
    assert (
        run_cli(
            "weave",
            "--query", "email maria about the budget review",
            "--plan", str(workdir / "plan.json"),
            "--registry", str(workdir / "registry.json"),
            "--dataset", str(workdir / "train.jsonl"),
            "--examples", str(workdir / "examples.jsonl"),
            "--vocab", str(workdir / "vocab.json"),
            "--k", "1",
            "--emit", str(emit),
        )
        == 0
    )
    stats = tmp_path / "stats.json"
    assert (
        run_cli(
            "decode",
            "--prompt", str(emit),
            "--model", "markov",
            "--registry", str(workdir / "registry.json"),
            "--dataset", str(workdir / "train.jsonl"),
            "--examples", str(workdir / "examples.jsonl"),
            "--vocab", str(workdir / "vocab.json"),
            "--n", "3",
            "--draft-len", "4",
            "--selective", "on",
            "--max-tokens", "80",
            "--stats", str(stats),
        )
        == 0
    )
    doc = json.loads(stats.read_text())
    assert doc["matches_autoregressive"] is True
    assert doc["stats"]["rounds"] >= 1


def test_decode_scripted_with_script_file(workdir, tmp_path):
    from agentaccel import lm

    emit = tmp_path / "prompt.json"
    assert (
        run_cli(
            "weave",
            "--query", "open my reading list note",
            "--plan", str(workdir / "plan.json"),
            "--registry", str(workdir / "registry.json"),
            "--dataset", str(workdir / "train.jsonl"),
            "--examples", str(workdir / "examples.jsonl"),
            "--vocab", str(workdir / "vocab.json"),
            "--k", "0",
            "--emit", str(emit),
        )
        == 0
    )
    doc = json.loads(emit.read_text())
    prompt_tokens = [t for seg in doc["segments"] for t in seg["tokens"]]
    script_path = tmp_path / "scripts.json"
    lm.save_scripts(script_path, {tuple(prompt_tokens): [101, 102, 103]})
    stats = tmp_path / "stats.json"
    assert (
        run_cli(
            "decode",
            "--prompt", str(emit),
            "--model", "scripted",
            "--script", str(script_path),
            "--stats", str(stats),
        )
        == 0
    )
    result = json.loads(stats.read_text())
    assert result["output_tokens"] == [101, 102, 103]
    assert result["matches_autoregressive"] is True

    # A prompt absent from the script file is a clean error.
    lm.save_scripts(script_path, {(1, 2, 3): [5]})
    rc = run_cli("decode", "--prompt", str(emit), "--model", "scripted", "--script", str(script_path), "--stats", str(stats))
    assert rc != 0


def test_cache_dir_env_variable(workdir, tmp_path, monkeypatch):
    cache = tmp_path / "envcache"
    monkeypatch.setenv("AGENTACCEL_CACHE_DIR", str(cache))
    assert (
        run_cli(
            "precompute-cache",
            "--plan", str(workdir / "plan.json"),
            "--registry", str(workdir / "registry.json"),
            "--vocab", str(workdir / "vocab.json"),
            "--geometry", "desk",
        )
        == 0
    )
    assert (cache / "manifest.json").exists()


def test_run_jobs_parallel_matches_serial(workdir, tmp_path):
    serial = tmp_path / "serial.jsonl"
    parallel = tmp_path / "parallel.jsonl"
    assert run_cli("run", "--config", str(workdir / "run.json"), "--jobs", "1", "--trace", str(serial)) == 0
    assert run_cli("run", "--config", str(workdir / "run.json"), "--jobs", "4", "--trace", str(parallel)) == 0

    def records(path):
        return [l for l in path.read_text().splitlines() if '"kind"' not in l]

    assert records(serial) == records(parallel)


def test_run_append_keeps_prior_records(workdir, tmp_path):
    trace = tmp_path / "t.jsonl"
    assert run_cli("run", "--config", str(workdir / "run.json"), "--trace", str(trace)) == 0
    first = len(trace.read_text().splitlines())
    assert run_cli("run", "--config", str(workdir / "run.json"), "--trace", str(trace), "--append") == 0
    assert len(trace.read_text().splitlines()) == 2 * first


def test_simulate_accepts_measured_and_file_tax(workdir, tmp_path):
    trace = workdir / "trace.jsonl"
    if not trace.exists():
        assert run_cli("run", "--config", str(workdir / "run.json")) == 0
    custom = tmp_path / "tax.json"
    custom.write_text("[[1, 1.0], [2, 1.86], [5, 2.0]]")
    for tax in ("measured", str(custom)):
        out = tmp_path / f"rep_{'m' if tax == 'measured' else 'f'}.json"
        assert run_cli("simulate", "--trace", str(trace), "--tax", tax, "--out", str(out)) == 0
    rc = run_cli("simulate", "--trace", str(trace), "--tax", "bogus", "--out", str(tmp_path / "x.json"))
    assert rc != 0


def test_console_entrypoint_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "agentaccel.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "build-plan" in proc.stdout
