"""Command-line interface: scenario runs, benchmark output, offline store
inspection, and argument validation."""

import json

import pytest

from streamkg.cli import _parse_listen, _resolve_scenario, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


class TestHelpers:
    def test_resolve_shipped_scenario_by_name(self):
        path = _resolve_scenario("hit_and_run_1")
        assert path.name == "hit_and_run_1.scn" and path.exists()

    def test_resolve_existing_path(self, suite_dir):
        p = suite_dir / "commotion_1.scn"
        assert _resolve_scenario(str(p)) == p

    def test_resolve_unknown_exits(self):
        with pytest.raises(SystemExit, match="not found"):
            _resolve_scenario("no_such_scenario")

    def test_parse_listen(self):
        assert _parse_listen("127.0.0.1:8000") == ("127.0.0.1", 8000)
        assert _parse_listen("[::1]:9000") == ("[::1]", 9000)
        for bad in ("8000", "host:", "host:port"):
            with pytest.raises(SystemExit, match="listen"):
                _parse_listen(bad)


class TestRunCommand:
    def test_run_prints_metrics_json(self, capsys, tmp_path):
        code, out = run_cli(
            capsys, "run", "--scenario", "hit_and_run_1",
            "--store", str(tmp_path / "store"))
        assert code == 0
        metrics = json.loads(out)
        assert metrics["mode"] == "streamingrag"
        assert metrics["finished"] is True
        assert metrics["alerts"] == 1

    def test_run_baseline_mode(self, capsys, tmp_path):
        code, out = run_cli(
            capsys, "run", "--scenario", "hit_and_run_1",
            "--mode", "baseline", "--store", str(tmp_path / "store"))
        assert code == 0
        metrics = json.loads(out)
        assert metrics["mode"] == "baseline"
        assert metrics["alerts"] == 0

    def test_control_log_to_file(self, capsys, tmp_path):
        log_path = tmp_path / "control.jsonl"
        code, _ = run_cli(
            capsys, "run", "--scenario", "hit_and_run_1",
            "--store", str(tmp_path / "store"),
            "--control-log", str(log_path))
        assert code == 0
        lines = log_path.read_text().splitlines()
        assert json.loads(lines[0])["event"] == "plan"
        assert json.loads(lines[-1])["event"] == "end"

    def test_control_log_to_stdout(self, capsys, tmp_path):
        code, out = run_cli(
            capsys, "run", "--scenario", "hit_and_run_1",
            "--store", str(tmp_path / "store"), "--control-log", "-")
        assert code == 0
        first = out.splitlines()[0]
        assert json.loads(first)["event"] == "plan"

    def test_missing_scenario_fails(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["run", "--scenario", str(tmp_path / "ghost.scn")])

    def test_bad_mode_rejected(self):
        with pytest.raises(SystemExit):
            main(["run", "--scenario", "hit_and_run_1", "--mode", "warp"])


@pytest.fixture(scope="module")
def small_suite(suite_dir, tmp_path_factory):
    import shutil
    target = tmp_path_factory.mktemp("suite")
    shutil.copy(suite_dir / "hit_and_run_1.scn", target / "hit_and_run_1.scn")
    return target


class TestBenchCommand:

    def test_bench_prints_table_and_writes_json(self, capsys, tmp_path,
                                                small_suite):
        out_path = tmp_path / "report.json"
        code, out = run_cli(capsys, "bench", "--suite", str(small_suite),
                            "--out", str(out_path))
        assert code == 0
        assert "event type" in out and "total" in out
        report = json.loads(out_path.read_text())
        assert report["aggregate"]["events_total"] == 1
        assert report["aggregate"]["modes"]["streamingrag"]["detected"] == 1

    def test_bench_sweep_appends_json(self, capsys, small_suite):
        code, out = run_cli(capsys, "bench", "--suite", str(small_suite),
                            "--sweep", "2500,4300")
        assert code == 0
        sweep = json.loads(out[out.index("{"):])
        bases = [r["base_latency_ms"] for r in sweep["sweep"]]
        assert bases == [2500.0, 4300.0]


class TestReplayCommand:
    def test_replay_answers_from_store(self, capsys, tmp_path):
        store = tmp_path / "store"
        run_cli(capsys, "run", "--scenario", "hit_and_run_1",
                "--store", str(store))
        code, out = run_cli(capsys, "replay", "--store", str(store),
                            "--query", "recap focus=collided_with window=60s")
        assert code == 0
        body = json.loads(out)
        assert body["triples"] > 0
        assert body["answer"]["supporting"] >= 1
        assert "collided with" in body["answer"]["text"]

    def test_replay_stats_only(self, capsys, tmp_path):
        store = tmp_path / "store"
        run_cli(capsys, "run", "--scenario", "hit_and_run_1",
                "--store", str(store))
        code, out = run_cli(capsys, "replay", "--store", str(store))
        assert code == 0
        body = json.loads(out)
        assert "answer" not in body
        assert body["stats"]["snapshot_id"] >= 1
