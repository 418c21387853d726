"""Command-line entry points: run a scenario, benchmark the suite, or
inspect a durable store."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .bench import run_suite, sweep_heavy_latency
from .engine import MODE_STREAMING, MODES, EngineConfig, StreamEngine, builtin_config, data_dir
from .ingest import ScenarioError, load_scenario

log = logging.getLogger(__name__)


def _resolve_scenario(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    shipped = Path(data_dir()) / "suite" / f"{name}.scn"
    if shipped.exists():
        return shipped
    raise SystemExit(f"scenario not found: {name!r} (no file and no shipped scenario by that name)")


def _parse_listen(listen: str) -> tuple[str, int]:
    host, _, port = listen.rpartition(":")
    if not host or not port.isdigit():
        raise SystemExit(f"bad listen address {listen!r}, expected host:port")
    return host, int(port)


def _cmd_run(args: argparse.Namespace) -> int:
    if args.config:
        config = EngineConfig.from_file(args.config)
    else:
        config = builtin_config(args.mode)
    try:
        scenario = load_scenario(_resolve_scenario(args.scenario))
    except ScenarioError as exc:
        raise SystemExit(str(exc)) from exc

    engine = StreamEngine(config, scenario, store_dir=args.store)
    from .api import EngineRunner, create_app

    runner = EngineRunner(engine, realtime_factor=args.realtime)
    if args.serve:
        import uvicorn

        host, port = _parse_listen(args.listen)
        app = create_app(runner, ui_dir=args.ui)
        runner.start()
        uvicorn.run(app, host=host, port=port, log_level="warning")
        runner.stop()
        return 0

    runner.run_to_completion()
    if args.control_log:
        lines = "\n".join(engine.control_log_lines()) + "\n"
        if args.control_log == "-":
            sys.stdout.write(lines)
        else:
            Path(args.control_log).write_text(lines)
    print(json.dumps(engine.metrics(), indent=2, sort_keys=True))
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    suite = args.suite or str(Path(data_dir()) / "suite")
    report = run_suite(suite)
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
        log.info("wrote %s", args.out)
    print(report.to_table())
    if args.sweep:
        latencies = [float(v) for v in args.sweep.split(",")]
        sweep = sweep_heavy_latency(suite, latencies)
        print()
        print(json.dumps(sweep, indent=2, sort_keys=True))
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    from .knowledge import init_kb
    from .lambda_store import LambdaStore
    from .query import parse, answer_interactive

    store = LambdaStore(args.store)
    try:
        triples = store.serve()
        out: dict = {"stats": store.stats(), "triples": len(triples)}
        if args.query:
            text = args.query
            if not text.startswith(("interactive", "standing", "alert")):
                text = f"interactive {text}"
            config = builtin_config(MODE_STREAMING)
            kb = init_kb(config.kb_path)
            query = parse(text, kb, query_id="replay")
            now = max((t.observed_at_ms for t in triples), default=0.0)
            answer = answer_interactive(query, triples, now)
            out["answer"] = {
                "text": answer.text,
                "window_s": [round(v / 1000.0, 3) for v in answer.window],
                "supporting": len(answer.supporting),
            }
        print(json.dumps(out, indent=2, sort_keys=True))
        return 0
    finally:
        store.close()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="streamkg",
        description="Real-time frame-stream analysis with a live temporal knowledge graph.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario")
    run_p.add_argument("--scenario", required=True, help="path to a .scn file or a shipped scenario name")
    run_p.add_argument("--mode", choices=sorted(MODES), default=MODE_STREAMING)
    run_p.add_argument("--config", help="engine config JSON (overrides --mode)")
    run_p.add_argument("--store", default=os.environ.get("STREAMKG_STORE"), help="durable store directory")
    run_p.add_argument("--serve", action="store_true", help="expose the HTTP API while running")
    run_p.add_argument(
        "--listen",
        default=os.environ.get("STREAMKG_LISTEN", "127.0.0.1:8000"),
        help="host:port for --serve (env STREAMKG_LISTEN)",
    )
    run_p.add_argument("--ui", default=os.environ.get("STREAMKG_UI"), help="static UI directory to mount at /")
    run_p.add_argument(
        "--realtime", type=float, default=0.0,
        help="wall-clock pacing factor for --serve; 0 runs the virtual clock flat out",
    )
    run_p.add_argument("--control-log", help="write the control-event log here ('-' for stdout)")
    run_p.set_defaults(func=_cmd_run)

    bench_p = sub.add_parser("bench", help="run the scenario suite in both modes")
    bench_p.add_argument("--suite", help="directory of .scn files (default: shipped suite)")
    bench_p.add_argument("--out", help="write the JSON report here")
    bench_p.add_argument("--sweep", help="comma-separated heavyweight base latencies to sweep")
    bench_p.set_defaults(func=_cmd_bench)

    replay_p = sub.add_parser("replay", help="inspect a durable store offline")
    replay_p.add_argument("--store", required=True, help="store directory")
    replay_p.add_argument("--query", help="interactive query to answer from the stored triples")
    replay_p.set_defaults(func=_cmd_replay)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
