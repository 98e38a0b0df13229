"""Command-line interface.

Subcommands mirror the pipeline stages: ``ingest`` normalizes raw IDS or
EDR input, ``run`` executes the offline pipeline into a snapshot
directory, ``replay`` re-runs it per time window, ``eval`` runs the
cross-validated benchmark and parameter sweeps, ``export-model`` /
``import-model`` move automata across tools, and ``synth`` generates a
seeded demo corpus.  Every command that writes outputs also writes a
``manifest.json`` recording the arguments, input digests, seed, and
per-stage timings.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
error.  The seed defaults to the ``AGF_SEED`` environment variable, then
to 0; an explicit ``--seed`` wins.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .alerts import (
    IngestError, StageMap, parse_edr, parse_ids, read_alerts, write_alerts,
)
from .automaton import (
    LearnParams, ModelValidationError, export_model, import_model, learn,
)
from .evaluation import ALL_METHODS, EvalConfig, kfold, sweep
from .figures import plot_replay, plot_report, plot_sweep
from .forecast import ForecastConfig
from .pipeline import PipelineConfig, run_pipeline, write_snapshot
from .streaming import (
    CorpusSpec, ReplayConfig, parse_duration, replay, synth_corpus,
)
from .traces import read_training_file


class UsageError(Exception):
    """Configuration or input problems the user must fix (exit 2)."""


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("AGF_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"AGF_SEED must be an integer, got {env!r}") from None
    return 0


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Manifest:
    def __init__(self, command: str, args: argparse.Namespace, seed: int):
        self.data = {
            "tool": "agf",
            "version": __version__,
            "command": command,
            "seed": seed,
            "config": {k: str(v) for k, v in sorted(vars(args).items())
                       if k != "func"},
            "inputs": {},
            "timings_s": {},
        }
        self._marks: dict[str, float] = {}

    def input_file(self, path: Path) -> None:
        self.data["inputs"][str(path)] = _digest(path)

    def start(self, stage: str) -> None:
        self._marks[stage] = time.perf_counter()

    def stop(self, stage: str) -> None:
        self.data["timings_s"][stage] = round(
            time.perf_counter() - self._marks[stage], 6)

    def write(self, outdir: Path) -> None:
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "manifest.json").write_text(
            json.dumps(self.data, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")


def _learn_params(args) -> LearnParams:
    return LearnParams(state_count=args.state_count,
                       symbol_count=args.symbol_count,
                       sink_count=args.sink_count,
                       merge_alpha=args.merge_alpha)


def _pipeline_config(args, seed: int) -> PipelineConfig:
    return PipelineConfig(
        mode=args.mode,
        bucket_seconds=args.bucket_seconds,
        learn_params=_learn_params(args),
        forecast=ForecastConfig(strategy=args.strategy, factor=args.factor,
                                window=args.window, seed=seed),
        jobs=args.jobs,
    )


def _load_alerts(path_str: str):
    path = _require_file(path_str, "alert file")
    with path.open(encoding="utf-8") as fh:
        alerts = read_alerts(fh)
    if not alerts:
        raise UsageError(f"no alerts in {path}")
    return path, alerts


def _infer_mode(args, alerts) -> str:
    if args.mode != "auto":
        return args.mode
    kinds = {a.source_kind for a in alerts}
    if len(kinds) != 1:
        raise UsageError("alert file mixes ids and edr records; pass --mode")
    return kinds.pop()


# -- commands --------------------------------------------------------------


def cmd_ingest(args) -> int:
    out = Path(args.output)
    if args.kind == "ids":
        if not args.map:
            raise UsageError("--map is required for --kind ids")
        stage_map = StageMap.load(str(_require_file(args.map, "stage map")))
        with _require_file(args.input, "input file").open(encoding="utf-8") as fh:
            alerts, report = parse_ids(fh, stage_map)
    else:
        with _require_file(args.input, "input file").open(encoding="utf-8") as fh:
            alerts, report = parse_edr(fh, anon_key=args.anon_key)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        write_alerts(alerts, fh)
    print(report.summary(), file=sys.stderr)
    manifest = Manifest("ingest", args, _resolve_seed(args.seed))
    manifest.input_file(Path(args.input))
    manifest.write(out.parent)
    return 0


def cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    spec = CorpusSpec(attackers=args.attackers, victims=args.victims,
                      duration=parse_duration(args.duration))
    alerts = synth_corpus(spec, seed=seed)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        write_alerts(alerts, fh)
    print(f"wrote {len(alerts)} alerts to {out}", file=sys.stderr)
    manifest = Manifest("synth", args, seed)
    manifest.write(out.parent)
    return 0


def cmd_run(args) -> int:
    seed = _resolve_seed(args.seed)
    path, alerts = _load_alerts(args.input)
    args.mode = _infer_mode(args, alerts)
    config = _pipeline_config(args, seed)
    outdir = Path(args.output)
    manifest = Manifest("run", args, seed)
    manifest.input_file(path)
    manifest.start("pipeline")
    result = run_pipeline(alerts, config)
    manifest.stop("pipeline")
    manifest.start("write")
    write_snapshot(outdir, result, config)
    if args.dump_episodes:
        from .episodes import dump_episodes
        with Path(args.dump_episodes).open("w", encoding="utf-8") as fh:
            dump_episodes(result.sequences, fh)
    manifest.stop("write")
    manifest.write(outdir)
    summary = result.summary
    print(f"{summary['traces']} traces, {summary['ag_count']} attack graphs "
          f"-> {outdir}", file=sys.stderr)
    return 0


def cmd_replay(args) -> int:
    seed = _resolve_seed(args.seed)
    path, alerts = _load_alerts(args.input)
    args.mode = _infer_mode(args, alerts)
    config = ReplayConfig(output_dir=args.output,
                          interval=parse_duration(args.interval),
                          history=args.history,
                          pipeline=_pipeline_config(args, seed))
    outdir = Path(args.output)
    manifest = Manifest("replay", args, seed)
    manifest.input_file(path)
    manifest.start("replay")
    summaries = replay(alerts, config)
    manifest.stop("replay")
    with (outdir / "replay_summary.json").open("w", encoding="utf-8") as fh:
        json.dump([s.to_json() for s in summaries], fh, indent=2, sort_keys=True)
        fh.write("\n")
    with (outdir / "replay_summary.csv").open("w", encoding="utf-8",
                                              newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["window", "boundary", "pool_alerts", "ag_count",
                         "mean_vertices", "mean_edges"])
        for s in summaries:
            writer.writerow([s.index, s.boundary.isoformat(), s.pool_alerts,
                             s.ag_count, s.mean_vertices, s.mean_edges])
    if summaries:
        plot_replay(summaries, outdir / "replay_evolution.png")
    manifest.write(outdir)
    print(f"{len(summaries)} snapshots -> {outdir}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    seed = _resolve_seed(args.seed)
    path, alerts = _load_alerts(args.input)
    args.mode = _infer_mode(args, alerts)
    methods = (ALL_METHODS if args.methods == "all"
               else tuple(m.strip() for m in args.methods.split(",") if m.strip()))
    try:
        config = EvalConfig(k=args.k, window=args.window, factor=args.factor,
                            methods=methods, seed=seed,
                            learn_params=_learn_params(args))
    except ValueError as e:
        raise UsageError(str(e)) from None
    pipeline_config = _pipeline_config(args, seed)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("eval", args, seed)
    manifest.input_file(path)
    manifest.start("pipeline")
    traces = run_pipeline(alerts, pipeline_config).traces
    manifest.stop("pipeline")
    if args.sweep:
        manifest.start("sweep")
        table = sweep(traces, args.sweep, config)
        manifest.stop("sweep")
        with (outdir / f"sweep_{args.sweep}.csv").open(
                "w", encoding="utf-8", newline="") as fh:
            table.write_csv(fh)
        plot_sweep(table, outdir / f"sweep_{args.sweep}.png")
        print(f"sweep over {args.sweep} -> {outdir}", file=sys.stderr)
    else:
        manifest.start("kfold")
        report = kfold(traces, config)
        manifest.stop("kfold")
        with (outdir / "report.csv").open("w", encoding="utf-8",
                                          newline="") as fh:
            report.write_csv(fh)
        with (outdir / "report.json").open("w", encoding="utf-8") as fh:
            report.write_json(fh)
        plot_report(report, outdir / "report.png")
        print(f"evaluated {report.evaluated_traces} traces over "
              f"{report.folds} folds -> {outdir}", file=sys.stderr)
    manifest.write(outdir)
    return 0


def cmd_export_model(args) -> int:
    path = _require_file(args.traces, "trace file")
    with path.open(encoding="utf-8") as fh:
        rows = read_training_file(fh)
    if not rows:
        raise UsageError(f"no traces in {path}")
    model = learn(rows, _learn_params(args), direction=args.direction)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(export_model(model) + "\n", encoding="utf-8")
    if args.dot:
        Path(args.dot).write_text(model.to_dot(), encoding="utf-8")
    manifest = Manifest("export-model", args, _resolve_seed(args.seed))
    manifest.input_file(path)
    manifest.write(out.parent)
    print(f"{len(model.states)} states, {len(model.transitions)} transitions "
          f"-> {out}", file=sys.stderr)
    return 0


def cmd_import_model(args) -> int:
    path = _require_file(args.model, "model file")
    try:
        model = import_model(path.read_text(encoding="utf-8"))
    except ModelValidationError as e:
        print(str(e), file=sys.stderr)
        return 1
    if args.dot:
        Path(args.dot).write_text(model.to_dot(), encoding="utf-8")
    print(f"valid {model.direction} model: {len(model.states)} states, "
          f"{len(model.transitions)} transitions", file=sys.stderr)
    return 0


# -- parser ----------------------------------------------------------------


def _add_seed(parser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="random seed (default: AGF_SEED or 0)")


def _add_learn_options(parser) -> None:
    group = parser.add_argument_group("learner")
    group.add_argument("--state-count", type=int, default=5)
    group.add_argument("--symbol-count", type=int, default=5)
    group.add_argument("--sink-count", type=int, default=5)
    group.add_argument("--merge-alpha", type=float, default=0.05)


def _add_pipeline_options(parser) -> None:
    parser.add_argument("--mode", choices=["auto", "ids", "edr"], default="auto",
                        help="alert kind (default: inferred from the file)")
    parser.add_argument("--bucket-seconds", type=float, default=60.0,
                        help="episode bucket width for ids mode")
    parser.add_argument("--strategy", choices=["fs", "as", "hc"], default="hc")
    parser.add_argument("--factor", type=float, default=55.0,
                        help="match boost for path weighting")
    parser.add_argument("--window", type=int, default=5,
                        help="most recent symbols used per forecast")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker processes for forecasting")
    _add_learn_options(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agf",
        description="Evolving alert-driven attack graphs with next-action "
                    "forecasting.")
    parser.add_argument("--version", action="version",
                        version=f"agf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize raw IDS/EDR input")
    p.add_argument("input")
    p.add_argument("--kind", choices=["ids", "edr"], required=True)
    p.add_argument("--map", help="stage map file (ids)")
    p.add_argument("--anon-key", default="agf", help="host anonymization key")
    p.add_argument("-o", "--output", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic alert corpus")
    p.add_argument("--attackers", type=int, default=6)
    p.add_argument("--victims", type=int, default=10)
    p.add_argument("--duration", default="10h")
    p.add_argument("-o", "--output", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="offline pipeline into a snapshot dir")
    p.add_argument("input", help="normalized alerts (jsonl)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--dump-episodes", metavar="PATH",
                   help="also write detected episodes as JSON-lines")
    _add_pipeline_options(p)
    _add_seed(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="windowed replay with snapshots")
    p.add_argument("input", help="normalized alerts (jsonl)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--interval", default="1h")
    p.add_argument("--history", default="all",
                   help="'all' or 'sliding:<duration>'")
    _add_pipeline_options(p)
    _add_seed(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("eval", help="k-fold benchmark and sweeps")
    p.add_argument("input", help="normalized alerts (jsonl)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--methods", default="all",
                   help=f"'all' or comma list of {','.join(ALL_METHODS)}")
    p.add_argument("--sweep", choices=["f", "k", "length"],
                   help="sweep a parameter instead of one report")
    _add_pipeline_options(p)
    _add_seed(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-model", help="learn a model from a trace file")
    p.add_argument("--traces", required=True, help="Abbadingo-style trace file")
    p.add_argument("--direction", choices=["suffix", "prefix"],
                   default="suffix")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--dot", help="also write a Graphviz rendering")
    _add_learn_options(p)
    _add_seed(p)
    p.set_defaults(func=cmd_export_model)

    p = sub.add_parser("import-model", help="validate an external model")
    p.add_argument("model")
    p.add_argument("--dot", help="write a Graphviz rendering")
    _add_seed(p)
    p.set_defaults(func=cmd_import_model)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, IngestError) as e:
        # Includes schema mismatches and stage-map gaps: the user must
        # fix flags, config, or input selection.
        print(f"agf: error: {e}", file=sys.stderr)
        return 2
    except (ModelValidationError, ValueError, OSError) as e:
        print(f"agf: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
