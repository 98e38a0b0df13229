"""The offline pipeline: alerts -> episodes -> traces -> model -> AGs.

One function runs the whole chain and one function writes its artifacts
to a snapshot directory.  The streaming replayer and the ``run`` command
share both, which is what makes a replay's final snapshot byte-identical
to a single offline run over the same alert pool.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .alerts import Alert
from .automaton import Automaton, LearnParams, learn
from .episodes import EpisodeSequence, build_sequences, DEFAULT_BUCKET_SECONDS
from .forecast import Forecast, ForecastConfig, ReversedAutomaton, predict_next, reverse
from .graphs import AttackGraph, emit_dot, extract, graph_filename, index_entry
from .traces import Trace, encode, write_training_file

SNAPSHOT_FILES = ("model.json", "traces.txt", "forecasts.jsonl",
                  "ag_index.json", "summary.json")


@dataclass
class PipelineConfig:
    mode: str = "ids"
    bucket_seconds: float = DEFAULT_BUCKET_SECONDS
    learn_params: LearnParams = field(default_factory=LearnParams)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    jobs: int = 1


@dataclass
class PipelineResult:
    alerts: list[Alert]
    sequences: list[EpisodeSequence]
    traces: list[Trace]
    model: Automaton | None
    reversed_model: ReversedAutomaton | None
    forecasts: dict[str, Forecast]
    graphs: list[AttackGraph]
    summary: dict


def _forecast_batch(args) -> list[tuple[str, Forecast]]:
    rm, config, items = args
    return [(key, predict_next(rm, window, config)) for key, window in items]


def forecast_partials(rm: ReversedAutomaton, traces: Sequence[Trace],
                      config: ForecastConfig, jobs: int = 1) -> dict[str, Forecast]:
    """Predict the next action for every partial trace.

    Forecasting is pure per trace; with ``jobs > 1`` the traces are
    chunked over worker processes (results are order-independent).
    """
    items = [(t.key, t.rendered) for t in traces if t.is_partial]
    if not items:
        return {}
    if jobs <= 1 or len(items) < 2 * jobs:
        return dict(_forecast_batch((rm, config, items)))
    chunks = [items[i::jobs] for i in range(jobs)]
    out: dict[str, Forecast] = {}
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for batch in pool.map(_forecast_batch,
                              [(rm, config, chunk) for chunk in chunks]):
            out.update(batch)
    return out


def run_pipeline(alerts: Sequence[Alert], config: PipelineConfig) -> PipelineResult:
    sequences = build_sequences(alerts, config.mode, config.bucket_seconds)
    traces = encode(sequences, config.mode)
    if not traces:
        return PipelineResult(list(alerts), sequences, [], None, None, {}, [],
                              _summary(alerts, sequences, [], None, []))
    training = [list(reversed(t.rendered)) for t in traces]
    model = learn(training, config.learn_params, direction="suffix")
    rm = reverse(model)
    forecasts = forecast_partials(rm, traces, config.forecast, config.jobs)
    graphs = extract(sequences, model, forecasts, config.mode)
    return PipelineResult(list(alerts), sequences, traces, model, rm,
                          forecasts, graphs,
                          _summary(alerts, sequences, traces, model, graphs))


def _summary(alerts, sequences, traces, model, graphs) -> dict:
    return {
        "alerts": len(alerts),
        "sequences": len(sequences),
        "traces": len(traces),
        "partial_traces": sum(1 for t in traces if t.is_partial),
        "alphabet_size": len(model.alphabet) if model else 0,
        "model_states": len(model.states) if model else 0,
        "ag_count": len(graphs),
        "mean_vertices": (sum(len(g.vertices) for g in graphs) / len(graphs)
                          if graphs else 0.0),
        "mean_edges": (sum(len(g.edges) for g in graphs) / len(graphs)
                       if graphs else 0.0),
    }


def forecast_records(result: PipelineResult, window: int) -> list[dict]:
    """Machine-readable forecast lines, sorted by sequence key."""
    records = []
    for key in sorted(result.forecasts):
        forecast = result.forecasts[key]
        trace = next(t for t in result.traces if t.key == key)
        records.append({
            "key": key,
            "strategy": forecast.strategy,
            "window": trace.rendered[-window:],
            "top": [{"symbol": s, "prob": p} for s, p in forecast.top],
            "no_path": forecast.no_path,
        })
    return records


def write_snapshot(outdir: str | Path, result: PipelineResult,
                   config: PipelineConfig) -> None:
    """Write the snapshot artifact set; every file is deterministic."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if result.model is not None:
        (outdir / "model.json").write_text(result.model.dumps() + "\n",
                                           encoding="utf-8")
    with (outdir / "traces.txt").open("w", encoding="utf-8", newline="\n") as fh:
        write_training_file(result.traces, fh, reverse=True)
    with (outdir / "forecasts.jsonl").open("w", encoding="utf-8") as fh:
        for record in forecast_records(result, config.forecast.window):
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")
    index = []
    used_names = set()
    for ag in result.graphs:
        name = graph_filename(ag)
        if name in used_names:  # same symbol as objective and as prediction
            name = name[:-4] + "-pred.dot"
        used_names.add(name)
        (outdir / name).write_text(emit_dot(ag), encoding="utf-8")
        entry = index_entry(ag)
        entry["file"] = name
        index.append(entry)
    (outdir / "ag_index.json").write_text(
        json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (outdir / "summary.json").write_text(
        json.dumps(result.summary, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")


def snapshot_digest(outdir: str | Path) -> dict[str, bytes]:
    """Content of all snapshot artifacts, keyed by file name."""
    outdir = Path(outdir)
    out = {}
    for path in sorted(outdir.iterdir()):
        if path.name in SNAPSHOT_FILES or path.suffix == ".dot":
            out[path.name] = path.read_bytes()
    return out
