"""Attack graphs: per-objective aggregation of attack paths, with
forecast-driven placement of partial paths.

Every episode sequence is cut at its high-severity actions: each cut
yields one completed attack path attached to the attack graph of that
(objective symbol, victim).  The trailing piece, if any, is a partial
path; its placement follows the forecast for the sequence:

* high-severity prediction  -> the (predicted objective, victim) graph,
  created if absent, with an orange dashed prediction vertex whose
  incoming edge is labeled with the forecast probability;
* low/medium prediction     -> one shared graph per predicted action,
  rooted at the prediction and holding partial paths from all victims
  where that action was predicted;
* no reachable path         -> a catch-all ``unresolved`` graph, so no
  observed activity is ever dropped from the output.

Vertices carry the automaton state id obtained by replaying the trace
through the suffix model, so equal alerts in different contexts stay
distinguishable.  Severity picks the vertex shape (oval / box /
hexagon); sink-state vertices get dotted borders.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from datetime import datetime
from typing import Mapping, Sequence

from .alerts import Severity
from .automaton import Automaton
from .episodes import EpisodeSequence
from .forecast import Forecast
from .traces import END_SYMBOL, Trace, encode, symbol_severities

UNRESOLVED = "unresolved"

EDGE_PALETTE = [
    "maroon", "blue3", "darkgreen", "purple", "chocolate", "deeppink3",
    "steelblue4", "darkorange3", "olivedrab4", "cyan4", "firebrick",
    "darkslategray",
]

_SEVERITY_SHAPES = {
    Severity.LOW: "oval",
    Severity.MEDIUM: "box",
    Severity.HIGH: "hexagon",
}


@dataclass
class AGVertex:
    symbol: str
    sid: int | None
    severity: Severity
    is_sink: bool = False
    is_prediction: bool = False
    is_root: bool = False
    signatures: list[str] = field(default_factory=list)
    timestamps: list[tuple[str, datetime, datetime]] = field(default_factory=list)


@dataclass(frozen=True)
class AGEdge:
    source: tuple
    target: tuple
    attacker: str
    probability: float | None = None


@dataclass
class AttackGraph:
    objective: str
    kind: str  # "objective" | "prediction" | "unresolved"
    victims: list[str]
    vertices: dict[tuple, AGVertex]
    edges: list[AGEdge]
    attackers: list[str]
    root_key: tuple
    num_paths: int

    @property
    def has_predictions(self) -> bool:
        return any(v.is_prediction for v in self.vertices.values())


def replay_state_ids(model: Automaton, symbols: Sequence[str]) -> list[int | None]:
    """Automaton context per chronological symbol.

    The suffix model reads the trace reversed, so the walk starts at the
    last symbol; each chronological position gets the state its symbol
    leads into.  Unknown steps (trace not in training data) yield None.
    """
    state = model.root
    reversed_ids: list[int | None] = []
    alive = True
    for sym in reversed(list(symbols)):
        if alive:
            t = model.out.get(state, {}).get(sym)
            if t is None:
                alive = False
                reversed_ids.append(None)
            else:
                state = t.target
                reversed_ids.append(state)
        else:
            reversed_ids.append(None)
    return list(reversed(reversed_ids))


def classify_prediction(forecast: Forecast | None,
                        severities: Mapping[str, Severity]) -> tuple[str, str | None, float]:
    """Placement rule for a partial path given its forecast.

    Returns (kind, predicted symbol, probability) with kind one of
    "objective", "prediction", "unresolved", or "skip" when no forecast
    was computed for the sequence at all.  Only the top-1 prediction is
    visualized; the full ranking lives in the forecast output.
    """
    if forecast is None:
        return ("skip", None, 0.0)
    if forecast.no_path or not forecast.top:
        return (UNRESOLVED, None, 0.0)
    symbol, prob = forecast.top[0]
    if symbol == END_SYMBOL or symbol not in severities:
        return (UNRESOLVED, None, 0.0)
    if severities[symbol] == Severity.HIGH:
        return ("objective", symbol, prob)
    return ("prediction", symbol, prob)


class _Builder:
    def __init__(self, objective: str, kind: str, root_vertex: AGVertex,
                 root_key: tuple):
        self.objective = objective
        self.kind = kind
        self.victims: list[str] = []
        self.vertices: dict[tuple, AGVertex] = {root_key: root_vertex}
        self.edge_set: dict[AGEdge, None] = {}
        self.attackers: list[str] = []
        self.root_key = root_key
        self.num_paths = 0

    def note_victim(self, victim: str) -> None:
        if victim not in self.victims:
            self.victims.append(victim)

    def note_attacker(self, attacker: str) -> None:
        if attacker not in self.attackers:
            self.attackers.append(attacker)

    def vertex(self, key: tuple, make: AGVertex) -> AGVertex:
        existing = self.vertices.get(key)
        if existing is None:
            self.vertices[key] = make
            return make
        return existing

    def edge(self, edge: AGEdge) -> None:
        self.edge_set[edge] = None

    def freeze(self) -> AttackGraph:
        for vertex in self.vertices.values():
            vertex.signatures = sorted(set(vertex.signatures))
            vertex.timestamps.sort()
        return AttackGraph(
            objective=self.objective,
            kind=self.kind,
            victims=sorted(self.victims),
            vertices=self.vertices,
            edges=list(self.edge_set),
            attackers=self.attackers,
            root_key=self.root_key,
            num_paths=self.num_paths,
        )


def _vertex_key(symbol: str, sid: int | None, prediction: bool,
                root: bool) -> tuple:
    return (symbol, sid, prediction, root)


def _observed_vertex(builder: _Builder, trace: Trace, seq: EpisodeSequence,
                     position: int, sid: int | None, model: Automaton,
                     as_root: bool) -> tuple:
    sym = trace.symbols[position]
    episode = seq.episodes[position]
    sid_key = None if as_root else sid
    key = _vertex_key(sym.rendered, sid_key, False, as_root)
    vertex = builder.vertex(key, AGVertex(
        symbol=sym.rendered, sid=sid_key, severity=sym.severity,
        is_sink=(sid is not None and model.states[sid].is_sink),
        is_root=as_root,
    ))
    vertex.signatures.extend(episode.signatures)
    attacker = seq.attacker
    for i, (who, first, last) in enumerate(vertex.timestamps):
        if who == attacker:
            vertex.timestamps[i] = (who, min(first, episode.start),
                                    max(last, episode.end))
            break
    else:
        vertex.timestamps.append((attacker, episode.start, episode.end))
    return key


def _add_chain(builder: _Builder, seq: EpisodeSequence, trace: Trace,
               sids: Sequence[int | None], positions: Sequence[int],
               model: Automaton, last_is_root: bool) -> tuple | None:
    """Insert the episode chain for ``positions``; returns the last key."""
    builder.note_victim(seq.victim)
    builder.note_attacker(seq.attacker)
    builder.num_paths += 1
    previous = None
    for n, position in enumerate(positions):
        as_root = last_is_root and n == len(positions) - 1
        key = _observed_vertex(builder, trace, seq, position, sids[position],
                               model, as_root)
        if previous is not None and previous != key:
            builder.edge(AGEdge(previous, key, seq.attacker))
        previous = key
    return previous


def extract(
    sequences: Sequence[EpisodeSequence],
    model: Automaton,
    forecasts: Mapping[str, Forecast],
    mode: str,
) -> list[AttackGraph]:
    """Build one attack graph per achieved or predicted objective.

    ``forecasts`` maps sequence keys (``key_str``) to the forecast of
    their partial tail; sequences without high-severity episodes and
    without a usable forecast land in the ``unresolved`` graph.
    """
    traces = encode(sequences, mode)
    severities = symbol_severities(traces)
    by_key = {t.key: t for t in traces}
    builders: dict[tuple, _Builder] = {}

    def objective_builder(symbol: str, victim: str) -> _Builder:
        bkey = ("objective", symbol, victim)
        if bkey not in builders:
            root_key = _vertex_key(symbol, None, False, True)
            builders[bkey] = _Builder(symbol, "objective", AGVertex(
                symbol=symbol, sid=None, severity=severities[symbol],
                is_root=True), root_key)
        return builders[bkey]

    def prediction_builder(symbol: str) -> _Builder:
        bkey = ("prediction", symbol)
        if bkey not in builders:
            root_key = _vertex_key(symbol, None, True, True)
            builders[bkey] = _Builder(symbol, "prediction", AGVertex(
                symbol=symbol, sid=None, severity=severities[symbol],
                is_prediction=True, is_root=True), root_key)
        return builders[bkey]

    def unresolved_builder() -> _Builder:
        bkey = ("unresolved",)
        if bkey not in builders:
            root_key = _vertex_key(UNRESOLVED, None, False, True)
            builders[bkey] = _Builder(UNRESOLVED, "unresolved", AGVertex(
                symbol=UNRESOLVED, sid=None, severity=Severity.LOW,
                is_root=True), root_key)
        return builders[bkey]

    for seq in sorted(sequences, key=lambda s: s.key_str):
        trace = by_key.get(seq.key_str if isinstance(seq.key, str) else
                           f"{seq.key[0]}->{seq.key[1]}")
        if trace is None:
            continue
        sids = replay_state_ids(model, trace.rendered)
        # Cut the sequence at each high-severity action.
        segment: list[int] = []
        for position, sym in enumerate(trace.symbols):
            segment.append(position)
            if sym.severity == Severity.HIGH:
                builder = objective_builder(sym.rendered, seq.victim)
                _add_chain(builder, seq, trace, sids, segment, model,
                           last_is_root=True)
                segment = []
        if not segment:
            continue
        # Trailing partial path: place it by its forecast.
        kind, predicted, prob = classify_prediction(
            forecasts.get(seq.key_str), severities)
        if kind == "skip":
            continue
        if kind == "objective":
            builder = objective_builder(predicted, seq.victim)
            last = _add_chain(builder, seq, trace, sids, segment, model,
                              last_is_root=False)
            pred_key = _vertex_key(predicted, None, True, False)
            builder.vertex(pred_key, AGVertex(
                symbol=predicted, sid=None, severity=severities[predicted],
                is_prediction=True))
            builder.edge(AGEdge(last, pred_key, seq.attacker, probability=prob))
        elif kind == "prediction":
            builder = prediction_builder(predicted)
            last = _add_chain(builder, seq, trace, sids, segment, model,
                              last_is_root=False)
            builder.edge(AGEdge(last, builder.root_key, seq.attacker,
                                probability=prob))
        else:
            builder = unresolved_builder()
            last = _add_chain(builder, seq, trace, sids, segment, model,
                              last_is_root=False)
            builder.edge(AGEdge(last, builder.root_key, seq.attacker))

    order = {"objective": 0, "prediction": 1, "unresolved": 2}
    return [builders[k].freeze() for k in
            sorted(builders, key=lambda k: (order[k[0]], k[1:]))]


# -- rendering -----------------------------------------------------------


def sanitize_symbol(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_]", "_", text)


def _sanitize_victim(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", text)


def graph_filename(ag: AttackGraph) -> str:
    if ag.kind == "unresolved":
        victim_part = "all"
    else:
        joined = "+".join(_sanitize_victim(v) for v in ag.victims)
        if len(joined) > 60:
            digest = hashlib.sha256("+".join(ag.victims).encode()).hexdigest()[:8]
            victim_part = f"shared-{digest}"
        else:
            victim_part = joined or "none"
    return f"AG-{sanitize_symbol(ag.objective)}-{victim_part}.dot"


def _sort_key(item: tuple[tuple, AGVertex]):
    key, vertex = item
    return (vertex.sid if vertex.sid is not None else -1, vertex.symbol,
            vertex.is_prediction, vertex.is_root)


def emit_dot(ag: AttackGraph) -> str:
    """Deterministic Graphviz text for one attack graph."""
    names = {}
    lines = [f'digraph "{sanitize_symbol(ag.objective)}" {{',
             "  rankdir=BT;",
             f'  label="{ag.objective} | victims: {", ".join(ag.victims)}";',
             '  labelloc="t";']
    for i, (key, vertex) in enumerate(sorted(ag.vertices.items(), key=_sort_key)):
        names[key] = f"v{i}"
        label = vertex.symbol
        if vertex.sid is not None:
            label += f"\\nID: {vertex.sid}"
        for attacker, first, last in vertex.timestamps:
            label += (f"\\n{attacker}: {first.strftime('%m/%d %H:%M')}"
                      f" - {last.strftime('%m/%d %H:%M')}")
        attrs = [f'label="{label}"',
                 f"shape={_SEVERITY_SHAPES[vertex.severity]}"]
        if vertex.is_prediction:
            attrs.append('style="dashed", color=orange')
        elif vertex.is_sink:
            attrs.append('style="dotted"')
        if vertex.is_root:
            attrs.append("peripheries=2")
        if vertex.signatures:
            tooltip = "; ".join(vertex.signatures).replace('"', "'")
            attrs.append(f'tooltip="{tooltip}"')
        lines.append(f"  v{i} [{', '.join(attrs)}];")
    colors = {attacker: EDGE_PALETTE[i % len(EDGE_PALETTE)]
              for i, attacker in enumerate(ag.attackers)}
    rendered_edges = []
    for edge in ag.edges:
        attrs = [f"color={colors.get(edge.attacker, 'gray40')}"]
        if edge.probability is not None:
            attrs.append(f'label="{edge.probability * 100:.1f}%"')
        rendered_edges.append(
            f"  {names[edge.source]} -> {names[edge.target]} "
            f"[{', '.join(attrs)}];")
    lines.extend(sorted(rendered_edges))
    lines.append("}")
    return "\n".join(lines) + "\n"


def index_entry(ag: AttackGraph) -> dict:
    return {
        "file": graph_filename(ag),
        "objective": ag.objective,
        "victims": ag.victims,
        "num_paths": ag.num_paths,
        "has_predictions": ag.has_predictions,
    }
