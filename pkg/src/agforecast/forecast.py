"""Next-action forecasting on the reversed suffix model.

A suffix-trained automaton predicts the past from the future, so for
forward prediction its transitions are reversed.  The reversed view is
non-deterministic: a state can have several outgoing edges (all carrying
the same symbol, inherited from the unique-incoming-symbol property),
and a walk matching an observed window can therefore reach several
futures.  Prediction enumerates every reachable path for the last
``window`` symbols under a traversal strategy, weights the paths, and
sums path probabilities per next action.

Strategies (strictly ordered by permissiveness, fs ⊆ as ⊆ hc):

* ``fs`` — a step requires the full ``stage|qualifier`` symbol to match;
* ``as`` — the attack stage alone has to match;
* ``hc`` — stage match when possible, otherwise follow the single
  outgoing edge with the highest count (lowest target id on ties).

Each matched step multiplies the reversed transition probability by
``2*factor`` (full match) or ``factor`` (stage match); fallback steps
carry no boost.  Path weights also include the starting probability of
the first state and are normalized to sum to one over the path set.

Paths whose last state has no outgoing edges predict the reserved
``END_SYMBOL``: the attack chain ends.  Dropping that mass instead would
silently break the next-action distribution.
"""

from __future__ import annotations

import random
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .automaton import Automaton, PROB_TOLERANCE
from .traces import END_SYMBOL, stage_of

FULL = "full"
STAGE = "stage"
FALLBACK = "fallback"

STRATEGIES = ("fs", "as", "hc")


@dataclass(frozen=True)
class RevEdge:
    """One reversed transition with its recomputed probability."""

    target: int
    symbol: str
    count: int
    prob: float


@dataclass(frozen=True)
class ReachablePath:
    """States visited for one window (len(states) == len(window) + 1)."""

    states: tuple[int, ...]
    matched: tuple[str, ...]
    prob: float = 0.0


@dataclass
class Forecast:
    distribution: dict[str, float]
    top: list[tuple[str, float]]
    strategy: str
    no_path: bool = False

    def top_symbols(self, k: int = 3) -> list[str]:
        return [sym for sym, _ in self.top[:k]]


@dataclass
class ForecastConfig:
    strategy: str = "hc"
    factor: float = 55.0
    window: int = 5
    seed: int = 0
    use_cache: bool = True
    include_sinks: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, "
                             f"got {self.strategy!r}")
        if self.factor < 1:
            raise ValueError("factor must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")


class ReversedAutomaton:
    """Reversed view over a suffix-direction automaton.

    Outgoing edges of state ``d`` are the suffix model's incoming edges
    of ``d``; their probability is count / total_count(d), which makes
    them sum to one per state.  A state's starting probability is its
    share of trace starts among all states emitting the same symbol.
    """

    def __init__(self, base: Automaton):
        if base.direction != "suffix":
            raise ValueError("can only reverse a suffix-direction model")
        self.base = base
        self.rev_out: dict[int, tuple[RevEdge, ...]] = {}
        self.out_symbol: dict[int, str | None] = {}
        self._edge: dict[tuple[int, int], RevEdge] = {}
        for sid, state in base.states.items():
            incoming = base.in_edges.get(sid, [])
            edges = []
            symbols = {t.symbol for t in incoming}
            if len(symbols) > 1:
                raise ValueError(f"state {sid} has multiple incoming symbols "
                                 f"{sorted(symbols)}; reversal needs the "
                                 f"unique-incoming-symbol property")
            total = state.total_count
            for t in sorted(incoming, key=lambda t: t.source):
                edge = RevEdge(target=t.source, symbol=t.symbol, count=t.count,
                               prob=t.count / total if total else 0.0)
                edges.append(edge)
                self._edge[(sid, t.source)] = edge
            self.rev_out[sid] = tuple(edges)
            self.out_symbol[sid] = edges[0].symbol if edges else None

        # Trace-start shares per emitted symbol (suffix final counts are
        # the numbers of traces starting at a state, read forward).
        self.start_prob: dict[int, float] = {}
        groups: dict[str, list[int]] = defaultdict(list)
        for sid, symbol in self.out_symbol.items():
            if symbol is not None:
                groups[symbol].append(sid)
        for symbol, members in groups.items():
            denom = sum(base.states[sid].final_count for sid in members)
            for sid in members:
                if denom > 0:
                    self.start_prob[sid] = base.states[sid].final_count / denom
                else:
                    # No trace starts with this symbol anywhere; share the
                    # mass uniformly so start probabilities still sum to 1.
                    self.start_prob[sid] = 1.0 / len(members)

        # New roots: states the suffix model never leaves.
        self.roots = frozenset(sid for sid in base.states
                               if not base.out.get(sid))

    def edge(self, source: int, target: int) -> RevEdge:
        return self._edge[(source, target)]

    def validate(self) -> list[str]:
        v = []
        for sid, edges in self.rev_out.items():
            if not edges:
                continue
            mass = sum(e.prob for e in edges)
            if abs(mass - 1.0) > PROB_TOLERANCE:
                v.append(f"state {sid}: reversed probabilities sum to {mass}")
        by_symbol: dict[str, float] = defaultdict(float)
        for sid, p in self.start_prob.items():
            by_symbol[self.out_symbol[sid]] += p
        for symbol, mass in by_symbol.items():
            if abs(mass - 1.0) > PROB_TOLERANCE:
                v.append(f"symbol {symbol!r}: start probabilities sum to {mass}")
        return v


def reverse(model: Automaton) -> ReversedAutomaton:
    return ReversedAutomaton(model)


def _match_kind(state_symbol: str, observed: str) -> str | None:
    if state_symbol == observed:
        return FULL
    if stage_of(state_symbol) == stage_of(observed):
        return STAGE
    return None


def find_paths(
    rm: ReversedAutomaton,
    window: Sequence[str],
    strategy: str,
    use_cache: bool = True,
    include_sinks: bool = True,
) -> list[ReachablePath]:
    """All reachable paths for ``window`` under a traversal strategy.

    Starting states are the states whose outgoing symbol matches the
    first window symbol under the strategy's match rule (the fallback is
    never used to pick a start).  A path that hits a state with no
    eligible continuation while symbols remain is incomplete and
    discarded.  The memo cache is keyed by (state, symbols consumed so
    far), which identifies the remaining suffix within one call.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    window = list(window)
    if not window:
        return []

    memo: dict[tuple[int, int], list[tuple[tuple[int, ...], tuple[str, ...]]]] | None
    memo = {} if use_cache else None

    def allowed(sid: int) -> bool:
        return include_sinks or not rm.base.states[sid].is_sink

    def step(state: int, position: int):
        """Eligible (match kind, edges) for consuming window[position]."""
        symbol = rm.out_symbol.get(state)
        if symbol is None:
            return None
        kind = _match_kind(symbol, window[position])
        if kind == FULL or (kind == STAGE and strategy in ("as", "hc")):
            edges = [e for e in rm.rev_out[state] if allowed(e.target)]
            return (kind, edges) if edges else None
        if strategy == "hc" and position > 0:
            candidates = [e for e in rm.rev_out[state] if allowed(e.target)]
            if not candidates:
                return None
            best = max(candidates, key=lambda e: (e.count, -e.target))
            return (FALLBACK, [best])
        return None

    def explore(state: int, position: int):
        if position == len(window):
            return [((state,), ())]
        key = (state, position)
        if memo is not None and key in memo:
            return memo[key]
        found = []
        option = step(state, position)
        if option is not None:
            kind, edges = option
            for edge in edges:
                for states, kinds in explore(edge.target, position + 1):
                    found.append(((state,) + states, (kind,) + kinds))
        if memo is not None:
            memo[key] = found
        return found

    paths = []
    for sid in sorted(rm.rev_out):
        if not rm.rev_out[sid] or not allowed(sid):
            continue
        kind = _match_kind(rm.out_symbol[sid], window[0])
        if kind is None or (strategy == "fs" and kind != FULL):
            continue
        for states, kinds in explore(sid, 0):
            paths.append(ReachablePath(states=states, matched=kinds))
    return paths


def path_weight(rm: ReversedAutomaton, path: ReachablePath,
                factor: float) -> float:
    """Unnormalized path weight: start share times boosted step products."""
    weight = rm.start_prob.get(path.states[0], 0.0)
    for i in range(len(path.states) - 1):
        edge = rm.edge(path.states[i], path.states[i + 1])
        boost = {FULL: 2.0 * factor, STAGE: factor, FALLBACK: 1.0}[path.matched[i]]
        weight *= edge.prob * boost
    return weight


def path_probabilities(rm: ReversedAutomaton, paths: Sequence[ReachablePath],
                       factor: float) -> list[ReachablePath]:
    """Normalize path weights so they sum to one over the path set.

    If every weight is zero (all start states have a zero start share)
    the paths are weighted uniformly rather than dropped.
    """
    weights = [path_weight(rm, p, factor) for p in paths]
    total = sum(weights)
    if total <= 0.0:
        if not paths:
            return []
        uniform = 1.0 / len(paths)
        return [ReachablePath(p.states, p.matched, uniform) for p in paths]
    return [ReachablePath(p.states, p.matched, w / total)
            for p, w in zip(paths, weights)]


def next_action(rm: ReversedAutomaton, path: ReachablePath) -> str:
    """Symbol emitted after a path's last state (unique per state)."""
    symbol = rm.out_symbol.get(path.states[-1])
    return symbol if symbol is not None else END_SYMBOL


def predict_next(rm: ReversedAutomaton, trace: Sequence[str],
                 config: ForecastConfig | None = None) -> Forecast:
    """Probability distribution over the next action for a partial trace.

    Only the most recent ``config.window`` symbols are used; the
    unique-incoming-symbol property licenses starting mid-model, and
    bounding the window bounds enumeration cost.
    """
    config = config or ForecastConfig()
    if not trace:
        raise ValueError("cannot predict from an empty trace")
    window = list(trace)[-config.window:]
    paths = find_paths(rm, window, config.strategy,
                       use_cache=config.use_cache,
                       include_sinks=config.include_sinks)
    if not paths:
        return Forecast(distribution={}, top=[], strategy=config.strategy,
                        no_path=True)
    paths = path_probabilities(rm, paths, config.factor)
    distribution: dict[str, float] = defaultdict(float)
    for path in paths:
        distribution[next_action(rm, path)] += path.prob
    top = sorted(distribution.items(), key=lambda kv: (-kv[1], kv[0]))
    return Forecast(distribution=dict(distribution), top=top,
                    strategy=config.strategy, no_path=False)


# -- baselines -----------------------------------------------------------


def baseline_random(alphabet: Iterable[str], seed: int) -> Forecast:
    """Uniform mass over the alphabet; the ranking is a seeded shuffle."""
    symbols = sorted(alphabet)
    if not symbols:
        return Forecast(distribution={}, top=[], strategy="random", no_path=True)
    share = 1.0 / len(symbols)
    order = list(symbols)
    random.Random(seed).shuffle(order)
    return Forecast(
        distribution={sym: share for sym in symbols},
        top=[(sym, share) for sym in order],
        strategy="random",
    )


def build_bigram_table(traces: Iterable[Sequence[str]]) -> dict[str, Counter]:
    """Successor counts for every adjacent symbol pair in the traces."""
    table: dict[str, Counter] = defaultdict(Counter)
    for symbols in traces:
        for current, nxt in zip(symbols, symbols[1:]):
            table[current][nxt] += 1
    return dict(table)


def baseline_frequency(table: Mapping[str, Counter],
                       last_symbol: str) -> Forecast:
    successors = table.get(last_symbol)
    if not successors:
        return Forecast(distribution={}, top=[], strategy="frequency",
                        no_path=True)
    total = sum(successors.values())
    distribution = {sym: count / total for sym, count in successors.items()}
    top = sorted(distribution.items(), key=lambda kv: (-kv[1], kv[0]))
    return Forecast(distribution=distribution, top=top, strategy="frequency")


def baseline_pdfa_predict(pdfa: Automaton, trace: Sequence[str]) -> Forecast:
    """Deterministic walk of the prefix model with max-count fallback.

    Unmatched symbols follow the highest-count outgoing transition;
    reaching a state with no outgoing transitions is an incomplete path.
    The prediction is the distribution over the final state's outgoing
    transition counts.
    """
    if pdfa.direction != "prefix":
        raise ValueError("the pdfa baseline needs a prefix-direction model")
    state = pdfa.root
    for symbol in trace:
        transitions = pdfa.out.get(state, {})
        if not transitions:
            return Forecast(distribution={}, top=[], strategy="pdfa",
                            no_path=True)
        t = transitions.get(symbol)
        if t is None:
            t = max(transitions.values(), key=lambda t: (t.count, -t.target))
        state = t.target
    transitions = pdfa.out.get(state, {})
    if not transitions:
        return Forecast(distribution={}, top=[], strategy="pdfa", no_path=True)
    total = sum(t.count for t in transitions.values())
    distribution = {sym: t.count / total for sym, t in transitions.items()}
    top = sorted(distribution.items(), key=lambda kv: (-kv[1], kv[0]))
    return Forecast(distribution=distribution, top=top, strategy="pdfa")
