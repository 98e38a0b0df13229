"""Probabilistic deterministic automaton: structure, learning, scoring.

One ``Automaton`` type serves as both model variants: ``direction =
"suffix"`` when trained on reversed traces (the root then corresponds to
the *end* of an attack, and infrequent severe symbols sit near the
root), ``"prefix"`` when trained on chronological traces.

Learning is evidence-driven state merging on a prefix tree (red-blue
order, Hoeffding compatibility test on outgoing distributions).  Two
extra guards keep the model interpretable:

* states entered on different symbols are never merged, so every state
  keeps a unique incoming symbol and can be read as a milestone;
* states whose occurrence count falls below ``sink_count`` carry no
  statistical weight — they are never merge candidates and are flagged
  as sinks in the result.

Models can also be imported from JSON (e.g. produced by an external
learner); the importer validates every structural invariant and reports
all violations at once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

#: reserved mass used for events never seen at a state, spread uniformly
#: over the alphabet; keeps every trace probability finite while leaving
#: observed count ratios exact.
UNSEEN_EPSILON = 1e-6

PROB_TOLERANCE = 1e-9


class ModelValidationError(ValueError):
    """One or more automaton invariants are violated."""

    def __init__(self, violations: list[str]):
        super().__init__("invalid model:\n" + "\n".join(f"- {v}" for v in violations))
        self.violations = violations


@dataclass
class LearnParams:
    """Thresholds for the state-merging learner."""

    state_count: int = 5
    symbol_count: int = 5
    sink_count: int = 5
    merge_alpha: float = 0.05

    def __post_init__(self):
        if min(self.state_count, self.symbol_count, self.sink_count) < 1:
            raise ValueError("all count thresholds must be >= 1")
        if not 0.0 < self.merge_alpha < 1.0:
            raise ValueError("merge_alpha must be in (0, 1)")


@dataclass
class State:
    id: int
    total_count: int
    continue_count: int
    final_count: int
    is_sink: bool = False


@dataclass(frozen=True)
class Transition:
    source: int
    target: int
    symbol: str
    count: int


class Automaton:
    """Deterministic probabilistic automaton with occurrence counts.

    Transition probabilities are derived, never stored: prob = count /
    total_count(source state).
    """

    def __init__(
        self,
        direction: str,
        root: int,
        states: dict[int, State],
        transitions: Sequence[Transition],
        alphabet: Iterable[str] = (),
        check: bool = True,
    ):
        self.direction = direction
        self.root = root
        self.states = dict(states)
        self.transitions = list(transitions)
        self.out: dict[int, dict[str, Transition]] = {sid: {} for sid in self.states}
        self.in_edges: dict[int, list[Transition]] = {sid: [] for sid in self.states}
        duplicate = None
        for t in self.transitions:
            slot = self.out.setdefault(t.source, {})
            if t.symbol in slot:
                duplicate = t
            slot[t.symbol] = t
            self.in_edges.setdefault(t.target, []).append(t)
        self.alphabet = frozenset(alphabet) | {t.symbol for t in self.transitions}
        if check:
            violations = self.validate()
            if duplicate is not None:
                violations.insert(0, f"duplicate transition for state "
                                     f"{duplicate.source} on {duplicate.symbol!r}")
            if violations:
                raise ModelValidationError(violations)

    def prob(self, t: Transition) -> float:
        total = self.states[t.source].total_count
        return t.count / total if total else 0.0

    def final_prob(self, sid: int) -> float:
        st = self.states[sid]
        return st.final_count / st.total_count if st.total_count else 0.0

    def validate(self) -> list[str]:
        """Return every violated invariant (empty list = valid model)."""
        v: list[str] = []
        if self.direction not in ("suffix", "prefix"):
            v.append(f"direction must be suffix or prefix, got {self.direction!r}")
        if self.root not in self.states:
            v.append(f"root state {self.root} does not exist")
        for t in self.transitions:
            if t.source not in self.states or t.target not in self.states:
                v.append(f"transition {t.source}->{t.target} references "
                         f"a missing state")
            if t.count < 0:
                v.append(f"transition {t.source}->{t.target} has negative count")
        for sid, st in sorted(self.states.items()):
            if min(st.total_count, st.continue_count, st.final_count) < 0:
                v.append(f"state {sid} has a negative count")
                continue
            if sid != self.root:
                if st.total_count != st.continue_count + st.final_count:
                    v.append(f"state {sid}: total {st.total_count} != continue "
                             f"{st.continue_count} + final {st.final_count}")
                symbols = {t.symbol for t in self.in_edges.get(sid, ())}
                if len(symbols) > 1:
                    v.append(f"state {sid} is entered on multiple symbols: "
                             f"{sorted(symbols)}")
            out_total = sum(t.count for t in self.out.get(sid, {}).values())
            if out_total != st.continue_count:
                v.append(f"state {sid}: outgoing counts sum to {out_total}, "
                         f"continue count is {st.continue_count}")
            if st.total_count > 0:
                mass = (out_total + st.final_count) / st.total_count
                if abs(mass - 1.0) > PROB_TOLERANCE and sid != self.root:
                    v.append(f"state {sid}: probability mass {mass} != 1")
            elif self.out.get(sid) or st.final_count:
                v.append(f"state {sid}: zero total but outgoing mass")
        return v

    # -- canonical form -------------------------------------------------

    def canonical(self) -> "Automaton":
        """Renumber breadth-first from the root, edges in symbol order.

        Two learned models are isomorphic iff their canonical forms have
        equal signatures; used to assert learner determinism.
        """
        order: list[int] = []
        seen = {self.root}
        queue = [self.root]
        while queue:
            sid = queue.pop(0)
            order.append(sid)
            for symbol in sorted(self.out.get(sid, {})):
                target = self.out[sid][symbol].target
                if target not in seen:
                    seen.add(target)
                    queue.append(target)
        for sid in sorted(self.states):
            if sid not in seen:
                order.append(sid)
        remap = {old: new for new, old in enumerate(order)}
        states = {remap[sid]: State(remap[sid], st.total_count, st.continue_count,
                                    st.final_count, st.is_sink)
                  for sid, st in self.states.items()}
        transitions = sorted(
            (Transition(remap[t.source], remap[t.target], t.symbol, t.count)
             for t in self.transitions),
            key=lambda t: (t.source, t.symbol))
        return Automaton(self.direction, remap[self.root], states, transitions,
                         alphabet=self.alphabet, check=False)

    def signature(self) -> tuple:
        states = tuple((st.id, st.total_count, st.continue_count, st.final_count,
                        st.is_sink) for _, st in sorted(self.states.items()))
        transitions = tuple((t.source, t.target, t.symbol, t.count)
                            for t in sorted(self.transitions,
                                            key=lambda t: (t.source, t.symbol)))
        return (self.direction, self.root, states, transitions)

    def isomorphic_to(self, other: "Automaton") -> bool:
        return self.canonical().signature() == other.canonical().signature()

    # -- serialization --------------------------------------------------

    def to_json(self) -> dict:
        return {
            "direction": self.direction,
            "root": self.root,
            "states": [
                {"id": st.id, "total": st.total_count, "continue": st.continue_count,
                 "final": st.final_count, "sink": st.is_sink}
                for _, st in sorted(self.states.items())
            ],
            "transitions": [
                {"from": t.source, "to": t.target, "symbol": t.symbol,
                 "count": t.count}
                for t in sorted(self.transitions,
                                key=lambda t: (t.source, t.symbol))
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def to_dot(self) -> str:
        """Graphviz rendering with sID / total / continue / final labels."""
        lines = [f'digraph "{self.direction}-automaton" {{', "  rankdir=TB;"]
        for sid, st in sorted(self.states.items()):
            attrs = [f'label="s{sid}\\n{st.total_count} | {st.continue_count} '
                     f'| {st.final_count}"']
            if st.is_sink:
                attrs.append('style="dotted"')
            if sid == self.root:
                attrs.append("peripheries=2")
            lines.append(f"  n{sid} [{', '.join(attrs)}];")
        for t in sorted(self.transitions, key=lambda t: (t.source, t.symbol)):
            lines.append(f'  n{t.source} -> n{t.target} '
                         f'[label="{t.symbol}\\n{t.count} ({self.prob(t):.3f})"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def import_model(text: str) -> Automaton:
    """Parse and validate the model JSON schema."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelValidationError([f"not valid JSON: {e}"]) from None
    violations = []
    for key in ("direction", "root", "states", "transitions"):
        if key not in obj:
            violations.append(f"missing top-level key {key!r}")
    if violations:
        raise ModelValidationError(violations)
    states = {}
    for entry in obj["states"]:
        try:
            st = State(int(entry["id"]), int(entry["total"]),
                       int(entry["continue"]), int(entry["final"]),
                       bool(entry.get("sink", False)))
        except (KeyError, TypeError, ValueError) as e:
            raise ModelValidationError([f"bad state entry {entry!r}: {e}"]) from None
        if st.id in states:
            violations.append(f"duplicate state id {st.id}")
        states[st.id] = st
    transitions = []
    for entry in obj["transitions"]:
        try:
            transitions.append(Transition(int(entry["from"]), int(entry["to"]),
                                          str(entry["symbol"]), int(entry["count"])))
        except (KeyError, TypeError, ValueError) as e:
            raise ModelValidationError([f"bad transition entry {entry!r}: {e}"]) from None
    if violations:
        raise ModelValidationError(violations)
    return Automaton(obj["direction"], int(obj["root"]), states, transitions)


def export_model(model: Automaton) -> str:
    return model.dumps()


# -- prefix tree ---------------------------------------------------------


class _Builder:
    """Mutable count-annotated graph used by the prefix tree and learner."""

    def __init__(self):
        self.total = {0: 0}
        self.final = {0: 0}
        self.out: dict[int, dict[str, list]] = {0: {}}  # sym -> [target, count]
        self.parent: dict[int, tuple[int, str]] = {}
        self.in_symbol: dict[int, str | None] = {0: None}
        self.next_id = 1

    def add_trace(self, symbols: Sequence[str]) -> None:
        state = 0
        self.total[0] += 1
        for sym in symbols:
            slot = self.out[state].get(sym)
            if slot is None:
                child = self.next_id
                self.next_id += 1
                self.total[child] = 0
                self.final[child] = 0
                self.out[child] = {}
                self.parent[child] = (state, sym)
                self.in_symbol[child] = sym
                slot = [child, 0]
                self.out[state][sym] = slot
            slot[1] += 1
            state = slot[0]
            self.total[state] += 1
        self.final[state] += 1

    def to_automaton(self, direction: str, sink_count: int,
                     alphabet: Iterable[str]) -> Automaton:
        states = {}
        transitions = []
        for sid in sorted(self.total):
            continue_count = sum(c for _, c in self.out[sid].values())
            states[sid] = State(
                id=sid,
                total_count=self.total[sid],
                continue_count=continue_count,
                final_count=self.final[sid],
                is_sink=self.total[sid] < sink_count,
            )
            for sym in sorted(self.out[sid]):
                target, count = self.out[sid][sym]
                transitions.append(Transition(sid, target, sym, count))
        return Automaton(direction, 0, states, transitions, alphabet=alphabet)


def _build(traces: Sequence[Sequence[str]]) -> tuple[_Builder, set[str]]:
    builder = _Builder()
    alphabet = set()
    for symbols in traces:
        builder.add_trace(symbols)
        alphabet.update(symbols)
    return builder, alphabet


def build_prefix_tree(traces: Sequence[Sequence[str]],
                      direction: str = "suffix",
                      sink_count: int = 1) -> Automaton:
    """Tree automaton whose paths are exactly the training traces."""
    builder, alphabet = _build(traces)
    return builder.to_automaton(direction, sink_count, alphabet)


# -- learning ------------------------------------------------------------


def _hoeffding_bound(alpha: float, n1: int, n2: int) -> float:
    return math.sqrt(0.5 * math.log(2.0 / alpha)) * (1 / math.sqrt(n1) + 1 / math.sqrt(n2))


def learn(traces: Sequence[Sequence[str]], params: LearnParams | None = None,
          direction: str = "suffix") -> Automaton:
    """Merge the prefix tree of ``traces`` into a compact automaton.

    ``traces`` must already be in training orientation (reversed for the
    suffix model).  The procedure is deterministic: blue states are
    processed lowest-id first and merged into the lowest-id compatible
    red state, so identical input yields an identical model.
    """
    if not traces:
        raise ValueError("cannot learn from an empty trace set")
    params = params or LearnParams()
    b, alphabet = _build(traces)

    def hoeffding_ok(x: int, y: int) -> bool:
        nx, ny = b.total[x], b.total[y]
        if nx < params.state_count or ny < params.state_count:
            return True  # too little evidence to reject
        bound = _hoeffding_bound(params.merge_alpha, nx, ny)
        if abs(b.final[x] / nx - b.final[y] / ny) > bound:
            return False
        for sym in set(b.out[x]) | set(b.out[y]):
            cx = b.out[x][sym][1] if sym in b.out[x] else 0
            cy = b.out[y][sym][1] if sym in b.out[y] else 0
            if cx < params.symbol_count and cy < params.symbol_count:
                continue  # symbol too rare to carry evidence
            if abs(cx / nx - cy / ny) > bound:
                return False
        return True

    def compatible(red: int, blue: int) -> bool:
        # The blue side is a tree, so the pair list is finite even when
        # earlier merges introduced cycles on the red side.
        pairs = [(red, blue)]
        while pairs:
            x, y = pairs.pop()
            if not hoeffding_ok(x, y):
                return False
            for sym, (yt, _count) in b.out[y].items():
                if sym in b.out[x]:
                    pairs.append((b.out[x][sym][0], yt))
        return True

    def merge(red: int, blue: int) -> None:
        parent, parent_symbol = b.parent.pop(blue)
        b.out[parent][parent_symbol][0] = red
        stack = [(red, blue)]
        while stack:
            x, y = stack.pop()
            b.total[x] += b.total[y]
            b.final[x] += b.final[y]
            for sym, (yt, yc) in list(b.out[y].items()):
                if sym in b.out[x]:
                    slot = b.out[x][sym]
                    slot[1] += yc
                    stack.append((slot[0], yt))
                else:
                    b.out[x][sym] = [yt, yc]
                    b.parent[yt] = (x, sym)
            del b.total[y], b.final[y], b.out[y], b.in_symbol[y]
            b.parent.pop(y, None)

    red: list[int] = [0]
    while True:
        red_set = set(red)
        blue = sorted({
            slot[0]
            for r in red for slot in b.out[r].values()
            if slot[0] not in red_set and b.total[slot[0]] >= params.sink_count
        })
        if not blue:
            break
        candidate = blue[0]
        merged = False
        for r in sorted(red):
            if b.in_symbol[r] != b.in_symbol[candidate]:
                continue  # would break the unique-incoming-symbol property
            if compatible(r, candidate):
                merge(r, candidate)
                merged = True
                break
        if not merged:
            red.append(candidate)

    return b.to_automaton(direction, params.sink_count, alphabet)


# -- scoring -------------------------------------------------------------


def trace_probability(model: Automaton, symbols: Sequence[str],
                      complete: bool = True,
                      epsilon: float = UNSEEN_EPSILON) -> float:
    """Probability of a trace under the deterministic walk from the root.

    Seen steps contribute their exact count ratio; a step with no
    matching transition contributes ``epsilon / |alphabet|`` and the walk
    stays in place.  The last factor is the final (or, for
    ``complete=False``, the continuation) probability of the last state,
    floored the same way when it would be zero.
    """
    floor = epsilon / max(1, len(model.alphabet))
    p = 1.0
    state = model.root
    for sym in symbols:
        t = model.out.get(state, {}).get(sym)
        total = model.states[state].total_count
        if t is None or total == 0:
            p *= floor
        else:
            p *= t.count / total
            state = t.target
    st = model.states[state]
    tail = st.final_count if complete else st.continue_count
    if st.total_count > 0 and tail > 0:
        p *= tail / st.total_count
    else:
        p *= floor
    return p


def perplexity(model: Automaton, traces: Sequence[Sequence[str]],
               epsilon: float = UNSEEN_EPSILON) -> float:
    """2 ** (-(1/N) * sum(log2 P(trace))) over ``traces``."""
    if not traces:
        raise ValueError("perplexity needs at least one trace")
    log_sum = 0.0
    for symbols in traces:
        p = trace_probability(model, symbols, epsilon=epsilon)
        if p <= 0.0:
            raise ValueError("trace probability is zero despite smoothing")
        log_sum += math.log2(p)
    return 2.0 ** (-log_sum / len(traces))
