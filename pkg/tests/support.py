"""Test helpers: random corpora, random learned models, brute-force oracle."""

from __future__ import annotations

import itertools
import random

from agforecast.automaton import Automaton, LearnParams, learn
from agforecast.forecast import ReversedAutomaton
from agforecast.traces import stage_of

STAGES = ["serD", "vulnD", "netDOS", "bruteF", "privEsc", "exfil", "dManip", "resHJ"]
QUALIFIERS = ["http", "ssh", "dns", "smb"]


def random_corpus(rng: random.Random, n_traces: int = 20, n_stages: int = 4,
                  n_qualifiers: int = 2, max_len: int = 5) -> list[list[str]]:
    """Random traces over a small symbol set, in training orientation."""
    symbols = [f"{s}|{q}" for s in STAGES[:n_stages] for q in QUALIFIERS[:n_qualifiers]]
    # A few repeated patterns make merging non-trivial.
    patterns = [[rng.choice(symbols) for _ in range(rng.randint(1, max_len))]
                for _ in range(rng.randint(2, 5))]
    corpus = []
    for _ in range(n_traces):
        base = list(rng.choice(patterns))
        if rng.random() < 0.4:
            base.append(rng.choice(symbols))
        corpus.append(base[:max_len])
    return corpus


def random_models(count: int, max_states: int, seed: int = 0,
                  params: LearnParams | None = None):
    """Yield ``count`` seeded learned suffix models with <= max_states states.

    Seeds advance deterministically; corpora whose learned model is too
    large are skipped, so the collection is reproducible.
    """
    params = params or LearnParams(state_count=3, symbol_count=2, sink_count=2)
    produced = 0
    seed_stream = seed
    while produced < count:
        rng = random.Random(seed_stream)
        seed_stream += 1
        corpus = random_corpus(rng, n_traces=rng.randint(5, 25),
                               n_stages=rng.randint(2, 4),
                               n_qualifiers=rng.randint(1, 2),
                               max_len=rng.randint(2, 5))
        model = learn(corpus, params)
        if len(model.states) > max_states:
            continue
        produced += 1
        yield rng, model, corpus


def random_window(rng: random.Random, model: Automaton, max_len: int = 5) -> list[str]:
    """A window mixing seen symbols with novel stage/qualifier variants."""
    seen = sorted(model.alphabet)
    window = []
    for _ in range(rng.randint(1, max_len)):
        sym = rng.choice(seen)
        roll = rng.random()
        if roll < 0.25:
            sym = f"{stage_of(sym)}|other"       # stage match only
        elif roll < 0.35:
            sym = f"novelstage|{sym.split('|', 1)[1]}"  # no stage match
        window.append(sym)
    return window


def brute_force_paths(rm: ReversedAutomaton, window: list[str],
                      strategy: str) -> set[tuple[int, ...]]:
    """Exhaustive enumeration of state sequences, filtered by the rules.

    Works directly off the base automaton's transition list, independent
    of the search code it checks.
    """
    base = rm.base
    in_edges = {sid: [t for t in base.transitions if t.target == sid]
                for sid in base.states}

    def out_symbol(sid):
        symbols = {t.symbol for t in in_edges[sid]}
        assert len(symbols) <= 1
        return next(iter(symbols)) if symbols else None

    def step_ok(position, current, nxt):
        symbol = out_symbol(current)
        if symbol is None:
            return False
        targets = {t.source for t in in_edges[current]}
        full = symbol == window[position]
        stage = stage_of(symbol) == stage_of(window[position])
        if strategy == "fs":
            return full and nxt in targets
        if strategy == "as":
            return stage and nxt in targets
        if stage:
            return nxt in targets
        if position == 0:
            return False
        best = max(in_edges[current], key=lambda t: (t.count, -t.source))
        return nxt == best.source

    found = set()
    for seq in itertools.product(sorted(base.states), repeat=len(window) + 1):
        if all(step_ok(i, seq[i], seq[i + 1]) for i in range(len(window))):
            found.add(seq)
    return found
