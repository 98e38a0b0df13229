"""Shared fixtures: hand-built automata with known probabilities.

Both models are constructed state-by-state (not learned) so every count
is an independent, hand-checked quantity.  Tests assert the library's
derived probabilities against fractions computed from these counts by
hand.
"""

from __future__ import annotations

import pytest

from agforecast.automaton import Automaton, State, Transition
from agforecast.forecast import ReversedAutomaton


def make_model(direction, root, state_rows, transition_rows, check=True):
    """Rows: (id, total, continue, final[, sink]) and (src, dst, symbol, count)."""
    states = {}
    for row in state_rows:
        sid, total, cont, final = row[:4]
        sink = row[4] if len(row) > 4 else False
        states[sid] = State(sid, total, cont, final, sink)
    transitions = [Transition(*row) for row in transition_rows]
    return Automaton(direction, root, states, transitions, check=check)


@pytest.fixture
def walkthrough_model():
    """Suffix model whose reversal drives the three-strategy walkthrough.

    Reversed, state 6 is the only serD starting point; state 5 branches
    on vulnD|http to 3 (30/70) and 4 (40/70); 3 continues on netDOS|dns
    to 1, while 4 only offers dManip|ssh to 2.  After states 1 and 2 the
    next actions are resHJ|http and exfil|http.
    """
    return make_model(
        "suffix",
        root=0,
        state_rows=[
            (0, 115, 115, 0),
            (1, 47, 35, 12),
            (2, 68, 48, 20),
            (3, 35, 30, 5),
            (4, 48, 40, 8),
            (5, 70, 55, 15),
            (6, 55, 0, 55),
        ],
        transition_rows=[
            (0, 1, "resHJ|http", 47),
            (0, 2, "exfil|http", 68),
            (1, 3, "netDOS|dns", 35),
            (2, 4, "dManip|ssh", 48),
            (3, 5, "vulnD|http", 30),
            (4, 5, "vulnD|http", 40),
            (5, 6, "serD|http", 55),
        ],
    )


@pytest.fixture
def walkthrough_reversed(walkthrough_model):
    return ReversedAutomaton(walkthrough_model)


@pytest.fixture
def ratio_model():
    """Suffix model fixing the probability-recalculation examples.

    State 4 is entered on vulnD|http from both 2 (count 30) and 5
    (count 12), so its reversed edge back to 2 has probability 30/42.
    States 2 and 5 are both entered on exfil|http with trace-start
    counts 40 and 10, so state 2's starting probability is 0.8.
    """
    return make_model(
        "suffix",
        root=0,
        state_rows=[
            (0, 115, 115, 0),
            (1, 35, 0, 35),
            (2, 70, 30, 40),
            (3, 15, 0, 15),
            (4, 42, 35, 7),
            (5, 22, 12, 10),
            (6, 30, 22, 8),
        ],
        transition_rows=[
            (0, 2, "exfil|http", 70),
            (0, 6, "resHJ|http", 30),
            (0, 3, "dManip|ssh", 15),
            (2, 4, "vulnD|http", 30),
            (6, 5, "exfil|http", 22),
            (5, 4, "vulnD|http", 12),
            (4, 1, "serD|http", 35),
        ],
    )


@pytest.fixture
def ratio_reversed(ratio_model):
    return ReversedAutomaton(ratio_model)


def context_corpus():
    """Reversed-orientation traces with two distinguishable exfil contexts.

    Unrolled from the expected model below; counts are large and the two
    exfil-entered states have sharply different futures, so the merge
    test keeps them apart while folding the two vulnD contexts together.
    """
    corpus = []
    corpus += [["exfil|http"]] * 100
    corpus += [["exfil|http", "vulnD|http"]] * 20
    corpus += [["exfil|http", "vulnD|http", "serD|http"]] * 180
    corpus += [["resHJ|http"]] * 50
    corpus += [["resHJ|http", "exfil|http"]] * 200
    corpus += [["dManip|ssh"]] * 10
    corpus += [["dManip|ssh", "vulnD|http"]] * 9
    corpus += [["dManip|ssh", "vulnD|http", "serD|http"]] * 81
    return corpus


def expected_context_model():
    """Hand-merged 7-state result of learning ``context_corpus``."""
    return make_model(
        "suffix",
        root=0,
        state_rows=[
            (0, 650, 650, 0),
            (1, 300, 200, 100),   # entered on exfil, mostly continues
            (2, 290, 261, 29),    # the two vulnD contexts, folded
            (3, 261, 0, 261),
            (4, 250, 200, 50),
            (5, 200, 0, 200),     # entered on exfil, always ends
            (6, 100, 90, 10),
        ],
        transition_rows=[
            (0, 1, "exfil|http", 300),
            (0, 4, "resHJ|http", 250),
            (0, 6, "dManip|ssh", 100),
            (1, 2, "vulnD|http", 200),
            (4, 5, "exfil|http", 200),
            (6, 2, "vulnD|http", 90),
            (2, 3, "serD|http", 261),
        ],
    )
