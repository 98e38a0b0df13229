"""Reversed-model probabilities, path finding, and forecasting."""

import random

import pytest

from agforecast.automaton import LearnParams, learn
from agforecast.forecast import (
    Forecast, ForecastConfig, ReversedAutomaton, baseline_frequency,
    baseline_pdfa_predict, baseline_random, build_bigram_table, find_paths,
    next_action, path_probabilities, path_weight, predict_next, reverse,
)
from agforecast.traces import END_SYMBOL
from conftest import make_model
from support import brute_force_paths, random_models, random_window

WINDOW = ["serD|http", "vulnD|ssh", "netDOS|dns"]


class TestReversal:
    def test_reversed_transition_probability(self, ratio_reversed):
        # Reversed edge leaving state 4 toward state 2 on vulnD|http.
        assert ratio_reversed.edge(4, 2).prob == pytest.approx(30 / 42, abs=1e-12)
        assert ratio_reversed.edge(4, 5).prob == pytest.approx(12 / 42, abs=1e-12)

    def test_starting_probability(self, ratio_reversed):
        # States 2 and 5 both emit exfil|http; start counts 40 and 10.
        assert ratio_reversed.start_prob[2] == 0.8
        assert ratio_reversed.start_prob[5] == pytest.approx(0.2)

    def test_single_chain_has_unit_probabilities(self):
        model = learn([["a|x", "b|x", "c|x"]] * 10, LearnParams(sink_count=1))
        rm = reverse(model)
        for edges in rm.rev_out.values():
            for edge in edges:
                assert edge.prob == 1.0

    def test_roots_are_suffix_leaves(self, walkthrough_reversed):
        assert walkthrough_reversed.roots == frozenset({6})

    def test_validation_clean_on_fixtures(self, ratio_reversed, walkthrough_reversed):
        assert ratio_reversed.validate() == []
        assert walkthrough_reversed.validate() == []

    def test_prefix_model_rejected(self):
        model = learn([["a|x"]], LearnParams(sink_count=1), direction="prefix")
        with pytest.raises(ValueError):
            reverse(model)

    def test_zero_start_symbol_gets_uniform_share(self):
        # Forward traces are [b, a, c]: a|x only occurs mid-trace, so no
        # trace starts with it and the group denominator is zero.  The
        # emitting state still gets start mass 1 so sums stay normalized.
        model = learn([["c|x", "a|x", "b|x"]] * 6, LearnParams(sink_count=1))
        rm = reverse(model)
        a_states = [sid for sid, sym in rm.out_symbol.items() if sym == "a|x"]
        assert len(a_states) == 1
        assert model.states[a_states[0]].final_count == 0
        assert rm.start_prob[a_states[0]] == 1.0


class TestWalkthrough:
    def test_fs_finds_nothing(self, walkthrough_reversed):
        assert find_paths(walkthrough_reversed, WINDOW, "fs") == []

    def test_as_finds_single_path(self, walkthrough_reversed):
        paths = find_paths(walkthrough_reversed, WINDOW, "as")
        assert [p.states for p in paths] == [(6, 5, 3, 1)]

    def test_hc_finds_both_paths(self, walkthrough_reversed):
        paths = find_paths(walkthrough_reversed, WINDOW, "hc")
        assert {p.states for p in paths} == {(6, 5, 3, 1), (6, 5, 4, 2)}

    def test_match_kinds_recorded(self, walkthrough_reversed):
        paths = find_paths(walkthrough_reversed, WINDOW, "hc")
        by_states = {p.states: p.matched for p in paths}
        assert by_states[(6, 5, 3, 1)] == ("full", "stage", "full")
        assert by_states[(6, 5, 4, 2)] == ("full", "stage", "fallback")

    def test_path_probabilities_are_three_to_one(self, walkthrough_reversed):
        paths = find_paths(walkthrough_reversed, WINDOW, "hc")
        scored = path_probabilities(walkthrough_reversed, paths, factor=2.0)
        probs = {p.states: p.prob for p in scored}
        assert probs[(6, 5, 3, 1)] == pytest.approx(0.75, abs=1e-9)
        assert probs[(6, 5, 4, 2)] == pytest.approx(0.25, abs=1e-9)

    def test_forecast_matches_walkthrough(self, walkthrough_reversed):
        config = ForecastConfig(strategy="hc", factor=2.0, window=5)
        forecast = predict_next(walkthrough_reversed, WINDOW, config)
        assert not forecast.no_path
        assert forecast.top[0][0] == "resHJ|http"
        assert forecast.top[0][1] == pytest.approx(0.75, abs=1e-9)
        assert forecast.distribution["exfil|http"] == pytest.approx(0.25, abs=1e-9)

    def test_as_forecast_is_certain(self, walkthrough_reversed):
        forecast = predict_next(walkthrough_reversed, WINDOW,
                                ForecastConfig(strategy="as", factor=2.0))
        assert forecast.distribution == {"resHJ|http": 1.0}

    def test_fs_forecast_reports_no_path(self, walkthrough_reversed):
        forecast = predict_next(walkthrough_reversed, WINDOW,
                                ForecastConfig(strategy="fs"))
        assert forecast.no_path and forecast.distribution == {}


class TestFindPaths:
    def test_memo_and_no_memo_agree(self, walkthrough_reversed):
        for strategy in ("fs", "as", "hc"):
            cached = find_paths(walkthrough_reversed, WINDOW, strategy, use_cache=True)
            plain = find_paths(walkthrough_reversed, WINDOW, strategy, use_cache=False)
            assert {(p.states, p.matched) for p in cached} == \
                   {(p.states, p.matched) for p in plain}

    def test_strategy_containment(self, walkthrough_reversed, ratio_reversed):
        for rm in (walkthrough_reversed, ratio_reversed):
            for window in (WINDOW, ["vulnD|http"], ["exfil|http", "vulnD|ssh"]):
                fs = {p.states for p in find_paths(rm, window, "fs")}
                as_ = {p.states for p in find_paths(rm, window, "as")}
                hc = {p.states for p in find_paths(rm, window, "hc")}
                assert fs <= as_ <= hc

    def test_dead_end_paths_discarded(self, walkthrough_reversed):
        # resHJ|http then anything: state 1 leads to the terminal root,
        # which has no outgoing edges, so two-symbol windows die there.
        paths = find_paths(walkthrough_reversed, ["resHJ|http", "serD|http"], "as")
        assert paths == []

    def test_window_length_plus_one_states(self, walkthrough_reversed):
        for strategy in ("as", "hc"):
            for path in find_paths(walkthrough_reversed, WINDOW, strategy):
                assert len(path.states) == len(WINDOW) + 1
                assert len(path.matched) == len(WINDOW)

    def test_empty_window_yields_nothing(self, walkthrough_reversed):
        assert find_paths(walkthrough_reversed, [], "hc") == []

    def test_sink_exclusion_flag(self):
        corpus = [["a|x", "b|x"]] * 20 + [["a|x", "c|x"], ["c|x", "b|x"]]
        model = learn(corpus, LearnParams(sink_count=5))
        rm = reverse(model)
        with_sinks = find_paths(rm, ["b|x"], "as", include_sinks=True)
        without = find_paths(rm, ["b|x"], "as", include_sinks=False)
        assert {p.states for p in without} <= {p.states for p in with_sinks}
        sinky = {sid for sid, st in model.states.items() if st.is_sink}
        assert all(not (set(p.states) & sinky) for p in without)
        assert any(set(p.states) & sinky for p in with_sinks)

    def test_matches_brute_force_on_fixtures(self, walkthrough_reversed,
                                             ratio_reversed):
        for rm in (walkthrough_reversed, ratio_reversed):
            for window in (WINDOW, ["exfil|http"], ["vulnD|http", "serD|http"],
                           ["netDOS|dns", "resHJ|http", "serD|http"]):
                for strategy in ("fs", "as", "hc"):
                    got = {p.states for p in find_paths(rm, window, strategy)}
                    assert got == brute_force_paths(rm, window, strategy)

    def test_matches_brute_force_on_random_models(self):
        for rng, model, _corpus in random_models(10, max_states=8, seed=100):
            rm = reverse(model)
            window = random_window(rng, model, max_len=4)
            for strategy in ("fs", "as", "hc"):
                got = {p.states for p in find_paths(rm, window, strategy)}
                assert got == brute_force_paths(rm, window, strategy)


class TestPathProbability:
    def test_single_path_normalizes_to_one(self, walkthrough_reversed):
        paths = find_paths(walkthrough_reversed, ["exfil|http"], "fs")
        scored = path_probabilities(walkthrough_reversed, paths, factor=55.0)
        assert len(scored) == 1 and scored[0].prob == 1.0

    def test_factor_cancels_for_all_full_matches(self, walkthrough_reversed):
        window = ["serD|http", "vulnD|http"]
        paths = find_paths(walkthrough_reversed, window, "as")
        assert len(paths) == 2
        low = path_probabilities(walkthrough_reversed, paths, factor=2.0)
        high = path_probabilities(walkthrough_reversed, paths, factor=4.0)
        for a, b in zip(low, high):
            assert a.prob == pytest.approx(b.prob, abs=1e-12)

    def test_weights_use_start_and_boosts(self, walkthrough_reversed):
        paths = find_paths(walkthrough_reversed, WINDOW, "hc")
        by_states = {p.states: p for p in paths}
        w1 = path_weight(walkthrough_reversed, by_states[(6, 5, 3, 1)], factor=2.0)
        # start 1.0 * (1.0*4) * (30/70*2) * (1.0*4)
        assert w1 == pytest.approx(4 * (30 / 70) * 2 * 4, abs=1e-9)

    def test_all_zero_weights_fall_back_to_uniform(self):
        # Both c|x-entered states have zero trace starts in one branch:
        # craft a model where the only surviving path starts at a state
        # with start probability zero.
        model = make_model(
            "suffix", 0,
            [(0, 10, 10, 0), (1, 6, 6, 0), (2, 4, 0, 4), (3, 6, 0, 6)],
            [(0, 1, "a|x", 6), (0, 2, "b|x", 4), (1, 3, "c|x", 6)],
        )
        rm = ReversedAutomaton(model)
        # state 1 emits a|x but never starts a trace (final 0), while the
        # other a-emitting states do not exist; group denominator is 0.
        paths = find_paths(rm, ["c|x", "a|x"], "as")
        assert paths
        scored = path_probabilities(rm, paths, factor=2.0)
        assert sum(p.prob for p in scored) == pytest.approx(1.0)

    def test_normalization_sums_to_one(self, walkthrough_reversed):
        for strategy in ("as", "hc"):
            paths = find_paths(walkthrough_reversed, WINDOW, strategy)
            if not paths:
                continue
            scored = path_probabilities(walkthrough_reversed, paths, factor=55.0)
            assert sum(p.prob for p in scored) == pytest.approx(1.0, abs=1e-9)


class TestPredictNext:
    def test_deterministic_chain_predicts_next_symbol(self):
        # Forward chain a -> b -> c; the suffix model trains on the
        # reversed traces.
        model = learn([["c|x", "b|x", "a|x"]] * 10, LearnParams(sink_count=1))
        rm = reverse(model)
        forecast = predict_next(rm, ["a|x", "b|x"], ForecastConfig(strategy="fs"))
        assert forecast.distribution == {"c|x": 1.0}

    def test_end_mass_for_terminal_paths(self, walkthrough_reversed):
        forecast = predict_next(walkthrough_reversed, ["resHJ|http"],
                                ForecastConfig(strategy="fs"))
        assert forecast.distribution == {END_SYMBOL: 1.0}

    def test_distribution_matches_paths_regrouped(self, walkthrough_reversed):
        config = ForecastConfig(strategy="hc", factor=7.0)
        forecast = predict_next(walkthrough_reversed, WINDOW, config)
        paths = path_probabilities(
            walkthrough_reversed,
            find_paths(walkthrough_reversed, WINDOW, "hc"),
            factor=7.0)
        regrouped: dict[str, float] = {}
        for p in paths:
            sym = next_action(walkthrough_reversed, p)
            regrouped[sym] = regrouped.get(sym, 0.0) + p.prob
        assert forecast.distribution == pytest.approx(regrouped, abs=1e-12)

    def test_window_uses_most_recent_symbols(self, walkthrough_reversed):
        long_trace = ["zzz|zzz"] * 4 + WINDOW
        short = predict_next(walkthrough_reversed, WINDOW,
                             ForecastConfig(strategy="hc", window=3, factor=2.0))
        windowed = predict_next(walkthrough_reversed, long_trace,
                                ForecastConfig(strategy="hc", window=3, factor=2.0))
        assert windowed.distribution == short.distribution

    def test_empty_trace_rejected(self, walkthrough_reversed):
        with pytest.raises(ValueError):
            predict_next(walkthrough_reversed, [], ForecastConfig())

    def test_seed_determinism(self, walkthrough_reversed):
        config = ForecastConfig(strategy="hc", factor=55.0, seed=42)
        a = predict_next(walkthrough_reversed, WINDOW, config)
        b = predict_next(walkthrough_reversed, WINDOW, config)
        assert a == b


class TestBaselines:
    def test_random_uniform(self):
        forecast = baseline_random(["a", "b", "c", "d"], seed=1)
        assert all(p == 0.25 for p in forecast.distribution.values())
        assert len(forecast.top) == 4

    def test_random_single_symbol(self):
        forecast = baseline_random(["only"], seed=9)
        assert forecast.distribution == {"only": 1.0}

    def test_random_is_seeded(self):
        a = baseline_random([f"s{i}" for i in range(20)], seed=5)
        b = baseline_random([f"s{i}" for i in range(20)], seed=5)
        c = baseline_random([f"s{i}" for i in range(20)], seed=6)
        assert a.top == b.top
        assert a.top != c.top

    def test_random_empty_alphabet(self):
        assert baseline_random([], seed=0).no_path

    def test_frequency_counts(self):
        table = build_bigram_table([["a", "b"], ["a", "b"], ["a", "c"]])
        forecast = baseline_frequency(table, "a")
        assert forecast.distribution["b"] == pytest.approx(2 / 3)
        assert forecast.distribution["c"] == pytest.approx(1 / 3)

    def test_frequency_unseen_symbol(self):
        table = build_bigram_table([["a", "b"]])
        assert baseline_frequency(table, "zzz").no_path

    def test_frequency_single_bigram(self):
        table = build_bigram_table([["a", "b"]])
        assert baseline_frequency(table, "a").distribution == {"b": 1.0}

    def test_pdfa_chain(self):
        pdfa = learn([["a|x", "b|x"]] * 10, LearnParams(sink_count=1),
                     direction="prefix")
        forecast = baseline_pdfa_predict(pdfa, ["a|x"])
        assert forecast.distribution == {"b|x": 1.0}

    def test_pdfa_leaf_is_no_path(self):
        pdfa = learn([["a|x"]] * 10, LearnParams(sink_count=1), direction="prefix")
        assert baseline_pdfa_predict(pdfa, ["a|x"]).no_path

    def test_pdfa_fallback_follows_max_count(self):
        pdfa = learn([["a|x", "b|x"]] * 9 + [["c|x", "d|x"]],
                     LearnParams(sink_count=1), direction="prefix")
        # 'zzz' matches nothing at the root; a|x has the higher count.
        forecast = baseline_pdfa_predict(pdfa, ["zzz|q"])
        assert forecast.distribution == {"b|x": 1.0}

    def test_pdfa_distribution_proportional_to_counts(self):
        pdfa = learn([["a|x", "b|x"]] * 6 + [["a|x", "c|x"]] * 2,
                     LearnParams(sink_count=1), direction="prefix")
        forecast = baseline_pdfa_predict(pdfa, ["a|x"])
        assert forecast.distribution["b|x"] == pytest.approx(6 / 8)
        assert forecast.distribution["c|x"] == pytest.approx(2 / 8)

    def test_pdfa_requires_prefix_direction(self, walkthrough_model):
        with pytest.raises(ValueError):
            baseline_pdfa_predict(walkthrough_model, ["a|x"])


def test_forecast_config_validation():
    with pytest.raises(ValueError):
        ForecastConfig(strategy="nope")
    with pytest.raises(ValueError):
        ForecastConfig(factor=0.5)
    with pytest.raises(ValueError):
        ForecastConfig(window=0)


def test_forecast_top_symbols_helper():
    f = Forecast(distribution={"a": 0.5, "b": 0.3, "c": 0.2},
                 top=[("a", 0.5), ("b", 0.3), ("c", 0.2)], strategy="hc")
    assert f.top_symbols(2) == ["a", "b"]
