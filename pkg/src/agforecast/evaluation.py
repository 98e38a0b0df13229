"""Evaluation harness: k-fold next-action prediction and parameter sweeps.

Per fold, the models (suffix + reversed view, prefix baseline, bigram
table) are trained on k-1 chunks of traces; each test trace then has its
(t+1)-th symbol predicted from the preceding at most t observations,
with the actual symbol as ground truth.  Reported per method:

* top-3 attack-stage accuracy, bucketed by the true symbol's severity;
* top-3 accuracy over unseen traces (no contiguous occurrence in the
  training data);
* their average, the no-path rate, and mean per-prediction runtime;
* train/test perplexity for the automaton methods on an 80-20 split.

Predictions that find no path count as misses; rates over the resolved
predictions only are reported alongside, since the choice of
denominator is a judgement call.
"""

from __future__ import annotations

import csv
import json
import random
import time
from dataclasses import dataclass, field, replace
from statistics import mean
from typing import Sequence, TextIO

from .alerts import Severity
from .automaton import LearnParams, learn, perplexity
from .forecast import (
    Forecast, ForecastConfig, baseline_frequency, baseline_pdfa_predict,
    baseline_random, build_bigram_table, predict_next, reverse,
)
from .traces import END_SYMBOL, Trace, stage_of

ALL_METHODS = ("random", "frequency", "pdfa", "fs", "as", "hc")
AUTOMATON_METHODS = ("pdfa", "fs", "as", "hc")


@dataclass
class EvalConfig:
    k: int = 5
    window: int = 5
    factor: float = 55.0
    methods: tuple[str, ...] = ALL_METHODS
    seed: int = 0
    target: str = "first"  # "first": predict symbol t+1; "last": final symbol
    learn_params: LearnParams = field(default_factory=LearnParams)

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; "
                             f"valid: {', '.join(ALL_METHODS)}")
        if self.target not in ("first", "last"):
            raise ValueError("target must be 'first' or 'last'")


@dataclass
class MethodMetrics:
    method: str
    perplexity_train: float | None = None
    perplexity_test: float | None = None
    top3_low: float | None = None
    top3_medium: float | None = None
    top3_high: float | None = None
    top3_utas: float | None = None
    avg_accuracy: float | None = None
    no_path_rate: float = 0.0
    mean_runtime: float = 0.0
    predictions: int = 0
    accuracy_resolved_only: float | None = None

    def as_row(self) -> list:
        return [self.method, self.perplexity_train, self.perplexity_test,
                self.top3_low, self.top3_medium, self.top3_high,
                self.top3_utas, self.avg_accuracy, self.no_path_rate,
                self.mean_runtime]


REPORT_COLUMNS = ["method", "perplexity_train", "perplexity_test", "top3_low",
                  "top3_medium", "top3_high", "top3_utas", "avg_accuracy",
                  "no_path_rate", "mean_runtime_s"]


@dataclass
class EvalReport:
    methods: dict[str, MethodMetrics]
    folds: int
    evaluated_traces: int
    excluded_short: int
    unseen_traces: int

    def write_csv(self, stream: TextIO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for name in ALL_METHODS:
            if name in self.methods:
                writer.writerow(
                    ["" if v is None else v for v in self.methods[name].as_row()])

    def to_json(self) -> dict:
        return {
            "folds": self.folds,
            "evaluated_traces": self.evaluated_traces,
            "excluded_short": self.excluded_short,
            "unseen_traces": self.unseen_traces,
            "methods": {name: vars(m) for name, m in self.methods.items()},
        }

    def write_json(self, stream: TextIO) -> None:
        json.dump(self.to_json(), stream, indent=2, sort_keys=True)
        stream.write("\n")


def top_stages(forecast: Forecast, k: int = 3) -> set[str]:
    """Stages of the k highest-ranked predicted actions.

    The reserved end-of-chain outcome is skipped: the evaluation target
    is the next action of a trace that is known to continue, so ranking
    is conditional on continuation.
    """
    symbols = [s for s, _ in forecast.top if s != END_SYMBOL][:k]
    return {stage_of(s) for s in symbols}


def top3_as_accuracy(predictions: Sequence[Forecast],
                     truths: Sequence[tuple[str, Severity]],
                     severity_filter: Severity | None = None) -> float | None:
    """Fraction of truths whose attack stage appears among the top-3
    predicted symbols' stages; no-path predictions are misses."""
    hits = total = 0
    for forecast, (truth_symbol, severity) in zip(predictions, truths):
        if severity_filter is not None and severity != severity_filter:
            continue
        total += 1
        if forecast.no_path:
            continue
        if stage_of(truth_symbol) in top_stages(forecast, 3):
            hits += 1
    return hits / total if total else None


def contains_subsequence(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    n, m = len(haystack), len(needle)
    if m == 0 or m > n:
        return m == 0
    needle = list(needle)
    return any(list(haystack[i:i + m]) == needle for i in range(n - m + 1))


def is_unseen(trace: Sequence[str], training: Sequence[Sequence[str]]) -> bool:
    """True when the trace occurs nowhere in the training data, not even
    as a contiguous part of a longer trace."""
    return not any(contains_subsequence(t, trace) for t in training)


def utas_accuracy(predictions: Sequence[Forecast],
                  truths: Sequence[tuple[str, Severity]],
                  unseen_flags: Sequence[bool]) -> float | None:
    kept_p = [p for p, u in zip(predictions, unseen_flags) if u]
    kept_t = [t for t, u in zip(truths, unseen_flags) if u]
    return top3_as_accuracy(kept_p, kept_t)


def _fold_indices(n: int, k: int, seed: int) -> list[list[int]]:
    order = list(range(n))
    random.Random(seed).shuffle(order)
    base, extra = divmod(n, k)
    folds, at = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(order[at:at + size])
        at += size
    return folds


def _prediction_point(trace: Trace, config: EvalConfig) -> tuple[list[str], str, Severity]:
    syms = trace.rendered
    wi = min(config.window, len(syms) - 1)
    if config.target == "first":
        window = syms[:wi]
        truth = trace.symbols[wi]
    else:
        window = syms[len(syms) - 1 - wi:len(syms) - 1]
        truth = trace.symbols[-1]
    return window, truth.rendered, truth.severity


def _split_80_20(traces: list[Trace], seed: int) -> tuple[list[Trace], list[Trace]]:
    order = list(traces)
    random.Random(seed).shuffle(order)
    cut = max(1, int(len(order) * 0.8))
    return order[:cut], order[cut:] or order[-1:]


def kfold(traces: Sequence[Trace], config: EvalConfig | None = None) -> EvalReport:
    """Cross-validated next-action prediction over all configured methods."""
    config = config or EvalConfig()
    eligible = [t for t in traces if len(t.symbols) >= 2]
    excluded = len(traces) - len(eligible)
    if len(eligible) < config.k:
        raise ValueError(f"need at least k={config.k} traces of length >= 2, "
                         f"have {len(eligible)}")
    folds = _fold_indices(len(eligible), config.k, config.seed)

    predictions: dict[str, list[Forecast]] = {m: [] for m in config.methods}
    runtimes: dict[str, list[float]] = {m: [] for m in config.methods}
    truths: list[tuple[str, Severity]] = []
    unseen_flags: list[bool] = []
    call_counter = 0

    for fold in folds:
        fold_set = set(fold)
        test = [eligible[i] for i in fold]
        train = [eligible[i] for i in range(len(eligible)) if i not in fold_set]
        train_syms = [t.rendered for t in train]
        suffix = learn([list(reversed(s)) for s in train_syms], config.learn_params)
        rm = reverse(suffix)
        pdfa = (learn(train_syms, config.learn_params, direction="prefix")
                if "pdfa" in config.methods else None)
        bigrams = (build_bigram_table(train_syms)
                   if "frequency" in config.methods else None)
        alphabet = sorted(suffix.alphabet)

        for trace in test:
            window, truth_symbol, truth_severity = _prediction_point(trace, config)
            truths.append((truth_symbol, truth_severity))
            unseen_flags.append(is_unseen(trace.rendered, train_syms))
            call_counter += 1
            for method in config.methods:
                started = time.perf_counter()
                if method == "random":
                    forecast = baseline_random(alphabet,
                                               seed=config.seed * 1_000_003
                                               + call_counter)
                elif method == "frequency":
                    forecast = baseline_frequency(bigrams, window[-1])
                elif method == "pdfa":
                    forecast = baseline_pdfa_predict(pdfa, window)
                else:
                    forecast = predict_next(rm, window, ForecastConfig(
                        strategy=method, factor=config.factor,
                        window=config.window))
                runtimes[method].append(time.perf_counter() - started)
                predictions[method].append(forecast)

    perp = _perplexities(eligible, config)
    report = EvalReport(methods={}, folds=config.k,
                        evaluated_traces=len(truths),
                        excluded_short=excluded,
                        unseen_traces=sum(unseen_flags))
    for method in config.methods:
        preds = predictions[method]
        buckets = {sev: top3_as_accuracy(preds, truths, sev)
                   for sev in (Severity.LOW, Severity.MEDIUM, Severity.HIGH)}
        utas = utas_accuracy(preds, truths, unseen_flags)
        parts = [v for v in [buckets[Severity.LOW], buckets[Severity.MEDIUM],
                             buckets[Severity.HIGH], utas] if v is not None]
        resolved = [i for i, p in enumerate(preds) if not p.no_path]
        resolved_acc = top3_as_accuracy([preds[i] for i in resolved],
                                        [truths[i] for i in resolved])
        metrics = MethodMetrics(
            method=method,
            top3_low=buckets[Severity.LOW],
            top3_medium=buckets[Severity.MEDIUM],
            top3_high=buckets[Severity.HIGH],
            top3_utas=utas,
            avg_accuracy=mean(parts) if parts else None,
            no_path_rate=sum(1 for p in preds if p.no_path) / len(preds),
            mean_runtime=mean(runtimes[method]),
            predictions=len(preds),
            accuracy_resolved_only=resolved_acc,
        )
        if method in AUTOMATON_METHODS:
            key = "prefix" if method == "pdfa" else "suffix"
            metrics.perplexity_train, metrics.perplexity_test = perp[key]
        report.methods[method] = metrics
    return report


def _perplexities(traces: list[Trace], config: EvalConfig) -> dict:
    """Train/test perplexity on an 80-20 split for both model directions."""
    train, test = _split_80_20(traces, config.seed)
    out = {}
    fwd_train = [t.rendered for t in train]
    fwd_test = [t.rendered for t in test]
    rev_train = [list(reversed(s)) for s in fwd_train]
    rev_test = [list(reversed(s)) for s in fwd_test]
    suffix = learn(rev_train, config.learn_params)
    out["suffix"] = (perplexity(suffix, rev_train), perplexity(suffix, rev_test))
    prefix = learn(fwd_train, config.learn_params, direction="prefix")
    out["prefix"] = (perplexity(prefix, fwd_train), perplexity(prefix, fwd_test))
    return out


# -- parameter sweeps ------------------------------------------------------

SWEEP_DEFAULTS = {
    "f": (1, 2, 5, 10, 25, 55, 95),
    "k": (5, 10, 15),
    "length": (2, 3, 4, 5, 6, 7),
}


@dataclass
class SweepTable:
    param: str
    values: list
    kind: str  # "accuracy" | "runtime"
    rows: dict[str, list[float | None]]

    def write_csv(self, stream: TextIO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        methods = [m for m in ALL_METHODS if m in self.rows]
        writer.writerow([self.param] + methods)
        for i, value in enumerate(self.values):
            writer.writerow([value] + [
                "" if self.rows[m][i] is None else self.rows[m][i]
                for m in methods])


def sweep(traces: Sequence[Trace], param: str,
          config: EvalConfig | None = None,
          values: Sequence | None = None) -> SweepTable:
    """Accuracy as a function of f or k, or runtime per window length."""
    config = config or EvalConfig()
    if param not in SWEEP_DEFAULTS:
        raise ValueError(f"unknown sweep parameter {param!r}; "
                         f"valid: {', '.join(SWEEP_DEFAULTS)}")
    values = list(values if values is not None else SWEEP_DEFAULTS[param])

    if param == "length":
        return _length_sweep(traces, values, config)

    rows: dict[str, list[float | None]] = {m: [] for m in config.methods}
    for value in values:
        if param == "f":
            cfg = replace(config, factor=float(value))
        else:
            cfg = replace(config, k=int(value))
        report = kfold(traces, cfg)
        for method in config.methods:
            rows[method].append(report.methods[method].avg_accuracy)
    return SweepTable(param=param, values=values, kind="accuracy", rows=rows)


def _length_sweep(traces: Sequence[Trace], values: list,
                  config: EvalConfig) -> SweepTable:
    """Mean prediction runtime per input window length, model fixed."""
    methods = [m for m in config.methods if m in AUTOMATON_METHODS]
    all_syms = [t.rendered for t in traces]
    suffix = learn([list(reversed(s)) for s in all_syms], config.learn_params)
    rm = reverse(suffix)
    pdfa = (learn(all_syms, config.learn_params, direction="prefix")
            if "pdfa" in methods else None)
    rows: dict[str, list[float | None]] = {m: [] for m in methods}
    for length in values:
        windows = [s[:length] for s in all_syms if len(s) >= length]
        if not windows:
            for m in methods:
                rows[m].append(None)
            continue
        for method in methods:
            started = time.perf_counter()
            for window in windows:
                if method == "pdfa":
                    baseline_pdfa_predict(pdfa, window)
                else:
                    predict_next(rm, window, ForecastConfig(
                        strategy=method, factor=config.factor,
                        window=max(int(length), 1)))
            rows[method].append((time.perf_counter() - started) / len(windows))
    return SweepTable(param="length", values=values, kind="runtime", rows=rows)
