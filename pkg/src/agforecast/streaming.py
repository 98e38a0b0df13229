"""Streaming replay and the synthetic alert corpus generator.

``replay`` walks a time-sorted alert corpus in fixed intervals, runs the
full pipeline on the cumulative (or sliding-window) alert pool at every
boundary, and writes one snapshot directory per interval.  Models are
relearned from scratch each time; learning is fast enough at this scale
that incremental merging is not worth its complexity.

``synth_corpus`` produces seeded IDS-style campaigns for experiments and
tests: attacker/victim pairs walk escalation scripts with bursty alerts,
early stop-outs (partial paths), occasional off-script actions, and
service jitter, yielding the long-tailed length and severity shape of a
penetration-testing alert corpus.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

from .alerts import Alert, AttackStage, Severity
from .pipeline import PipelineConfig, run_pipeline, write_snapshot

_DURATION_RE = re.compile(r"^(\d+(?:\.\d+)?)([smhd])$")
_DURATION_UNITS = {"s": 1, "m": 60, "h": 3600, "d": 86400}


def parse_duration(text: str) -> timedelta:
    """Parse '90s', '30m', '1h', '2d' into a timedelta."""
    m = _DURATION_RE.match(text.strip())
    if not m:
        raise ValueError(f"cannot parse duration {text!r} (use e.g. 30m, 1h)")
    return timedelta(seconds=float(m.group(1)) * _DURATION_UNITS[m.group(2)])


@dataclass
class ReplayConfig:
    output_dir: str | Path
    interval: timedelta = timedelta(hours=1)
    history: str = "all"  # "all" or "sliding:<duration>"
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        if self.interval <= timedelta(0):
            raise ValueError("interval must be positive")
        if self.history != "all":
            kind, _, spec = self.history.partition(":")
            if kind != "sliding" or not spec:
                raise ValueError("history must be 'all' or 'sliding:<duration>'")
            parse_duration(spec)  # validated here, reused per window

    @property
    def sliding_window(self) -> timedelta | None:
        if self.history == "all":
            return None
        return parse_duration(self.history.partition(":")[2])


@dataclass
class SnapshotSummary:
    index: int
    boundary: datetime
    pool_alerts: int
    ag_count: int
    mean_vertices: float
    mean_edges: float

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "boundary": self.boundary.isoformat(),
            "pool_alerts": self.pool_alerts,
            "ag_count": self.ag_count,
            "mean_vertices": self.mean_vertices,
            "mean_edges": self.mean_edges,
        }


def replay(alerts: Sequence[Alert], config: ReplayConfig) -> list[SnapshotSummary]:
    """Re-run the pipeline at each interval boundary over the alert pool.

    Snapshot k lands in ``output_dir/t<k>/``; with history=all the pool
    is cumulative, so the final snapshot equals an offline run over the
    whole corpus.
    """
    ordered = sorted(alerts, key=lambda a: a.timestamp)
    outdir = Path(config.output_dir)
    if not ordered:
        return []
    t0 = ordered[0].timestamp
    span = ordered[-1].timestamp - t0
    windows = max(1, math.ceil(span / config.interval))
    sliding = config.sliding_window
    summaries = []
    for k in range(1, windows + 1):
        boundary = t0 + k * config.interval
        if sliding is None:
            pool = [a for a in ordered if a.timestamp <= boundary]
        else:
            pool = [a for a in ordered
                    if boundary - sliding < a.timestamp <= boundary]
        result = run_pipeline(pool, config.pipeline)
        write_snapshot(outdir / f"t{k}", result, config.pipeline)
        summaries.append(SnapshotSummary(
            index=k,
            boundary=boundary,
            pool_alerts=len(pool),
            ag_count=result.summary["ag_count"],
            mean_vertices=result.summary["mean_vertices"],
            mean_edges=result.summary["mean_edges"],
        ))
    return summaries


# -- synthetic corpus ------------------------------------------------------


@dataclass(frozen=True)
class ScriptStep:
    stage: str
    severity: Severity
    ports: tuple[int, ...]  # preferred destination ports, first is primary


@dataclass(frozen=True)
class CampaignScript:
    name: str
    steps: tuple[ScriptStep, ...]
    weight: float = 1.0


# Escalation ladders that share a vulnerability-discovery hub but end in
# distinct objectives.  The opener stage marks the campaign, so outcomes
# are predictable from context while the hub symbol alone has seven
# plausible successors; openers also carry most of the service jitter.
_OPENER_PORTS = (80, 22, 445)


def _script(name, opener, tail, weight=1.0, hub=True):
    steps = [ScriptStep(opener, Severity.LOW, _OPENER_PORTS)]
    if hub:
        steps.append(ScriptStep("infoD", Severity.LOW, (80,)))
    steps.append(ScriptStep("vulnD", Severity.MEDIUM, (80, 443)))
    steps.extend(tail)
    return CampaignScript(name, tuple(steps), weight)


DEFAULT_SCRIPTS = (
    _script("web-defacement", "serD", (
        ScriptStep("netDOS", Severity.MEDIUM, (53,)),
        ScriptStep("dManip", Severity.HIGH, (443,)),
    )),
    _script("data-theft", "hostD", (
        ScriptStep("privEsc", Severity.MEDIUM, (22,)),
        ScriptStep("exfil", Severity.HIGH, (443,)),
    )),
    _script("host-takeover", "surf", (
        ScriptStep("bruteF", Severity.MEDIUM, (22,)),
        ScriptStep("resHJ", Severity.HIGH, (443,)),
    )),
    _script("implant", "netSniff", (
        ScriptStep("remoteExec", Severity.MEDIUM, (445,)),
        ScriptStep("rootAccess", Severity.HIGH, (443,)),
    )),
    _script("smash-and-grab", "serD", (
        ScriptStep("exfil", Severity.HIGH, (443,)),
    ), weight=0.8, hub=False),
    _script("wiper", "hostD", (
        ScriptStep("dManip", Severity.HIGH, (443,)),
    ), weight=0.7),
    _script("hijack", "surf", (
        ScriptStep("resHJ", Severity.HIGH, (443,)),
    ), weight=0.7, hub=False),
)

NOISE_STEPS = (
    ScriptStep("netSniff", Severity.LOW, (53, 80)),
    ScriptStep("surf", Severity.LOW, (80, 443)),
    ScriptStep("hostD", Severity.LOW, (445,)),
    ScriptStep("bruteF", Severity.MEDIUM, (23, 22)),
    # Rare stage whose contexts are mostly novel at test time.
    ScriptStep("dnsTunnel", Severity.MEDIUM, (53,)),
)

# Aimless activity appended when a campaign fizzles out early or after a
# reached objective.  Always the same low-severity action: diverse trace
# endings would fragment the suffix model's root, which reads traces
# back-to-front.
TRAILING_STEP = ScriptStep("surf", Severity.LOW, (80,))


@dataclass
class CorpusSpec:
    attackers: int = 6
    victims: int = 10
    start: datetime = datetime(2024, 5, 1, 8, 0, 0, tzinfo=timezone.utc)
    duration: timedelta = timedelta(hours=10)
    scripts: tuple[CampaignScript, ...] = DEFAULT_SCRIPTS
    # Chance of proceeding to the next script step, by position.
    continue_probs: tuple[float, ...] = (0.88, 0.84, 0.82, 0.72)
    service_jitter: float = 0.30    # chance a step hits a non-primary port
    noise_prob: float = 0.15        # chance of an off-script action per gap
    trailing_noise: float = 0.45    # chance an early stop ends in low noise
    post_objective: float = 0.30    # chance of low mop-up after the objective
    start_spread: float = 0.92      # campaign starts within this fraction
    burst_size: tuple[int, int] = (2, 6)
    step_gap: tuple[int, int] = (240, 900)  # seconds between actions


def benchmark_spec() -> CorpusSpec:
    """Desk-scale stand-in corpus: >=300 traces, lengths peaking at 3-6,
    and a long-tailed trace-end severity distribution."""
    return CorpusSpec(attackers=26, victims=26)


def _attacker_ip(i: int) -> str:
    return f"10.1.{i // 250}.{i % 250 + 1}"


def _victim_ip(i: int) -> str:
    return f"10.2.{i // 250}.{i % 250 + 1}"


def synth_corpus(spec: CorpusSpec | None = None, seed: int = 0) -> list[Alert]:
    """Seeded synthetic IDS alert corpus; identical seeds give identical
    corpora."""
    spec = spec or CorpusSpec()
    rng = random.Random(seed)
    scripts = list(spec.scripts)
    weights = [s.weight for s in scripts]
    end = spec.start + spec.duration
    alerts: list[Alert] = []

    def emit_burst(when: datetime, src: str, dst: str, step: ScriptStep) -> None:
        port = step.ports[0]
        if len(step.ports) > 1 and rng.random() < spec.service_jitter:
            port = rng.choice(step.ports[1:])
        for n in range(rng.randint(*spec.burst_size)):
            alerts.append(Alert(
                timestamp=when + timedelta(seconds=n * 7 + rng.randint(0, 5)),
                signature=f"GEN {step.stage} activity on {port}",
                attack_stage=AttackStage.from_label(step.stage),
                severity=step.severity,
                source_kind="ids",
                src_ip=src, dst_ip=dst,
                src_port=rng.randint(40000, 60000), dst_port=port,
            ))

    for a in range(spec.attackers):
        for v in range(spec.victims):
            src, dst = _attacker_ip(a), _victim_ip(v)
            script = rng.choices(scripts, weights=weights, k=1)[0]
            offset = rng.uniform(0.0,
                                 spec.duration.total_seconds() * spec.start_spread)
            when = spec.start + timedelta(seconds=offset)
            for position, step in enumerate(script.steps):
                if when >= end:
                    break
                emit_burst(when, src, dst, step)
                if position == len(script.steps) - 1:
                    # Objective reached; sometimes the attacker keeps
                    # rummaging around afterwards.
                    if rng.random() < spec.post_objective:
                        for _ in range(rng.randint(1, 2)):
                            when += timedelta(seconds=rng.randint(*spec.step_gap))
                            if when >= end:
                                break
                            emit_burst(when, src, dst, TRAILING_STEP)
                    break
                p = spec.continue_probs[min(position, len(spec.continue_probs) - 1)]
                when += timedelta(seconds=rng.randint(*spec.step_gap))
                if rng.random() > p:
                    # Campaign fizzles out; sometimes with aimless low-
                    # severity activity afterwards.
                    if rng.random() < spec.trailing_noise and when < end:
                        emit_burst(when, src, dst, TRAILING_STEP)
                    break
                if rng.random() < spec.noise_prob and when < end:
                    emit_burst(when, src, dst, rng.choice(NOISE_STEPS))
                    when += timedelta(seconds=rng.randint(*spec.step_gap))

    alerts.sort(key=lambda alert: alert.timestamp)
    return alerts
