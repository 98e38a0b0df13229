"""Symbol traces for automaton training and forecasting.

Each episode sequence becomes one trace of ``stage|qualifier`` symbols
(qualifier = targeted service for IDS data, severity for EDR data).  A
trace ending in a low/medium-severity symbol is *partial*: the attack it
records is still unresolved.  Traces are written in an Abbadingo-style
text format; models are keyed bit-exactly to that file, so the writer is
deliberately strict (UTF-8, LF, single-class labels).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

from .alerts import Severity
from .episodes import EpisodeSequence

# Reserved forecast outcome for "the attack chain ends here".
END_SYMBOL = "⟨end⟩"  # ⟨end⟩


class EncodingError(ValueError):
    """A stage or qualifier cannot be rendered as a trace symbol."""


def stage_of(symbol: str) -> str:
    """Attack-stage part of a rendered ``stage|qualifier`` symbol."""
    return symbol.split("|", 1)[0]


@dataclass(frozen=True)
class Symbol:
    stage: str
    qualifier: str
    severity: Severity

    @property
    def rendered(self) -> str:
        return f"{self.stage}|{self.qualifier}"


@dataclass
class Trace:
    """Chronological symbol sequence for one sequence key."""

    key: str
    symbols: list[Symbol]

    @property
    def is_partial(self) -> bool:
        return self.symbols[-1].severity in (Severity.LOW, Severity.MEDIUM)

    @property
    def rendered(self) -> list[str]:
        return [s.rendered for s in self.symbols]


def _symbol_text(text: str) -> str:
    """Whitespace-free symbol component; '|' is the field separator."""
    cleaned = "".join(text.split())
    if "|" in cleaned:
        raise EncodingError(f"symbol component {text!r} contains '|'")
    if not cleaned:
        raise EncodingError("empty symbol component")
    return cleaned


def encode(sequences: Iterable[EpisodeSequence], mode: str) -> list[Trace]:
    """One trace per non-empty sequence, symbols in chronological order."""
    if mode not in ("ids", "edr"):
        raise ValueError(f"mode must be 'ids' or 'edr', got {mode!r}")
    traces = []
    for seq in sequences:
        symbols = []
        for episode in seq.episodes:
            stage = _symbol_text(episode.attack_stage.rendered)
            if mode == "ids":
                qualifier = _symbol_text(episode.targeted_service or "unknown")
            else:
                qualifier = str(episode.severity)
            symbols.append(Symbol(stage=stage, qualifier=qualifier,
                                  severity=episode.severity))
        if symbols:
            traces.append(Trace(key=seq.key_str, symbols=symbols))
    return traces


def symbol_severities(traces: Iterable[Trace]) -> dict[str, Severity]:
    """Map each rendered symbol to its observed severity (max if mixed)."""
    out: dict[str, Severity] = {}
    for trace in traces:
        for sym in trace.symbols:
            current = out.get(sym.rendered)
            if current is None or sym.severity > current:
                out[sym.rendered] = sym.severity
    return out


def write_training_file(
    traces: Sequence[Trace | Sequence[str]],
    stream: TextIO,
    reverse: bool = False,
) -> None:
    """Write traces in Abbadingo form: header, then ``1 <len> <symbols...>``.

    ``reverse=True`` writes each trace back-to-front, the orientation used
    to train the suffix model; ``False`` keeps chronological order for the
    prefix baseline.  All class labels are 1 (the learner uses counts, not
    labels).
    """
    rows = []
    alphabet = set()
    for trace in traces:
        symbols = trace.rendered if isinstance(trace, Trace) else list(trace)
        for sym in symbols:
            if any(ch.isspace() for ch in sym):
                raise EncodingError(f"symbol {sym!r} contains whitespace")
        alphabet.update(symbols)
        rows.append(list(reversed(symbols)) if reverse else symbols)
    stream.write(f"{len(rows)} {len(alphabet)}\n")
    for symbols in rows:
        stream.write(" ".join(["1", str(len(symbols))] + list(symbols)))
        stream.write("\n")


def read_training_file(stream: TextIO) -> list[list[str]]:
    """Read symbol sequences back from the Abbadingo text format."""
    header = stream.readline()
    if not header.strip():
        raise ValueError("missing trace file header")
    parts = header.split()
    if len(parts) != 2:
        raise ValueError(f"bad trace file header: {header!r}")
    n_traces = int(parts[0])
    rows = []
    for lineno, line in enumerate(stream, start=2):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) < 2:
            raise ValueError(f"line {lineno}: too few fields")
        length = int(fields[1])
        symbols = fields[2:]
        if len(symbols) != length:
            raise ValueError(
                f"line {lineno}: declared length {length}, got {len(symbols)}")
        rows.append(symbols)
    if len(rows) != n_traces:
        raise ValueError(f"header declares {n_traces} traces, file has {len(rows)}")
    return rows
