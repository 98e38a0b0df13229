"""Parsing and normalization of IDS and EDR alert records.

Raw detections from a network IDS (CSV or JSON-lines) or an endpoint
detection system (CSV) are turned into a single normalized ``Alert``
type.  IDS signatures are mapped to attack stages through an external
stage-map config; EDR records carry MITRE tactic/technique fields and a
severity of their own.  EDR records naming several hosts are split into
one alert per host, and host names are replaced by a keyed hash.
"""

from __future__ import annotations

import csv
import fnmatch
import hashlib
import hmac
import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import IntEnum
from typing import Iterable, TextIO


class Severity(IntEnum):
    """Alert severity; ordering low < medium < high is relied upon."""

    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @classmethod
    def from_string(cls, s: str) -> "Severity":
        try:
            return cls[s.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown severity {s!r}") from None

    def __str__(self) -> str:
        return self.name.lower()


class IngestError(Exception):
    """Base class for ingest failures."""


class InputSchemaError(IngestError):
    """The input file does not have the declared column layout."""


class UnknownSignatureError(IngestError):
    """An IDS signature resolved to no stage-map rule and no fallback."""

    def __init__(self, signature: str):
        super().__init__(f"no stage mapping for signature {signature!r} "
                         f"and no fallback rule configured")
        self.signature = signature


class StageMapError(IngestError):
    """The stage-map config file is malformed."""


class AnonymizationCollisionError(IngestError):
    """Two distinct host names hashed to the same anonymized label."""


@dataclass(frozen=True)
class AttackStage:
    """Attack-stage label, optionally broken into MITRE tactic/technique."""

    tactic: str
    technique: str | None
    rendered: str

    @classmethod
    def from_label(cls, label: str) -> "AttackStage":
        return cls(tactic=label, technique=None, rendered=label)

    @classmethod
    def from_mitre(cls, tactics: list[str], techniques: list[str]) -> "AttackStage":
        """Render ``Tactic.Technique`` pairs, preserving record order.

        With several tactics and/or techniques every combination is kept
        (technique-major order), e.g. tactics [T1, T2] and technique [Q1]
        render as ``T1.Q1, T2.Q1``.
        """
        if not tactics and not techniques:
            raise ValueError("record has neither tactic nor technique")
        if not techniques:
            rendered = ", ".join(tactics)
        elif not tactics:
            rendered = ", ".join(techniques)
        else:
            rendered = ", ".join(f"{t}.{q}" for q in techniques for t in tactics)
        return cls(
            tactic=", ".join(tactics),
            technique=", ".join(techniques) or None,
            rendered=rendered,
        )


@dataclass(frozen=True)
class Alert:
    """One normalized detection event."""

    timestamp: datetime
    signature: str
    attack_stage: AttackStage
    severity: Severity
    source_kind: str  # "ids" | "edr"
    src_ip: str | None = None
    dst_ip: str | None = None
    src_port: int | None = None
    dst_port: int | None = None
    host: str | None = None


@dataclass
class ParseReport:
    """Counts of parsed and skipped records, with skip reasons."""

    parsed: int = 0
    skipped: int = 0
    reasons: Counter = field(default_factory=Counter)

    def skip(self, reason: str) -> None:
        self.skipped += 1
        self.reasons[reason] += 1

    def summary(self) -> str:
        parts = [f"parsed={self.parsed} skipped={self.skipped}"]
        for reason, n in sorted(self.reasons.items()):
            parts.append(f"  {reason}: {n}")
        return "\n".join(parts)


@dataclass
class StageMap:
    """Ordered glob rules mapping IDS signatures to (stage, severity).

    The first matching rule wins, so a trailing ``*`` rule acts as the
    opt-in fallback for unmapped signatures.  Without one, an unmapped
    signature is a hard error: silently mis-mapped alerts corrupt every
    downstream trace.
    """

    rules: list[tuple[str, str, Severity]] = field(default_factory=list)

    @classmethod
    def parse(cls, lines: Iterable[str], origin: str = "<stagemap>") -> "StageMap":
        rules = []
        for lineno, raw in enumerate(lines, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise StageMapError(
                    f"{origin}:{lineno}: expected "
                    f"<pattern><TAB><stage><TAB><severity>, got {line!r}")
            pattern, stage, sev = (p.strip() for p in parts)
            if not pattern or not stage:
                raise StageMapError(f"{origin}:{lineno}: empty pattern or stage")
            try:
                severity = Severity.from_string(sev)
            except ValueError as e:
                raise StageMapError(f"{origin}:{lineno}: {e}") from None
            rules.append((pattern, stage, severity))
        return cls(rules=rules)

    @classmethod
    def load(cls, path: str) -> "StageMap":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh, origin=path)

    def lookup(self, signature: str) -> tuple[str, Severity]:
        for pattern, stage, severity in self.rules:
            if fnmatch.fnmatchcase(signature, pattern):
                return stage, severity
        raise UnknownSignatureError(signature)


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    text = value.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def anonymize_host(host: str, key: str) -> str:
    """Stable keyed hash of a host name, truncated to 8 hex chars."""
    digest = hmac.new(key.encode("utf-8"), host.encode("utf-8"),
                      hashlib.sha256).hexdigest()
    return digest[:8]


IDS_FIELDS = ("timestamp", "signature", "src_ip", "src_port", "dst_ip", "dst_port")
EDR_FIELDS = ("timestamp", "signature", "severity", "tactics", "techniques", "hosts")


def _check_header(present: Iterable[str], required: tuple[str, ...], kind: str) -> None:
    have = set(present)
    for name in required:
        if name not in have:
            raise InputSchemaError(f"{kind} input is missing field {name!r}")


def _iter_ids_records(stream: TextIO):
    """Yield (lineno, dict) from CSV or JSON-lines IDS input."""
    first = stream.read(1)
    if not first:
        return
    rest = stream.read()
    content = first + rest
    if content.lstrip().startswith("{"):
        for lineno, line in enumerate(content.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                yield lineno, None
                continue
            if not isinstance(record, dict):
                yield lineno, None
                continue
            yield lineno, record
    else:
        reader = csv.DictReader(content.splitlines())
        _check_header(reader.fieldnames or (), IDS_FIELDS, "ids")
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def _parse_port(value) -> int | None:
    if value is None:
        return None
    text = str(value).strip()
    if not text:
        return None
    port = int(text)
    if not 0 <= port <= 65535:
        raise ValueError(f"port {port} out of range")
    return port


def parse_ids(stream: TextIO, stage_map: StageMap) -> tuple[list[Alert], ParseReport]:
    """Parse IDS records into alerts, mapping signatures through ``stage_map``.

    Malformed records are skipped and counted in the report.  A signature
    with no mapping and no fallback raises :class:`UnknownSignatureError`.
    """
    alerts: list[Alert] = []
    report = ParseReport()
    for lineno, record in _iter_ids_records(stream):
        if record is None:
            report.skip("malformed line")
            continue
        signature = (record.get("signature") or "").strip()
        src_ip = (record.get("src_ip") or "").strip() or None
        dst_ip = (record.get("dst_ip") or "").strip() or None
        if not signature:
            report.skip("missing signature")
            continue
        if src_ip is None or dst_ip is None:
            report.skip("missing src_ip/dst_ip")
            continue
        try:
            ts = parse_timestamp(str(record.get("timestamp") or ""))
        except ValueError:
            report.skip("unparseable timestamp")
            continue
        try:
            src_port = _parse_port(record.get("src_port"))
            dst_port = _parse_port(record.get("dst_port"))
        except ValueError:
            report.skip("invalid port")
            continue
        stage, severity = stage_map.lookup(signature)
        alerts.append(Alert(
            timestamp=ts,
            signature=signature,
            attack_stage=AttackStage.from_label(stage),
            severity=severity,
            source_kind="ids",
            src_ip=src_ip,
            dst_ip=dst_ip,
            src_port=src_port,
            dst_port=dst_port,
        ))
        report.parsed += 1
    return alerts, report


def _split_list(value: str) -> list[str]:
    return [part.strip() for part in value.split(";") if part.strip()]


def parse_edr(stream: TextIO, anon_key: str = "agf") -> tuple[list[Alert], ParseReport]:
    """Parse EDR records into alerts, one per (record, host) pair.

    List fields (tactics, techniques, hosts) are ``;``-separated.  Host
    names are anonymized with a keyed hash so that output is stable for a
    fixed key but unlinkable without it.
    """
    alerts: list[Alert] = []
    report = ParseReport()
    seen_hashes: dict[str, str] = {}
    reader = csv.DictReader(stream)
    _check_header(reader.fieldnames or (), EDR_FIELDS, "edr")
    for record in reader:
        signature = (record.get("signature") or "").strip()
        if not signature:
            report.skip("missing signature")
            continue
        try:
            ts = parse_timestamp(str(record.get("timestamp") or ""))
        except ValueError:
            report.skip("unparseable timestamp")
            continue
        try:
            severity = Severity.from_string(record.get("severity") or "")
        except ValueError:
            report.skip("invalid severity")
            continue
        tactics = _split_list(record.get("tactics") or "")
        techniques = _split_list(record.get("techniques") or "")
        if not tactics and not techniques:
            report.skip("missing tactic/technique")
            continue
        hosts = _split_list(record.get("hosts") or "")
        if not hosts:
            report.skip("empty host list")
            continue
        stage = AttackStage.from_mitre(tactics, techniques)
        for host in hosts:
            label = anonymize_host(host, anon_key)
            clash = seen_hashes.get(label)
            if clash is not None and clash != host:
                raise AnonymizationCollisionError(
                    f"hosts {clash!r} and {host!r} collide on label {label!r}; "
                    f"use a different anonymization key")
            seen_hashes[label] = host
            alerts.append(Alert(
                timestamp=ts,
                signature=signature,
                attack_stage=stage,
                severity=severity,
                source_kind="edr",
                host=label,
            ))
            report.parsed += 1
    return alerts, report


def alert_to_json(alert: Alert) -> dict:
    """JSON-serializable form of an alert (normalized alert file schema)."""
    return {
        "timestamp": alert.timestamp.isoformat(),
        "signature": alert.signature,
        "stage": {
            "tactic": alert.attack_stage.tactic,
            "technique": alert.attack_stage.technique,
            "rendered": alert.attack_stage.rendered,
        },
        "severity": str(alert.severity),
        "source_kind": alert.source_kind,
        "src_ip": alert.src_ip,
        "dst_ip": alert.dst_ip,
        "src_port": alert.src_port,
        "dst_port": alert.dst_port,
        "host": alert.host,
    }


def alert_from_json(obj: dict) -> Alert:
    stage = obj["stage"]
    return Alert(
        timestamp=parse_timestamp(obj["timestamp"]),
        signature=obj["signature"],
        attack_stage=AttackStage(
            tactic=stage["tactic"],
            technique=stage.get("technique"),
            rendered=stage["rendered"],
        ),
        severity=Severity.from_string(obj["severity"]),
        source_kind=obj["source_kind"],
        src_ip=obj.get("src_ip"),
        dst_ip=obj.get("dst_ip"),
        src_port=obj.get("src_port"),
        dst_port=obj.get("dst_port"),
        host=obj.get("host"),
    )


def write_alerts(alerts: Iterable[Alert], stream: TextIO) -> None:
    for alert in alerts:
        stream.write(json.dumps(alert_to_json(alert), sort_keys=True))
        stream.write("\n")


def read_alerts(stream: TextIO) -> list[Alert]:
    return [alert_from_json(json.loads(line))
            for line in stream if line.strip()]
