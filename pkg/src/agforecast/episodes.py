"""Aggregation of alerts into episodes (attacker actions) and sequences.

An episode groups a burst of same-stage alerts between one (attacker,
victim) pair into a single action with a start/end time, a severity and
a targeted service.  Bursts are found over fixed time buckets: an
episode opens at the first non-empty bucket and closes right before the
bucket where the frequency drops strictly below its opening value, or
at a gap of one or more empty buckets.  This is a deterministic
stand-in for slope-based burst detection; the bucket width is
configurable.

EDR alerts are too sparse for burst detection, so each one becomes its
own episode and sequences are grouped per host instead of per IP pair.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Sequence, TextIO

from .alerts import Alert, AttackStage, Severity

DEFAULT_BUCKET_SECONDS = 60.0

# Fixed port->service table so labels do not depend on /etc/services.
PORT_SERVICES = {
    20: "ftp-data", 21: "ftp", 22: "ssh", 23: "telnet", 25: "smtp",
    53: "dns", 67: "dhcp", 69: "tftp", 80: "http", 88: "kerberos",
    110: "pop3", 111: "rpcbind", 123: "ntp", 135: "msrpc", 137: "netbios",
    139: "netbios-ssn", 143: "imap", 161: "snmp", 389: "ldap",
    443: "https", 445: "smb", 465: "smtps", 514: "syslog", 587: "submission",
    636: "ldaps", 873: "rsync", 993: "imaps", 995: "pop3s", 1433: "mssql",
    1521: "oracle", 2049: "nfs", 3128: "squid", 3306: "mysql", 3389: "rdp",
    5060: "sip", 5432: "postgres", 5900: "vnc", 5985: "winrm",
    6379: "redis", 8080: "http-alt", 8443: "https-alt", 9200: "elastic",
    27017: "mongodb",
}


def service_name(port: int) -> str:
    return PORT_SERVICES.get(port, str(port))


@dataclass(frozen=True)
class Episode:
    """One aggregated attacker action."""

    start: datetime
    end: datetime
    attack_stage: AttackStage
    severity: Severity
    targeted_service: str | None
    alert_ids: tuple[int, ...]
    signatures: tuple[str, ...]


@dataclass
class EpisodeSequence:
    """Time-ordered episodes for one (attacker, victim) pair or host."""

    key: tuple[str, str] | str
    episodes: list[Episode]

    @property
    def attacker(self) -> str:
        return self.key[0] if isinstance(self.key, tuple) else self.key

    @property
    def victim(self) -> str:
        return self.key[1] if isinstance(self.key, tuple) else self.key

    @property
    def key_str(self) -> str:
        if isinstance(self.key, tuple):
            return f"{self.key[0]}->{self.key[1]}"
        return self.key


def _modal_service(alerts: Sequence[Alert]) -> str | None:
    ports = Counter(a.dst_port for a in alerts if a.dst_port is not None)
    if not ports:
        return None
    # Highest count first, smallest port breaks ties.
    best = min(ports.items(), key=lambda kv: (-kv[1], kv[0]))
    return service_name(best[0])


def _make_episode(indexed: Sequence[tuple[int, Alert]], with_service: bool) -> Episode:
    alerts = [a for _, a in indexed]
    return Episode(
        start=min(a.timestamp for a in alerts),
        end=max(a.timestamp for a in alerts),
        attack_stage=alerts[0].attack_stage,
        severity=max(a.severity for a in alerts),
        targeted_service=_modal_service(alerts) if with_service else None,
        alert_ids=tuple(i for i, _ in indexed),
        signatures=tuple(sorted({a.signature for a in alerts})),
    )


def detect_episodes(
    alerts: Sequence[Alert],
    indices: Sequence[int] | None = None,
    bucket_seconds: float = DEFAULT_BUCKET_SECONDS,
) -> list[Episode]:
    """Split same-stage alerts of one key into episodes via the bucket rule.

    ``alerts`` must share key and attack stage and be sorted by time.
    ``indices`` are the positions of these alerts in the source alert
    list (defaults to 0..n-1); they become the episodes' ``alert_ids``.
    """
    if not alerts:
        return []
    if indices is None:
        indices = range(len(alerts))
    t0 = alerts[0].timestamp
    buckets: dict[int, list[tuple[int, Alert]]] = defaultdict(list)
    for idx, alert in zip(indices, alerts):
        b = int((alert.timestamp - t0).total_seconds() // bucket_seconds)
        buckets[b].append((idx, alert))

    episodes: list[Episode] = []
    ordered = sorted(buckets)
    current: list[tuple[int, Alert]] = []
    start_count = 0
    prev_bucket: int | None = None
    for b in ordered:
        count = len(buckets[b])
        if not current:
            current = list(buckets[b])
            start_count = count
        elif b == prev_bucket + 1 and count >= start_count:
            current.extend(buckets[b])
        else:
            # Gap of >=1 empty bucket, or frequency below the opening value.
            episodes.append(_make_episode(current, with_service=True))
            current = list(buckets[b])
            start_count = count
        prev_bucket = b
    if current:
        episodes.append(_make_episode(current, with_service=True))
    return episodes


def _sorted_indexed(alerts: Sequence[Alert]) -> list[tuple[int, Alert]]:
    # Stable on input index so equal timestamps keep their order.
    return sorted(enumerate(alerts), key=lambda ia: (ia[1].timestamp, ia[0]))


def build_sequences(
    alerts: Sequence[Alert],
    mode: str,
    bucket_seconds: float = DEFAULT_BUCKET_SECONDS,
) -> list[EpisodeSequence]:
    """Group alerts per (src_ip, dst_ip) or per host and episodize them.

    In ids mode episodes are detected per attack stage and interleaved by
    start time; in edr mode every alert is already one action.
    """
    if mode not in ("ids", "edr"):
        raise ValueError(f"mode must be 'ids' or 'edr', got {mode!r}")

    sequences: list[EpisodeSequence] = []
    if mode == "ids":
        groups: dict[tuple[str, str], list[tuple[int, Alert]]] = defaultdict(list)
        for idx, alert in _sorted_indexed(alerts):
            if alert.src_ip is None or alert.dst_ip is None:
                continue
            groups[(alert.src_ip, alert.dst_ip)].append((idx, alert))
        for key in sorted(groups):
            by_stage: dict[str, list[tuple[int, Alert]]] = defaultdict(list)
            for idx, alert in groups[key]:
                by_stage[alert.attack_stage.rendered].append((idx, alert))
            episodes: list[Episode] = []
            for stage in sorted(by_stage):
                pairs = by_stage[stage]
                episodes.extend(detect_episodes(
                    [a for _, a in pairs],
                    indices=[i for i, _ in pairs],
                    bucket_seconds=bucket_seconds,
                ))
            episodes.sort(key=lambda e: (e.start, e.alert_ids[0]))
            sequences.append(EpisodeSequence(key=key, episodes=episodes))
    else:
        host_groups: dict[str, list[tuple[int, Alert]]] = defaultdict(list)
        for idx, alert in _sorted_indexed(alerts):
            if alert.host is None:
                continue
            host_groups[alert.host].append((idx, alert))
        for host in sorted(host_groups):
            episodes = [Episode(
                start=alert.timestamp,
                end=alert.timestamp,
                attack_stage=alert.attack_stage,
                severity=alert.severity,
                targeted_service=None,
                alert_ids=(idx,),
                signatures=(alert.signature,),
            ) for idx, alert in host_groups[host]]
            sequences.append(EpisodeSequence(key=host, episodes=episodes))
    return sequences


def episode_to_json(episode: Episode) -> dict:
    return {
        "start": episode.start.isoformat(),
        "end": episode.end.isoformat(),
        "stage": episode.attack_stage.rendered,
        "severity": str(episode.severity),
        "targeted_service": episode.targeted_service,
        "alert_ids": list(episode.alert_ids),
        "signatures": list(episode.signatures),
    }


def dump_episodes(sequences: Iterable[EpisodeSequence], stream: TextIO) -> None:
    """Debug dump: one JSON line per episode, tagged with its sequence key."""
    for seq in sequences:
        for episode in seq.episodes:
            record = {"key": seq.key_str}
            record.update(episode_to_json(episode))
            stream.write(json.dumps(record, sort_keys=True))
            stream.write("\n")
