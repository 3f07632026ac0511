"""Cyber alarm log parsing, feature encoding, and redundant-alarm aggregation.

An alarm record is the classic seven-tuple (cid, time, src ip, dst ip,
src port, dst port, signature name) extended with the reporting cyber
component. Logs arrive either as our canonical CSV or as snort "fast"
alert lines.
"""

from __future__ import annotations

import csv
import hashlib
import io
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from cpsmine.errors import FormatError, SchemaError
from cpsmine.topology import ComponentId, Kind

ALARM_CSV_HEADER = "cid,time,src_ip,dst_ip,src_port,dst_port,sig_name,component"

# Default signature dictionary; position determines the short code s1..s8.
DEFAULT_SIGNATURES = (
    "sshd_buffer_overflow",
    "ftp_rhosts",
    "rsh_login",
    "local_buffer_overflow",
    "sadmind_ping",
    "rdp_inception",
    "rootkit",
    "landmodule",
)


@dataclass(frozen=True)
class AlarmEvent:
    cid: str
    time: float
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    sig_name: str
    component: ComponentId
    count: int = 1  # duplicates folded into this record by aggregation
    sig_known: bool = True


@dataclass
class AlarmParseResult:
    events: list[AlarmEvent]
    rejects: list[tuple[int, str]]  # (1-based line number, reason)


def sig_code(sig_name: str, signatures=DEFAULT_SIGNATURES) -> str:
    """Short code for a signature: ``s<k>`` for dictionary entries, else the raw name."""
    if re.fullmatch(r"s[1-9][0-9]*", sig_name):
        return sig_name
    try:
        return f"s{tuple(signatures).index(sig_name) + 1}"
    except ValueError:
        return sig_name


def _parse_time(token: str, epoch_mode: bool) -> float:
    if epoch_mode:
        value = float(token)
    else:
        value = datetime.fromisoformat(token).replace(tzinfo=timezone.utc).timestamp()
    if not np.isfinite(value):
        raise ValueError("non-finite time")
    return value


def _detect_epoch_mode(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _parse_csv(lines, signatures) -> AlarmParseResult:
    events: list[AlarmEvent] = []
    rejects: list[tuple[int, str]] = []
    reader = csv.reader(lines)
    epoch_mode: bool | None = None
    header_seen = False
    for lineno, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if not header_seen:
            if [c.strip() for c in row] != ALARM_CSV_HEADER.split(","):
                raise SchemaError(
                    f"alarm CSV header must be exactly {ALARM_CSV_HEADER!r}"
                )
            header_seen = True
            continue
        if len(row) != 8:
            rejects.append((lineno, f"expected 8 fields, got {len(row)}"))
            continue
        cid, time_s, src_ip, dst_ip, sport_s, dport_s, sig, comp_s = (
            c.strip() for c in row
        )
        if epoch_mode is None:
            epoch_mode = _detect_epoch_mode(time_s)
        try:
            time = _parse_time(time_s, epoch_mode)
        except ValueError:
            rejects.append((lineno, f"unparseable time {time_s!r}"))
            continue
        try:
            sport, dport = int(sport_s), int(dport_s)
        except ValueError:
            rejects.append((lineno, "non-integer port"))
            continue
        if not (0 <= sport <= 65535 and 0 <= dport <= 65535):
            rejects.append((lineno, "port out of range"))
            continue
        try:
            component = ComponentId.parse(comp_s)
        except Exception:
            rejects.append((lineno, f"bad component id {comp_s!r}"))
            continue
        if component.kind is not Kind.CYBER:
            rejects.append((lineno, f"component {comp_s} is not a cyber node"))
            continue
        events.append(
            AlarmEvent(
                cid=cid,
                time=time,
                src_ip=src_ip,
                dst_ip=dst_ip,
                src_port=sport,
                dst_port=dport,
                sig_name=sig,
                component=component,
                sig_known=sig in signatures or bool(re.fullmatch(r"s[1-9][0-9]*", sig)),
            )
        )
    return AlarmParseResult(events, rejects)


_SNORT_RE = re.compile(
    r"^(?P<ts>\d{2}/\d{2}-\d{2}:\d{2}:\d{2}\.\d+)\s+\[\*\*\]\s+\[[^\]]*\]\s+"
    r"(?P<sig>.*?)\s+\[\*\*\].*?\{\w+\}\s+"
    r"(?P<src>[\d.]+):(?P<sport>\d+)\s+->\s+(?P<dst>[\d.]+):(?P<dport>\d+)\s*$"
)


def _parse_snort_fast(lines, signatures, component, year) -> AlarmParseResult:
    if component is None:
        raise SchemaError("snort_fast logs need the reporting component")
    events: list[AlarmEvent] = []
    rejects: list[tuple[int, str]] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        m = _SNORT_RE.match(line)
        if not m:
            rejects.append((lineno, "does not match snort fast format"))
            continue
        stamp = datetime.strptime(f"{year}/{m.group('ts')}", "%Y/%m/%d-%H:%M:%S.%f")
        sport, dport = int(m.group("sport")), int(m.group("dport"))
        if not (0 <= sport <= 65535 and 0 <= dport <= 65535):
            rejects.append((lineno, "port out of range"))
            continue
        sig = m.group("sig").strip()
        events.append(
            AlarmEvent(
                cid=f"snort-{lineno}",
                time=stamp.replace(tzinfo=timezone.utc).timestamp(),
                src_ip=m.group("src"),
                dst_ip=m.group("dst"),
                src_port=sport,
                dst_port=dport,
                sig_name=sig,
                component=component,
                sig_known=sig in signatures,
            )
        )
    return AlarmParseResult(events, rejects)


def parse_alarm_log(
    source,
    format: str = "csv",
    signatures=DEFAULT_SIGNATURES,
    component: ComponentId | None = None,
    year: int = 2000,
) -> AlarmParseResult:
    """Parse an alarm log into events plus a rejects report.

    ``source`` is an iterable of lines or an open text stream. Malformed
    lines land in ``rejects``; FormatError is raised only when the log has
    data lines and none of them parse.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    if format == "csv":
        result = _parse_csv(source, signatures)
    elif format == "snort_fast":
        result = _parse_snort_fast(source, signatures, component, year)
    else:
        raise ValueError(f"unknown alarm log format {format!r}")
    if result.rejects and not result.events:
        raise FormatError(f"no alarm line parsed ({len(result.rejects)} rejects)")
    return result


@dataclass(frozen=True)
class EncoderConfig:
    """Dimensions of the hashed categorical encoding."""

    ip_buckets: int = 16
    port_buckets: int = 8
    sig_buckets: int = 12
    component_buckets: int = 8

    @property
    def dim(self) -> int:
        return 1 + 2 * self.ip_buckets + 2 * self.port_buckets + self.sig_buckets + self.component_buckets


def _bucket(value: str, buckets: int) -> int:
    digest = hashlib.md5(value.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % buckets


def encode_alarms(events: list[AlarmEvent], config: EncoderConfig | None = None) -> np.ndarray:
    """Encode events as fixed-length vectors: scaled time plus hashed one-hots.

    The time feature is scaled to [0, 1] over the batch span; a single-event
    batch (or zero span) encodes time as 0.0. Identical events always map to
    identical vectors.
    """
    if not events:
        raise ValueError("cannot encode an empty event batch")
    cfg = config or EncoderConfig()
    times = np.array([e.time for e in events], dtype=float)
    t0, t1 = times.min(), times.max()
    span = t1 - t0
    out = np.zeros((len(events), cfg.dim), dtype=float)
    for row, event in enumerate(events):
        col = 0
        out[row, col] = 0.0 if span == 0 else (event.time - t0) / span
        col += 1
        for value, buckets in (
            (event.src_ip, cfg.ip_buckets),
            (event.dst_ip, cfg.ip_buckets),
            (str(event.src_port), cfg.port_buckets),
            (str(event.dst_port), cfg.port_buckets),
            (event.sig_name, cfg.sig_buckets),
            (str(event.component), cfg.component_buckets),
        ):
            out[row, col + _bucket(value, buckets)] = 1.0
            col += buckets
    return out


def aggregate(events, result, merge_window: float) -> list[AlarmEvent]:
    """Collapse redundant alarms within each fuzzy cluster.

    Events of one cluster sharing (sig_name, src_ip, dst_ip, component) merge
    while their times stay within ``merge_window`` of the group's current
    representative; the earliest time is kept and duplicate counts summed.
    The output is chronologically sorted and never larger than the input.
    """
    if result.membership.shape[1] != len(events):
        raise ValueError("clustering result does not cover these events")
    assignment = np.argmax(result.membership, axis=0)
    groups: dict[tuple, list[AlarmEvent]] = {}
    order = sorted(range(len(events)), key=lambda i: (events[i].time, events[i].cid))
    for i in order:
        e = events[i]
        key = (int(assignment[i]), e.sig_name, e.src_ip, e.dst_ip, e.component)
        groups.setdefault(key, []).append(e)
    merged: list[AlarmEvent] = []
    for bucket in groups.values():
        rep: AlarmEvent | None = None
        for e in bucket:
            if rep is not None and e.time - rep.time <= merge_window:
                rep = replace(rep, count=rep.count + e.count)
            else:
                if rep is not None:
                    merged.append(rep)
                rep = e
        merged.append(rep)
    merged.sort(key=lambda e: (e.time, e.cid))
    return merged
