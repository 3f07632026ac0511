"""PMU measurement trace parsing.

Each relay reports 29 measurement signals per timestamp: three-phase voltage
and current phasors, positive/negative/zero sequence components, frequency,
frequency delta, apparent impedance magnitude and angle, and a status flag.
CSV columns are named ``R<k>-<Signal>`` with an optional trailing ``marker``
column carrying the scenario label of supervised traces.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from cpsmine.errors import SchemaError

# Canonical per-relay signal order; column layout and feature naming follow it.
PMU_SIGNALS = (
    "PA1:VH", "PA2:VH", "PA3:VH",          # phase A-C voltage angle
    "PM1:V", "PM2:V", "PM3:V",             # phase A-C voltage magnitude
    "PA4:IH", "PA5:IH", "PA6:IH",          # phase A-C current angle
    "PM4:I", "PM5:I", "PM6:I",             # phase A-C current magnitude
    "PA7:VH", "PA8:VH", "PA9:VH",          # pos/neg/zero voltage angle
    "PM7:V", "PM8:V", "PM9:V",             # pos/neg/zero voltage magnitude
    "PA10:VH", "PA11:VH", "PA12:VH",       # pos/neg/zero current angle
    "PM10:V", "PM11:V", "PM12:V",          # pos/neg/zero current magnitude
    "F", "DF", "PA:Z", "PA:ZH", "S",       # frequency, dF/dt, impedance, status
)

_ANGLE_SIGNALS = frozenset(s for s in PMU_SIGNALS if s.endswith("H"))
_MAGNITUDE_SIGNALS = frozenset(
    s for s in PMU_SIGNALS if s.startswith("PM") or s == "PA:Z"
)

FIELD_BY_SIGNAL = {
    "PA1:VH": "va_angle", "PA2:VH": "vb_angle", "PA3:VH": "vc_angle",
    "PM1:V": "va_mag", "PM2:V": "vb_mag", "PM3:V": "vc_mag",
    "PA4:IH": "ia_angle", "PA5:IH": "ib_angle", "PA6:IH": "ic_angle",
    "PM4:I": "ia_mag", "PM5:I": "ib_mag", "PM6:I": "ic_mag",
    "PA7:VH": "seq_v_angle_pos", "PA8:VH": "seq_v_angle_neg", "PA9:VH": "seq_v_angle_zero",
    "PM7:V": "seq_v_mag_pos", "PM8:V": "seq_v_mag_neg", "PM9:V": "seq_v_mag_zero",
    "PA10:VH": "seq_i_angle_pos", "PA11:VH": "seq_i_angle_neg", "PA12:VH": "seq_i_angle_zero",
    "PM10:V": "seq_i_mag_pos", "PM11:V": "seq_i_mag_neg", "PM12:V": "seq_i_mag_zero",
    "F": "freq", "DF": "dfreq", "PA:Z": "z_mag", "PA:ZH": "z_angle", "S": "status",
}


def wrap_angle(value: float) -> float:
    """Normalize an angle in degrees to (-180, 180]."""
    return 180.0 - ((180.0 - value) % 360.0)


@dataclass(frozen=True)
class PmuSample:
    source: str
    time: float
    va_angle: float
    vb_angle: float
    vc_angle: float
    va_mag: float
    vb_mag: float
    vc_mag: float
    ia_angle: float
    ib_angle: float
    ic_angle: float
    ia_mag: float
    ib_mag: float
    ic_mag: float
    seq_v_angle_pos: float
    seq_v_angle_neg: float
    seq_v_angle_zero: float
    seq_v_mag_pos: float
    seq_v_mag_neg: float
    seq_v_mag_zero: float
    seq_i_angle_pos: float
    seq_i_angle_neg: float
    seq_i_angle_zero: float
    seq_i_mag_pos: float
    seq_i_mag_neg: float
    seq_i_mag_zero: float
    freq: float
    dfreq: float
    z_mag: float
    z_angle: float
    status: int
    marker: int | None = None

    def signal(self, name: str) -> float:
        return getattr(self, FIELD_BY_SIGNAL[name])


@dataclass
class PmuParseResult:
    samples: list[PmuSample]
    rejects: list[tuple[int, str]]

    def by_source(self) -> dict[str, list[PmuSample]]:
        out: dict[str, list[PmuSample]] = {}
        for sample in self.samples:
            out.setdefault(sample.source, []).append(sample)
        for series in out.values():
            series.sort(key=lambda s: s.time)
        return out


def _relay_columns(header: list[str]) -> dict[str, dict[str, int]]:
    """Map relay id -> signal -> column index; enforce complete relay blocks."""
    relays: dict[str, dict[str, int]] = {}
    for idx, column in enumerate(header):
        if "-" not in column:
            continue
        relay, _, signal = column.partition("-")
        if signal in FIELD_BY_SIGNAL:
            relays.setdefault(relay, {})[signal] = idx
    if not relays:
        raise SchemaError("no R<k>-<Signal> measurement columns in header")
    for relay, columns in relays.items():
        missing = [s for s in PMU_SIGNALS if s not in columns]
        if missing:
            raise SchemaError(f"relay {relay} missing signals: {missing}")
    return relays


def _row_samples(
    row: list[str], time: float, marker: int | None, relays: dict[str, dict[str, int]]
) -> list[PmuSample]:
    samples = []
    for relay in sorted(relays):
        fields: dict[str, float] = {}
        for signal, idx in relays[relay].items():
            value = float(row[idx])
            if not np.isfinite(value):
                raise ValueError(f"non-finite value in {relay}-{signal}")
            if signal in _MAGNITUDE_SIGNALS and value < 0.0:
                raise ValueError(f"negative magnitude in {relay}-{signal}")
            if signal in _ANGLE_SIGNALS:
                value = wrap_angle(value)
            fields[FIELD_BY_SIGNAL[signal]] = value
        status = int(round(fields.pop("status")))
        samples.append(
            PmuSample(source=relay, time=time, status=status, marker=marker, **fields)
        )
    return samples


def parse_pmu_csv(source, schema: dict[str, int] | None = None) -> PmuParseResult:
    """Parse a PMU CSV into one sample per relay per row.

    ``schema`` may override the header-derived column map (canonical column
    name -> index). Malformed rows are collected as rejects; header problems
    raise SchemaError.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = [c.strip() for c in next(reader)]
    except StopIteration:
        raise SchemaError("empty PMU file") from None
    if schema is not None:
        positions = sorted(schema.items(), key=lambda kv: kv[1])
        header = [name for name, _ in positions]
    if "time" not in header:
        raise SchemaError("PMU CSV needs a 'time' column")
    time_idx = header.index("time")
    marker_idx = header.index("marker") if "marker" in header else None
    relays = _relay_columns(header)
    samples: list[PmuSample] = []
    rejects: list[tuple[int, str]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            rejects.append((lineno, f"expected {len(header)} fields, got {len(row)}"))
            continue
        try:
            time = float(row[time_idx])
            if not np.isfinite(time):
                raise ValueError("non-finite time")
            marker = None
            if marker_idx is not None and row[marker_idx].strip():
                marker = int(row[marker_idx])
            samples.extend(_row_samples(row, time, marker, relays))
        except ValueError as exc:
            rejects.append((lineno, str(exc)))
    return PmuParseResult(samples, rejects)


def signal_matrix(samples: list[PmuSample]) -> np.ndarray:
    """Stack samples as an (n, 29) array in canonical signal order."""
    return np.array(
        [[s.signal(name) for name in PMU_SIGNALS] for s in samples], dtype=float
    )
