"""Physical attack event recognition on top of the forest classifier.

Scenario labels follow the testbed convention: 1-6 short-circuit faults,
7-12 measurement data injection, 13-14 line maintenance, 15-20 remote
command injection, 21-30 and 35-40 relay setting tampering, 41 normal.
A user-supplied table maps each label to the physical component it targets.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

from cpsmine.criteria import INDICATOR_COLUMNS, CriteriaConfig, indicators
from cpsmine.errors import (
    UnknownComponent,
    UnknownLabelMapping,
    UnlabeledWindow,
    ValidationError,
)
from cpsmine.forest import Forest
from cpsmine.pmu import PMU_SIGNALS, PmuSample, signal_matrix
from cpsmine.topology import ComponentId, Kind, TopologyMap

LABEL_SET = frozenset(range(1, 31)) | frozenset(range(35, 42))
NORMAL_LABEL = 41

DATA_INJECTION_LABELS = frozenset(range(7, 13))
COMMAND_INJECTION_LABELS = frozenset(range(15, 21))
RELAY_TAMPER_LABELS = frozenset(range(21, 31)) | frozenset(range(35, 41))
FAULT_LABELS = frozenset(range(1, 7))
MAINTENANCE_LABELS = frozenset({13, 14})


def validate_label(code: int) -> int:
    if code not in LABEL_SET:
        raise ValidationError(f"unknown scenario label {code}")
    return code


@dataclass(frozen=True)
class LabeledWindow:
    """A training window: any sample slice plus its scenario label."""

    samples: tuple[PmuSample, ...]
    label: int

    def __post_init__(self) -> None:
        validate_label(self.label)
        if not self.samples:
            raise ValidationError("window must contain samples")


@dataclass(frozen=True)
class PhysicalAttackEvent:
    label: int
    component: ComponentId
    span: tuple[float, float]
    vote_share: float
    source: str = ""

    def __post_init__(self) -> None:
        validate_label(self.label)
        if self.label == NORMAL_LABEL:
            raise ValidationError("normal windows are not attack events")
        if not 0.0 < self.vote_share <= 1.0:
            raise ValidationError("vote_share must be in (0, 1]")

    @property
    def start(self) -> float:
        return self.span[0]


def feature_columns() -> list[str]:
    """Documented training column order: 3 stats per raw signal, then indicators."""
    cols = [f"{sig}|{stat}" for sig in PMU_SIGNALS for stat in ("mean", "min", "max")]
    cols.extend(INDICATOR_COLUMNS)
    return cols


def window_features(samples, cfg: CriteriaConfig) -> np.ndarray:
    """One feature row for a window, matching :func:`feature_columns`."""
    matrix = signal_matrix(list(samples))
    stats = np.empty(3 * matrix.shape[1])
    stats[0::3] = matrix.mean(axis=0)
    stats[1::3] = matrix.min(axis=0)
    stats[2::3] = matrix.max(axis=0)
    ind = indicators(list(samples), cfg)
    return np.concatenate([stats, np.array(ind.as_features())])


def majority_marker(samples) -> int:
    """Majority scenario marker among samples; ties go to the lower label."""
    markers = [s.marker for s in samples if s.marker is not None]
    if not markers:
        raise UnlabeledWindow(f"window at {samples[0].time} carries no scenario marker")
    counts = Counter(markers)
    top = max(counts.values())
    return min(label for label, n in counts.items() if n == top)


def window_label(window) -> int:
    return majority_marker(window.samples)


def build_training_matrix(windows, cfg: CriteriaConfig):
    """Stack windows into (features, labels, columns).

    Accepts :class:`LabeledWindow` items or screened windows whose samples
    carry markers. Missing values are rejected here; the feature layout is
    the one documented by :func:`feature_columns`.
    """
    columns = feature_columns()
    rows, labels = [], []
    for window in windows:
        label = window.label if hasattr(window, "label") else window_label(window)
        validate_label(label)
        row = window_features(window.samples, cfg)
        if not np.isfinite(row).all():
            raise ValidationError("window features contain non-finite values")
        rows.append(row)
        labels.append(label)
    if not rows:
        return np.zeros((0, len(columns))), np.zeros(0, dtype=int), columns
    return np.vstack(rows), np.array(labels, dtype=int), columns


def load_label_map(path) -> dict[int, ComponentId]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    out = {}
    for key, value in raw.items():
        label = validate_label(int(key))
        component = ComponentId.parse(value)
        if component.kind is not Kind.PHYSICAL:
            raise ValidationError(f"label {label} maps to non-physical {value}")
        out[label] = component
    return out


def recognize_pae(
    forest: Forest,
    windows,
    topo: TopologyMap,
    label_map: dict[int, ComponentId],
    cfg: CriteriaConfig,
) -> list[PhysicalAttackEvent]:
    """Classify screened windows and resolve their physical components.

    Normal-labeled windows are dropped; the rest become events time-sorted by
    window start.
    """
    events = []
    for window in windows:
        row = window_features(window.samples, cfg)
        label, share = forest.classify(row)
        if label == NORMAL_LABEL:
            continue
        if label not in label_map:
            raise UnknownLabelMapping(f"no component mapping for label {label}")
        component = label_map[label]
        if component not in topo.physical_nodes:
            raise UnknownComponent(str(component))
        events.append(
            PhysicalAttackEvent(
                label=label,
                component=component,
                span=window.span,
                vote_share=share,
                source=window.source,
            )
        )
    events.sort(key=lambda e: (e.span[0], str(e.component)))
    return events
