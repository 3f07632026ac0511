"""Physical feature criteria for abnormal windows plus the three key indicators.

Three window checks screen raw PMU series for tampering symptoms: phase
imbalance of angles or magnitudes, nonzero negative/zero sequence current,
and relative impedance change. The indicator vector summarizes a window for
classification: mean phase-difference deviation for voltage and current
angles, worst-sample amplitude fluctuation rate, and a two-sided sequence
current mutation flag.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from cpsmine.errors import WindowTooShort
from cpsmine.pmu import PmuSample, wrap_angle

logger = logging.getLogger(__name__)

FEATURE1 = "feature1"
FEATURE2 = "feature2"
FEATURE3 = "feature3"


@dataclass(frozen=True)
class CriteriaConfig:
    eps1: float = 5.0          # degrees, angle imbalance
    eps2: float = 1000.0       # volts, voltage magnitude imbalance
    eps3: float = 20.0         # amperes, current magnitude imbalance
    eps4: float = 0.2          # relative impedance change
    eps_zero: float = 2.0      # amperes, sequence-current noise floor
    window: int = 10           # samples per screening window
    tau_delta: int = 1         # samples, mutation step
    mutation_fraction: float = 0.2

    def __post_init__(self) -> None:
        for name in ("eps1", "eps2", "eps3", "eps4", "eps_zero", "mutation_fraction"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.tau_delta < 1:
            raise ValueError("tau_delta must be >= 1")


@dataclass(frozen=True)
class IndicatorVector:
    eta_u: float
    eta_i: float
    delta_i: float
    delta_u: float
    tau: int
    mean_degenerate: bool = False

    def as_features(self) -> tuple[float, float, float, float, float]:
        return (self.eta_u, self.eta_i, self.delta_i, self.delta_u, float(self.tau))


INDICATOR_COLUMNS = ("eta_u", "eta_i", "delta_i", "delta_u", "tau")


@dataclass
class AbnormalWindow:
    source: str
    span: tuple[float, float]
    fired: set[str]
    samples: list[PmuSample]

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("abnormal window must contain samples")
        if not self.fired:
            raise ValueError("abnormal window must have fired at least one feature")


def _wrapped_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 180.0 - ((180.0 - (a - b)) % 360.0)


def _angle_imbalance(a, b, c) -> np.ndarray:
    """|difference of the two consecutive phase-angle differences| per sample."""
    return np.abs(_wrapped_diff(a, b) - _wrapped_diff(b, c))


def _mag_imbalance(a, b, c) -> np.ndarray:
    return np.abs((a - b) - (b - c))


def _columns(window: list[PmuSample], names: tuple[str, ...]) -> list[np.ndarray]:
    return [np.array([getattr(s, n) for s in window], dtype=float) for n in names]


def _feature1_per_sample(window: list[PmuSample], cfg: CriteriaConfig) -> np.ndarray:
    va, vb, vc = _columns(window, ("va_angle", "vb_angle", "vc_angle"))
    ua, ub, uc = _columns(window, ("va_mag", "vb_mag", "vc_mag"))
    ia, ib, ic = _columns(window, ("ia_mag", "ib_mag", "ic_mag"))
    return (
        (_angle_imbalance(va, vb, vc) >= cfg.eps1)
        | (_mag_imbalance(ua, ub, uc) >= cfg.eps2)
        | (_mag_imbalance(ia, ib, ic) >= cfg.eps3)
    )


def _feature2_per_sample(window: list[PmuSample], cfg: CriteriaConfig) -> np.ndarray:
    neg, zero = _columns(window, ("seq_i_mag_neg", "seq_i_mag_zero"))
    return (np.abs(neg) > cfg.eps_zero) | (np.abs(zero) > cfg.eps_zero)


def check_feature1(window: list[PmuSample], cfg: CriteriaConfig) -> bool:
    """Phase imbalance persists through the whole window."""
    if len(window) < cfg.window:
        raise WindowTooShort(f"need {cfg.window} samples, got {len(window)}")
    return bool(_feature1_per_sample(window, cfg).all())


def check_feature2(window: list[PmuSample], cfg: CriteriaConfig) -> bool:
    """Negative or zero sequence current stays above the noise floor throughout."""
    if len(window) < cfg.window:
        raise WindowTooShort(f"need {cfg.window} samples, got {len(window)}")
    return bool(_feature2_per_sample(window, cfg).all())


def check_feature3(window: list[PmuSample], cfg: CriteriaConfig) -> bool:
    """Impedance shifts relative to the window start for every later sample.

    Samples with zero impedance cannot anchor the relative change; they are
    skipped and logged. A window with no evaluable pair does not fire.
    """
    if len(window) < 2:
        raise WindowTooShort(f"need 2 samples, got {len(window)}")
    z = np.array([s.z_mag for s in window], dtype=float)
    later = z[1:]
    valid = later != 0.0
    if not valid.any():
        logger.warning("impedance check degenerate: all later samples are 0")
        return False
    if not valid.all():
        logger.warning("impedance check skipped %d zero samples", int((~valid).sum()))
    change = np.abs((later[valid] - z[0]) / later[valid])
    return bool((change > cfg.eps4).all())


def _fired_positions(series: list[PmuSample], cfg: CriteriaConfig) -> dict[str, np.ndarray]:
    """Per sliding-window start position, which features fire (stride 1)."""
    n = len(series)
    w = cfg.window
    if n < w:
        empty = np.zeros(0, dtype=bool)
        return {FEATURE1: empty, FEATURE2: empty, FEATURE3: empty}
    per1 = _feature1_per_sample(series, cfg)
    per2 = _feature2_per_sample(series, cfg)
    f1 = np.lib.stride_tricks.sliding_window_view(per1, w).all(axis=1)
    f2 = np.lib.stride_tricks.sliding_window_view(per2, w).all(axis=1)
    if w >= 2:
        z = np.array([s.z_mag for s in series], dtype=float)
        count = n - w + 1
        ok = np.ones(count, dtype=bool)
        any_valid = np.zeros(count, dtype=bool)
        for d in range(1, w):
            z0 = z[:count]
            zd = z[d : d + count]
            valid = zd != 0.0
            change = np.zeros(count)
            np.divide(np.abs(zd - z0), np.abs(zd), out=change, where=valid)
            ok &= ~valid | (change > cfg.eps4)
            any_valid |= valid
        f3 = ok & any_valid
    else:
        f3 = np.zeros(n - w + 1, dtype=bool)
    return {FEATURE1: f1, FEATURE2: f2, FEATURE3: f3}


def screen_candidates(samples, cfg: CriteriaConfig) -> list[AbnormalWindow]:
    """Slide a window over each relay's series and merge fired spans.

    ``samples`` is a flat sample list or a mapping relay -> series. Output
    windows are pairwise disjoint per relay and sorted by (start time, relay).
    """
    if isinstance(samples, dict):
        by_source = {k: sorted(v, key=lambda s: s.time) for k, v in samples.items()}
    else:
        by_source = {}
        for sample in samples:
            by_source.setdefault(sample.source, []).append(sample)
        for series in by_source.values():
            series.sort(key=lambda s: s.time)
    windows: list[AbnormalWindow] = []
    for source in sorted(by_source):
        series = by_source[source]
        fired = _fired_positions(series, cfg)
        positions = sorted(
            set(np.nonzero(fired[FEATURE1])[0])
            | set(np.nonzero(fired[FEATURE2])[0])
            | set(np.nonzero(fired[FEATURE3])[0])
        )
        if not positions:
            continue
        # merge positions whose sample coverage [p, p + window) overlaps
        runs: list[list[int]] = [[positions[0], positions[0]]]
        for p in positions[1:]:
            if p <= runs[-1][1] + cfg.window - 1:
                runs[-1][1] = p
            else:
                runs.append([p, p])
        for first, last in runs:
            chunk = series[first : last + cfg.window]
            names = {
                name
                for name, mask in fired.items()
                if mask[first : last + 1].any()
            }
            windows.append(
                AbnormalWindow(
                    source=source,
                    span=(chunk[0].time, chunk[-1].time),
                    fired=names,
                    samples=chunk,
                )
            )
    windows.sort(key=lambda w: (w.span[0], w.source))
    return windows


def indicators(window: list[PmuSample], cfg: CriteriaConfig) -> IndicatorVector:
    """Indicator vector of a window; see the module docstring for definitions."""
    if len(window) < 2 * cfg.tau_delta + 1:
        raise WindowTooShort(
            f"need {2 * cfg.tau_delta + 1} samples for the mutation test, got {len(window)}"
        )
    va, vb, vc = _columns(window, ("va_angle", "vb_angle", "vc_angle"))
    ca, cb, cc = _columns(window, ("ia_angle", "ib_angle", "ic_angle"))
    eta_u = float(
        np.mean(np.abs(np.abs(_wrapped_diff(va, vb)) - np.abs(_wrapped_diff(vb, vc))))
    )
    eta_i = float(
        np.mean(np.abs(np.abs(_wrapped_diff(ca, cb)) - np.abs(_wrapped_diff(cb, cc))))
    )

    degenerate = False

    def fluctuation(a, b, c) -> float:
        nonlocal degenerate
        stack = np.stack([a, b, c])
        mean = stack.mean(axis=0)
        zero = mean == 0.0
        if zero.any():
            degenerate = True
        dev = np.zeros_like(mean)
        np.divide(
            np.abs(stack - mean).max(axis=0), mean, out=dev, where=~zero
        )
        return float(dev.max() * 100.0)

    delta_i = fluctuation(*_columns(window, ("ia_mag", "ib_mag", "ic_mag")))
    delta_u = fluctuation(*_columns(window, ("va_mag", "vb_mag", "vc_mag")))

    tau = 0
    d = cfg.tau_delta
    frac = cfg.mutation_fraction
    for series in _columns(window, ("seq_i_mag_zero", "seq_i_mag_neg")):
        prev, cur, nxt = series[: -2 * d], series[d:-d], series[2 * d :]
        hit = (np.abs(cur - prev) > frac * prev) & (np.abs(nxt - cur) > frac * cur)
        if hit.any():
            tau = 1
            break
    return IndicatorVector(eta_u, eta_i, delta_i, delta_u, tau, degenerate)
