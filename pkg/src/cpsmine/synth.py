"""Deterministic synthetic bundles: alarm logs, PMU traces, topology, ground truth.

A scenario script plants attacker plans (ordered cyber steps plus an optional
terminal physical episode) over a balanced three-phase baseline. Physical
episodes perturb exactly the measurements their attack class is known for:

* data injection   -> phase-angle imbalance (screening feature 1)
* command injection -> zero-sequence current plateau with mutations (feature 2)
* relay tampering  -> geometric impedance ramp (feature 3)
* short-circuit fault distractor -> current imbalance plus sequence currents
  (features 1 and 2, no attacker attached)

Waveforms are piecewise-stationary phasor snapshots; margins are at least
three times the default screening thresholds, and normal segments stay well
below them. Bundles are byte-identical for a fixed seed.

Scripts must keep segmentation unambiguous: gaps inside one plan stay at or
below 200 s, separate plans of one attacker sit at least 300 s apart, and
plans sharing a (sequence, label) key use the same cyber-to-physical gap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cpsmine.alarms import ALARM_CSV_HEADER, DEFAULT_SIGNATURES
from cpsmine.criteria import CriteriaConfig
from cpsmine.errors import ScriptError
from cpsmine.pae import (
    COMMAND_INJECTION_LABELS,
    DATA_INJECTION_LABELS,
    FAULT_LABELS,
    LABEL_SET,
    RELAY_TAMPER_LABELS,
)
from cpsmine.pmu import PMU_SIGNALS
from cpsmine.topology import ComponentId, Kind, TopologyMap, save_topology, topology_from_dict

GROUND_TRUTH_SCHEMA_VERSION = 1

# Distractor signatures for spurious alarms; never parents of any template.
DISTRACTOR_SIGNATURES = ("icmp_sweep", "http_probe", "ntp_amplify")

PHASE_SHIFT_DEG = 18.0          # 3.6x the default 5 degree threshold
SEQUENCE_LEVELS = (8.0, 12.0)   # amperes, >= 3x the default 2 A floor, 20%+ jumps
IMPEDANCE_FACTOR = 0.4          # per-sample ramp, 1/0.4 - 1 = 1.5 >= 3x eps4
FAULT_CURRENT_FACTORS = (2.5, 2.2, 2.8)
FAULT_SEQUENCE_LEVEL = 30.0
MAX_IMPEDANCE_SAMPLES = 25

EFFECT_PHASE = "phase"
EFFECT_SEQUENCE = "sequence"
EFFECT_IMPEDANCE = "impedance"
EFFECT_FAULT = "fault"

EFFECT_FEATURES = {
    EFFECT_PHASE: {"feature1"},
    EFFECT_SEQUENCE: {"feature2"},
    EFFECT_IMPEDANCE: {"feature3"},
    EFFECT_FAULT: {"feature1", "feature2"},
}


def default_effect(label: int) -> str:
    if label in DATA_INJECTION_LABELS:
        return EFFECT_PHASE
    if label in COMMAND_INJECTION_LABELS:
        return EFFECT_SEQUENCE
    if label in RELAY_TAMPER_LABELS:
        return EFFECT_IMPEDANCE
    if label in FAULT_LABELS:
        return EFFECT_FAULT
    raise ScriptError(f"label {label} needs an explicit effect")


@dataclass(frozen=True)
class CyberStepPlan:
    sig: str
    component: ComponentId
    gap: float = 0.0  # seconds after the previous step (or the plan start)


@dataclass(frozen=True)
class PhysicalPlan:
    label: int
    component: ComponentId
    relay: str
    gap: float          # seconds after the last cyber step
    duration: float     # seconds
    effect: str = ""

    def resolved_effect(self) -> str:
        return self.effect or default_effect(self.label)


@dataclass(frozen=True)
class AttackerPlan:
    ip: str
    start: float
    steps: tuple[CyberStepPlan, ...]
    physical: PhysicalPlan | None = None
    repeats: int = 1
    repeat_gap: float = 1.0


@dataclass(frozen=True)
class BackgroundEpisode:
    """An attacker-free distractor episode, e.g. a short-circuit fault."""

    label: int
    component: ComponentId
    relay: str
    start: float
    duration: float
    effect: str = ""

    def resolved_effect(self) -> str:
        return self.effect or default_effect(self.label)


@dataclass(frozen=True)
class NoiseConfig:
    spurious_per_attacker: int = 0
    angle_jitter: float = 0.05        # degrees
    mag_jitter_frac: float = 0.0002
    seq_jitter: float = 0.1           # amperes
    z_jitter_frac: float = 0.002
    freq_jitter: float = 0.002


@dataclass(frozen=True)
class ScenarioScript:
    seed: int
    duration: float
    topology: TopologyMap
    attackers: tuple[AttackerPlan, ...] = ()
    background: tuple[BackgroundEpisode, ...] = ()
    noise: NoiseConfig = NoiseConfig()
    sample_period: float = 1.0
    start_time: float = 1_700_000_000.0
    relays: tuple[str, ...] = ("R1", "R2", "R3", "R4")
    alpha: float = 0.3
    beta: float = 0.3
    min_credibility: float = 0.2
    criteria: CriteriaConfig = CriteriaConfig()
    forest_trees: int = 20


def default_topology() -> TopologyMap:
    """Nine cyber and twelve physical components wired like a small testbed."""
    return topology_from_dict(
        {
            "cyber": [f"CE{i}" for i in range(1, 10)],
            "physical": [f"PE{i}" for i in range(1, 13)],
            "relations": [
                ["CE1", "CE2"], ["CE2", "CE3"], ["CE2", "CE4"], ["CE4", "CE5"],
                ["CE2", "CE6"], ["CE6", "CE7"], ["CE1", "CE8"], ["CE8", "CE9"],
                ["CE3", "PE1"], ["CE3", "PE2"], ["CE4", "PE2"], ["CE4", "PE3"],
                ["CE6", "PE4"], ["CE3", "PE5"], ["CE4", "PE6"], ["CE6", "PE7"],
                ["CE6", "PE8"], ["CE7", "PE9"], ["CE7", "PE10"], ["CE5", "PE11"],
                ["CE7", "PE11"], ["CE5", "PE12"],
            ],
        }
    )


def _plan_times(plan: AttackerPlan, start_time: float):
    """Absolute first-alarm time per step plus the episode span, from gaps."""
    times = []
    t = start_time + plan.start
    for step in plan.steps:
        t += step.gap
        times.append(t)
    episode = None
    if plan.physical is not None:
        episode_start = t + plan.physical.gap
        episode = (episode_start, episode_start + plan.physical.duration)
    return times, episode


def _validate_script(script: ScenarioScript) -> None:
    if script.duration <= 0 or script.sample_period <= 0:
        raise ScriptError("duration and sample_period must be positive")
    window_seconds = script.criteria.window * script.sample_period
    per_ip: dict[str, list[AttackerPlan]] = {}
    gap_by_key: dict[tuple, float] = {}
    label_component: dict[int, ComponentId] = {}
    for plan in script.attackers:
        per_ip.setdefault(plan.ip, []).append(plan)
        sigs = [s.sig for s in plan.steps]
        if len(set(sigs)) != len(sigs):
            raise ScriptError(f"{plan.ip}: repeated signature within one plan")
        if plan.repeats < 1:
            raise ScriptError(f"{plan.ip}: repeats must be >= 1")
        if plan.repeats > 1 and (plan.repeats - 1) * plan.repeat_gap > 30:
            raise ScriptError(f"{plan.ip}: repeat bursts must stay within 30 s")
        for step in plan.steps:
            if step.gap < 0:
                raise ScriptError(f"{plan.ip}: negative gap")
            if step.gap > 200:
                raise ScriptError(f"{plan.ip}: intra-plan gap above 200 s")
            if step.component not in script.topology.cyber_nodes:
                raise ScriptError(f"{plan.ip}: unknown component {step.component}")
        if plan.physical is not None:
            phys = plan.physical
            if not plan.steps:
                raise ScriptError(f"{plan.ip}: a physical plan needs cyber steps")
            if phys.label not in LABEL_SET:
                raise ScriptError(f"{plan.ip}: unknown label {phys.label}")
            if phys.component not in script.topology.physical_nodes:
                raise ScriptError(f"{plan.ip}: unknown component {phys.component}")
            if phys.relay not in script.relays:
                raise ScriptError(f"{plan.ip}: unknown relay {phys.relay}")
            if not 0 < phys.gap <= 200:
                raise ScriptError(f"{plan.ip}: cyber-to-physical gap must be in (0, 200]")
            if phys.duration < window_seconds + 2 * script.sample_period:
                raise ScriptError(
                    f"{plan.ip}: episode shorter than the screening window"
                )
            effect = phys.resolved_effect()
            if effect == EFFECT_IMPEDANCE and phys.duration / script.sample_period > MAX_IMPEDANCE_SAMPLES:
                raise ScriptError(
                    f"{plan.ip}: impedance episodes are capped at "
                    f"{MAX_IMPEDANCE_SAMPLES} samples"
                )
            previous = label_component.setdefault(phys.label, phys.component)
            if previous != phys.component:
                raise ScriptError(
                    f"label {phys.label} maps to both {previous} and {phys.component}"
                )
            key = (tuple(sigs), phys.label)
            previous_gap = gap_by_key.setdefault(key, phys.gap)
            if previous_gap != phys.gap:
                raise ScriptError(
                    f"plans sharing {key} must use one cyber-to-physical gap"
                )
            if not any(
                frozenset((c, phys.component)) in script.topology.relations
                for c in {s.component for s in plan.steps}
            ):
                raise ScriptError(
                    f"{plan.ip}: {phys.component} unreachable from the plan's steps"
                )
        _, episode = _plan_times(plan, 0.0)
        end = episode[1] if episode else plan.start + sum(s.gap for s in plan.steps)
        if end + window_seconds >= script.duration:
            raise ScriptError(f"{plan.ip}: plan does not fit in the trace")
    for ip, plans in per_ip.items():
        plans = sorted(plans, key=lambda p: p.start)
        for a, b in zip(plans, plans[1:]):
            _, episode = _plan_times(a, 0.0)
            a_end = episode[1] if episode else a.start + sum(s.gap for s in a.steps)
            if b.start - a_end < 300:
                raise ScriptError(f"{ip}: plans must sit at least 300 s apart")
        templates = [tuple(s.sig for s in p.steps) for p in plans]
        if len(set(templates)) != len(templates):
            raise ScriptError(f"{ip}: the same template may appear only once")
        used: set[str] = set()
        for t in templates:
            if used & set(t):
                raise ScriptError(f"{ip}: templates of one attacker must not share signatures")
            used |= set(t)
    for episode in script.background:
        if episode.label not in LABEL_SET:
            raise ScriptError(f"background: unknown label {episode.label}")
        if episode.relay not in script.relays:
            raise ScriptError(f"background: unknown relay {episode.relay}")
        if episode.component not in script.topology.physical_nodes:
            raise ScriptError(f"background: unknown component {episode.component}")
        if episode.duration < window_seconds + 2 * script.sample_period:
            raise ScriptError("background: episode shorter than the screening window")


def _episodes(script: ScenarioScript):
    """All episodes as (relay, label, effect, start, end, component, attacker)."""
    out = []
    for plan in script.attackers:
        _, episode = _plan_times(plan, script.start_time)
        if episode is None:
            continue
        phys = plan.physical
        out.append(
            (phys.relay, phys.label, phys.resolved_effect(), episode[0], episode[1],
             phys.component, plan.ip)
        )
    for episode in script.background:
        start = script.start_time + episode.start
        out.append(
            (episode.relay, episode.label, episode.resolved_effect(), start,
             start + episode.duration, episode.component, None)
        )
    out.sort(key=lambda e: (e[3], e[0]))
    window_seconds = script.criteria.window * script.sample_period
    for a, b in zip(out, out[1:]):
        if a[0] == b[0] and b[3] - a[4] < 3 * window_seconds:
            raise ScriptError(
                f"episodes on {a[0]} must sit at least {3 * window_seconds:.0f} s apart"
            )
    return out


def _relay_baseline(index: int) -> dict[str, float]:
    v_mag = 132000.0 + 500.0 * index
    i_mag = 380.0 + 20.0 * index
    return {
        "PA1:VH": 0.0, "PA2:VH": -120.0, "PA3:VH": 120.0,
        "PM1:V": v_mag, "PM2:V": v_mag, "PM3:V": v_mag,
        "PA4:IH": -30.0, "PA5:IH": -150.0, "PA6:IH": 90.0,
        "PM4:I": i_mag, "PM5:I": i_mag, "PM6:I": i_mag,
        "PA7:VH": 0.0, "PA8:VH": 0.0, "PA9:VH": 0.0,
        "PM7:V": v_mag, "PM8:V": 0.0, "PM9:V": 0.0,
        "PA10:VH": -30.0, "PA11:VH": 0.0, "PA12:VH": 0.0,
        "PM10:V": i_mag, "PM11:V": 0.0, "PM12:V": 0.0,
        "F": 60.0, "DF": 0.0, "PA:Z": 90.0 + 5.0 * index, "PA:ZH": 75.0, "S": 0.0,
    }


def _apply_effect(values: dict[str, float], effect: str, k: int, base: dict[str, float]) -> None:
    if effect == EFFECT_PHASE:
        values["PA1:VH"] = base["PA1:VH"] + PHASE_SHIFT_DEG
    elif effect == EFFECT_SEQUENCE:
        values["PM12:V"] = SEQUENCE_LEVELS[k % 2]
    elif effect == EFFECT_IMPEDANCE:
        values["PA:Z"] = base["PA:Z"] * IMPEDANCE_FACTOR ** (k + 1)
        values["PA:ZH"] = base["PA:ZH"] - 40.0
    elif effect == EFFECT_FAULT:
        for col, factor in zip(("PM4:I", "PM5:I", "PM6:I"), FAULT_CURRENT_FACTORS):
            values[col] = base[col] * factor
        values["PM12:V"] = FAULT_SEQUENCE_LEVEL
        values["PM11:V"] = FAULT_SEQUENCE_LEVEL * 0.8
        for col, factor in zip(("PM1:V", "PM2:V", "PM3:V"), (0.8, 0.8, 0.8)):
            values[col] = base[col] * factor
    else:
        raise ScriptError(f"unknown effect {effect!r}")


_JITTER = {
    "angle": ("PA1:VH", "PA2:VH", "PA3:VH", "PA4:IH", "PA5:IH", "PA6:IH", "PA:ZH"),
    "mag": ("PM1:V", "PM2:V", "PM3:V", "PM4:I", "PM5:I", "PM6:I", "PM7:V", "PM10:V"),
    "seq": ("PM8:V", "PM9:V", "PM11:V", "PM12:V"),
}


def _pmu_rows(script: ScenarioScript, relay: str, index: int, episodes, rng):
    n = int(round(script.duration / script.sample_period))
    base = _relay_baseline(index)
    noise = script.noise
    mine = [e for e in episodes if e[0] == relay]
    rows = []
    for i in range(n):
        t = script.start_time + i * script.sample_period
        values = dict(base)
        for col in _JITTER["angle"]:
            values[col] += noise.angle_jitter * rng.standard_normal()
        for col in _JITTER["mag"]:
            values[col] *= 1.0 + noise.mag_jitter_frac * rng.standard_normal()
        for col in _JITTER["seq"]:
            values[col] = abs(noise.seq_jitter * rng.standard_normal())
        values["PA:Z"] *= 1.0 + noise.z_jitter_frac * rng.standard_normal()
        values["F"] += noise.freq_jitter * rng.standard_normal()
        values["DF"] = noise.freq_jitter * rng.standard_normal()
        marker = 41
        for _, label, effect, start, end, _, _ in mine:
            if start <= t < end:
                k = int(round((t - start) / script.sample_period))
                _apply_effect(values, effect, k, base)
                marker = label
                break
        rows.append((t, values, marker))
    return rows


def _write_pmu_csv(path: Path, relay: str, rows) -> None:
    header = ["time"] + [f"{relay}-{sig}" for sig in PMU_SIGNALS] + ["marker"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for t, values, marker in rows:
            cells = [repr(t)] + [repr(values[sig]) for sig in PMU_SIGNALS] + [str(marker)]
            fh.write(",".join(cells) + "\n")


def _alarm_rows(script: ScenarioScript, rng):
    rows = []
    for a_idx, plan in enumerate(script.attackers):
        times, _ = _plan_times(plan, script.start_time)
        for s_idx, (step, t) in enumerate(zip(plan.steps, times)):
            for rep in range(plan.repeats):
                rows.append(
                    (
                        t + rep * plan.repeat_gap,
                        f"a{a_idx}s{s_idx}r{rep}",
                        plan.ip,
                        f"10.0.0.{step.component.index}",
                        40000 + s_idx,
                        22,
                        step.sig,
                        str(step.component),
                    )
                )
        span = max(times) - (script.start_time + plan.start) if times else 0.0
        cyber_nodes = sorted(script.topology.cyber_nodes)
        for j in range(script.noise.spurious_per_attacker):
            offset = float(rng.uniform(0.0, max(span, 60.0)))
            sig = DISTRACTOR_SIGNATURES[int(rng.integers(len(DISTRACTOR_SIGNATURES)))]
            comp = cyber_nodes[int(rng.integers(len(cyber_nodes)))]
            rows.append(
                (
                    script.start_time + plan.start + offset,
                    f"a{a_idx}noise{j}",
                    plan.ip,
                    f"10.0.0.{comp.index}",
                    50000 + j,
                    80,
                    sig,
                    str(comp),
                )
            )
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def _network_config(script: ScenarioScript) -> dict:
    templates: dict[tuple[str, ...], str] = {}
    for plan in script.attackers:
        sigs = tuple(s.sig for s in plan.steps)
        if sigs and sigs not in templates:
            templates[sigs] = f"seq{len(templates) + 1}"
    alarms = sorted({sig for sigs in templates for sig in sigs})
    return {
        "alarms": [{"name": sig, "prior": 0.7} for sig in alarms],
        "sequences": [
            {"label": label, "parents": list(sigs)} for sigs, label in templates.items()
        ],
        "edges": [
            {"parent": sig, "sequence": label, "activation": 0.9}
            for sigs, label in templates.items()
            for sig in sigs
        ],
        "leak": 0.0,
    }


def _expected_records(script: ScenarioScript):
    """Attack records implied by the script's timing constraints."""
    records = []
    for plan in script.attackers:
        if plan.physical is None:
            continue
        times, episode = _plan_times(plan, script.start_time)
        steps = [
            ("cyber", step.sig, str(step.component), t)
            for step, t in zip(plan.steps, times)
        ]
        steps.append(
            ("physical", str(plan.physical.label), str(plan.physical.component), episode[0])
        )
        records.append({"aid": plan.ip, "steps": steps})
    records.sort(key=lambda r: (r["aid"], r["steps"][0][3]))
    return records


def _ordered_contained(steps, antecedent) -> bool:
    positions = {(kind, item, comp): i for i, (kind, item, comp, _) in enumerate(steps)}
    last = -1
    for key in antecedent:
        pos = positions.get(key)
        if pos is None or pos <= last:
            return False
        last = pos
    return True


def _expected_patterns(records, alpha: float, beta: float):
    """Brute-force enumeration of ordered patterns meeting both thresholds."""
    attackers = {r["aid"] for r in records}
    total = len(attackers)
    if total == 0:
        return []
    candidates = set()
    for record in records:
        steps = record["steps"]
        phys = [
            ("physical", item, comp)
            for kind, item, comp, _ in steps
            if kind == "physical"
        ]
        cyber = [("cyber", item, comp) for kind, item, comp, _ in steps if kind == "cyber"]
        if not phys:
            continue
        for mask in range(1, 1 << len(cyber)):
            antecedent = tuple(c for i, c in enumerate(cyber) if mask >> i & 1)
            candidates.add((antecedent, phys[0]))
    patterns = []
    for antecedent, consequent in sorted(candidates):
        joint = [
            r
            for r in records
            if _ordered_contained(r["steps"], antecedent + (consequent,))
        ]
        if not joint:
            continue
        support = len({r["aid"] for r in joint}) / total
        if support < alpha:
            continue
        denominator = sum(1 for r in records if _ordered_contained(r["steps"], antecedent))
        confidence = len(joint) / denominator
        if confidence < beta:
            continue
        patterns.append(
            {
                "antecedent": [[item, comp] for _, item, comp in antecedent],
                "consequent": [consequent[1], consequent[2]],
                "support": support,
                "confidence": confidence,
                "occurrences": len(joint),
            }
        )
    patterns.sort(
        key=lambda p: (-p["confidence"], -p["support"], p["antecedent"], p["consequent"])
    )
    return patterns


def _pipeline_config(script: ScenarioScript, relays: list[str]) -> dict:
    crit = script.criteria
    return {
        "schema_version": 1,
        "seed": script.seed,
        "paths": {
            "alarms": ["alarms.csv"],
            "pmu": [f"pmu_{r}.csv" for r in relays],
            "topology": "topology.json",
            "network": "network.json",
            "label_map": "label_map.json",
        },
        "fcm": {"c": 2, "m": 2.0, "tol": 1e-6, "max_iter": 300},
        "aggregate": {"merge_window": 60.0},
        "cas": {"min_credibility": script.min_credibility},
        "criteria": {
            "eps1": crit.eps1, "eps2": crit.eps2, "eps3": crit.eps3,
            "eps4": crit.eps4, "eps_zero": crit.eps_zero, "window": crit.window,
            "tau_delta": crit.tau_delta, "mutation_fraction": crit.mutation_fraction,
        },
        "forest": {"tree_count": script.forest_trees, "max_depth": 12, "min_leaf": 2},
        "mining": {"alpha": script.alpha, "beta": script.beta, "reach_policy": "direct"},
    }


def generate(script: ScenarioScript, out_dir) -> dict[str, Path]:
    """Write a full bundle into ``out_dir`` and return the file map."""
    _validate_script(script)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(script.seed)
    episodes = _episodes(script)

    paths: dict[str, Path] = {}
    alarm_path = out / "alarms.csv"
    with open(alarm_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(ALARM_CSV_HEADER + "\n")
        for t, cid, src, dst, sport, dport, sig, comp in _alarm_rows(script, rng):
            fh.write(f"{cid},{t!r},{src},{dst},{sport},{dport},{sig},{comp}\n")
    paths["alarms"] = alarm_path

    for index, relay in enumerate(script.relays):
        rows = _pmu_rows(script, relay, index, episodes, rng)
        path = out / f"pmu_{relay}.csv"
        _write_pmu_csv(path, relay, rows)
        paths[f"pmu_{relay}"] = path

    topo_path = out / "topology.json"
    save_topology(script.topology, topo_path)
    paths["topology"] = topo_path

    network_path = out / "network.json"
    with open(network_path, "w", encoding="utf-8") as fh:
        json.dump(_network_config(script), fh, indent=1, sort_keys=True)
        fh.write("\n")
    paths["network"] = network_path

    label_map = {}
    for _, label, _, _, _, component, attacker in episodes:
        if attacker is not None or label not in label_map:
            label_map[str(label)] = str(component)
    label_map_path = out / "label_map.json"
    with open(label_map_path, "w", encoding="utf-8") as fh:
        json.dump(label_map, fh, indent=1, sort_keys=True)
        fh.write("\n")
    paths["label_map"] = label_map_path

    config_path = out / "config.json"
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(_pipeline_config(script, list(script.relays)), fh, indent=1, sort_keys=True)
        fh.write("\n")
    paths["config"] = config_path

    records = _expected_records(script)
    truth = {
        "schema_version": GROUND_TRUTH_SCHEMA_VERSION,
        "attackers": sorted({p.ip for p in script.attackers}),
        "cas": [
            {
                "attacker": plan.ip,
                "steps": [
                    [step.sig, str(step.component), t]
                    for step, t in zip(plan.steps, _plan_times(plan, script.start_time)[0])
                ],
            }
            for plan in script.attackers
            if plan.steps
        ],
        "pae": [
            {
                "label": label,
                "component": str(component),
                "relay": relay,
                "effect": effect,
                "span": [start, end],
                "attacker": attacker,
            }
            for relay, label, effect, start, end, component, attacker in episodes
        ],
        "records": records,
        "patterns": _expected_patterns(records, script.alpha, script.beta),
        "alpha": script.alpha,
        "beta": script.beta,
    }
    truth_path = out / "ground_truth.json"
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=1, sort_keys=True)
        fh.write("\n")
    paths["ground_truth"] = truth_path
    return paths


def script_from_dict(data: dict) -> ScenarioScript:
    """Build a script from its JSON form; see the README for the schema."""
    try:
        topo = (
            topology_from_dict(data["topology"])
            if isinstance(data.get("topology"), dict)
            else default_topology()
        )
        attackers = []
        for plan in data.get("attackers", []):
            steps = tuple(
                CyberStepPlan(
                    sig=s["sig"],
                    component=ComponentId.parse(s["component"]),
                    gap=float(s.get("gap", 0.0)),
                )
                for s in plan.get("steps", [])
            )
            physical = None
            if plan.get("physical"):
                p = plan["physical"]
                physical = PhysicalPlan(
                    label=int(p["label"]),
                    component=ComponentId.parse(p["component"]),
                    relay=p["relay"],
                    gap=float(p["gap"]),
                    duration=float(p["duration"]),
                    effect=p.get("effect", ""),
                )
            attackers.append(
                AttackerPlan(
                    ip=plan["ip"],
                    start=float(plan["start"]),
                    steps=steps,
                    physical=physical,
                    repeats=int(plan.get("repeats", 1)),
                    repeat_gap=float(plan.get("repeat_gap", 1.0)),
                )
            )
        background = tuple(
            BackgroundEpisode(
                label=int(b["label"]),
                component=ComponentId.parse(b["component"]),
                relay=b["relay"],
                start=float(b["start"]),
                duration=float(b["duration"]),
                effect=b.get("effect", ""),
            )
            for b in data.get("background", [])
        )
        noise = NoiseConfig(**data.get("noise", {}))
        criteria = CriteriaConfig(**data.get("criteria", {}))
        return ScenarioScript(
            seed=int(data["seed"]),
            duration=float(data["duration"]),
            topology=topo,
            attackers=tuple(attackers),
            background=background,
            noise=noise,
            sample_period=float(data.get("sample_period", 1.0)),
            start_time=float(data.get("start_time", 1_700_000_000.0)),
            relays=tuple(data.get("relays", ("R1", "R2", "R3", "R4"))),
            alpha=float(data.get("alpha", 0.3)),
            beta=float(data.get("beta", 0.3)),
            min_credibility=float(data.get("min_credibility", 0.2)),
            criteria=criteria,
            forest_trees=int(data.get("forest_trees", 20)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScriptError(f"bad scenario script: {exc}") from exc


def load_script(path) -> ScenarioScript:
    with open(path, encoding="utf-8") as fh:
        return script_from_dict(json.load(fh))


def demo_pattern_script(seed: int = 7) -> ScenarioScript:
    """Five attackers sharing one two-step pattern plus three rare one-step plans.

    The shared plan [sadmind_ping@CE4 > sshd_buffer_overflow@CE3 => 21@PE2]
    is planted at 5/8 attacker prevalence, so mining at alpha = beta = 0.30
    should recover exactly the pattern and its two single-step projections.
    """
    topo = default_topology()
    attackers = []
    shared_steps = (
        CyberStepPlan("sadmind_ping", ComponentId.parse("CE4"), 0.0),
        CyberStepPlan("sshd_buffer_overflow", ComponentId.parse("CE3"), 20.0),
    )
    for i in range(5):
        attackers.append(
            AttackerPlan(
                ip=f"198.51.100.{10 + i}",
                start=30.0 + 320.0 * i,
                steps=shared_steps,
                physical=PhysicalPlan(
                    label=21, component=ComponentId.parse("PE2"), relay="R2",
                    gap=60.0, duration=20.0,
                ),
            )
        )
    # rare one-step plans pad the attacker denominator without adding
    # frequent patterns; they reuse the shared label so the classifier never
    # faces a single-window class
    rare = [
        ("203.0.113.5", "rsh_login", "CE3"),
        ("203.0.113.6", "ftp_rhosts", "CE4"),
        ("203.0.113.7", "rootkit", "CE3"),
    ]
    for j, (ip, sig, ce) in enumerate(rare):
        attackers.append(
            AttackerPlan(
                ip=ip,
                start=30.0 + 320.0 * (5 + j),
                steps=(CyberStepPlan(sig, ComponentId.parse(ce), 0.0),),
                physical=PhysicalPlan(
                    label=21, component=ComponentId.parse("PE2"), relay="R2",
                    gap=60.0, duration=20.0,
                ),
            )
        )
    return ScenarioScript(
        seed=seed,
        duration=2800.0,
        topology=topo,
        attackers=tuple(attackers),
    )


def demo_criteria_script(seed: int = 11) -> ScenarioScript:
    """One episode per effect class plus a fault distractor, for screening checks."""
    topo = default_topology()
    attackers = (
        AttackerPlan(
            ip="198.51.100.50",
            start=40.0,
            steps=(CyberStepPlan("rootkit", ComponentId.parse("CE5"), 0.0),),
            physical=PhysicalPlan(
                label=8, component=ComponentId.parse("PE11"), relay="R1",
                gap=60.0, duration=30.0,
            ),
        ),
        AttackerPlan(
            ip="198.51.100.51",
            start=440.0,
            steps=(CyberStepPlan("rdp_inception", ComponentId.parse("CE6"), 0.0),),
            physical=PhysicalPlan(
                label=17, component=ComponentId.parse("PE4"), relay="R2",
                gap=60.0, duration=30.0,
            ),
        ),
        AttackerPlan(
            ip="198.51.100.52",
            start=840.0,
            steps=(CyberStepPlan("sadmind_ping", ComponentId.parse("CE3"), 0.0),),
            physical=PhysicalPlan(
                label=24, component=ComponentId.parse("PE2"), relay="R3",
                gap=60.0, duration=20.0,
            ),
        ),
    )
    background = (
        BackgroundEpisode(
            label=2, component=ComponentId.parse("PE11"), relay="R4",
            start=1300.0, duration=30.0,
        ),
    )
    return ScenarioScript(
        seed=seed,
        duration=1600.0,
        topology=topo,
        attackers=attackers,
        background=background,
    )
