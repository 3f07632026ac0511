"""Stage orchestration: configuration, stage runners, reports, and manifests.

Each stage writes its reports plus a manifest (config digest, input and
output hashes, package version) into the output directory. Runs are
deterministic: identical config, inputs, and seed produce byte-identical
reports, and the combined pipeline equals the staged runs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import cpsmine
from cpsmine.alarms import AlarmEvent, aggregate, encode_alarms, parse_alarm_log
from cpsmine.cas import (
    CyberAttackSequence,
    group_by_attacker,
    load_network,
    recognize_cas,
)
from cpsmine.criteria import CriteriaConfig, screen_candidates
from cpsmine.errors import ConfigError, InputError, UnlabeledWindow
from cpsmine.fcm import fcm_cluster
from cpsmine.forest import Forest, ForestConfig, extract_rules, forest_to_json, train_forest
from cpsmine.mining import (
    WindowStats,
    build_tree,
    collect_window_stats,
    join,
    mine,
    render_item,
    render_pattern,
    segment,
)
from cpsmine.pae import (
    LabeledWindow,
    PhysicalAttackEvent,
    build_training_matrix,
    load_label_map,
    majority_marker,
    recognize_pae,
    window_label,
)
from cpsmine.pmu import parse_pmu_csv
from cpsmine.topology import ComponentId, load_topology

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

PATTERN_CSV_COLUMNS = (
    "schema_version", "pattern", "antecedent", "consequent",
    "support", "confidence", "occurrences",
)
RULE_CSV_COLUMNS = ("schema_version", "predicates", "category", "accuracy", "coverage")


def _fraction(value: float, name: str) -> float:
    """Accept a fraction (0.30) or an unambiguous percentage (30).

    Values in (1, 2) are neither, e.g. alpha = 1.5, and are rejected.
    """
    if value >= 2.0:
        if value > 100.0:
            raise ConfigError(f"{name} out of range: {value}")
        logger.info("%s given as a percentage (%s); using %s", name, value, value / 100.0)
        value = value / 100.0
    if not 0.0 < value <= 1.0:
        raise ConfigError(f"{name} out of range: {value}")
    return value


@dataclass
class PipelineConfig:
    base_dir: Path
    raw: dict
    seed: int
    alarm_paths: list[Path]
    pmu_paths: list[Path]
    topology_path: Path
    network_path: Path
    label_map_path: Path
    fcm_c: int
    fcm_m: float
    fcm_tol: float
    fcm_max_iter: int
    merge_window: float
    min_credibility: float
    criteria: CriteriaConfig
    forest: ForestConfig
    alpha: float
    beta: float
    reach_policy: str

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode("utf-8")
        ).hexdigest()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_raw(raw, path.parent)


def config_from_raw(raw: dict, base: Path) -> PipelineConfig:
    try:
        paths = raw["paths"]
        fcm = raw.get("fcm", {})
        cas_cfg = raw.get("cas", {})
        crit_raw = raw.get("criteria", {})
        forest_raw = raw.get("forest", {})
        mining = raw.get("mining", {})
        seed = int(raw.get("seed", 0))
        criteria = CriteriaConfig(
            eps1=float(crit_raw.get("eps1", 5.0)),
            eps2=float(crit_raw.get("eps2", 1000.0)),
            eps3=float(crit_raw.get("eps3", 20.0)),
            eps4=float(crit_raw.get("eps4", 0.2)),
            eps_zero=float(crit_raw.get("eps_zero", 2.0)),
            window=int(crit_raw.get("window", 10)),
            tau_delta=int(crit_raw.get("tau_delta", 1)),
            mutation_fraction=float(crit_raw.get("mutation_fraction", 0.2)),
        )
        forest = ForestConfig(
            tree_count=int(forest_raw.get("tree_count", 88)),
            sample_size=forest_raw.get("sample_size"),
            feature_budget=forest_raw.get("feature_budget"),
            max_depth=int(forest_raw.get("max_depth", 12)),
            min_leaf=int(forest_raw.get("min_leaf", 2)),
            seed=seed,
        )
        m = float(fcm.get("m", 2.0))
        tol = float(fcm.get("tol", 1e-6))
        max_iter = int(fcm.get("max_iter", 300))
        c = int(fcm.get("c", 4))
        if m <= 1.0 or tol <= 0.0 or max_iter < 1 or c < 1:
            raise ConfigError("fcm parameters out of range")
        min_credibility = float(cas_cfg.get("min_credibility", 0.0))
        if not 0.0 <= min_credibility <= 1.0:
            raise ConfigError("min_credibility out of range")
        merge_window = float(raw.get("aggregate", {}).get("merge_window", 60.0))
        if merge_window < 0.0:
            raise ConfigError("merge_window must be non-negative")
        reach_policy = mining.get("reach_policy", "direct")
        if reach_policy not in ("direct", "transitive"):
            raise ConfigError(f"unknown reach_policy {reach_policy!r}")
        return PipelineConfig(
            base_dir=base,
            raw=raw,
            seed=seed,
            alarm_paths=[base / p for p in paths.get("alarms", [])],
            pmu_paths=[base / p for p in paths.get("pmu", [])],
            topology_path=base / paths["topology"],
            network_path=base / paths["network"],
            label_map_path=base / paths["label_map"],
            fcm_c=c,
            fcm_m=m,
            fcm_tol=tol,
            fcm_max_iter=max_iter,
            merge_window=merge_window,
            min_credibility=min_credibility,
            criteria=criteria,
            forest=forest,
            alpha=_fraction(float(mining.get("alpha", 0.3)), "alpha"),
            beta=_fraction(float(mining.get("beta", 0.3)), "beta"),
            reach_policy=reach_policy,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _require(path: Path) -> Path:
    if not path.is_file():
        raise InputError(f"missing input file: {path}")
    return path


def _write_manifest(out_dir: Path, stage: str, cfg: PipelineConfig, inputs, outputs) -> None:
    manifest = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "stage": stage,
        "package_version": cpsmine.__version__,
        "config_digest": cfg.digest(),
        "inputs": {p.name: _sha256(p) for p in inputs},
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    path = out_dir / f"manifest_{stage}.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _write_rejects(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "line", "reason"])
        writer.writerows(rows)


def run_cas(cfg: PipelineConfig, out_dir: Path) -> Path:
    """Alarm parsing, clustering, aggregation, and sequence recognition."""
    out_dir.mkdir(parents=True, exist_ok=True)
    events: list[AlarmEvent] = []
    reject_rows = []
    for path in cfg.alarm_paths:
        _require(path)
        with open(path, encoding="utf-8") as fh:
            result = parse_alarm_log(fh, format="csv")
        events.extend(result.events)
        reject_rows.extend((path.name, line, reason) for line, reason in result.rejects)
    rejects_path = out_dir / "alarm_rejects.csv"
    _write_rejects(rejects_path, reject_rows)

    if events:
        vectors = encode_alarms(events)
        distinct = int(np.unique(vectors, axis=0).shape[0])
        c = min(cfg.fcm_c, distinct)
        if c < cfg.fcm_c:
            logger.info("clamping fcm cluster count to %d distinct vectors", c)
        result = fcm_cluster(
            vectors, c=c, m=cfg.fcm_m, tol=cfg.fcm_tol,
            max_iter=cfg.fcm_max_iter, seed=cfg.seed,
        )
        merged = aggregate(events, result, cfg.merge_window)
    else:
        merged = []

    network = load_network(_require(cfg.network_path)).with_empirical_priors(merged)
    sequences = recognize_cas(network, group_by_attacker(merged), cfg.min_credibility)

    cas_path = out_dir / "cas.jsonl"
    with open(cas_path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(
                json.dumps(
                    {
                        "schema_version": REPORT_SCHEMA_VERSION,
                        "attacker": seq.attacker,
                        "steps": [
                            {"sig": sig, "component": str(comp), "time": time}
                            for sig, comp, time in seq.steps
                        ],
                        "credibility": seq.credibility,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    _write_manifest(
        out_dir, "cas", cfg,
        inputs=[*cfg.alarm_paths, cfg.network_path],
        outputs=[cas_path, rejects_path],
    )
    return cas_path


def _normal_windows(series, abnormal, criteria: CriteriaConfig):
    """Fixed-stride windows over the index runs no abnormal window covers."""
    covered = [
        not any(w.span[0] <= s.time <= w.span[1] for w in abnormal) for s in series
    ]
    windows = []
    run: list = []
    for sample, free in zip(series, covered):
        if free:
            run.append(sample)
        else:
            runs_done = run
            run = []
            for i in range(0, len(runs_done) - criteria.window + 1, criteria.window):
                windows.append(runs_done[i : i + criteria.window])
    for i in range(0, len(run) - criteria.window + 1, criteria.window):
        windows.append(run[i : i + criteria.window])
    return windows


def run_pae(cfg: PipelineConfig, out_dir: Path) -> Path:
    """PMU screening, forest training, classification, and rule export."""
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = []
    reject_rows = []
    for path in cfg.pmu_paths:
        _require(path)
        with open(path, encoding="utf-8") as fh:
            result = parse_pmu_csv(fh)
        samples.extend(result.samples)
        reject_rows.extend((path.name, line, reason) for line, reason in result.rejects)
    rejects_path = out_dir / "pmu_rejects.csv"
    _write_rejects(rejects_path, reject_rows)

    topo = load_topology(_require(cfg.topology_path))
    label_map = load_label_map(_require(cfg.label_map_path))
    by_source = {}
    for sample in samples:
        by_source.setdefault(sample.source, []).append(sample)
    abnormal = screen_candidates(by_source, cfg.criteria)

    pae_path = out_dir / "pae.jsonl"
    rules_path = out_dir / "rules.csv"
    outputs = [pae_path, rejects_path, rules_path]
    events: list[PhysicalAttackEvent] = []
    rules = []
    if abnormal:
        training: list[LabeledWindow] = []
        for window in abnormal:
            training.append(LabeledWindow(tuple(window.samples), window_label(window)))
        for source in sorted(by_source):
            source_abnormal = [w for w in abnormal if w.source == source]
            for chunk in _normal_windows(
                sorted(by_source[source], key=lambda s: s.time), source_abnormal, cfg.criteria
            ):
                try:
                    label = majority_marker(chunk)
                except UnlabeledWindow:
                    continue
                training.append(LabeledWindow(tuple(chunk), label))
        features, labels, columns = build_training_matrix(training, cfg.criteria)
        forest = train_forest(features, labels, cfg.forest, columns)
        (out_dir / "forest.json").write_text(forest_to_json(forest) + "\n", encoding="utf-8")
        outputs.append(out_dir / "forest.json")
        rules = extract_rules(forest, features, labels)
        events = recognize_pae(forest, abnormal, topo, label_map, cfg.criteria)

    with open(pae_path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(
                json.dumps(
                    {
                        "schema_version": REPORT_SCHEMA_VERSION,
                        "label": event.label,
                        "component": str(event.component),
                        "span": list(event.span),
                        "vote_share": event.vote_share,
                        "source": event.source,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    with open(rules_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RULE_CSV_COLUMNS)
        for rule in rules:
            writer.writerow(
                [REPORT_SCHEMA_VERSION, rule.render(), rule.category,
                 repr(rule.accuracy), rule.coverage]
            )
    _write_manifest(
        out_dir, "pae", cfg,
        inputs=[*cfg.pmu_paths, cfg.topology_path, cfg.label_map_path],
        outputs=outputs,
    )
    return pae_path


def _load_cas(path: Path) -> list[CyberAttackSequence]:
    sequences = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        sequences.append(
            CyberAttackSequence(
                attacker=doc["attacker"],
                steps=tuple(
                    (s["sig"], ComponentId.parse(s["component"]), float(s["time"]))
                    for s in doc["steps"]
                ),
                credibility=float(doc["credibility"]),
            )
        )
    return sequences


def _load_pae(path: Path) -> list[PhysicalAttackEvent]:
    events = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        events.append(
            PhysicalAttackEvent(
                label=int(doc["label"]),
                component=ComponentId.parse(doc["component"]),
                span=(float(doc["span"][0]), float(doc["span"][1])),
                vote_share=float(doc["vote_share"]),
                source=doc.get("source", ""),
            )
        )
    return events


def run_mine(cfg: PipelineConfig, out_dir: Path) -> Path:
    """Join, two-pass segmentation, tree construction, and pattern mining."""
    out_dir.mkdir(parents=True, exist_ok=True)
    cas_path = _require(out_dir / "cas.jsonl")
    pae_path = _require(out_dir / "pae.jsonl")
    topo = load_topology(_require(cfg.topology_path))
    sequences = _load_cas(cas_path)
    events = _load_pae(pae_path)

    pairs = join(sequences, events, topo, cfg.reach_policy)
    bootstrap = segment(pairs, None)
    stats = collect_window_stats(bootstrap)
    records = segment(pairs, stats)

    ad_path = out_dir / "ad.jsonl"
    with open(ad_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(
                json.dumps(
                    {
                        "schema_version": REPORT_SCHEMA_VERSION,
                        "aid": record.aid,
                        "steps": [
                            {
                                "kind": step.kind,
                                "item": step.item,
                                "component": str(step.component),
                                "time": step.time,
                            }
                            for step in record.steps
                        ],
                    },
                    sort_keys=True,
                )
                + "\n"
            )

    tree = build_tree(records, cfg.alpha)
    patterns = mine(tree, records, cfg.alpha, cfg.beta, topo, cfg.reach_policy)
    patterns_path = out_dir / "patterns.csv"
    with open(patterns_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PATTERN_CSV_COLUMNS)
        for pattern in patterns:
            writer.writerow(
                [
                    REPORT_SCHEMA_VERSION,
                    render_pattern(pattern),
                    " > ".join(render_item(i) for i in pattern.antecedent),
                    render_item(pattern.consequent),
                    repr(pattern.support),
                    repr(pattern.confidence),
                    pattern.occurrences,
                ]
            )
    _write_manifest(
        out_dir, "mine", cfg,
        inputs=[cas_path, pae_path, cfg.topology_path],
        outputs=[ad_path, patterns_path],
    )
    return patterns_path


def run_pipeline(cfg: PipelineConfig, out_dir: Path) -> Path:
    run_cas(cfg, out_dir)
    run_pae(cfg, out_dir)
    return run_mine(cfg, out_dir)
