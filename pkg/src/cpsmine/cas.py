"""Cyber attack sequence recognition over a two-layer temporal-causal network.

Aggregated alarms are grouped per attacker; for every candidate sequence
template whose parent signatures intersect the attacker's observed alarms,
all present/absent sign combinations are enumerated, scored with a
noisy-OR credibility, and the argmax combination becomes the attacker's
recognized sequence for that template.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from cpsmine.alarms import AlarmEvent, DEFAULT_SIGNATURES, sig_code
from cpsmine.errors import ParseError, UnknownNode, ValidationError
from cpsmine.topology import ComponentId

_EPS = 1e-12


@dataclass(frozen=True)
class SequenceTemplate:
    label: str
    parents: tuple[str, ...]  # attack-step order, not sorted


@dataclass
class CausalNetwork:
    alarm_nodes: list[str]
    sequence_nodes: list[SequenceTemplate]
    activations: dict[tuple[str, str], float]  # (alarm, sequence label) -> prob
    priors: dict[str, float]
    leak: float = 0.0

    def __post_init__(self) -> None:
        alarms = set(self.alarm_nodes)
        if len(alarms) != len(self.alarm_nodes):
            raise ValidationError("duplicate alarm node")
        labels = [t.label for t in self.sequence_nodes]
        if len(set(labels)) != len(labels):
            raise ValidationError("duplicate sequence node label")
        if not 0.0 <= self.leak < 1.0:
            raise ValidationError(f"leak must be in [0, 1), got {self.leak}")
        for sig, prior in self.priors.items():
            if sig not in alarms:
                raise ValidationError(f"prior for unknown alarm {sig!r}")
            if not 0.0 <= prior <= 1.0:
                raise ValidationError(f"prior out of range for {sig!r}: {prior}")
        for template in self.sequence_nodes:
            if not template.parents:
                raise ValidationError(f"sequence {template.label!r} has no parents")
            for parent in template.parents:
                if parent not in alarms:
                    raise ValidationError(
                        f"sequence {template.label!r} references unknown alarm {parent!r}"
                    )
                if (parent, template.label) not in self.activations:
                    raise ValidationError(
                        f"missing edge activation for ({parent!r}, {template.label!r})"
                    )
        for (sig, label), k in self.activations.items():
            if sig not in alarms or label not in set(labels):
                raise ValidationError(f"edge ({sig!r}, {label!r}) has a dangling endpoint")
            template = next(t for t in self.sequence_nodes if t.label == label)
            if sig not in template.parents:
                raise ValidationError(
                    f"edge ({sig!r}, {label!r}) is not among the template's parents"
                )
            if not 0.0 < k <= 1.0:
                raise ValidationError(f"activation out of (0, 1] for ({sig!r}, {label!r})")

    def template(self, label: str) -> SequenceTemplate:
        for t in self.sequence_nodes:
            if t.label == label:
                return t
        raise UnknownNode(label)

    def with_empirical_priors(self, events: list[AlarmEvent]) -> "CausalNetwork":
        """Fill missing priors with each signature's frequency among ``events``."""
        missing = [s for s in self.alarm_nodes if s not in self.priors]
        if not missing or not events:
            return self
        total = len(events)
        priors = dict(self.priors)
        for sig in missing:
            priors[sig] = sum(1 for e in events if e.sig_name == sig) / total
        return CausalNetwork(
            self.alarm_nodes, self.sequence_nodes, self.activations, priors, self.leak
        )


def network_from_dict(data: dict) -> CausalNetwork:
    alarms: list[str] = []
    priors: dict[str, float] = {}
    for entry in data.get("alarms", []):
        if isinstance(entry, str):
            alarms.append(entry)
        else:
            alarms.append(entry["name"])
            if "prior" in entry and entry["prior"] is not None:
                priors[entry["name"]] = float(entry["prior"])
    sequences = [
        SequenceTemplate(s["label"], tuple(s["parents"])) for s in data.get("sequences", [])
    ]
    activations = {
        (e["parent"], e["sequence"]): float(e["activation"]) for e in data.get("edges", [])
    }
    return CausalNetwork(
        alarm_nodes=alarms,
        sequence_nodes=sequences,
        activations=activations,
        priors=priors,
        leak=float(data.get("leak", 0.0)),
    )


def load_network(path) -> CausalNetwork:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return network_from_dict(data)


@dataclass(frozen=True)
class FuzzySubset:
    """One present/absent sign assignment over a template's parents."""

    assignment: tuple[tuple[str, bool], ...]  # (alarm, present) over sorted parents
    sequence_node: str

    @property
    def present(self) -> tuple[str, ...]:
        return tuple(sig for sig, p in self.assignment if p)

    @property
    def n_present(self) -> int:
        return sum(1 for _, p in self.assignment if p)


@dataclass(frozen=True)
class CyberAttackSequence:
    attacker: str
    steps: tuple[tuple[str, ComponentId, float], ...]  # (sig_name, component, time)
    credibility: float

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValidationError("sequence must have at least one step")
        times = [t for _, _, t in self.steps]
        if any(a > b for a, b in zip(times, times[1:])):
            raise ValidationError("steps must be time-ordered")
        if not 0.0 <= self.credibility <= 1.0:
            raise ValidationError("credibility out of [0, 1]")

    @property
    def components(self) -> set[ComponentId]:
        return {c for _, c, _ in self.steps}

    @property
    def end_time(self) -> float:
        return self.steps[-1][2]


def group_by_attacker(events: list[AlarmEvent]) -> dict[str, list[AlarmEvent]]:
    """Partition events by source ip, each group sorted by (time, cid)."""
    groups: dict[str, list[AlarmEvent]] = {}
    for event in events:
        groups.setdefault(event.src_ip, []).append(event)
    for bucket in groups.values():
        bucket.sort(key=lambda e: (e.time, e.cid))
    return groups


def enumerate_subsets(net: CausalNetwork, observed, target: str) -> list[FuzzySubset]:
    """All sign combinations over the target's parents, unobservable-present pruned.

    Parents are sorted by label; combination ``b`` marks parent ``i`` present
    when bit ``i`` of ``b`` is set, so the all-absent assignment comes first.
    """
    template = net.template(target)
    parents = sorted(set(template.parents))
    observed = set(observed)
    subsets = []
    for b in range(1 << len(parents)):
        assignment = tuple((sig, bool(b >> i & 1)) for i, sig in enumerate(parents))
        if any(p and sig not in observed for sig, p in assignment):
            continue
        subsets.append(FuzzySubset(assignment, target))
    return subsets


def credibility(net: CausalNetwork, subset: FuzzySubset) -> float:
    """Unnormalized credibility of one sign assignment.

    The prior product over present/absent signs is weighted by the noisy-OR
    activation of the sequence node given the present parents. Priors are
    clamped away from exact 0/1 before multiplication; normalization over the
    sibling subsets of the same target happens during recognition.
    """
    score = 1.0
    no_activation = 1.0 - net.leak
    for sig, present in subset.assignment:
        prior = min(max(net.priors.get(sig, 0.5), _EPS), 1.0 - _EPS)
        if present:
            score *= prior
            no_activation *= 1.0 - net.activations[(sig, subset.sequence_node)]
        else:
            score *= 1.0 - prior
    return score * (1.0 - no_activation)


def _selection_key(score: float, subset: FuzzySubset):
    # higher score wins; ties prefer more present signs, then the
    # lexicographically smallest present-label tuple
    return (-score, -subset.n_present, tuple(sorted(subset.present)))


def _temporally_ordered(subset: FuzzySubset, template: SequenceTemplate, first_seen) -> bool:
    times = [first_seen[sig].time for sig in template.parents if dict(subset.assignment).get(sig)]
    return all(a <= b for a, b in zip(times, times[1:]))


def score_target(net: CausalNetwork, events: list[AlarmEvent], target: str):
    """Normalized credibilities for one attacker group and one sequence node.

    Returns (subsets, normalized scores) after pruning combinations whose
    present alarms are out of order relative to the template's step order.
    """
    template = net.template(target)
    observed = {e.sig_name for e in events}
    first_seen: dict[str, AlarmEvent] = {}
    for event in sorted(events, key=lambda e: (e.time, e.cid)):
        first_seen.setdefault(event.sig_name, event)
    subsets = [
        s
        for s in enumerate_subsets(net, observed, target)
        if _temporally_ordered(s, template, first_seen)
    ]
    raw = [credibility(net, s) for s in subsets]
    total = sum(raw)
    scores = [r / total if total > 0.0 else 0.0 for r in raw]
    return subsets, scores


def recognize_cas(
    net: CausalNetwork,
    groups: dict[str, list[AlarmEvent]],
    min_credibility: float = 0.0,
) -> list[CyberAttackSequence]:
    """Emit the maximum-credibility sequence per attacker and template.

    Only templates whose parents intersect the attacker's observed signatures
    are considered; all-absent winners and winners below ``min_credibility``
    are dropped.
    """
    out: list[CyberAttackSequence] = []
    for attacker in sorted(groups):
        events = groups[attacker]
        observed = {e.sig_name for e in events}
        first_seen: dict[str, AlarmEvent] = {}
        for event in sorted(events, key=lambda e: (e.time, e.cid)):
            first_seen.setdefault(event.sig_name, event)
        for template in net.sequence_nodes:
            if not observed & set(template.parents):
                continue
            subsets, scores = score_target(net, events, template.label)
            if not subsets:
                continue
            best_i = min(range(len(subsets)), key=lambda i: _selection_key(scores[i], subsets[i]))
            best, best_score = subsets[best_i], scores[best_i]
            if best.n_present == 0 or best_score < min_credibility:
                continue
            steps = sorted(
                (
                    (sig, first_seen[sig].component, first_seen[sig].time)
                    for sig in best.present
                ),
                key=lambda s: (s[2], s[0]),
            )
            out.append(CyberAttackSequence(attacker, tuple(steps), best_score))
    out.sort(key=lambda s: (s.attacker, s.steps[0][2], s.steps))
    return out


def render_steps(steps, signatures=DEFAULT_SIGNATURES) -> str:
    """Render steps like ``s5^CE1 > s6^CE3 > s1^CE2``."""
    return " > ".join(f"{sig_code(sig, signatures)}^{comp}" for sig, comp, _ in steps)


def render_cas(seq: CyberAttackSequence, signatures=DEFAULT_SIGNATURES) -> str:
    return f"{render_steps(seq.steps, signatures)}, {seq.credibility * 100:.1f}%"
