"""Temporal-topological attack pattern mining.

Recognized cyber attack sequences are joined with physical attack events
under temporal and topological constraints, segmented per attacker into
attack records with a dynamic time window (capped at 240 s), loaded into a
topology-tagged frequent pattern tree, and mined for frequent ordered
antecedent => consequent rules meeting the support and confidence thresholds.

Items carry their component id, so the same signature observed on two
different components is two distinct items; that is what makes topology
pruning possible during mining.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from cpsmine.alarms import DEFAULT_SIGNATURES, sig_code
from cpsmine.cas import CyberAttackSequence
from cpsmine.errors import ValidationError
from cpsmine.pae import PhysicalAttackEvent
from cpsmine.topology import ComponentId, TopologyMap, is_reachable

logger = logging.getLogger(__name__)

WINDOW_CAP_SECONDS = 240.0

CYBER = "cyber"
PHYSICAL = "physical"

# An item is (kind, label, component string); labels are signature names for
# cyber steps and stringified scenario codes for physical events.
Item = tuple[str, str, str]


def cyber_item(sig_name: str, component) -> Item:
    return (CYBER, sig_name, str(component))


def physical_item(label: int, component) -> Item:
    return (PHYSICAL, str(label), str(component))


def _item_tie_key(item: Item):
    return (item[1], item[2])


@dataclass(frozen=True)
class AttackStep:
    item: str
    component: ComponentId
    time: float
    kind: str  # CYBER or PHYSICAL

    def __post_init__(self) -> None:
        if self.kind not in (CYBER, PHYSICAL):
            raise ValidationError(f"unknown step kind {self.kind!r}")

    def key(self) -> Item:
        return (self.kind, self.item, str(self.component))


@dataclass(frozen=True)
class AttackRecord:
    aid: str
    steps: tuple[AttackStep, ...]

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValidationError("attack record must contain steps")
        times = [s.time for s in self.steps]
        if any(a > b for a, b in zip(times, times[1:])):
            raise ValidationError("record steps must be time-ordered")
        physical = [i for i, s in enumerate(self.steps) if s.kind == PHYSICAL]
        if len(physical) > 1:
            raise ValidationError("record may contain at most one physical event")
        if physical and physical[0] != len(self.steps) - 1:
            raise ValidationError("the physical event must be the last step")
        keys = [s.key() for s in self.steps]
        if len(set(keys)) != len(keys):
            raise ValidationError("record items must be distinct")

    def item_set(self) -> frozenset[Item]:
        return frozenset(s.key() for s in self.steps)

    def cyber_order(self) -> tuple[Item, ...]:
        return tuple(s.key() for s in self.steps if s.kind == CYBER)

    def physical(self) -> Item | None:
        last = self.steps[-1]
        return last.key() if last.kind == PHYSICAL else None


@dataclass
class WindowStats:
    """Observed intervals between a sequence type and its physical event.

    Intervals are bucketed to ``bucket_width`` seconds; each bucket keeps an
    occurrence count so the dynamic window can take the weighted mean.
    """

    bucket_width: float = 1.0
    buckets: dict[tuple, dict[float, int]] = field(default_factory=dict)

    def add(self, key, interval: float) -> None:
        if interval <= 0:
            raise ValueError("interval must be positive")
        bucket = round(interval / self.bucket_width) * self.bucket_width
        per_key = self.buckets.setdefault(key, {})
        per_key[bucket] = per_key.get(bucket, 0) + 1

    def is_empty(self) -> bool:
        return not self.buckets


def dynamic_window(stats: WindowStats | None, delta_t: float, key=None) -> float:
    """Segmentation gap threshold in seconds.

    Gaps of 240 s or more always hit the cap. Below the cap the threshold is
    the weighted mean of the observed interval buckets for ``key``; with no
    history the cap is used and a warning logged. ``stats=None`` selects the
    cap silently (the bootstrap pass that first collects history).
    """
    if delta_t >= WINDOW_CAP_SECONDS:
        return WINDOW_CAP_SECONDS
    if stats is None:
        return WINDOW_CAP_SECONDS
    if key is None and len(stats.buckets) == 1:
        key = next(iter(stats.buckets))
    per_key = stats.buckets.get(key)
    if not per_key:
        logger.warning("no interval history for %r; falling back to the cap", key)
        return WINDOW_CAP_SECONDS
    weight = sum(per_key.values())
    return sum(n * t for t, n in per_key.items()) / weight


def join(
    cas: list[CyberAttackSequence],
    pae: list[PhysicalAttackEvent],
    topo: TopologyMap,
    policy: str = "direct",
) -> list[tuple[CyberAttackSequence, PhysicalAttackEvent]]:
    """Candidate (sequence, event) pairs under the temporal-topological rules.

    A pair is kept when the sequence's last step precedes the event's start
    and the event's component is reachable from the sequence's components.
    An event may pair with any number of sequences.
    """
    pairs = []
    for seq in sorted(cas, key=lambda s: (s.attacker, s.steps[0][2], s.steps)):
        for event in sorted(pae, key=lambda e: (e.span[0], str(e.component), e.label)):
            if seq.end_time < event.start and is_reachable(
                topo, seq.components, event.component, policy
            ):
                pairs.append((seq, event))
    return pairs


def collect_window_stats(
    records: list[AttackRecord], bucket_width: float = 1.0
) -> WindowStats:
    """Observed cyber-to-physical intervals per sequence type, for refinement."""
    stats = WindowStats(bucket_width=bucket_width)
    for record in records:
        phys = record.physical()
        cyber = [s for s in record.steps if s.kind == CYBER]
        if phys is None or not cyber:
            continue
        interval = record.steps[-1].time - cyber[-1].time
        if interval > 0:
            key = (tuple(s.key() for s in cyber), phys)
            stats.add(key, interval)
    return stats


def segment(pairs, stats: WindowStats | None = None) -> list[AttackRecord]:
    """Merge each attacker's joined steps into gap-bounded attack records.

    Steps merge while consecutive gaps stay within the applicable window:
    cyber-to-cyber gaps use the 240 s cap, a cyber-to-physical gap uses the
    dynamic window for the (sequence items, event item) key. A physical event
    always closes its record.
    """
    per_attacker: dict[str, dict] = {}
    for seq, event in pairs:
        steps = per_attacker.setdefault(seq.attacker, {})
        for sig, component, time in seq.steps:
            step = AttackStep(sig, component, time, CYBER)
            steps[(step.key(), time)] = step
        step = AttackStep(str(event.label), event.component, event.start, PHYSICAL)
        steps[(step.key(), step.time)] = step

    records: list[AttackRecord] = []
    for aid in sorted(per_attacker):
        ordered = sorted(
            per_attacker[aid].values(), key=lambda s: (s.time, s.kind, s.item)
        )
        current: list[AttackStep] = []
        seen: set[Item] = set()

        def close() -> None:
            if current:
                records.append(AttackRecord(aid, tuple(current)))
                current.clear()
                seen.clear()

        for step in ordered:
            if current:
                gap = step.time - current[-1].time
                if step.kind == PHYSICAL and any(s.kind == CYBER for s in current):
                    key = (
                        tuple(s.key() for s in current if s.kind == CYBER),
                        step.key(),
                    )
                    window = dynamic_window(stats, gap, key)
                else:
                    window = WINDOW_CAP_SECONDS
                if gap > window or current[-1].kind == PHYSICAL:
                    close()
            if step.key() in seen:
                continue
            current.append(step)
            seen.add(step.key())
            if step.kind == PHYSICAL:
                close()
        close()
    records.sort(key=lambda r: (r.aid, r.steps[0].time))
    return records


class TfpNode:
    __slots__ = ("item", "count", "parent", "children", "node_link")

    def __init__(self, item: Item | None, parent: "TfpNode | None"):
        self.item = item
        self.count = 0
        self.parent = parent
        self.children: dict[Item, TfpNode] = {}
        self.node_link: TfpNode | None = None


@dataclass
class TfpTree:
    root: TfpNode
    header: dict[Item, TfpNode]  # head of each item's node-link chain
    order: list[Item]  # global descending-support order
    total_attackers: int
    alpha: float

    def chain(self, item: Item):
        node = self.header.get(item)
        while node is not None:
            yield node
            node = node.node_link

    def header_support(self, item: Item) -> int:
        return sum(node.count for node in self.chain(item))


def _insert_path(root: TfpNode, header: dict[Item, TfpNode], items, count: int) -> None:
    node = root
    node.count += count
    for item in items:
        child = node.children.get(item)
        if child is None:
            child = TfpNode(item, node)
            node.children[item] = child
            head = header.get(item)
            if head is None:
                header[item] = child
            else:
                while head.node_link is not None:
                    head = head.node_link
                head.node_link = child
        child.count += count
        node = child


def build_tree(ad: list[AttackRecord], alpha: float) -> TfpTree:
    """Build the topology frequent pattern tree over the attack database.

    Items whose attacker support is below ``alpha`` are dropped; the rest are
    globally ordered by descending attacker support (ties lexicographic on
    label then component) and every record's retained items are inserted as a
    path in that order.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    attackers = {r.aid for r in ad}
    total = len(attackers)
    item_attackers: dict[Item, set[str]] = {}
    for record in ad:
        for item in record.item_set():
            item_attackers.setdefault(item, set()).add(record.aid)
    retained = {
        item: len(aids) / total
        for item, aids in item_attackers.items()
        if total and len(aids) / total >= alpha
    }
    order = sorted(retained, key=lambda i: (-retained[i], _item_tie_key(i)))
    rank = {item: k for k, item in enumerate(order)}
    root = TfpNode(None, None)
    header: dict[Item, TfpNode] = {}
    for record in ad:
        items = sorted(
            (i for i in record.item_set() if i in retained), key=rank.__getitem__
        )
        _insert_path(root, header, items, 1)
    return TfpTree(root=root, header=header, order=order, total_attackers=total, alpha=alpha)


def _prefix_paths(tree_header: dict[Item, TfpNode], item: Item):
    node = tree_header.get(item)
    while node is not None:
        path = []
        up = node.parent
        while up is not None and up.item is not None:
            path.append(up.item)
            up = up.parent
        path.reverse()
        yield path, node.count
        node = node.node_link


def _frequent_itemsets(
    header: dict[Item, TfpNode], order: list[Item], min_records: int, suffix: frozenset
) -> dict[frozenset, int]:
    """Classic conditional-tree recursion; counts are record co-occurrences."""
    out: dict[frozenset, int] = {}
    for item in reversed(order):
        support = sum(node.count for node in _chain_nodes(header, item))
        if support < min_records:
            continue
        itemset = suffix | {item}
        out[frozenset(itemset)] = support
        base = list(_prefix_paths(header, item))
        counts: dict[Item, int] = {}
        for path, count in base:
            for path_item in path:
                counts[path_item] = counts.get(path_item, 0) + count
        keep = {i for i, c in counts.items() if c >= min_records}
        if not keep:
            continue
        cond_order = [i for i in order if i in keep]
        rank = {i: k for k, i in enumerate(cond_order)}
        cond_root = TfpNode(None, None)
        cond_header: dict[Item, TfpNode] = {}
        for path, count in base:
            filtered = sorted((i for i in path if i in keep), key=rank.__getitem__)
            if filtered:
                _insert_path(cond_root, cond_header, filtered, count)
        out.update(
            _frequent_itemsets(cond_header, cond_order, min_records, frozenset(itemset))
        )
    return out


def _chain_nodes(header: dict[Item, TfpNode], item: Item):
    node = header.get(item)
    while node is not None:
        yield node
        node = node.node_link


@dataclass(frozen=True)
class AttackPattern:
    antecedent: tuple[Item, ...]
    consequent: Item
    support: float
    confidence: float
    occurrences: int

    def __post_init__(self) -> None:
        if not self.antecedent:
            raise ValidationError("pattern antecedent must be non-empty")


def _contains_ordered(record: AttackRecord, antecedent: tuple[Item, ...]) -> bool:
    positions = {s.key(): i for i, s in enumerate(record.steps)}
    last = -1
    for item in antecedent:
        pos = positions.get(item)
        if pos is None or pos <= last:
            return False
        last = pos
    return True


def mine(
    tree: TfpTree,
    ad: list[AttackRecord],
    alpha: float,
    beta: float,
    topo: TopologyMap | None = None,
    reach_policy: str = "direct",
) -> list[AttackPattern]:
    """Mine frequent ordered patterns meeting the support/confidence thresholds.

    Frequent item sets come from the tree; sets with at least one cyber item
    and exactly one physical item are split by the step orders their
    supporting records exhibit, and each consistent order becomes a candidate
    pattern. Support is supporting attackers over total attackers in the
    database; confidence is records containing antecedent plus consequent
    over records containing the antecedent. When a topology is given,
    patterns whose consequent component is unreachable from the antecedent
    components are pruned.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must be in (0, 1]")
    total = tree.total_attackers
    if total == 0:
        return []
    min_records = max(1, math.ceil(alpha * total - 1e-9))
    itemsets = _frequent_itemsets(tree.header, tree.order, min_records, frozenset())
    patterns: list[AttackPattern] = []
    for itemset in itemsets:
        cyber_items = [i for i in itemset if i[0] == CYBER]
        physical_items = [i for i in itemset if i[0] == PHYSICAL]
        if len(physical_items) != 1 or not cyber_items:
            continue
        consequent = physical_items[0]
        groups: dict[tuple[Item, ...], list[AttackRecord]] = {}
        for record in ad:
            if itemset <= record.item_set():
                order = tuple(i for i in record.cyber_order() if i in itemset)
                groups.setdefault(order, []).append(record)
        for antecedent, supporting in groups.items():
            support = len({r.aid for r in supporting}) / total
            if support < alpha:
                continue
            denominator = sum(1 for r in ad if _contains_ordered(r, antecedent))
            confidence = len(supporting) / denominator
            if confidence < beta:
                continue
            if topo is not None and not is_reachable(
                topo,
                {ComponentId.parse(i[2]) for i in antecedent},
                ComponentId.parse(consequent[2]),
                reach_policy,
            ):
                continue
            patterns.append(
                AttackPattern(
                    antecedent=antecedent,
                    consequent=consequent,
                    support=support,
                    confidence=confidence,
                    occurrences=len(supporting),
                )
            )
    patterns.sort(
        key=lambda p: (-p.confidence, -p.support, render_pattern(p))
    )
    return patterns


def render_item(item: Item, signatures=DEFAULT_SIGNATURES) -> str:
    kind, label, component = item
    if kind == PHYSICAL:
        return f"e{label}^{component}"
    return f"{sig_code(label, signatures)}^{component}"


def render_pattern(pattern: AttackPattern, signatures=DEFAULT_SIGNATURES) -> str:
    """Render like ``[s5^CE4 > s1^CE3 => e21^PE2]``."""
    antecedent = " > ".join(render_item(i, signatures) for i in pattern.antecedent)
    return f"[{antecedent} => {render_item(pattern.consequent, signatures)}]"
