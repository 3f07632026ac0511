"""Cyber-physical topology map and the connectivity queries used for join pruning.

The map holds two node sets (cyber components ``CE<i>`` and physical
components ``PE<i>``) plus an undirected relation set that may mix
cyber-cyber and cyber-physical links. Physical-physical links are rejected:
reachability across them is deliberately left undefined.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field

from cpsmine.errors import ParseError, UnknownComponent, ValidationError

_ID_RE = re.compile(r"^(CE|PE)([1-9][0-9]*)$")


class Kind(enum.Enum):
    CYBER = "CE"
    PHYSICAL = "PE"


@dataclass(frozen=True)
class ComponentId:
    """A single component, e.g. ``CE4`` or ``PE2``."""

    kind: Kind
    index: int

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValidationError(f"component index must be >= 1, got {self.index}")

    def __str__(self) -> str:
        return f"{self.kind.value}{self.index}"

    def __lt__(self, other: "ComponentId") -> bool:
        return (self.kind.value, self.index) < (other.kind.value, other.index)

    @classmethod
    def parse(cls, text: str) -> "ComponentId":
        m = _ID_RE.match(text.strip())
        if not m:
            raise ParseError(f"not a component id: {text!r}")
        kind = Kind.CYBER if m.group(1) == "CE" else Kind.PHYSICAL
        return cls(kind, int(m.group(2)))


def cyber(index: int) -> ComponentId:
    return ComponentId(Kind.CYBER, index)


def physical(index: int) -> ComponentId:
    return ComponentId(Kind.PHYSICAL, index)


@dataclass(frozen=True)
class TopologyMap:
    """Immutable node sets plus undirected relations; safe to share across workers."""

    cyber_nodes: frozenset[ComponentId]
    physical_nodes: frozenset[ComponentId]
    relations: frozenset[frozenset[ComponentId]] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        all_nodes = self.cyber_nodes | self.physical_nodes
        for node in self.cyber_nodes:
            if node.kind is not Kind.CYBER:
                raise ValidationError(f"{node} listed as a cyber node")
        for node in self.physical_nodes:
            if node.kind is not Kind.PHYSICAL:
                raise ValidationError(f"{node} listed as a physical node")
        for rel in self.relations:
            if len(rel) != 2:
                raise ValidationError("self-loop relation")
            a, b = sorted(rel)
            if a not in all_nodes or b not in all_nodes:
                raise ValidationError(f"relation ({a}, {b}) has a dangling endpoint")
            if a.kind is Kind.PHYSICAL and b.kind is Kind.PHYSICAL:
                raise ValidationError(f"physical-physical relation ({a}, {b}) not allowed")

    def has_node(self, node: ComponentId) -> bool:
        return node in self.cyber_nodes or node in self.physical_nodes

    def neighbors(self, node: ComponentId) -> list[ComponentId]:
        """All nodes sharing a relation with ``node``, ascending by (kind, index)."""
        if not self.has_node(node):
            raise UnknownComponent(str(node))
        out = set()
        for rel in self.relations:
            if node in rel:
                out.update(rel - {node})
        return sorted(out, key=lambda n: (n.kind.value, n.index))

    def to_dict(self) -> dict:
        return {
            "cyber": [str(n) for n in sorted(self.cyber_nodes)],
            "physical": [str(n) for n in sorted(self.physical_nodes)],
            "relations": sorted(
                [sorted(str(n) for n in rel) for rel in self.relations]
            ),
        }


def _build(cyber_ids: list[str], physical_ids: list[str], relations: list) -> TopologyMap:
    cyber_nodes: set[ComponentId] = set()
    for text in cyber_ids:
        node = ComponentId.parse(text)
        if node in cyber_nodes:
            raise ValidationError(f"duplicate node {node}")
        cyber_nodes.add(node)
    physical_nodes: set[ComponentId] = set()
    for text in physical_ids:
        node = ComponentId.parse(text)
        if node in physical_nodes:
            raise ValidationError(f"duplicate node {node}")
        physical_nodes.add(node)
    rels: set[frozenset[ComponentId]] = set()
    for pair in relations:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ParseError(f"relation must be a two-element array, got {pair!r}")
        a, b = ComponentId.parse(pair[0]), ComponentId.parse(pair[1])
        if a == b:
            raise ValidationError(f"self-loop on {a}")
        rels.add(frozenset((a, b)))
    return TopologyMap(frozenset(cyber_nodes), frozenset(physical_nodes), frozenset(rels))


def topology_from_dict(data: dict) -> TopologyMap:
    if not isinstance(data, dict):
        raise ParseError("topology document must be a JSON object")
    missing = {"cyber", "physical", "relations"} - set(data)
    if missing:
        raise ParseError(f"topology document missing keys: {sorted(missing)}")
    return _build(data["cyber"], data["physical"], data["relations"])


def load_topology(path) -> TopologyMap:
    """Load and validate a topology JSON file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return topology_from_dict(data)


def save_topology(topo: TopologyMap, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(topo.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def connected_cyber(topo: TopologyMap, pe: ComponentId) -> list[ComponentId]:
    """Cyber nodes directly related to ``pe``, ascending by index."""
    if pe.kind is not Kind.PHYSICAL or pe not in topo.physical_nodes:
        raise UnknownComponent(str(pe))
    return [n for n in topo.neighbors(pe) if n.kind is Kind.CYBER]


def is_reachable(
    topo: TopologyMap,
    cyber_set,
    pe: ComponentId,
    policy: str = "direct",
) -> bool:
    """Whether ``pe`` is attack-reachable from any member of ``cyber_set``.

    ``direct`` demands a shared relation with a member; ``transitive`` first
    expands the set through cyber-cyber relations (breadth-first) and then
    applies the direct test.
    """
    if pe not in topo.physical_nodes:
        raise UnknownComponent(str(pe))
    cyber_set = set(cyber_set)
    for node in cyber_set:
        if node not in topo.cyber_nodes:
            raise UnknownComponent(str(node))
    if policy not in ("direct", "transitive"):
        raise ValueError(f"unknown reachability policy {policy!r}")
    if policy == "transitive":
        frontier = list(cyber_set)
        seen = set(cyber_set)
        while frontier:
            node = frontier.pop()
            for nb in topo.neighbors(node):
                if nb.kind is Kind.CYBER and nb not in seen:
                    seen.add(nb)
                    frontier.append(nb)
        cyber_set = seen
    adjacent = set(connected_cyber(topo, pe))
    return bool(cyber_set & adjacent)
