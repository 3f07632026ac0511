import json

import pytest

from cpsmine.errors import ParseError, UnknownComponent, ValidationError
from cpsmine.topology import (
    ComponentId,
    Kind,
    connected_cyber,
    cyber,
    is_reachable,
    load_topology,
    physical,
    save_topology,
    topology_from_dict,
)

from oracles import bfs_reachable


def write_topology(tmp_path, doc):
    path = tmp_path / "topology.json"
    path.write_text(json.dumps(doc))
    return path


TESTBED = {
    "cyber": [f"CE{i}" for i in range(1, 10)],
    "physical": [f"PE{i}" for i in range(1, 13)],
    "relations": [
        ["CE1", "CE2"], ["CE2", "CE3"], ["CE2", "CE4"],
        ["CE3", "PE1"], ["CE3", "PE2"], ["CE4", "PE2"], ["CE4", "PE3"],
        ["CE2", "PE4"], ["CE1", "PE5"], ["CE1", "PE6"], ["CE2", "PE7"],
        ["CE3", "PE8"], ["CE4", "PE9"], ["CE1", "PE10"], ["CE2", "PE11"],
        ["CE3", "PE12"],
    ],
}


class TestComponentId:
    def test_round_trip(self):
        for text in ("CE1", "PE12", "CE999"):
            assert str(ComponentId.parse(text)) == text

    @pytest.mark.parametrize("bad", ["CE0", "PE-1", "XX3", "CE", "ce4", "CE 4"])
    def test_rejects_malformed(self, bad):
        with pytest.raises((ParseError, ValidationError)):
            ComponentId.parse(bad)

    def test_index_must_be_positive(self):
        with pytest.raises(ValidationError):
            ComponentId(Kind.CYBER, 0)


class TestLoadTopology:
    def test_testbed_counts(self, tmp_path):
        topo = load_topology(write_topology(tmp_path, TESTBED))
        assert len(topo.cyber_nodes) == 9
        assert len(topo.physical_nodes) == 12

    def test_zero_relations_is_valid(self, tmp_path):
        doc = {"cyber": ["CE1"], "physical": ["PE1"], "relations": []}
        topo = load_topology(write_topology(tmp_path, doc))
        assert topo.relations == frozenset()

    def test_dangling_endpoint(self, tmp_path):
        doc = {"cyber": ["CE1"], "physical": ["PE1"], "relations": [["CE1", "PE99"]]}
        with pytest.raises(ValidationError):
            load_topology(write_topology(tmp_path, doc))

    def test_duplicate_node(self, tmp_path):
        doc = {"cyber": ["CE1", "CE1"], "physical": [], "relations": []}
        with pytest.raises(ValidationError):
            load_topology(write_topology(tmp_path, doc))

    def test_self_loop(self, tmp_path):
        doc = {"cyber": ["CE1"], "physical": [], "relations": [["CE1", "CE1"]]}
        with pytest.raises(ValidationError):
            load_topology(write_topology(tmp_path, doc))

    def test_physical_physical_rejected(self, tmp_path):
        doc = {"cyber": [], "physical": ["PE1", "PE2"], "relations": [["PE1", "PE2"]]}
        with pytest.raises(ValidationError):
            load_topology(write_topology(tmp_path, doc))

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "topology.json"
        path.write_text("{nope")
        with pytest.raises(ParseError):
            load_topology(path)

    def test_save_load_identity(self, tmp_path):
        topo = topology_from_dict(TESTBED)
        path = tmp_path / "roundtrip.json"
        save_topology(topo, path)
        assert load_topology(path) == topo


class TestConnectedCyber:
    def test_single_controlling_host(self):
        topo = topology_from_dict(TESTBED)
        assert connected_cyber(topo, physical(1)) == [cyber(3)]

    def test_no_relations(self):
        topo = topology_from_dict(
            {"cyber": ["CE1"], "physical": ["PE1"], "relations": []}
        )
        assert connected_cyber(topo, physical(1)) == []

    def test_unknown_component(self):
        topo = topology_from_dict(TESTBED)
        with pytest.raises(UnknownComponent):
            connected_cyber(topo, physical(99))

    def test_subset_of_cyber_nodes(self):
        topo = topology_from_dict(TESTBED)
        for pe in topo.physical_nodes:
            assert set(connected_cyber(topo, pe)) <= topo.cyber_nodes

    def test_ascending_order(self):
        topo = topology_from_dict(TESTBED)
        neighbors = connected_cyber(topo, physical(2))
        assert neighbors == sorted(neighbors, key=lambda n: n.index)
        assert neighbors == [cyber(3), cyber(4)]


class TestIsReachable:
    def test_direct_matches_adjacency_intersection(self):
        topo = topology_from_dict(TESTBED)
        for pe in sorted(topo.physical_nodes):
            adjacent = set(connected_cyber(topo, pe))
            for ce in sorted(topo.cyber_nodes):
                expected = ce in adjacent
                assert is_reachable(topo, {ce}, pe) == expected

    def test_definitional_true(self):
        topo = topology_from_dict(TESTBED)
        pe = physical(2)
        assert is_reachable(topo, set(connected_cyber(topo, pe)), pe)

    def test_disjoint_false(self):
        topo = topology_from_dict(TESTBED)
        assert not is_reachable(topo, {cyber(9)}, physical(1))

    def test_transitive_chain(self):
        doc = {
            "cyber": ["CE1", "CE2"],
            "physical": ["PE3"],
            "relations": [["CE1", "CE2"], ["CE2", "PE3"]],
        }
        topo = topology_from_dict(doc)
        assert not is_reachable(topo, {cyber(1)}, physical(3), policy="direct")
        assert is_reachable(topo, {cyber(1)}, physical(3), policy="transitive")
        assert bfs_reachable(
            [("CE1", "CE2"), ("CE2", "PE3")], {"CE1"}, "PE3"
        )

    def test_transitive_matches_bfs_oracle(self):
        import random

        rng = random.Random(4)
        for _ in range(25):
            cybers = [f"CE{i}" for i in range(1, 6)]
            physicals = [f"PE{i}" for i in range(1, 4)]
            relations = []
            for a, b in [(x, y) for x in cybers for y in cybers if x < y]:
                if rng.random() < 0.3:
                    relations.append([a, b])
            for a in cybers:
                for b in physicals:
                    if rng.random() < 0.3:
                        relations.append([a, b])
            topo = topology_from_dict(
                {"cyber": cybers, "physical": physicals, "relations": relations}
            )
            sources = {c for c in cybers if rng.random() < 0.4} or {"CE1"}
            for target in physicals:
                got = is_reachable(
                    topo,
                    {ComponentId.parse(c) for c in sources},
                    ComponentId.parse(target),
                    policy="transitive",
                )
                want = bfs_reachable(
                    [tuple(r) for r in relations], sources, target
                )
                assert got == want

    def test_unknown_ids(self):
        topo = topology_from_dict(TESTBED)
        with pytest.raises(UnknownComponent):
            is_reachable(topo, {cyber(42)}, physical(1))
        with pytest.raises(UnknownComponent):
            is_reachable(topo, {cyber(1)}, physical(99))
