import random

import pytest

from cpsmine.cas import CyberAttackSequence
from cpsmine.errors import ValidationError
from cpsmine.mining import (
    AttackPattern,
    AttackRecord,
    AttackStep,
    WindowStats,
    build_tree,
    collect_window_stats,
    cyber_item,
    dynamic_window,
    join,
    mine,
    physical_item,
    render_pattern,
    segment,
)
from cpsmine.pae import PhysicalAttackEvent
from cpsmine.topology import ComponentId, cyber, physical, topology_from_dict

from oracles import subsequence_patterns

TOPO = topology_from_dict(
    {
        "cyber": ["CE1", "CE2", "CE3", "CE4"],
        "physical": ["PE1", "PE2"],
        "relations": [
            ["CE1", "CE2"], ["CE3", "PE2"], ["CE1", "PE1"], ["CE4", "PE1"],
        ],
    }
)


def cstep(sig, ce, time):
    return AttackStep(sig, cyber(ce), time, "cyber")


def pstep(label, pe, time):
    return AttackStep(str(label), physical(pe), time, "physical")


def record(aid, *steps):
    return AttackRecord(aid, tuple(steps))


def record_tuples(records):
    return [(r.aid, tuple(s.key() for s in r.steps)) for r in records]


def mined_as_dict(patterns):
    return {
        (p.antecedent, p.consequent): (p.support, p.confidence, p.occurrences)
        for p in patterns
    }


class TestDynamicWindow:
    def test_cap_above_240(self):
        assert dynamic_window(WindowStats(), 300.0) == 240.0

    def test_exactly_240_capped(self):
        assert dynamic_window(WindowStats(), 240.0) == 240.0

    def test_weighted_mean(self):
        stats = WindowStats()
        key = (("a",), "e")
        for _ in range(2):
            stats.add(key, 100.0)
        for _ in range(3):
            stats.add(key, 200.0)
        assert dynamic_window(stats, 150.0, key) == 160.0

    def test_single_bucket(self):
        stats = WindowStats()
        stats.add("k", 50.0)
        assert dynamic_window(stats, 10.0, "k") == 50.0

    def test_empty_history_falls_back(self, caplog):
        stats = WindowStats()
        with caplog.at_level("WARNING"):
            assert dynamic_window(stats, 10.0, "missing") == 240.0
        assert "no interval history" in caplog.text

    def test_none_stats_silent_cap(self, caplog):
        with caplog.at_level("WARNING"):
            assert dynamic_window(None, 10.0) == 240.0
        assert caplog.text == ""


def seq(attacker, steps):
    return CyberAttackSequence(attacker=attacker, steps=tuple(steps), credibility=0.9)


def pae(label, pe, start, end=None):
    return PhysicalAttackEvent(
        label=label, component=physical(pe), span=(start, end or start + 10.0),
        vote_share=1.0, source="R1",
    )


class TestJoin:
    def test_adjacent_and_temporal(self):
        sequences = [seq("a", [("s5", cyber(4), 0.0), ("s1", cyber(3), 10.0)])]
        events = [pae(21, 2, 50.0)]
        assert len(join(sequences, events, TOPO)) == 1

    def test_event_before_sequence(self):
        sequences = [seq("a", [("s5", cyber(4), 100.0)])]
        events = [pae(21, 1, 50.0)]
        assert join(sequences, events, TOPO) == []

    def test_topologically_unreachable(self):
        sequences = [seq("a", [("s5", cyber(2), 0.0)])]  # CE2 adjacent to nothing physical
        events = [pae(21, 2, 50.0)]
        assert join(sequences, events, TOPO) == []

    def test_one_event_many_sequences(self):
        sequences = [
            seq("a", [("s5", cyber(3), 0.0)]),
            seq("b", [("s2", cyber(3), 5.0)]),
        ]
        events = [pae(21, 2, 50.0)]
        assert len(join(sequences, events, TOPO)) == 2


class TestSegment:
    def test_small_gaps_one_record(self):
        pairs = [
            (
                seq("a", [("s1", cyber(1), 0.0), ("s2", cyber(2), 10.0)]),
                pae(21, 1, 20.0),
            )
        ]
        records = segment(pairs)
        assert len(records) == 1
        assert [s.item for s in records[0].steps] == ["s1", "s2", "21"]

    def test_gap_beyond_cap_splits(self):
        pairs = [
            (
                seq("a", [("s1", cyber(1), 0.0), ("s2", cyber(2), 300.0)]),
                pae(21, 1, 320.0),
            )
        ]
        records = segment(pairs)
        assert len(records) == 2
        assert [s.item for s in records[0].steps] == ["s1"]
        assert [s.item for s in records[1].steps] == ["s2", "21"]

    def test_physical_event_closes_record(self):
        pairs = [
            (seq("a", [("s1", cyber(1), 0.0)]), pae(21, 1, 10.0)),
            (seq("a", [("s1", cyber(1), 0.0)]), pae(22, 1, 30.0)),
        ]
        records = segment(pairs)
        assert len(records) == 2
        assert records[0].physical() == ("physical", "21", "PE1")
        assert [s.item for s in records[1].steps] == ["22"]

    def test_refined_window_splits_below_cap(self):
        stats = WindowStats()
        key = ((("cyber", "s1", "CE1"),), ("physical", "21", "PE1"))
        stats.add(key, 20.0)
        pairs = [(seq("a", [("s1", cyber(1), 0.0)]), pae(21, 1, 100.0))]
        records = segment(pairs, stats)
        # observed typical interval is 20 s; a 100 s gap now splits
        assert len(records) == 2

    def test_scripted_attackers_record_counts(self):
        rng = random.Random(3)
        pairs = []
        expected = 0
        for k in range(7):
            aid = f"attacker{k}"
            bursts = rng.randint(1, 3)
            expected += bursts
            t = 0.0
            for b in range(bursts):
                pairs.append(
                    (
                        seq(aid, [(f"sig{b}", cyber(1), t), (f"sig{b}x", cyber(2), t + 5.0)]),
                        pae(21, 1, t + 20.0),
                    )
                )
                t += 1000.0
        records = segment(pairs)
        assert len(records) == expected

    def test_duplicate_steps_deduped(self):
        shared = seq("a", [("s1", cyber(1), 0.0)])
        pairs = [(shared, pae(21, 1, 10.0)), (shared, pae(22, 1, 40.0))]
        records = segment(pairs)
        items = [s.item for r in records for s in r.steps]
        assert items.count("s1") == 1


class TestRecordInvariants:
    def test_time_order_enforced(self):
        with pytest.raises(ValidationError):
            record("a", cstep("s1", 1, 10.0), cstep("s2", 2, 5.0))

    def test_single_physical_and_last(self):
        with pytest.raises(ValidationError):
            record("a", pstep(21, 1, 0.0), cstep("s1", 1, 5.0))
        with pytest.raises(ValidationError):
            record("a", pstep(21, 1, 0.0), pstep(22, 1, 5.0))

    def test_distinct_items(self):
        with pytest.raises(ValidationError):
            record("a", cstep("s1", 1, 0.0), cstep("s1", 1, 5.0))


class TestBuildTree:
    def test_single_record_single_path(self):
        ad = [record("a", cstep("a", 1, 0.0), cstep("b", 2, 1.0), cstep("c", 3, 2.0))]
        tree = build_tree(ad, alpha=0.01)
        node = tree.root
        seen = []
        while node.children:
            assert len(node.children) == 1
            node = next(iter(node.children.values()))
            seen.append((node.item[1], node.count))
        assert [c for _, c in seen] == [1, 1, 1]
        assert {i for i, _ in seen} == {"a", "b", "c"}

    def test_two_identical_records_share_path(self):
        ad = [
            record("a", cstep("a", 1, 0.0), cstep("b", 2, 1.0)),
            record("b", cstep("a", 1, 0.0), cstep("b", 2, 1.0)),
        ]
        tree = build_tree(ad, alpha=0.01)
        node = tree.root
        while node.children:
            node = next(iter(node.children.values()))
            assert node.count == 2

    def test_header_chain_sums_match_record_counts(self):
        rng = random.Random(5)
        ad = []
        pool = [("x", 1), ("y", 2), ("z", 3), ("w", 4)]
        for i in range(10):
            chosen = rng.sample(pool, rng.randint(1, 4))
            steps = [cstep(sig, ce, float(k)) for k, (sig, ce) in enumerate(chosen)]
            ad.append(record(f"a{i % 4}", *steps))
        tree = build_tree(ad, alpha=0.01)
        for item in tree.order:
            expected = sum(1 for r in ad if item in r.item_set())
            assert tree.header_support(item) == expected

    def test_node_counts_bounded_by_parent(self):
        rng = random.Random(6)
        ad = []
        pool = [("x", 1), ("y", 2), ("z", 3)]
        for i in range(12):
            chosen = rng.sample(pool, rng.randint(1, 3))
            steps = [cstep(sig, ce, float(k)) for k, (sig, ce) in enumerate(chosen)]
            ad.append(record(f"a{i % 5}", *steps))
        tree = build_tree(ad, alpha=0.01)

        def walk(node):
            for child in node.children.values():
                assert child.count <= node.count
                walk(child)

        walk(tree.root)

    def test_items_below_alpha_dropped(self):
        ad = [
            record("a", cstep("common", 1, 0.0)),
            record("b", cstep("common", 1, 0.0)),
            record("c", cstep("common", 1, 0.0), cstep("rare", 2, 1.0)),
        ]
        tree = build_tree(ad, alpha=0.5)
        assert cyber_item("common", "CE1") in tree.order
        assert cyber_item("rare", "CE2") not in tree.order

    def test_path_items_distinct(self):
        ad = [record("a", cstep("a", 1, 0.0), cstep("b", 2, 1.0), pstep(21, 1, 2.0))]
        tree = build_tree(ad, alpha=0.01)

        def walk(node, seen):
            assert node.item not in seen
            for child in node.children.values():
                walk(child, seen | {node.item})

        for child in tree.root.children.values():
            walk(child, set())


class TestMine:
    def test_empty_database(self):
        assert mine(build_tree([], 0.3), [], 0.3, 0.3) == []

    def test_unanimous_database(self):
        ad = [
            record(f"a{i}", cstep("x", 1, 0.0), cstep("y", 2, 1.0), pstep(7, 1, 2.0))
            for i in range(4)
        ]
        patterns = mine(build_tree(ad, 0.3), ad, 0.3, 0.3)
        full = next(p for p in patterns if len(p.antecedent) == 2)
        assert full.support == 1.0
        assert full.confidence == 1.0
        assert full.occurrences == 4
        assert render_pattern(full) == "[x^CE1 > y^CE2 => e7^PE1]"

    def test_matches_brute_force_on_planted_pattern(self):
        rng = random.Random(9)
        ad = []
        for i in range(20):
            aid = f"a{i}"
            if i < 12:  # planted
                steps = [cstep("u", 1, 0.0), cstep("v", 2, 1.0), pstep(21, 1, 2.0)]
            else:  # noise
                sigs = rng.sample([("p", 3), ("q", 4), ("u", 1)], rng.randint(1, 3))
                steps = [cstep(s, c, float(k)) for k, (s, c) in enumerate(sigs)]
                if rng.random() < 0.5:
                    steps.append(pstep(22, 2, float(len(steps))))
            ad.append(record(aid, *steps))
        alpha, beta = 0.3, 0.3
        got = mined_as_dict(mine(build_tree(ad, alpha), ad, alpha, beta))
        want = subsequence_patterns(record_tuples(ad), alpha, beta)
        assert got == want
        planted = (
            (cyber_item("u", "CE1"), cyber_item("v", "CE2")),
            physical_item(21, "PE1"),
        )
        assert planted in got

    def test_order_split_counts_each_direction(self):
        ad = [
            record("a1", cstep("x", 1, 0.0), cstep("y", 2, 1.0), pstep(7, 1, 2.0)),
            record("a2", cstep("x", 1, 0.0), cstep("y", 2, 1.0), pstep(7, 1, 2.0)),
            record("a3", cstep("y", 2, 0.0), cstep("x", 1, 1.0), pstep(7, 1, 2.0)),
        ]
        patterns = mine(build_tree(ad, 0.1), ad, 0.1, 0.1)
        by_antecedent = {
            p.antecedent: p for p in patterns if len(p.antecedent) == 2
        }
        forward = (cyber_item("x", "CE1"), cyber_item("y", "CE2"))
        backward = (cyber_item("y", "CE2"), cyber_item("x", "CE1"))
        assert by_antecedent[forward].occurrences == 2
        assert by_antecedent[backward].occurrences == 1

    def test_threshold_monotonicity(self):
        rng = random.Random(11)
        ad = []
        for i in range(15):
            sigs = rng.sample([("p", 1), ("q", 2), ("r", 3)], rng.randint(1, 3))
            steps = [cstep(s, c, float(k)) for k, (s, c) in enumerate(sigs)]
            if rng.random() < 0.7:
                steps.append(pstep(21, 1, float(len(steps))))
            ad.append(record(f"a{i % 6}", *steps))
        last = None
        for alpha in (0.1, 0.3, 0.5):
            found = {
                (p.antecedent, p.consequent)
                for p in mine(build_tree(ad, alpha), ad, alpha, 0.1)
            }
            if last is not None:
                assert found <= last
            last = found
        last = None
        for beta in (0.1, 0.4, 0.8):
            found = {
                (p.antecedent, p.consequent)
                for p in mine(build_tree(ad, 0.1), ad, 0.1, beta)
            }
            if last is not None:
                assert found <= last
            last = found

    def test_random_databases_match_oracle(self):
        rng = random.Random(21)
        for trial in range(30):
            ad = _random_database(rng)
            alpha = rng.choice([0.2, 0.3, 0.5])
            beta = rng.choice([0.2, 0.4])
            got = mined_as_dict(mine(build_tree(ad, alpha), ad, alpha, beta))
            want = subsequence_patterns(record_tuples(ad), alpha, beta)
            assert got == want, f"trial {trial}"

    def test_topology_pruning_is_a_reachability_filter(self):
        rng = random.Random(31)
        ad = _random_database(rng, cyber_pool=[("a", 1), ("b", 2), ("c", 3)])
        alpha = beta = 0.2
        tree = build_tree(ad, alpha)
        unpruned = mine(tree, ad, alpha, beta)
        pruned = mine(tree, ad, alpha, beta, topo=TOPO)
        expected = [
            p
            for p in unpruned
            if _reachable(p)
        ]
        assert mined_as_dict(pruned) == mined_as_dict(expected)

    def test_output_sorted_by_confidence_then_support(self):
        rng = random.Random(41)
        ad = _random_database(rng)
        patterns = mine(build_tree(ad, 0.2), ad, 0.2, 0.2)
        keys = [(-p.confidence, -p.support) for p in patterns]
        assert keys == sorted(keys)


def _reachable(pattern):
    from cpsmine.topology import is_reachable

    return is_reachable(
        TOPO,
        {ComponentId.parse(i[2]) for i in pattern.antecedent},
        ComponentId.parse(pattern.consequent[2]),
    )


def _random_database(rng, cyber_pool=None, physical_pool=None, n_records=None):
    cyber_pool = cyber_pool or [("a", 1), ("b", 2), ("c", 3), ("d", 4), ("e", 1)]
    physical_pool = physical_pool or [(21, 1), (9, 2)]
    records = []
    for i in range(n_records or rng.randint(5, 25)):
        aid = f"a{rng.randint(0, 5)}"
        k = rng.randint(0, min(4, len(cyber_pool)))
        chosen = rng.sample(cyber_pool, k)
        steps = [cstep(sig, ce, float(j)) for j, (sig, ce) in enumerate(chosen)]
        if rng.random() < 0.7 or not steps:
            label, pe = rng.choice(physical_pool)
            steps.append(pstep(label, pe, float(len(steps))))
        records.append(record(aid, *steps))
    return records


class TestWindowStatsCollection:
    def test_intervals_bucketed_per_key(self):
        ad = [
            record("a", cstep("x", 1, 0.0), pstep(21, 1, 30.0)),
            record("b", cstep("x", 1, 100.0), pstep(21, 1, 130.0)),
        ]
        stats = collect_window_stats(ad)
        key = ((("cyber", "x", "CE1"),), ("physical", "21", "PE1"))
        assert stats.buckets[key] == {30.0: 2}
        assert dynamic_window(stats, 30.0, key) == 30.0


class TestRendering:
    def test_table_shape(self):
        pattern = AttackPattern(
            antecedent=(cyber_item("sadmind_ping", "CE4"), cyber_item("sshd_buffer_overflow", "CE3")),
            consequent=physical_item(21, "PE2"),
            support=0.975,
            confidence=0.931,
            occurrences=5,
        )
        assert render_pattern(pattern) == "[s5^CE4 > s1^CE3 => e21^PE2]"
