"""Exact search: fixture values, independent cross-checks, budgets and errors."""

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from brute import bfs_length, optimal_sets, random_spec_text
from conftest import dataset_net, fixture_net, random_networks
from metrocover import oracle
from metrocover.ingest import network_from_text
from metrocover.oracle import (BudgetExhausted, Infeasible, MemoryBudgetExceeded,
                               enumerate_optimal_arcsets, line_runs_ok, restricted_optimum,
                               shortest_cover_cycle, shortest_cover_path, shortest_cover_walk)
from metrocover.variant import VariantConfig

VARIANTS = {
    "walk": VariantConfig(),
    "path": VariantConfig("path"),
    "cycle": VariantConfig("cycle"),
    "walk, no line reuse": VariantConfig(forbid_line_reuse=True),
    "cycle, no station reuse": VariantConfig("cycle", forbid_station_reuse=True),
    "cycle, no line reuse": VariantConfig("cycle", forbid_line_reuse=True),
}


def brute_for(net, v, max_len=9):
    return optimal_sets(net, shape=v.shape, no_station=v.forbid_station_reuse,
                        no_line=v.forbid_line_reuse, max_len=max_len)


class TestWalk:
    def test_path2(self):
        j = shortest_cover_walk(fixture_net("path2"))
        assert [(s.departure, s.arrival, s.line) for s in j.steps] == [("A", "B", "L1"), ("B", "C", "L2")]

    def test_star_needs_two_returns(self):
        j = shortest_cover_walk(fixture_net("star"))
        assert len(j) == 4
        assert j.stations.count("H") == 2
        assert set(j.lines) == {"L1", "L2", "L3"}

    def test_subset_of_lines(self):
        assert len(shortest_cover_walk(fixture_net("star"), {"L1", "L2"})) == 2

    def test_deterministic(self):
        net = fixture_net("prune")
        assert shortest_cover_walk(net) == shortest_cover_walk(net)

    def test_unreachable_line(self):
        net = network_from_text("station A\nstation B\nstation C\nstation D\nline L1\nline L2\n"
                                "segment L1 A B oneway\nsegment L2 C D oneway\n")
        with pytest.raises(Infeasible):
            shortest_cover_walk(net)

    def test_memory_budget_checked_before_allocating(self):
        with pytest.raises(MemoryBudgetExceeded) as exc:
            shortest_cover_walk(fixture_net("star"), memory_budget=10)
        assert exc.value.needed == 3 * 4 * 8

    def test_walkway_network_is_contracted(self):
        net = fixture_net("corridor", corridors="walk")
        assert len(shortest_cover_walk(net)) == 3

    @pytest.mark.slow
    def test_tokyo_15(self):
        assert len(shortest_cover_walk(dataset_net("tokyo"))) == 15


class TestCycle:
    def test_star_six(self):
        j = shortest_cover_cycle(fixture_net("star"))
        assert len(j) == 6 and j.stations[0] == j.stations[-1]

    def test_triangle_three(self):
        assert len(shortest_cover_cycle(fixture_net("triangle"))) == 3
        # independent: no closed walk of length <= 2 covers three lines
        assert bfs_length(fixture_net("triangle"), closed=True) == 3

    def test_explicit_anchor(self):
        j = shortest_cover_cycle(fixture_net("star"), anchor="A")
        assert j.stations[0] == j.stations[-1] == "A" and len(j) == 6

    def test_no_cycle_on_one_way_chain(self):
        net = network_from_text("station A\nstation B\nline L\nsegment L A B oneway\n")
        with pytest.raises(Infeasible):
            shortest_cover_cycle(net)


class TestPath:
    def test_star_infeasible(self):
        res = shortest_cover_path(fixture_net("star"))
        assert res.proven and not res.feasible

    def test_triangle_infeasible(self):
        # a simple path over 3 stations has 2 arcs, fewer than the 3 lines
        res = shortest_cover_path(fixture_net("triangle"))
        assert res.proven and not res.feasible
        assert brute_for(fixture_net("triangle"), VariantConfig("path")) == (None, set())

    def test_path2_two(self):
        res = shortest_cover_path(fixture_net("path2"))
        assert res.proven and res.length == 2

    def test_budget_exhausted_is_not_a_proof(self):
        res = shortest_cover_path(dataset_net("paris-metro"), budget=50)
        assert not res.proven and not res.feasible


class TestFixtureTable:
    """Optimal length and number of optimal arc sets, frozen from exhaustive listing."""

    TABLE = {
        ("path2", "walk"): (2, 2), ("path2", "path"): (2, 2), ("path2", "cycle"): (4, 1),
        ("triangle", "walk"): (3, 2), ("triangle", "path"): (None, 0), ("triangle", "cycle"): (3, 2),
        ("triangle", "walk, no line reuse"): (3, 2),
        ("star", "walk"): (4, 6), ("star", "path"): (None, 0), ("star", "cycle"): (6, 1),
        ("star", "cycle, no station reuse"): (None, 0),
        ("directed", "walk"): (2, 1), ("directed", "path"): (None, 0), ("directed", "cycle"): (2, 1),
        ("prune", "walk"): (2, 10), ("prune", "path"): (2, 8),
        ("corridor", "walk"): (3, 2), ("corridor", "cycle"): (5, 2),
        ("corridor", "cycle, no station reuse"): (None, 0),
    }

    @pytest.mark.parametrize("key", sorted(TABLE), ids=lambda k: f"{k[0]}-{k[1]}")
    def test_value(self, key):
        name, vname = key
        net, v = fixture_net(name), VARIANTS[vname]
        length, count = self.TABLE[key]
        sets = enumerate_optimal_arcsets(net, v)
        assert len(sets) == count
        assert all(len(s) == length for s in sets)
        # the frozen value is the brute-force one
        assert brute_for(net, v) == (length, sets)

    def test_triangle_sets_are_the_two_orientations(self):
        net = fixture_net("triangle")
        sets = enumerate_optimal_arcsets(net, VariantConfig())
        as_pairs = {frozenset((a.tail, a.head) for a in s) for s in sets}
        assert as_pairs == {frozenset({("A", "B"), ("B", "C"), ("C", "A")}),
                            frozenset({("B", "A"), ("C", "B"), ("A", "C")})}

    def test_path2_sets_are_the_two_directions(self):
        sets = enumerate_optimal_arcsets(fixture_net("path2"), VariantConfig())
        assert {frozenset((a.tail, a.head) for a in s) for s in sets} == {
            frozenset({("A", "B"), ("B", "C")}), frozenset({("C", "B"), ("B", "A")})}

    def test_directed_asymmetry(self):
        net = fixture_net("directed")
        (only,) = enumerate_optimal_arcsets(net, VariantConfig())
        assert {(a.tail, a.head, a.line) for a in only} == {("A", "B", "L1"), ("B", "A", "L2")}
        # the mirror image rides L1 against its direction and does not exist
        assert not net.find_arcs("B", "A", "L1")
        assert len(enumerate_optimal_arcsets(net.reversed(), VariantConfig())) == 1


class TestLineRuns:
    @pytest.mark.parametrize("lines, cyclic, ok", [
        (["L1", "L1", "L2"], False, True),
        (["L1", "L2", "L1"], False, False),
        (["L1", "L2", "L1"], True, True),  # wraps into one run
        (["L1", "L2", "L1", "L2"], True, False),
        ([], False, True),
    ])
    def test_cases(self, lines, cyclic, ok):
        assert line_runs_ok(lines, set(lines), cyclic) is ok

    def test_single_line_cycle_is_one_run(self):
        assert line_runs_ok(["L1", "L1"], {"L1"}, cyclic=True)

    def test_absent_required_line_fails(self):
        assert not line_runs_ok(["L1", "L1"], {"L1", "L2"}, cyclic=True)

    def test_only_required_lines_count(self):
        assert line_runs_ok(["L1", "X", "L2", "X"], {"L1", "L2"})
        assert not line_runs_ok(["L1", "X", "L1"], {"L1"})

    @given(st.lists(st.sampled_from("abc"), min_size=1, max_size=9), st.booleans())
    def test_matches_run_compression(self, lines, cyclic):
        from brute import _runs

        runs = _runs(lines, cyclic)
        expected = len(runs) == len(set(runs))
        assert line_runs_ok(lines, set(lines), cyclic) is expected


class TestAgainstBruteForce:
    """Random small networks: every search answer equals plain exhaustive listing."""

    @pytest.mark.parametrize("transit", [True, False], ids=["transit", "digraph"])
    def test_bfs_lengths(self, transit):
        for net in random_networks(11, 60, transit):
            try:
                walk = len(shortest_cover_walk(net))
            except Infeasible:
                walk = None
            try:
                cycle = len(shortest_cover_cycle(net))
            except Infeasible:
                cycle = None
            assert walk == bfs_length(net)
            assert cycle == bfs_length(net, closed=True)

    @pytest.mark.parametrize("vname", sorted(VARIANTS))
    def test_enumeration(self, vname):
        v = VARIANTS[vname]
        for net in random_networks(5, 25, max_stations=6, max_arcs=10):
            sets = enumerate_optimal_arcsets(net, v)
            length, brute_sets = brute_for(net, v, max_len=10)
            assert sets == brute_sets, (vname, net.arcs)
            res = restricted_optimum(net, v)
            assert res.proven and res.length == length

    @settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(st.integers(0, 10**6))
    def test_enumeration_digraphs(self, seed):
        import random

        net = network_from_text(random_spec_text(random.Random(seed), transit=False,
                                                 max_stations=6, max_arcs=9))
        if not net.lines:
            return
        for v in (VariantConfig(), VariantConfig("cycle")):
            assert enumerate_optimal_arcsets(net, v) == brute_for(net, v, max_len=9)[1]


class TestBudgets:
    def test_enumeration_budget(self):
        with pytest.raises(BudgetExhausted):
            enumerate_optimal_arcsets(fixture_net("prune"), VariantConfig(), budget=3)

    def test_default_budgets_are_sane(self):
        assert oracle.DEFAULT_NODE_BUDGET >= 10**6
        assert oracle.DEFAULT_MEMORY_BUDGET == 2 << 30
