from geoclr.geometry import FootprintConfig
from geoclr.ingest import Dataset, Pose, Traversal
from geoclr.traversal_classify import (
    MULTI,
    SINGLE,
    LogIntersectionGraph,
    build_log_graph,
    classify,
    intersection_histogram,
)

from oracles import brute_force_log_graph

CFG = FootprintConfig(15.0, 30.0)


def straight_log(log_id, y, n=10, x0=0.0, spacing=2.0, area="area0"):
    poses = tuple(
        Pose(log_id, k, float(k), x0 + k * spacing, y, 0.0) for k in range(n)
    )
    return Traversal(log_id, area, poses)


class TestBuildLogGraph:
    def test_parallel_drives_far_apart_no_edge(self):
        d = Dataset((straight_log("a", 0.0), straight_log("b", 200.0)))
        assert build_log_graph(d, CFG).edges == ()

    def test_identical_drives_one_edge(self):
        d = Dataset((straight_log("a", 0.0), straight_log("b", 0.0)))
        assert build_log_graph(d, CFG).edges == (("a", "b"),)

    def test_collinear_chain_consecutive_only(self):
        # Footprints reach 30 m beyond route ends; route length 18 m.
        # Offset 60 m: consecutive pairs overlap, A and C stay clear.
        d = Dataset(
            (
                straight_log("a", 0.0, x0=0.0),
                straight_log("b", 0.0, x0=60.0),
                straight_log("c", 0.0, x0=120.0),
            )
        )
        g = build_log_graph(d, CFG)
        assert g.edges == (("a", "b"), ("b", "c"))
        assert g.edges == brute_force_log_graph(d, CFG)

    def test_different_areas_never_compared(self):
        d = Dataset(
            (
                straight_log("a", 0.0, area="cityX"),
                straight_log("b", 0.0, area="cityY"),
            )
        )
        assert build_log_graph(d, CFG).edges == ()

    def test_matches_brute_force_on_random_layouts(self, rng):
        for trial in range(10):
            traversals = []
            for i in range(6):
                traversals.append(
                    straight_log(
                        f"log{i}",
                        y=float(rng.uniform(0, 120)),
                        x0=float(rng.uniform(0, 120)),
                        n=8,
                    )
                )
            d = Dataset(tuple(traversals))
            assert build_log_graph(d, CFG).edges == brute_force_log_graph(d, CFG)

    def test_monotone_in_extents(self, rng):
        traversals = [
            straight_log(f"log{i}", y=float(rng.uniform(0, 150)), x0=float(rng.uniform(0, 50)), n=6)
            for i in range(6)
        ]
        d = Dataset(tuple(traversals))
        small = set(build_log_graph(d, FootprintConfig(5.0, 10.0)).edges)
        large = set(build_log_graph(d, FootprintConfig(25.0, 50.0)).edges)
        assert small <= large


class TestClassify:
    def test_isolated_node_single(self):
        g = LogIntersectionGraph(("a",), ())
        (c,) = classify(g)
        assert (c.label, c.intersecting_logs) == (SINGLE, 0)

    def test_isolated_pair_both_single(self):
        g = LogIntersectionGraph(("a", "b"), (("a", "b"),))
        assert [c.label for c in classify(g)] == [SINGLE, SINGLE]

    def test_triangle_all_multi(self):
        g = LogIntersectionGraph(("a", "b", "c"), (("a", "b"), ("a", "c"), ("b", "c")))
        out = classify(g)
        assert [c.label for c in out] == [MULTI, MULTI, MULTI]
        assert [c.intersecting_logs for c in out] == [2, 2, 2]

    def test_chain_of_three_all_multi(self):
        g = LogIntersectionGraph(("a", "b", "c"), (("a", "b"), ("b", "c")))
        out = classify(g)
        # Component size 3 > 2: the isolated-pair exception does not apply.
        assert [c.label for c in out] == [MULTI, MULTI, MULTI]
        assert [c.intersecting_logs for c in out] == [1, 2, 1]

    def test_permutation_invariant(self):
        edges = (("a", "b"), ("b", "c"))
        g1 = LogIntersectionGraph(("a", "b", "c", "d"), edges)
        g2 = LogIntersectionGraph(("d", "c", "b", "a"), edges)
        by_log1 = {c.log_id: c.label for c in classify(g1)}
        by_log2 = {c.log_id: c.label for c in classify(g2)}
        assert by_log1 == by_log2

    def test_histogram(self):
        g = LogIntersectionGraph(("a", "b", "c"), (("a", "b"), ("a", "c")))
        hist = intersection_histogram(classify(g))
        assert hist == {1: 2, 2: 1}
