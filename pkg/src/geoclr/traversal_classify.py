"""Single- vs multi-traversal classification from footprint overlaps.

Two logs are connected when any footprint of one overlaps any footprint of
the other with positive area (the union polygons of two pose sets intersect
iff some member pair intersects, so the pairwise edge set carries the same
information as merged per-traversal polygons).  A log in a connected
component of size one is a single-traversal; a component of exactly two
mutually-intersecting logs is the isolated-pair exception and both stay
single; every other log is a multi-traversal.

Overlap tests run per area partition, so logs in different areas are never
compared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry import FootprintConfig, footprint, footprints_intersect
from .ingest import Dataset, partition_by_area
from .spatial import StaticRTree

SINGLE = "single"
MULTI = "multi"


@dataclass(frozen=True)
class LogIntersectionGraph:
    """Undirected graph over log_ids; an edge means at least one
    intersecting footprint pair between the two logs."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        node_set = set(self.nodes)
        for a, b in self.edges:
            if a == b:
                raise InputError(f"self-edge on {a!r}")
            if not (a < b):
                raise InputError(f"edge ({a!r}, {b!r}) not in sorted order")
            if a not in node_set or b not in node_set:
                raise InputError(f"edge ({a!r}, {b!r}) references unknown node")
        if len(set(self.edges)) != len(self.edges):
            raise InputError("duplicate edges")

    def degree(self, log_id: str) -> int:
        return sum(1 for a, b in self.edges if log_id in (a, b))

    def components(self) -> list[set[str]]:
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        seen: set[str] = set()
        comps = []
        for start in self.nodes:
            if start in seen:
                continue
            comp = {start}
            frontier = [start]
            while frontier:
                cur = frontier.pop()
                for nxt in adj[cur]:
                    if nxt not in comp:
                        comp.add(nxt)
                        frontier.append(nxt)
            seen |= comp
            comps.append(comp)
        return comps


@dataclass(frozen=True)
class TraversalClass:
    log_id: str
    label: str
    intersecting_logs: int

    def __post_init__(self):
        if self.label not in (SINGLE, MULTI):
            raise InputError(f"unknown class label {self.label!r}")
        if self.label == MULTI and self.intersecting_logs < 1:
            raise InputError(f"multi-traversal {self.log_id!r} with no intersections")


def build_log_graph(d: Dataset, cfg: FootprintConfig = FootprintConfig()) -> LogIntersectionGraph:
    """Build the log intersection graph, one area at a time.

    Candidate pose pairs come from an R-tree over footprint AABBs; the
    exact oriented-rectangle test runs only on candidates, and a log pair
    is skipped entirely once one intersecting pose pair is found.
    """
    nodes = tuple(sorted(t.log_id for t in d.traversals))
    edges: set[tuple[str, str]] = set()
    for area_ds in partition_by_area(d).values():
        rects = []
        rect_log = []
        for trav, pose in area_ds.iter_poses():
            rects.append(footprint(pose, cfg))
            rect_log.append(trav.log_id)
        if not rects:
            continue
        boxes = np.array([r.aabb() for r in rects])
        tree = StaticRTree(boxes)
        for i, rect in enumerate(rects):
            log_i = rect_log[i]
            for j in tree.query(boxes[i]):
                if j <= i or rect_log[j] == log_i:
                    continue
                pair = tuple(sorted((log_i, rect_log[j])))
                if pair in edges:
                    continue
                if footprints_intersect(rect, rects[j]):
                    edges.add(pair)
    return LogIntersectionGraph(nodes, tuple(sorted(edges)))


def classify(g: LogIntersectionGraph) -> list[TraversalClass]:
    """Assign single/multi labels from the intersection graph.

    Components of size one or exactly two map to single; anything larger
    is multi.  Output is sorted by log_id and depends only on the graph.
    """
    comp_size = {}
    for comp in g.components():
        for log_id in comp:
            comp_size[log_id] = len(comp)
    degrees = {n: 0 for n in g.nodes}
    for a, b in g.edges:
        degrees[a] += 1
        degrees[b] += 1
    out = []
    for log_id in g.nodes:
        label = SINGLE if comp_size[log_id] <= 2 else MULTI
        out.append(TraversalClass(log_id, label, degrees[log_id]))
    return out


def multi_log_ids(classes: list[TraversalClass]) -> set[str]:
    return {c.log_id for c in classes if c.label == MULTI}


def intersection_histogram(classes: list[TraversalClass]) -> dict[int, int]:
    """Histogram: number of intersecting logs -> count of logs."""
    hist: dict[int, int] = {}
    for c in classes:
        hist[c.intersecting_logs] = hist.get(c.intersecting_logs, 0) + 1
    return dict(sorted(hist.items()))
