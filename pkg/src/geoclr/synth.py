"""Synthetic multi-traversal scenes with known overlap ground truth.

Scenes place each declared overlap component in its own well-separated
slot, so the log intersection graph of the generated dataset equals the
declared plan by construction:

* components whose overlap edges form a clique share a junction point,
  each full-overlap group passing through it at a distinct heading;
* components forming a simple path become collinear straight segments
  where only consecutive segments overlap;
* anything else raises InfeasiblePlan.

Margins are validated against the position noise so that declared edges
cannot vanish and declared non-edges cannot appear.  The per-location
feature function is a fixed low-frequency sinusoid mixture: nearby points
get similar vectors, distant points dissimilar ones, which makes the
contrastive alignment experiment learnable and checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InfeasiblePlan
from .geometry import FootprintConfig
from .ingest import Dataset, Pose, Traversal
from .traversal_classify import LogIntersectionGraph

ROUTE_SHAPES = ("straight", "arc", "figure-eight")
REGIMES = ("none", "partial", "full")

FEATURE_DIM = 16

# Fixed feature-field constants: 16 plane waves, wavelengths log-spaced
# 8..96 m, directions spread by the golden angle.
_GOLDEN = math.pi * (3.0 - math.sqrt(5.0))
_FEAT_ANGLES = np.array([k * _GOLDEN for k in range(FEATURE_DIM)])
_FEAT_DIRS = np.stack([np.cos(_FEAT_ANGLES), np.sin(_FEAT_ANGLES)], axis=1)
_FEAT_WAVELENGTHS = np.geomspace(8.0, 96.0, FEATURE_DIM)
_FEAT_PHASES = np.array([math.sin(3.0 * k + 1.0) * math.pi for k in range(FEATURE_DIM)])


def geospatial_features(points) -> np.ndarray:
    """Deterministic smooth feature vector for any global point, (N, 16)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    proj = pts @ _FEAT_DIRS.T
    return np.sin(2.0 * math.pi * proj / _FEAT_WAVELENGTHS + _FEAT_PHASES)


@dataclass(frozen=True)
class SceneSpec:
    """Declarative description of a synthetic scene.

    shapes is either one shape name for all logs or a tuple with one entry
    per log.  overlap_plan entries are (log_index_a, log_index_b, regime);
    unlisted pairs default to no overlap.
    """

    n_logs: int
    shapes: str | tuple[str, ...] = "straight"
    overlap_plan: tuple[tuple[int, int, str], ...] = ()
    n_poses: int = 40
    spacing: float = 2.0
    noise: float = 0.0
    seed: int = 0
    area_id: str = "area0"


@dataclass(frozen=True)
class Scene:
    dataset: Dataset
    log_graph: LogIntersectionGraph
    feature_fn: Callable[[np.ndarray], np.ndarray]


def _log_name(i: int) -> str:
    return f"log{i:03d}"


def _shapes(spec: SceneSpec) -> list[str]:
    if isinstance(spec.shapes, str):
        shapes = [spec.shapes] * spec.n_logs
    else:
        if len(spec.shapes) != spec.n_logs:
            raise InfeasiblePlan(f"{len(spec.shapes)} shapes for {spec.n_logs} logs")
        shapes = list(spec.shapes)
    for s in shapes:
        if s not in ROUTE_SHAPES:
            raise InfeasiblePlan(f"unknown route shape {s!r}")
    return shapes


def _plan_edges(spec: SceneSpec):
    edges: set[tuple[int, int]] = set()
    full: set[tuple[int, int]] = set()
    nones: set[tuple[int, int]] = set()
    for a, b, regime in spec.overlap_plan:
        if regime not in REGIMES:
            raise InfeasiblePlan(f"unknown overlap regime {regime!r}")
        if not (0 <= a < spec.n_logs and 0 <= b < spec.n_logs) or a == b:
            raise InfeasiblePlan(f"bad log pair ({a}, {b})")
        pair = (min(a, b), max(a, b))
        if regime == "none":
            nones.add(pair)
        else:
            edges.add(pair)
            if regime == "full":
                full.add(pair)
    conflict = edges & nones
    if conflict:
        raise InfeasiblePlan(f"pairs declared both overlapping and none: {sorted(conflict)}")
    return edges, full


def _components(n: int, edges: set[tuple[int, int]]) -> list[list[int]]:
    adj: dict[int, set[int]] = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen: set[int] = set()
    comps = []
    for start in range(n):
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
        comps.append(sorted(comp))
    return comps


def _path_order(comp: list[int], edges: set[tuple[int, int]]) -> list[int] | None:
    """Return the node order if the component's edges form a simple path."""
    comp_edges = [(a, b) for a, b in edges if a in comp and b in comp]
    if len(comp_edges) != len(comp) - 1:
        return None
    deg: dict[int, int] = {v: 0 for v in comp}
    adj: dict[int, list[int]] = {v: [] for v in comp}
    for a, b in comp_edges:
        deg[a] += 1
        deg[b] += 1
        adj[a].append(b)
        adj[b].append(a)
    ends = [v for v in comp if deg[v] == 1]
    if len(ends) != 2 or any(deg[v] > 2 for v in comp):
        return None
    order = [min(ends)]
    prev = None
    while len(order) < len(comp):
        nxts = [v for v in adj[order[-1]] if v != prev]
        if len(nxts) != 1:
            return None
        prev = order[-1]
        order.append(nxts[0])
    return order


def _is_clique(comp: list[int], edges: set[tuple[int, int]]) -> bool:
    return all(
        (comp[i], comp[j]) in edges
        for i in range(len(comp))
        for j in range(i + 1, len(comp))
    )


def _full_groups(comp: list[int], full: set[tuple[int, int]]) -> list[list[int]]:
    """Partition a clique component into groups connected by full overlap."""
    parent = {v: v for v in comp}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for a, b in full:
        if a in parent and b in parent:
            parent[find(a)] = find(b)
    groups: dict[int, list[int]] = {}
    for v in comp:
        groups.setdefault(find(v), []).append(v)
    return sorted(groups.values())


def _route_points(shape: str, n: int, spacing: float, anchor, heading: float):
    """Route sample points and headings; the route midpoint sits at the
    anchor with the requested heading."""
    total = (n - 1) * spacing if n > 1 else spacing
    if shape == "straight":
        s = np.arange(n) * spacing - total / 2.0
        direction = np.array([math.cos(heading), math.sin(heading)])
        pts = np.asarray(anchor) + s[:, None] * direction
        yaws = np.full(n, heading)
        return pts, yaws
    if shape == "arc":
        radius = max(total, spacing)
        alpha_mid = heading - math.pi / 2.0
        center = np.asarray(anchor) - radius * np.array(
            [math.cos(alpha_mid), math.sin(alpha_mid)]
        )
        s = np.arange(n) * spacing - total / 2.0
        alphas = alpha_mid + s / radius
        pts = center + radius * np.stack([np.cos(alphas), np.sin(alphas)], axis=1)
        return pts, alphas + math.pi / 2.0
    # figure-eight: lemniscate through the anchor at its crossing point
    scale = max(total / 5.0, spacing)
    t = np.pi / 2.0 + 2.0 * np.pi * np.arange(n) / n
    u = 1.0 + np.sin(t) ** 2
    x = scale * np.cos(t) / u
    y = scale * np.sin(t) * np.cos(t) / u
    du = np.sin(2.0 * t)
    dx = scale * (-np.sin(t) * u - np.cos(t) * du) / u**2
    dy = scale * (np.cos(2.0 * t) * u - 0.5 * np.sin(2.0 * t) * du) / u**2
    c, s_ = math.cos(heading), math.sin(heading)
    rot = np.array([[c, -s_], [s_, c]])
    pts = np.stack([x, y], axis=1) @ rot.T + np.asarray(anchor)
    yaws = np.arctan2(dy, dx) + heading
    return pts, yaws


def generate_scene(spec: SceneSpec, cfg: FootprintConfig = FootprintConfig()) -> Scene:
    """Build a dataset realizing the declared overlap plan exactly."""
    if spec.n_logs < 1:
        raise InfeasiblePlan("need at least one log")
    if spec.n_poses < 2:
        raise InfeasiblePlan("need at least two poses per log")
    if spec.spacing <= 0:
        raise InfeasiblePlan("spacing must be positive")
    if spec.noise < 0:
        raise InfeasiblePlan("noise must be nonnegative")
    shapes = _shapes(spec)
    edges, full = _plan_edges(spec)
    min_extent = min(cfg.lat_extent, cfg.lon_extent)
    if spec.spacing > min_extent / 4.0:
        raise InfeasiblePlan(
            f"spacing {spec.spacing} too coarse for extents {cfg.lat_extent}x{cfg.lon_extent}"
        )
    if spec.noise > min_extent / 10.0:
        raise InfeasiblePlan(f"noise {spec.noise} too large for footprint extents")

    comps = _components(spec.n_logs, edges)
    route_len = (spec.n_poses - 1) * spec.spacing
    diag = math.hypot(cfg.lat_extent, cfg.lon_extent)
    route_radius = 0.6 * spec.n_poses * spec.spacing
    comp_sep = 2.0 * (route_radius + diag) + 10.0 * spec.noise + 50.0

    anchors: dict[int, np.ndarray] = {}
    headings: dict[int, float] = {}
    for ci, comp in enumerate(comps):
        base = np.array([0.0, ci * comp_sep])
        if len(comp) == 1:
            anchors[comp[0]] = base
            headings[comp[0]] = 0.0
            continue
        if _is_clique(comp, edges):
            groups = _full_groups(comp, full)
            for gi, group in enumerate(groups):
                heading = math.pi * gi / len(groups)
                gshapes = {shapes[v] for v in group}
                if len(group) > 1 and len(gshapes) > 1:
                    raise InfeasiblePlan(
                        f"full-overlap group {group} mixes route shapes {sorted(gshapes)}"
                    )
                for v in group:
                    anchors[v] = base
                    headings[v] = heading
            continue
        order = _path_order(comp, edges)
        if order is None:
            raise InfeasiblePlan(
                f"component {comp} is neither a clique nor a simple path"
            )
        if any((min(a, b), max(a, b)) in full for a in comp for b in comp):
            raise InfeasiblePlan(f"full overlap not supported in chain component {comp}")
        if any(shapes[v] != "straight" for v in comp):
            raise InfeasiblePlan(f"chain component {comp} requires straight routes")
        step = 0.66 * (route_len + 2.0 * cfg.lon_extent)
        margin = 2.0 * step - (route_len + 2.0 * cfg.lon_extent)
        if margin < 8.0 * spec.noise + 1.0:
            raise InfeasiblePlan(
                f"chain separation margin {margin:.2f} m too small for noise {spec.noise}"
            )
        for pos, v in enumerate(order):
            anchors[v] = base + np.array([pos * step, 0.0])
            headings[v] = 0.0

    rng = np.random.default_rng(np.random.PCG64(spec.seed))
    dt = spec.spacing / 10.0
    traversals = []
    for i in range(spec.n_logs):
        pts, yaws = _route_points(
            shapes[i], spec.n_poses, spec.spacing, anchors[i], headings[i]
        )
        if spec.noise > 0:
            pts = pts + rng.normal(0.0, spec.noise, size=pts.shape)
        poses = tuple(
            Pose(_log_name(i), k, k * dt, float(pts[k, 0]), float(pts[k, 1]), float(yaws[k]))
            for k in range(spec.n_poses)
        )
        traversals.append(Traversal(_log_name(i), spec.area_id, poses))

    nodes = tuple(sorted(_log_name(i) for i in range(spec.n_logs)))
    truth_edges = tuple(
        sorted((_log_name(a), _log_name(b)) for a, b in edges)
    )
    truth = LogIntersectionGraph(nodes, truth_edges)
    return Scene(Dataset(tuple(traversals)), truth, geospatial_features)


def random_scene_spec(seed: int, max_logs: int = 12, max_poses: int = 40) -> SceneSpec:
    """Random feasible scene built from isolated logs, pairs, cliques,
    and chains; useful for randomized equivalence testing."""
    rng = np.random.default_rng(np.random.PCG64(seed))
    n_logs = 0
    plan: list[tuple[int, int, str]] = []
    components: list[int] = []
    while n_logs < max_logs - 1:
        kind = rng.integers(0, 4)
        if kind == 0:
            size = 1
        elif kind == 1:
            size = 2
        elif kind == 2:
            size = int(rng.integers(3, 5))
        else:
            size = int(rng.integers(3, 6))
        if n_logs + size > max_logs:
            break
        members = list(range(n_logs, n_logs + size))
        if kind == 1:
            regime = "full" if rng.random() < 0.3 else "partial"
            plan.append((members[0], members[1], regime))
        elif kind == 2:
            for i in range(size):
                for j in range(i + 1, size):
                    plan.append((members[i], members[j], "partial"))
        elif kind == 3:
            for a, b in zip(members, members[1:]):
                plan.append((a, b, "partial"))
        n_logs += size
        components.append(size)
    if n_logs == 0:
        n_logs = 1
    n_poses = int(rng.integers(8, max_poses + 1))
    noise = float(rng.uniform(0.0, 0.5))
    return SceneSpec(
        n_logs=n_logs,
        shapes="straight",
        overlap_plan=tuple(plan),
        n_poses=n_poses,
        spacing=2.0,
        noise=noise,
        seed=seed,
    )
