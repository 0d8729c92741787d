"""BEV grids attached to poses and anchor/positive/negative cell sampling.

Grid convention: row 0 sits at the minimum longitudinal coordinate and
col 0 at the minimum lateral coordinate of the vehicle-frame ranges; cell
centers are at half-cell offsets.  A pose's grid is transformed to the
global frame by rotating with the pose yaw and translating to the pose
position, exactly like footprints.

Anchors are drawn from the reference-grid cells whose centers fall inside
the footprint overlap; each positive is the nearest adjacent-grid cell by
global center distance (ties resolved in (row, col) order); negatives come
from all cells of both grids minus the anchor and positive cells.  All
sampling is deterministic in the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptFile,
    Exhausted,
    IndexOutOfRange,
    InputError,
    NoOverlap,
    VersionMismatch,
)
from .geometry import (
    FootprintConfig,
    convex_intersection,
    footprint,
    points_in_convex,
    polygon_area,
)
from .ingest import Pose

PoseKey = tuple[str, int]

_HEADER = "# geoclr-pairs v1"


@dataclass(frozen=True)
class BevGridSpec:
    """Grid geometry shared by the reference and adjacent BEV grids."""

    rows: int = 100
    cols: int = 50
    lon_range: tuple[float, float] = (-30.0, 30.0)
    lat_range: tuple[float, float] = (-15.0, 15.0)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InputError("grid needs at least one row and one column")
        if not (self.lon_range[0] < self.lon_range[1] and self.lat_range[0] < self.lat_range[1]):
            raise InputError("grid ranges must be non-empty")

    @property
    def cell_size(self) -> tuple[float, float]:
        """(longitudinal, lateral) cell extent in meters."""
        return (
            (self.lon_range[1] - self.lon_range[0]) / self.rows,
            (self.lat_range[1] - self.lat_range[0]) / self.cols,
        )

    @property
    def cell_diagonal(self) -> float:
        return math.hypot(*self.cell_size)


@dataclass(frozen=True)
class CellRef:
    """One BEV cell of the grid attached to a pose."""

    pose: PoseKey
    row: int
    col: int


@dataclass(frozen=True)
class PairBatch:
    """Sampled anchor/positive/negative cells for one reference-adjacent pair."""

    anchors: tuple[CellRef, ...]
    positives: tuple[CellRef, ...]
    negatives: tuple[CellRef, ...]
    seed: int

    def __post_init__(self):
        if len(self.anchors) != len(self.positives):
            raise InputError("anchors and positives must be index-aligned")
        taken = set(self.anchors) | set(self.positives)
        colliding = [n for n in self.negatives if n in taken]
        if colliding:
            raise InputError(f"negatives collide with anchors/positives: {colliding[:3]}")


def _cell_centers_vehicle(spec: BevGridSpec) -> np.ndarray:
    """(rows * cols, 2) vehicle-frame centers in row-major order."""
    ch, cw = spec.cell_size
    lon = spec.lon_range[0] + (np.arange(spec.rows) + 0.5) * ch
    lat = spec.lat_range[0] + (np.arange(spec.cols) + 0.5) * cw
    grid = np.stack(np.meshgrid(lon, lat, indexing="ij"), axis=-1)
    return grid.reshape(-1, 2)


def cell_centers_global(p: Pose, spec: BevGridSpec) -> np.ndarray:
    """Global-frame centers of every cell, row-major (rows * cols, 2)."""
    local = _cell_centers_vehicle(spec)
    c, s = np.cos(p.yaw), np.sin(p.yaw)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([p.x, p.y])


def cell_center_global(p: Pose, spec: BevGridSpec, row: int, col: int) -> tuple[float, float]:
    """Global-frame center of one cell."""
    if not (0 <= row < spec.rows and 0 <= col < spec.cols):
        raise IndexOutOfRange(f"cell ({row}, {col}) outside {spec.rows}x{spec.cols} grid")
    ch, cw = spec.cell_size
    lon = spec.lon_range[0] + (row + 0.5) * ch
    lat = spec.lat_range[0] + (col + 0.5) * cw
    c, s = math.cos(p.yaw), math.sin(p.yaw)
    return (p.x + c * lon - s * lat, p.y + s * lon + c * lat)


def _overlap_polygon(ref: Pose, adj: Pose, cfg: FootprintConfig) -> np.ndarray:
    inter = convex_intersection(footprint(ref, cfg).corners, footprint(adj, cfg).corners)
    if len(inter) == 0 or polygon_area(inter) <= 0.0:
        raise NoOverlap(f"footprints of {ref.key} and {adj.key} do not intersect")
    return inter


def overlap_inliers(
    ref: Pose,
    adj: Pose,
    spec: BevGridSpec = BevGridSpec(),
    cfg: FootprintConfig = FootprintConfig(),
) -> set[tuple[str, int, int]]:
    """Cells of both grids whose centers lie inside the footprint overlap.

    Returns {(grid_tag, row, col)} with grid_tag "ref" or "adj"; raises
    NoOverlap when the footprints are disjoint.
    """
    inter = _overlap_polygon(ref, adj, cfg)
    out: set[tuple[str, int, int]] = set()
    for tag, pose in (("ref", ref), ("adj", adj)):
        centers = cell_centers_global(pose, spec)
        mask = points_in_convex(centers, inter)
        for flat in np.nonzero(mask)[0]:
            out.add((tag, int(flat) // spec.cols, int(flat) % spec.cols))
    return out


def sample_pairs(
    ref: Pose,
    adj: Pose,
    spec: BevGridSpec,
    cfg: FootprintConfig,
    n_anchors: int,
    n_negatives: int,
    seed: int,
    max_match_dist: float | None = None,
    exclusion_radius: float | None = None,
) -> PairBatch:
    """Sample one contrastive batch for a reference-adjacent pose pair.

    Anchors are drawn uniformly without replacement from the reference-grid
    inliers; anchors whose nearest adjacent cell is farther than
    max_match_dist (default: one cell diagonal) are discarded and the draw
    continues.  Negatives are uniform over the remaining cells of both
    grids; exclusion_radius optionally widens the exclusion to every cell
    within that global distance of an anchor center.
    """
    if n_anchors < 1 or n_negatives < 1:
        raise InputError("n_anchors and n_negatives must be at least 1")
    if max_match_dist is None:
        max_match_dist = spec.cell_diagonal

    inter = _overlap_polygon(ref, adj, cfg)
    ref_centers = cell_centers_global(ref, spec)
    adj_centers = cell_centers_global(adj, spec)
    inlier_flat = np.nonzero(points_in_convex(ref_centers, inter))[0]
    if len(inlier_flat) < n_anchors:
        raise Exhausted(
            f"{len(inlier_flat)} reference inlier cells < {n_anchors} requested anchors"
        )

    rng = np.random.default_rng(np.random.PCG64(seed))
    candidate_order = rng.permutation(len(inlier_flat))

    anchors: list[CellRef] = []
    positives: list[CellRef] = []
    anchor_points: list[np.ndarray] = []
    for idx in candidate_order:
        if len(anchors) == n_anchors:
            break
        flat = int(inlier_flat[idx])
        point = ref_centers[flat]
        d2 = np.sum((adj_centers - point) ** 2, axis=1)
        best = int(np.argmin(d2))
        if math.sqrt(float(d2[best])) > max_match_dist:
            continue
        anchors.append(CellRef(ref.key, flat // spec.cols, flat % spec.cols))
        positives.append(CellRef(adj.key, best // spec.cols, best % spec.cols))
        anchor_points.append(point)
    if len(anchors) < n_anchors:
        raise Exhausted(
            f"only {len(anchors)} of {n_anchors} anchors have a neighbor within "
            f"{max_match_dist:.3f} m"
        )

    taken = set(anchors) | set(positives)
    pool: list[CellRef] = []
    pool_centers: list[np.ndarray] = []
    for key, centers in ((ref.key, ref_centers), (adj.key, adj_centers)):
        for flat in range(len(centers)):
            cell = CellRef(key, flat // spec.cols, flat % spec.cols)
            if cell not in taken:
                pool.append(cell)
                pool_centers.append(centers[flat])
    if exclusion_radius is not None:
        pts = np.array(pool_centers)
        apts = np.array(anchor_points)
        d2 = ((pts[:, None, :] - apts[None, :, :]) ** 2).sum(axis=2)
        keep = np.sqrt(d2.min(axis=1)) > exclusion_radius
        pool = [cell for cell, k in zip(pool, keep) if k]
    if len(pool) < n_negatives:
        raise Exhausted(f"negative pool {len(pool)} < {n_negatives} requested")
    chosen = rng.choice(len(pool), size=n_negatives, replace=False)
    negatives = tuple(pool[int(i)] for i in chosen)

    return PairBatch(tuple(anchors), tuple(positives), negatives, seed)


def pair_distances(batch: PairBatch, ref: Pose, adj: Pose, spec: BevGridSpec) -> list[float]:
    """Global anchor-to-positive center distances, index-aligned with the batch."""
    out = []
    for a, p in zip(batch.anchors, batch.positives):
        ax, ay = cell_center_global(ref, spec, a.row, a.col)
        px, py = cell_center_global(adj, spec, p.row, p.col)
        out.append(math.hypot(px - ax, py - ay))
    return out


def _key_token(key: PoseKey) -> str:
    return f"{key[0]}:{key[1]}"


def _parse_key(token: str) -> PoseKey:
    log_id, _, frame = token.rpartition(":")
    return (log_id, int(frame))


def write_pair_file(
    batch: PairBatch,
    ref: Pose,
    adj: Pose,
    spec: BevGridSpec,
    path,
    header_lines: tuple[str, ...] = (),
) -> None:
    lines = [_HEADER]
    lines += [f"# {h}" for h in header_lines]
    lines.append(f"META ref {_key_token(ref.key)} adj {_key_token(adj.key)} seed {batch.seed}")
    dists = pair_distances(batch, ref, adj, spec)
    for a, p, dist in zip(batch.anchors, batch.positives, dists):
        lines.append(
            f"PAIR {_key_token(a.pose)} {a.row} {a.col} "
            f"{_key_token(p.pose)} {p.row} {p.col} {dist!r}"
        )
    for n in batch.negatives:
        lines.append(f"NEG {_key_token(n.pose)} {n.row} {n.col}")
    lines.append("END")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_pair_file(path) -> PairBatch:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# geoclr-pairs"):
        raise CorruptFile(f"{path}: missing pair-file header")
    if lines[0] != _HEADER:
        raise VersionMismatch(f"{path}: unsupported version {lines[0]!r}")
    if lines[-1] != "END":
        raise CorruptFile(f"{path}: truncated pair file")
    seed = 0
    anchors: list[CellRef] = []
    positives: list[CellRef] = []
    negatives: list[CellRef] = []
    try:
        for line in lines[1:-1]:
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "META":
                seed = int(parts[6])
            elif parts[0] == "PAIR":
                anchors.append(CellRef(_parse_key(parts[1]), int(parts[2]), int(parts[3])))
                positives.append(CellRef(_parse_key(parts[4]), int(parts[5]), int(parts[6])))
            elif parts[0] == "NEG":
                negatives.append(CellRef(_parse_key(parts[1]), int(parts[2]), int(parts[3])))
            else:
                raise CorruptFile(f"{path}: unknown line tag {parts[0]!r}")
    except (IndexError, ValueError) as e:
        raise CorruptFile(f"{path}: {e}") from e
    return PairBatch(tuple(anchors), tuple(positives), tuple(negatives), seed)
