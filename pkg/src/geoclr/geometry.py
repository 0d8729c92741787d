"""Oriented perception footprints and the convex-polygon kernel.

All geometry is planar, double precision, in the global metric frame.
Polygons are numpy arrays of shape (n, 2) with counterclockwise vertex
order.  Points within EDGE_EPS of a boundary count as inside, which keeps
IoU stable at tangential contact; intersections whose area falls below
AREA_EPS are treated as empty (zero-area touching produces no overlap).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput
from .ingest import Pose

# Point-on-edge classification tolerance, meters.
EDGE_EPS = 1e-9
# Polygons below this area, square meters, are degenerate / empty.
AREA_EPS = 1e-12


@dataclass(frozen=True)
class FootprintConfig:
    """Half-extents of the perception rectangle in the vehicle frame.

    lat_extent is the half-width to either side of the heading axis,
    lon_extent the half-length along it, so the footprint spans
    2*lat_extent x 2*lon_extent meters.
    """

    lat_extent: float = 15.0
    lon_extent: float = 30.0

    def __post_init__(self):
        if not (self.lat_extent > 0 and self.lon_extent > 0):
            raise DegenerateInput("footprint extents must be positive")


@dataclass(frozen=True)
class FootprintRect:
    """Oriented perception rectangle of one pose.

    corners: (4, 2) array, counterclockwise starting front-left.
    """

    corners: np.ndarray
    source_pose: tuple[str, int]

    def aabb(self) -> tuple[float, float, float, float]:
        xs = self.corners[:, 0]
        ys = self.corners[:, 1]
        return float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())

    @property
    def area(self) -> float:
        return polygon_area(self.corners)


# Vehicle-frame corner template: front-left, rear-left, rear-right,
# front-right, which is CCW for yaw 0.
_CORNER_SIGNS = np.array(
    [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]]
)


def footprint(p: Pose, cfg: FootprintConfig = FootprintConfig()) -> FootprintRect:
    """Build the oriented footprint of a pose.

    The rectangle is centered at (p.x, p.y) with its long axis along the
    heading: lon_extent ahead/behind, lat_extent to each side.
    """
    c, s = np.cos(p.yaw), np.sin(p.yaw)
    local = _CORNER_SIGNS * np.array([cfg.lon_extent, cfg.lat_extent])
    rot = np.array([[c, -s], [s, c]])
    corners = local @ rot.T + np.array([p.x, p.y])
    return FootprintRect(corners, p.key)


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area, nonnegative regardless of vertex orientation."""
    pts = np.asarray(poly, dtype=float)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))) / 2.0


def _validate_convex_input(poly: np.ndarray, name: str) -> np.ndarray:
    pts = np.asarray(poly, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise DegenerateInput(f"{name}: need at least 3 vertices, got shape {pts.shape}")
    if polygon_area(pts) < AREA_EPS:
        raise DegenerateInput(f"{name}: near-zero area")
    return pts


def convex_intersection(a, b) -> np.ndarray:
    """Intersection of two convex CCW polygons (Sutherland-Hodgman).

    Clips ``a`` against each half-plane of ``b``.  Returns a convex CCW
    polygon as an (n, 2) array, or an empty (0, 2) array when the polygons
    do not overlap.  On-boundary points (within EDGE_EPS) count as inside.
    """
    subject = _validate_convex_input(a, "polygon a")
    clip = _validate_convex_input(b, "polygon b")

    output = [tuple(pt) for pt in subject]
    n_clip = len(clip)
    for i in range(n_clip):
        if not output:
            break
        cx1, cy1 = clip[i]
        cx2, cy2 = clip[(i + 1) % n_clip]
        ex, ey = cx2 - cx1, cy2 - cy1
        # Cross products scale with edge length; normalize the tolerance so
        # EDGE_EPS is a distance in meters.
        tol = EDGE_EPS * np.hypot(ex, ey)
        inputs = output
        output = []
        sx, sy = inputs[-1]
        s_side = ex * (sy - cy1) - ey * (sx - cx1)
        for px, py in inputs:
            p_side = ex * (py - cy1) - ey * (px - cx1)
            p_in = p_side >= -tol
            s_in = s_side >= -tol
            if p_in != s_in:
                # Segment crosses the clip line; s_side != p_side here.
                t = s_side / (s_side - p_side)
                output.append((sx + t * (px - sx), sy + t * (py - sy)))
            if p_in:
                output.append((px, py))
            sx, sy, s_side = px, py, p_side

    # Drop near-duplicate consecutive vertices introduced by clipping.
    cleaned: list[tuple[float, float]] = []
    for pt in output:
        if not cleaned or (pt[0] - cleaned[-1][0]) ** 2 + (pt[1] - cleaned[-1][1]) ** 2 > 1e-24:
            cleaned.append(pt)
    if len(cleaned) > 1:
        if (cleaned[0][0] - cleaned[-1][0]) ** 2 + (cleaned[0][1] - cleaned[-1][1]) ** 2 <= 1e-24:
            cleaned.pop()

    if len(cleaned) < 3:
        return np.empty((0, 2))
    result = np.array(cleaned)
    if polygon_area(result) <= AREA_EPS:
        return np.empty((0, 2))
    return result


def _aabbs_overlap(a: FootprintRect, b: FootprintRect) -> bool:
    ax0, ay0, ax1, ay1 = a.aabb()
    bx0, by0, bx1, by1 = b.aabb()
    return ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1


def intersection_area(a: FootprintRect, b: FootprintRect) -> float:
    """Overlap area of two footprints; 0.0 when disjoint or merely touching."""
    if not _aabbs_overlap(a, b):
        return 0.0
    # Canonical argument order makes the clip bitwise symmetric in (a, b).
    first, second = a.corners, b.corners
    if first.tobytes() > second.tobytes():
        first, second = second, first
    inter = convex_intersection(first, second)
    if len(inter) == 0:
        return 0.0
    area = polygon_area(inter)
    return area if area > AREA_EPS else 0.0


def footprints_intersect(a: FootprintRect, b: FootprintRect) -> bool:
    return intersection_area(a, b) > 0.0


def footprint_iou(a: FootprintRect, b: FootprintRect) -> float:
    """Intersection-over-union of two footprints, in [0, 1].

    Symmetric in its arguments bit-for-bit (the clip runs in a canonical
    argument order) and exactly 0.0 for disjoint rectangles.
    """
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = polygon_area(a.corners) + polygon_area(b.corners) - inter
    return inter / union


def points_in_convex(points: np.ndarray, poly: np.ndarray, eps: float = EDGE_EPS) -> np.ndarray:
    """Vectorized containment test against a convex CCW polygon.

    Returns a boolean array; points within eps meters of the boundary
    count as inside, matching the clipping convention.
    """
    pts = np.asarray(points, dtype=float)
    pg = np.asarray(poly, dtype=float)
    inside = np.ones(len(pts), dtype=bool)
    n = len(pg)
    for i in range(n):
        x1, y1 = pg[i]
        x2, y2 = pg[(i + 1) % n]
        cross = (x2 - x1) * (pts[:, 1] - y1) - (y2 - y1) * (pts[:, 0] - x1)
        inside &= cross >= -eps * np.hypot(x2 - x1, y2 - y1)
    return inside
