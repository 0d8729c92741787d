"""Pose-level spatial graph with IoU-bounded edges.

Vertices are pose keys (log_id, frame_id); an edge joins two poses whose
footprints overlap with IoU inside [iou_min, iou_max] (inclusive).  Pairs
that do not intersect at all never produce an edge, so iou_min = 0 means
"every intersecting pair" rather than "every pair".  Edges are undirected
and stored once with the smaller key first; the edge list is sorted, which
makes construction deterministic.

Graph files come in two versioned flavors selected by extension: ``.bin``
is a compact binary layout, anything else is line-oriented text with a
header, entry counts, and an END marker so that truncation is detectable.
The text format is canonical for diffs; IoU values are written with repr
and round-trip bitwise in both formats.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptFile, InputError, InvalidRange, UnknownPose, VersionMismatch
from .geometry import FootprintConfig, footprint, footprint_iou
from .ingest import Dataset
from .spatial import StaticRTree

PoseKey = tuple[str, int]

_HEADER = "# geoclr-posegraph v1"


@dataclass(frozen=True)
class PoseGraph:
    vertices: tuple[PoseKey, ...]
    edges: tuple[tuple[PoseKey, PoseKey, float], ...]
    iou_min: float
    iou_max: float
    cross_only: bool = True
    _adjacency: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        vset = set(self.vertices)
        for a, b, iou in self.edges:
            if a == b or not (a < b):
                raise InputError(f"edge ({a}, {b}) violates key ordering")
            if a not in vset or b not in vset:
                raise UnknownPose(f"edge references unknown pose {a} or {b}")
            if not (self.iou_min <= iou <= self.iou_max):
                raise InvalidRange(f"edge iou {iou} outside [{self.iou_min}, {self.iou_max}]")
        adj: dict[PoseKey, list[tuple[PoseKey, float]]] = {}
        for a, b, iou in self.edges:
            adj.setdefault(a, []).append((b, iou))
            adj.setdefault(b, []).append((a, iou))
        self._adjacency.update(adj)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def build_pose_graph(
    d: Dataset,
    cfg: FootprintConfig = FootprintConfig(),
    iou_min: float = 0.3,
    iou_max: float = 0.9,
    cross_only: bool = True,
) -> PoseGraph:
    """Build the spatial pose graph over a dataset.

    Candidate pairs come from an R-tree over footprint AABBs; footprint_iou
    runs only on candidates.  With cross_only (the default) edges connect
    poses from different logs only, the setting that yields
    reference-adjacent training pairs.
    """
    if not (0.0 <= iou_min <= iou_max <= 1.0):
        raise InvalidRange(f"invalid IoU range [{iou_min}, {iou_max}]")
    entries = [(trav, pose) for trav, pose in d.iter_poses()]
    keys = [pose.key for _, pose in entries]
    rects = [footprint(pose, cfg) for _, pose in entries]
    edges: list[tuple[PoseKey, PoseKey, float]] = []
    if rects:
        boxes = np.array([r.aabb() for r in rects])
        tree = StaticRTree(boxes)
        for i, rect in enumerate(rects):
            for j in tree.query(boxes[i]):
                if j <= i:
                    continue
                if cross_only and keys[i][0] == keys[j][0]:
                    continue
                iou = footprint_iou(rect, rects[j])
                if iou > 0.0 and iou_min <= iou <= iou_max:
                    a, b = sorted((keys[i], keys[j]))
                    edges.append((a, b, iou))
    edges.sort(key=lambda e: (e[0], e[1]))
    return PoseGraph(tuple(sorted(keys)), tuple(edges), iou_min, iou_max, cross_only)


def adjacents(g: PoseGraph, ref: PoseKey) -> list[tuple[PoseKey, float]]:
    """Neighbors of ``ref`` sorted by descending IoU, then key."""
    if ref not in set(g.vertices):
        raise UnknownPose(f"pose {ref} not in graph")
    neigh = g._adjacency.get(ref, [])
    return sorted(neigh, key=lambda item: (-item[1], item[0]))


_BIN_MAGIC = b"GCLRPG01"
_BIN_END = b"END!"


def save_graph(g: PoseGraph, path) -> None:
    """Write a graph file; a .bin extension selects the binary format."""
    if Path(path).suffix == ".bin":
        _save_graph_binary(g, path)
    else:
        _save_graph_text(g, path)


def load_graph(path) -> PoseGraph:
    if Path(path).suffix == ".bin":
        return _load_graph_binary(path)
    return _load_graph_text(path)


def _save_graph_text(g: PoseGraph, path) -> None:
    lines = [
        _HEADER,
        f"META iou_min {g.iou_min!r} iou_max {g.iou_max!r} cross_only {int(g.cross_only)}",
        f"COUNTS {len(g.vertices)} {len(g.edges)}",
    ]
    for log_id, frame_id in g.vertices:
        lines.append(f"VERTEX {log_id} {frame_id}")
    for (la, fa), (lb, fb), iou in g.edges:
        lines.append(f"EDGE {la} {fa} {lb} {fb} {iou!r}")
    lines.append("END")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _save_graph_binary(g: PoseGraph, path) -> None:
    logs = sorted({k[0] for k in g.vertices})
    log_idx = {log: i for i, log in enumerate(logs)}
    parts = [
        _BIN_MAGIC,
        struct.pack(
            "<IIQddB",
            len(logs),
            len(g.vertices),
            len(g.edges),
            g.iou_min,
            g.iou_max,
            int(g.cross_only),
        ),
    ]
    for log in logs:
        raw = log.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
    for log, frame in g.vertices:
        parts.append(struct.pack("<IQ", log_idx[log], frame))
    for (la, fa), (lb, fb), iou in g.edges:
        parts.append(struct.pack("<IQIQd", log_idx[la], fa, log_idx[lb], fb, iou))
    parts.append(_BIN_END)
    Path(path).write_bytes(b"".join(parts))


def _load_graph_binary(path) -> PoseGraph:
    data = Path(path).read_bytes()
    if data[:6] == _BIN_MAGIC[:6] and data[:8] != _BIN_MAGIC:
        raise VersionMismatch(f"{path}: unsupported binary graph version {data[:8]!r}")
    if data[:8] != _BIN_MAGIC:
        raise CorruptFile(f"{path}: not a binary graph file")
    try:
        off = 8
        n_logs, n_vertices, n_edges, iou_min, iou_max, cross = struct.unpack_from(
            "<IIQddB", data, off
        )
        off += struct.calcsize("<IIQddB")
        logs = []
        for _ in range(n_logs):
            (length,) = struct.unpack_from("<I", data, off)
            off += 4
            logs.append(data[off : off + length].decode("utf-8"))
            off += length
        vertices = []
        for _ in range(n_vertices):
            idx, frame = struct.unpack_from("<IQ", data, off)
            off += struct.calcsize("<IQ")
            vertices.append((logs[idx], frame))
        edges = []
        for _ in range(n_edges):
            ia, fa, ib, fb, iou = struct.unpack_from("<IQIQd", data, off)
            off += struct.calcsize("<IQIQd")
            edges.append(((logs[ia], fa), (logs[ib], fb), iou))
        if data[off : off + 4] != _BIN_END or off + 4 != len(data):
            raise CorruptFile(f"{path}: truncated binary graph file")
    except (struct.error, IndexError, UnicodeDecodeError) as e:
        raise CorruptFile(f"{path}: {e}") from e
    return PoseGraph(tuple(vertices), tuple(edges), iou_min, iou_max, bool(cross))


def _load_graph_text(path) -> PoseGraph:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise CorruptFile(f"{path}: empty graph file")
    if lines[0].startswith("# geoclr-posegraph"):
        if lines[0] != _HEADER:
            raise VersionMismatch(f"{path}: unsupported version {lines[0]!r}")
    else:
        raise CorruptFile(f"{path}: missing graph header")
    try:
        meta = lines[1].split()
        if meta[0] != "META" or meta[1] != "iou_min" or meta[3] != "iou_max":
            raise CorruptFile(f"{path}: bad META line")
        iou_min, iou_max = float(meta[2]), float(meta[4])
        cross_only = bool(int(meta[6]))
        counts = lines[2].split()
        if counts[0] != "COUNTS":
            raise CorruptFile(f"{path}: bad COUNTS line")
        n_vertices, n_edges = int(counts[1]), int(counts[2])
        body = lines[3:]
        if len(body) != n_vertices + n_edges + 1 or body[-1] != "END":
            raise CorruptFile(f"{path}: truncated graph file")
        vertices = []
        for line in body[:n_vertices]:
            tag, log_id, frame = line.split()
            if tag != "VERTEX":
                raise CorruptFile(f"{path}: expected VERTEX line, got {line!r}")
            vertices.append((log_id, int(frame)))
        edges = []
        for line in body[n_vertices:-1]:
            tag, la, fa, lb, fb, iou = line.split()
            if tag != "EDGE":
                raise CorruptFile(f"{path}: expected EDGE line, got {line!r}")
            edges.append(((la, int(fa)), (lb, int(fb)), float(iou)))
    except CorruptFile:
        raise
    except (IndexError, ValueError) as e:
        raise CorruptFile(f"{path}: {e}") from e
    return PoseGraph(tuple(vertices), tuple(edges), iou_min, iou_max, cross_only)
