"""Pose-log parsing and the in-memory dataset model.

A pose file is either CSV with the fixed column order
``log_id,frame_id,t,x,y,yaw,area_id`` (header optional, detected by a first
token of ``log_id``) or JSON lines with the same field names.  Coordinates
are planar meters in a shared global frame; no geodetic conversion happens
anywhere in this package.  Yaw is radians, counterclockwise, 0 along the
global +x axis, and is normalized to [-pi, pi) on ingest.

Identifiers (``log_id``, ``area_id``) must be non-empty and free of
whitespace, commas, and colons so that every line-oriented artifact format
in this package can use them as single tokens.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import (
    DuplicateFrame,
    EmptyFile,
    InputError,
    MalformedRecord,
    NonFiniteValue,
)

TWO_PI = 2.0 * math.pi

CSV_COLUMNS = ("log_id", "frame_id", "t", "x", "y", "yaw", "area_id")

_FORBIDDEN_ID_CHARS = set(" \t,:\r\n")


def normalize_yaw(yaw: float) -> float:
    """Map an angle to [-pi, pi).  Idempotent: in-range values pass through
    unchanged so repeated normalization is bitwise stable."""
    if -math.pi <= yaw < math.pi:
        return yaw
    return ((yaw + math.pi) % TWO_PI) - math.pi


def _valid_id(s: str) -> bool:
    return bool(s) and not (_FORBIDDEN_ID_CHARS & set(s))


@dataclass(frozen=True)
class Pose:
    """One timestamped vehicle position + heading in the global planar frame."""

    log_id: str
    frame_id: int
    t: float
    x: float
    y: float
    yaw: float

    def __post_init__(self):
        if not _valid_id(self.log_id):
            raise InputError(f"invalid log_id {self.log_id!r}")
        if self.frame_id < 0:
            raise InputError(f"frame_id must be non-negative, got {self.frame_id}")
        for name in ("t", "x", "y", "yaw"):
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"pose field {name!r} is not finite")
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    @property
    def key(self) -> tuple[str, int]:
        return (self.log_id, self.frame_id)


@dataclass(frozen=True)
class Traversal:
    """One drive log: poses strictly ascending in time, single area."""

    log_id: str
    area_id: str
    poses: tuple[Pose, ...]

    def __post_init__(self):
        if not self.poses:
            raise InputError(f"traversal {self.log_id!r} has no poses")
        if not _valid_id(self.area_id):
            raise InputError(f"invalid area_id {self.area_id!r}")
        for p in self.poses:
            if p.log_id != self.log_id:
                raise InputError(
                    f"pose {p.key} inside traversal {self.log_id!r}"
                )
        for a, b in zip(self.poses, self.poses[1:]):
            if not a.t < b.t:
                raise InputError(
                    f"timestamps not strictly ascending in log {self.log_id!r}"
                )


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of traversals, ordered by log_id."""

    traversals: tuple[Traversal, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ids = [t.log_id for t in self.traversals]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate log_id across traversals")

    @property
    def total_poses(self) -> int:
        return sum(len(t.poses) for t in self.traversals)

    def iter_poses(self) -> Iterable[tuple[Traversal, Pose]]:
        for trav in self.traversals:
            for p in trav.poses:
                yield trav, p

    def traversal(self, log_id: str) -> Traversal:
        for t in self.traversals:
            if t.log_id == log_id:
                return t
        raise KeyError(log_id)

    def pose(self, key: tuple[str, int]) -> Pose:
        trav = self.traversal(key[0])
        for p in trav.poses:
            if p.frame_id == key[1]:
                return p
        raise KeyError(key)


def _parse_float(token: str, line_no: int, name: str) -> float:
    try:
        v = float(token)
    except ValueError:
        raise MalformedRecord(line_no, f"field {name!r}: not a number ({token!r})")
    if not math.isfinite(v):
        raise NonFiniteValue(line_no, name)
    return v


def _parse_frame(token, line_no: int) -> int:
    if isinstance(token, bool) or (isinstance(token, float) and not token.is_integer()):
        raise MalformedRecord(line_no, f"field 'frame_id': not an integer ({token!r})")
    try:
        v = int(token)
    except (ValueError, TypeError):
        raise MalformedRecord(line_no, f"field 'frame_id': not an integer ({token!r})")
    if v < 0:
        raise MalformedRecord(line_no, f"field 'frame_id': negative ({v})")
    return v


def _parse_id(token: str, line_no: int, name: str) -> str:
    if not _valid_id(token):
        raise MalformedRecord(
            line_no,
            f"field {name!r}: empty or contains whitespace/comma/colon ({token!r})",
        )
    return token


def _csv_record(line: str, line_no: int):
    parts = line.split(",")
    if len(parts) != 7:
        raise MalformedRecord(line_no, f"expected 7 comma-separated fields, got {len(parts)}")
    log_id = _parse_id(parts[0].strip(), line_no, "log_id")
    frame_id = _parse_frame(parts[1].strip(), line_no)
    t = _parse_float(parts[2].strip(), line_no, "t")
    x = _parse_float(parts[3].strip(), line_no, "x")
    y = _parse_float(parts[4].strip(), line_no, "y")
    yaw = _parse_float(parts[5].strip(), line_no, "yaw")
    area_id = _parse_id(parts[6].strip(), line_no, "area_id")
    return log_id, frame_id, t, x, y, yaw, area_id


def _jsonl_record(line: str, line_no: int):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedRecord(line_no, f"invalid JSON: {e.msg}")
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, "record is not a JSON object")
    missing = [k for k in CSV_COLUMNS if k not in obj]
    if missing:
        raise MalformedRecord(line_no, f"missing fields {missing}")
    # Extra fields (z, roll, pitch, ...) are ignored.
    log_id = _parse_id(str(obj["log_id"]), line_no, "log_id")
    frame_id = _parse_frame(obj["frame_id"], line_no)
    vals = {}
    for name in ("t", "x", "y", "yaw"):
        v = obj[name]
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise MalformedRecord(line_no, f"field {name!r}: not a number ({v!r})")
        if not math.isfinite(v):
            raise NonFiniteValue(line_no, name)
        vals[name] = float(v)
    area_id = _parse_id(str(obj["area_id"]), line_no, "area_id")
    return log_id, frame_id, vals["t"], vals["x"], vals["y"], vals["yaw"], area_id


def parse_pose_file(path, format: str | None = None) -> Dataset:
    """Parse a pose-log file into a Dataset grouped by log_id.

    ``format`` is "csv" or "jsonl"; when None it is inferred from the file
    extension (.jsonl / .ndjson parse as JSON lines, everything else as CSV).
    Poses are sorted by t within each log and traversals by log_id, so the
    result is deterministic regardless of record order in the file.
    """
    path = Path(path)
    if format is None:
        format = "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv"
    if format not in ("csv", "jsonl"):
        raise InputError(f"unknown pose file format {format!r}")
    text = path.read_text(encoding="utf-8")
    return parse_pose_text(text, format)


def parse_pose_text(text: str, format: str = "csv") -> Dataset:
    """Parse pose records from a string; see parse_pose_file."""
    records = []
    seen: set[tuple[str, int]] = set()
    parse_line = _csv_record if format == "csv" else _jsonl_record
    first_data_line = True
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if format == "csv" and first_data_line and line.split(",")[0].strip() == "log_id":
            first_data_line = False
            continue
        first_data_line = False
        rec = parse_line(line, line_no)
        key = (rec[0], rec[1])
        if key in seen:
            raise DuplicateFrame(*key)
        seen.add(key)
        records.append((line_no, rec))
    if not records:
        raise EmptyFile("no pose records found")

    by_log: dict[str, list[tuple[int, tuple]]] = {}
    for line_no, rec in records:
        by_log.setdefault(rec[0], []).append((line_no, rec))

    traversals = []
    for log_id in sorted(by_log):
        rows = by_log[log_id]
        areas = {rec[6] for _, rec in rows}
        if len(areas) > 1:
            bad = max(line_no for line_no, _ in rows)
            raise MalformedRecord(
                bad, f"log {log_id!r} spans multiple area_ids {sorted(areas)}"
            )
        rows.sort(key=lambda item: (item[1][2], item[1][1]))
        times = [rec[2] for _, rec in rows]
        for i in range(1, len(times)):
            if times[i] <= times[i - 1]:
                raise MalformedRecord(
                    rows[i][0], f"duplicate timestamp {times[i]!r} in log {log_id!r}"
                )
        poses = tuple(
            Pose(rec[0], rec[1], rec[2], rec[3], rec[4], rec[5]) for _, rec in rows
        )
        traversals.append(Traversal(log_id, next(iter(areas)), poses))
    return Dataset(tuple(traversals))


def dump_pose_csv(d: Dataset, header_lines: tuple[str, ...] = ()) -> str:
    """Serialize a Dataset to canonical CSV.

    Floats are written with repr, which round-trips bitwise, so
    parse(dump(d)) reproduces the pose table exactly.
    """
    lines = [f"# {h}" for h in header_lines]
    lines.append(",".join(CSV_COLUMNS))
    for trav in d.traversals:
        for p in trav.poses:
            lines.append(
                f"{p.log_id},{p.frame_id},{p.t!r},{p.x!r},{p.y!r},{p.yaw!r},{trav.area_id}"
            )
    return "\n".join(lines) + "\n"


def write_pose_csv(d: Dataset, path, header_lines: tuple[str, ...] = ()) -> None:
    Path(path).write_text(dump_pose_csv(d, header_lines), encoding="utf-8")


def partition_by_area(d: Dataset) -> dict[str, Dataset]:
    """Split a dataset into per-area datasets; traversals are never split.

    The partition covers the input, the parts are pairwise disjoint, and
    traversal order within each part is preserved.
    """
    groups: dict[str, list[Traversal]] = {}
    for trav in d.traversals:
        groups.setdefault(trav.area_id, []).append(trav)
    return {area: Dataset(tuple(travs)) for area, travs in groups.items()}
