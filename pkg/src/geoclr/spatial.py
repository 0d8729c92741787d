"""Static R-tree over axis-aligned bounding boxes.

Bulk-loaded with sort-tile-recursive packing; queries return candidate
indices whose AABB touches or overlaps the query box.  Candidates are a
superset of true oriented-rectangle intersections, so callers must still
run the exact geometric test.  The tree is immutable after construction.
"""

from __future__ import annotations

import math

import numpy as np

_LEAF_SIZE = 16


class _Node:
    __slots__ = ("boxes", "children", "indices")

    def __init__(self, boxes, children, indices):
        self.boxes = boxes        # (k, 4) child / entry AABBs
        self.children = children  # list[_Node] or None for leaves
        self.indices = indices    # (k,) entry ids, leaves only


def _enclosing(boxes: np.ndarray) -> np.ndarray:
    return np.array(
        [boxes[:, 0].min(), boxes[:, 1].min(), boxes[:, 2].max(), boxes[:, 3].max()]
    )


class StaticRTree:
    """R-tree over (xmin, ymin, xmax, ymax) boxes given at construction."""

    def __init__(self, boxes: np.ndarray, leaf_size: int = _LEAF_SIZE):
        boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
        self._n = len(boxes)
        if self._n == 0:
            self._root = None
            return
        order = np.arange(self._n)
        self._root = self._build(boxes, order, leaf_size)

    @staticmethod
    def _build(boxes: np.ndarray, indices: np.ndarray, leaf_size: int) -> _Node:
        n = len(indices)
        if n <= leaf_size:
            return _Node(boxes[indices], None, indices)
        centers_x = (boxes[indices, 0] + boxes[indices, 2]) * 0.5
        centers_y = (boxes[indices, 1] + boxes[indices, 3]) * 0.5
        n_nodes = math.ceil(n / leaf_size)
        n_slabs = math.ceil(math.sqrt(n_nodes))
        slab_cap = math.ceil(n / n_slabs)
        by_x = indices[np.argsort(centers_x, kind="stable")]
        children = []
        child_boxes = []
        for s in range(0, n, slab_cap):
            slab = by_x[s : s + slab_cap]
            cy = (boxes[slab, 1] + boxes[slab, 3]) * 0.5
            slab = slab[np.argsort(cy, kind="stable")]
            for c in range(0, len(slab), leaf_size):
                chunk = slab[c : c + leaf_size]
                child = _Node(boxes[chunk], None, chunk)
                children.append(child)
                child_boxes.append(_enclosing(child.boxes))
        node = _Node(np.array(child_boxes), children, None)
        # Collapse upward until one node holds everything.
        while len(node.children) > leaf_size:
            upper_children = []
            upper_boxes = []
            for c in range(0, len(node.children), leaf_size):
                group = node.children[c : c + leaf_size]
                gboxes = node.boxes[c : c + leaf_size]
                upper_children.append(_Node(gboxes, group, None))
                upper_boxes.append(_enclosing(gboxes))
            node = _Node(np.array(upper_boxes), upper_children, None)
        return node

    def query(self, box) -> np.ndarray:
        """Indices of all entries whose AABB touches or overlaps ``box``."""
        if self._root is None:
            return np.empty(0, dtype=int)
        qx0, qy0, qx1, qy1 = box
        out: list[np.ndarray] = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            b = node.boxes
            hit = (
                (b[:, 0] <= qx1)
                & (qx0 <= b[:, 2])
                & (b[:, 1] <= qy1)
                & (qy0 <= b[:, 3])
            )
            if node.children is None:
                if hit.any():
                    out.append(node.indices[hit])
            else:
                for i in np.nonzero(hit)[0]:
                    stack.append(node.children[i])
        if not out:
            return np.empty(0, dtype=int)
        return np.concatenate(out)


def overlap_pairs(boxes: np.ndarray, tree: StaticRTree | None = None) -> list[tuple[int, int]]:
    """All index pairs (i < j) whose AABBs touch or overlap."""
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    if tree is None:
        tree = StaticRTree(boxes)
    pairs = []
    for i in range(len(boxes)):
        for j in tree.query(boxes[i]):
            if j > i:
                pairs.append((i, int(j)))
    return pairs
