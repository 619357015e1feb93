"""Ground-truth search oracles.

``brute_force_search`` enumerates every point and is the reference all other
search paths are checked against. ``kdtree_search`` is the exact tree search
with unrestricted backtracking and best-bin-first radius tightening; it must
agree with brute force on every instance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidArgument
from .geometry import PointCloud
from .kdtree import KdTree


@dataclass(frozen=True)
class NeighborList:
    """Neighbors of one query, ascending by (distance, point index)."""

    indices: np.ndarray    # int64[n]
    distances: np.ndarray  # float64[n], Euclidean

    def __len__(self) -> int:
        return int(self.indices.shape[0])


def _check_args(r: float, k_max: int):
    if not r > 0:
        raise InvalidArgument(f"radius must be positive, got {r}")
    if k_max < 1:
        raise InvalidArgument(f"k_max must be at least 1, got {k_max}")


def brute_force_search(cloud: PointCloud, query, r: float, k_max: int,
                       exclude_index: int | None = None) -> NeighborList:
    """Exhaustive reference: the k_max closest points within radius r."""
    _check_args(r, k_max)
    q = np.asarray(query, dtype=np.float32).reshape(3)
    diff = cloud.points.astype(np.float64) - q.astype(np.float64)
    # summed left to right to match the traversal kernels bit for bit
    d2 = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
    mask = d2 <= float(r) * float(r)
    if exclude_index is not None and 0 <= exclude_index < len(cloud):
        mask[exclude_index] = False
    idx = np.flatnonzero(mask)
    order = np.lexsort((idx, d2[idx]))[:k_max]
    sel = idx[order]
    return NeighborList(sel.astype(np.int64), np.sqrt(d2[sel]))


def brute_force_batch(cloud: PointCloud, queries: np.ndarray, r: float, k_max: int,
                      self_exclude: bool = False):
    """Vector form of the oracle: (rows, distances, counts) padded with -1."""
    _check_args(r, k_max)
    q = np.ascontiguousarray(queries, dtype=np.float32)
    rows, d2s, counts = _kernels.brute_batch(cloud.points, q, float(r) * float(r),
                                             int(k_max), bool(self_exclude))
    return rows, np.sqrt(d2s), counts


def kdtree_search(tree: KdTree, cloud: PointCloud, query, r: float, k_max: int,
                  exclude_index: int | None = None) -> NeighborList:
    """Exact K-d search; set- and order-equal to brute_force_search."""
    _check_args(r, k_max)
    q = np.asarray(query, dtype=np.float64).reshape(3)
    excl = -1 if exclude_index is None else int(exclude_index)
    idx, d2, _visits = _kernels.kd_query_exact(
        tree.node_point, tree.node_axis, tree.node_split,
        tree.node_left, tree.node_right, cloud.points, tree.root,
        q[0], q[1], q[2], float(r) * float(r), int(k_max), excl)
    return NeighborList(idx, np.sqrt(d2))


def kdtree_search_visits(tree: KdTree, cloud: PointCloud, query, r: float,
                         k_max: int, exclude_index: int | None = None):
    """Like kdtree_search but also reports the number of nodes visited."""
    _check_args(r, k_max)
    q = np.asarray(query, dtype=np.float64).reshape(3)
    excl = -1 if exclude_index is None else int(exclude_index)
    idx, d2, visits = _kernels.kd_query_exact(
        tree.node_point, tree.node_axis, tree.node_split,
        tree.node_left, tree.node_right, cloud.points, tree.root,
        q[0], q[1], q[2], float(r) * float(r), int(k_max), excl)
    return NeighborList(idx, np.sqrt(d2)), int(visits)


def kdtree_search_instrumented(tree: KdTree, cloud: PointCloud, query, r: float,
                               k_max: int, exclude_index: int | None = None):
    """Pure-Python twin of kdtree_search that records pruned sub-trees.

    Returns (NeighborList, visits, pruned) where ``pruned`` lists
    (node_id, kth_distance_at_prune) for every far child skipped. Used by
    prune-safety tests; kept independent from the jitted fast path.
    """
    _check_args(r, k_max)
    q = np.asarray(query, dtype=np.float64).reshape(3)
    r2 = float(r) * float(r)
    excl = -1 if exclude_index is None else int(exclude_index)
    pts = cloud.points
    heap: list[tuple[float, int]] = []  # kept sorted ascending, worst last
    stack = [tree.root]
    visits = 0
    pruned: list[tuple[int, float]] = []
    while stack:
        nid = stack.pop()
        visits += 1
        pi = int(tree.node_point[nid])
        d = pts[pi].astype(np.float64) - q
        d2 = float(d @ d)
        if d2 <= r2 and pi != excl:
            key = (d2, pi)
            if len(heap) < k_max:
                heap.append(key)
                heap.sort()
            elif key < heap[-1]:
                heap[-1] = key
                heap.sort()
        ax = int(tree.node_axis[nid])
        delta = float(q[ax]) - float(tree.node_split[nid])
        near = tree.node_left[nid] if delta <= 0 else tree.node_right[nid]
        far = tree.node_right[nid] if delta <= 0 else tree.node_left[nid]
        prune2 = r2
        if len(heap) == k_max and heap[-1][0] < prune2:
            prune2 = heap[-1][0]
        if far >= 0:
            if delta * delta <= prune2:
                stack.append(int(far))
            else:
                pruned.append((int(far), prune2))
        if near >= 0:
            stack.append(int(near))
    idx = np.array([i for _, i in heap], dtype=np.int64)
    dist = np.sqrt(np.array([d for d, _ in heap], dtype=np.float64))
    return NeighborList(idx, dist), visits, pruned
