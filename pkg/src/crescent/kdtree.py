"""Balanced K-d tree construction and the top/sub-tree split.

Axes cycle with depth (x, y, z, x, ...). The median of m points is the
element at rank floor((m - 1) / 2) after sorting by (coordinate, original
index), which keeps construction deterministic under duplicate coordinates
and makes every level above the last one full, so H = ceil(log2(N + 1)).

``split_tree`` re-labels node ids into a layout where the routing levels
occupy a prefix and every sub-tree (root included) is a contiguous
breadth-first range. A node id therefore doubles as the stream address fed
to the bank-mapping function in the timing model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import CapacityError, InvalidArgument
from .geometry import PointCloud


@dataclass(frozen=True)
class KdNode:
    """Read-only view of one tree node."""

    id: int
    point_index: int
    split_axis: int
    split_value: float
    left: int | None
    right: int | None
    level: int


@dataclass(frozen=True)
class KdTree:
    node_point: np.ndarray   # int32[N], index into the cloud
    node_axis: np.ndarray    # int8[N]
    node_split: np.ndarray   # float32[N]
    node_left: np.ndarray    # int32[N], -1 when absent
    node_right: np.ndarray   # int32[N]
    node_level: np.ndarray   # int32[N], root level is 1
    height: int
    points: np.ndarray       # float32[N, 3], the cloud the tree was built over
    root: int = 0

    @property
    def size(self) -> int:
        return int(self.node_point.shape[0])

    def node(self, node_id: int) -> KdNode:
        if not 0 <= node_id < self.size:
            raise InvalidArgument(f"node id {node_id} out of range [0, {self.size})")
        l = int(self.node_left[node_id])
        r = int(self.node_right[node_id])
        return KdNode(
            id=node_id,
            point_index=int(self.node_point[node_id]),
            split_axis=int(self.node_axis[node_id]),
            split_value=float(self.node_split[node_id]),
            left=None if l < 0 else l,
            right=None if r < 0 else r,
            level=int(self.node_level[node_id]),
        )

    def to_json(self) -> dict:
        nodes = []
        for i in range(self.size):
            n = self.node(i)
            nodes.append({
                "id": n.id,
                "point_index": n.point_index,
                "axis": n.split_axis,
                "level": n.level,
                "left": n.left,
                "right": n.right,
            })
        return {"nodes": nodes, "root": self.root, "height": self.height}


def build_kdtree(cloud: PointCloud) -> KdTree:
    """Build a balanced K-d tree with node ids in breadth-first order."""
    if len(cloud) < 1:
        raise InvalidArgument("cannot build a tree over an empty cloud")
    np_, na, ns, nl, nr, nv, h = _kernels.build_tree(cloud.points)
    return KdTree(np_, na, ns, nl, nr, nv, int(h), cloud.points)


def node_level(tree: KdTree, node_id: int) -> int:
    """Tree level of a node; the root is level 1."""
    if not 0 <= node_id < tree.size:
        raise InvalidArgument(f"node id {node_id} out of range [0, {tree.size})")
    return int(tree.node_level[node_id])


def permissible_ht_range(height: int, buffer_words: int) -> tuple[int, int] | None:
    """Closed integer range of top-tree heights both capacity bounds allow."""
    cap = math.log2(buffer_words + 1)
    lo = max(0, math.ceil(height + 1 - cap))
    hi = min(height, math.floor(cap))
    if lo > hi:
        return None
    return lo, hi


@dataclass(frozen=True)
class SplitTree:
    """A K-d tree partitioned into routing levels and streamable sub-trees.

    ``tree`` holds the re-labeled node arrays. Node ids in
    [0, top_size) are the routing levels 1..h_t-1; ids in
    [subtree_start[s], subtree_start[s+1]) are sub-tree s in breadth-first
    order, its shared root first.
    """

    tree: KdTree
    h_t: int
    buffer_words: int
    subtree_roots: np.ndarray   # int32[S], ascending node ids
    subtree_start: np.ndarray   # int32[S + 1]
    subtree_of: np.ndarray      # int32[N], -1 for routing-level nodes

    @property
    def subtree_count(self) -> int:
        return int(self.subtree_roots.shape[0])

    @property
    def top_size(self) -> int:
        return int(self.subtree_start[0])

    @cached_property
    def subtree_sizes(self) -> np.ndarray:
        return np.diff(self.subtree_start)

    @property
    def height(self) -> int:
        return self.tree.height


def split_tree(tree: KdTree, h_t: int, buffer_words: int) -> SplitTree:
    """Partition ``tree`` at top-tree height ``h_t``.

    Both capacity inequalities must hold for a tree buffer of
    ``buffer_words`` nodes: the top tree fits (2^h_t - 1 <= S) and every
    sub-tree fits (2^(H - h_t + 1) - 1 <= S). h_t = 0 keeps the whole tree
    as one sub-tree, the exact-search baseline.
    """
    H = tree.height
    if not 0 <= h_t <= H:
        raise InvalidArgument(f"top-tree height {h_t} outside [0, {H}]")
    if buffer_words < 1:
        raise InvalidArgument("buffer capacity must be positive")
    rng = permissible_ht_range(H, buffer_words)
    rng_txt = f"permissible h_t range [{rng[0]}, {rng[1]}]" if rng else "no h_t is permissible"
    if h_t > 0 and 2**h_t - 1 > buffer_words:
        raise CapacityError(
            f"inequality (1) failed: top tree needs 2^{h_t} - 1 = {2**h_t - 1} nodes "
            f"> buffer capacity {buffer_words}; {rng_txt}",
            equation=1, ht_range=rng)
    # with h_t = 0 the single sub-tree is the whole tree (height H); for
    # h_t >= 1 the sub-tree root sits at level h_t, giving height H - h_t + 1
    sub_height = H if h_t == 0 else H - h_t + 1
    if 2**sub_height - 1 > buffer_words:
        raise CapacityError(
            f"inequality (2) failed: a sub-tree needs up to 2^{sub_height} - 1 = "
            f"{2 ** sub_height - 1} nodes > buffer capacity {buffer_words}; {rng_txt}",
            equation=2, ht_range=rng)
    if h_t == H and tree.size != 2**H - 1:
        raise InvalidArgument(
            f"h_t = H = {H} requires a perfect tree (every level-{H} slot present); "
            f"this tree has {tree.size} nodes, not {2**H - 1}")

    if h_t <= 1:
        roots = np.array([tree.root], dtype=np.int32)
    else:
        roots = np.flatnonzero(tree.node_level == h_t).astype(np.int32)
        roots.sort()
    n_top = int(np.count_nonzero(tree.node_level < max(h_t, 1)))
    perm, subtree_start, subtree_of = _kernels.relabel_regions(
        tree.node_left, tree.node_right, tree.node_level, roots, n_top)

    remap = np.empty(tree.size, np.int32)
    remap[perm] = np.arange(tree.size, dtype=np.int32)
    child_perm = np.append(perm, np.int32(-1))  # maps -1 -> -1
    new_tree = KdTree(
        node_point=tree.node_point[remap].copy(),
        node_axis=tree.node_axis[remap].copy(),
        node_split=tree.node_split[remap].copy(),
        node_left=child_perm[tree.node_left[remap]].copy(),
        node_right=child_perm[tree.node_right[remap]].copy(),
        node_level=tree.node_level[remap].copy(),
        height=H,
        points=tree.points,
        root=0,
    )
    new_roots = perm[roots].astype(np.int32)
    new_roots.sort()
    return SplitTree(
        tree=new_tree,
        h_t=h_t,
        buffer_words=buffer_words,
        subtree_roots=new_roots,
        subtree_start=subtree_start,
        subtree_of=subtree_of,
    )


def split_to_json(split: SplitTree) -> dict:
    d = split.tree.to_json()
    d["h_t"] = split.h_t
    d["buffer_words"] = split.buffer_words
    d["subtree_roots"] = [int(x) for x in split.subtree_roots]
    d["subtree_start"] = [int(x) for x in split.subtree_start]
    return d


def split_from_json(d: dict, cloud: PointCloud) -> SplitTree:
    """Rebuild a SplitTree from its JSON dump and the cloud it refers to.

    Split values are not serialized; by invariant they equal the housed
    point's coordinate on the split axis, so they are recomputed here.
    """
    nodes = d["nodes"]
    n = len(nodes)
    if n != len(cloud):
        raise InvalidArgument(f"tree has {n} nodes but the cloud has {len(cloud)} points")
    np_ = np.empty(n, np.int32)
    na = np.empty(n, np.int8)
    nl = np.full(n, -1, np.int32)
    nr = np.full(n, -1, np.int32)
    nv = np.empty(n, np.int32)
    for rec in nodes:
        i = rec["id"]
        np_[i] = rec["point_index"]
        na[i] = rec["axis"]
        nv[i] = rec["level"]
        if rec["left"] is not None:
            nl[i] = rec["left"]
        if rec["right"] is not None:
            nr[i] = rec["right"]
    height = int(d["height"])
    starts = np.array(d["subtree_start"], dtype=np.int32)
    roots = np.array(d["subtree_roots"], dtype=np.int32)
    subtree_of = np.full(n, -1, np.int32)
    for s in range(len(roots)):
        subtree_of[starts[s]:starts[s + 1]] = s
    vals = cloud.points[np_, na.astype(np.int64)].astype(np.float32)
    tree = KdTree(np_, na, vals, nl, nr, nv, height, cloud.points, int(d["root"]))
    return SplitTree(tree, int(d["h_t"]), int(d["buffer_words"]), roots, starts, subtree_of)
