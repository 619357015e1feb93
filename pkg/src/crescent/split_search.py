"""Timing-free semantics of the two-phase approximate search.

Phase one routes every query down the routing levels to a sub-tree and
collects in-radius path nodes as seed candidates. Phase two runs an exact
radius-k search confined to the assigned sub-tree, merges the seeds, and
fills short rows by replication. The elision height h_e is carried in the
config but only the timing model reacts to it; this module is the oracle
the timing model must reproduce when elision is off.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidArgument
from .exact_search import NeighborList
from .geometry import QueryBatch
from .kdtree import SplitTree

NEIGHBORS_SCHEMA = "crescent.neighbors.v1"


@dataclass(frozen=True)
class SearchConfig:
    """Approximation knobs: the pair (h_t, h_e) plus search shape."""

    h_t: int
    h_e: int
    radius: float
    k_max: int
    include_self: bool = True
    seed_top_hits: bool = True

    def validate(self, split: SplitTree) -> None:
        H = split.height
        if self.h_t != split.h_t:
            raise InvalidArgument(
                f"config h_t={self.h_t} does not match the split's h_t={split.h_t}")
        if not 1 <= self.h_e <= H:
            raise InvalidArgument(f"h_e={self.h_e} outside [1, {H}]")
        if not self.radius > 0:
            raise InvalidArgument(f"radius must be positive, got {self.radius}")
        if self.k_max < 1:
            raise InvalidArgument(f"k_max must be at least 1, got {self.k_max}")


@dataclass(frozen=True)
class RoutedQueries:
    """Routing result: sub-tree assignment plus top-path candidate seeds."""

    assigned: np.ndarray      # int32[Q], sub-tree index per query
    order: np.ndarray         # int32[Q], query ids grouped by sub-tree
    sub_start: np.ndarray     # int32[S + 1], group offsets into ``order``
    seed_idx: np.ndarray      # int32[Q, max_seeds]
    seed_d2: np.ndarray       # float64[Q, max_seeds]
    seed_n: np.ndarray        # int32[Q]

    def subtree_lists(self) -> list[np.ndarray]:
        return [self.order[self.sub_start[s]:self.sub_start[s + 1]]
                for s in range(len(self.sub_start) - 1)]


@dataclass(frozen=True)
class NeighborMatrix:
    """Fixed-width neighbor index rows with replication fill."""

    rows: np.ndarray          # int32[Q, k_max]
    valid_counts: np.ndarray  # int32[Q]
    replicated: np.ndarray    # int32[Q]

    @property
    def k_max(self) -> int:
        return int(self.rows.shape[1])

    def __len__(self) -> int:
        return int(self.rows.shape[0])

    def to_csv(self) -> str:
        k = self.k_max
        buf = io.StringIO()
        buf.write(f"#schema: {NEIGHBORS_SCHEMA}\n")
        buf.write("qid," + ",".join(f"i{j}" for j in range(1, k + 1)) + ",valid,replicated\n")
        for q in range(len(self)):
            cells = ",".join(str(int(x)) for x in self.rows[q])
            buf.write(f"{q},{cells},{int(self.valid_counts[q])},{int(self.replicated[q])}\n")
        return buf.getvalue()


def group_by_subtree(assigned: np.ndarray, sequence: np.ndarray, n_sub: int):
    """Stable-bucket ``sequence`` (query ids) by assigned sub-tree."""
    counts = np.bincount(assigned[sequence], minlength=n_sub)
    sub_start = np.zeros(n_sub + 1, np.int64)
    np.cumsum(counts, out=sub_start[1:])
    sub_start = sub_start.astype(np.int32)
    order = np.empty(len(sequence), np.int32)
    fill = sub_start[:-1].copy()
    for q in sequence:
        s = assigned[q]
        order[fill[s]] = q
        fill[s] += 1
    return order, sub_start


def route_queries(split: SplitTree, batch: QueryBatch, cfg: SearchConfig) -> RoutedQueries:
    """Assign each query to a sub-tree by descending the routing levels.

    The descent compares the query coordinate against each split value
    (<= goes left) with no backtracking; in-radius nodes on the path,
    all strictly above the shared sub-tree root, become candidate seeds.
    With h_t = 0 every query lands in the single sub-tree with no seeds.
    """
    cfg.validate(split)
    t = split.tree
    nq = len(batch)
    max_seeds = max(split.h_t, 1)
    assigned = np.zeros(nq, np.int32)
    seed_idx = np.zeros((nq, max_seeds), np.int32)
    seed_d2 = np.zeros((nq, max_seeds), np.float64)
    seed_n = np.zeros(nq, np.int32)
    r2 = float(cfg.radius) * float(cfg.radius)
    _kernels.route_top(t.node_point, t.node_axis, t.node_split, t.node_left,
                       t.node_right, t.points, split.subtree_of, batch.queries,
                       split.h_t, r2, cfg.seed_top_hits,
                       assigned, seed_idx, seed_d2, seed_n)
    order, sub_start = group_by_subtree(assigned, np.arange(nq, dtype=np.int32),
                                        split.subtree_count)
    return RoutedQueries(assigned, order, sub_start, seed_idx, seed_d2, seed_n)


def subtree_search(split: SplitTree, subtree_id: int, query_ids, routed: RoutedQueries,
                   batch: QueryBatch, cfg: SearchConfig) -> list[NeighborList]:
    """Exact radius-k search for ``query_ids`` confined to one sub-tree,
    merged with each query's top-path seeds. Backtracking never ascends
    above the shared sub-tree root."""
    cfg.validate(split)
    if not 0 <= subtree_id < split.subtree_count:
        raise InvalidArgument(f"sub-tree id {subtree_id} out of range")
    t = split.tree
    root = int(split.subtree_roots[subtree_id])
    k = cfg.k_max
    hd = np.empty(k, np.float64)
    hi = np.empty(k, np.int64)
    out_d = np.empty(k, np.float64)
    out_i = np.empty(k, np.int64)
    r2 = float(cfg.radius) * float(cfg.radius)
    results = []
    for q in query_ids:
        q = int(q)
        if int(routed.assigned[q]) != subtree_id:
            raise InvalidArgument(f"query {q} was not routed to sub-tree {subtree_id}")
        excl = q if (batch.self_query and not cfg.include_self) else -1
        n, _visits = _kernels.subtree_query_static(
            t.node_point, t.node_axis, t.node_split, t.node_left, t.node_right,
            t.points, root,
            float(batch.queries[q, 0]), float(batch.queries[q, 1]),
            float(batch.queries[q, 2]),
            r2, k, excl,
            routed.seed_idx[q], routed.seed_d2[q], int(routed.seed_n[q]),
            hd, hi, out_d, out_i)
        results.append(NeighborList(out_i[:n].copy(), np.sqrt(out_d[:n])))
    return results


def approximate_search(split: SplitTree, batch: QueryBatch,
                       cfg: SearchConfig) -> NeighborMatrix:
    """Route, search each sub-tree in root order, and fill rows to k_max."""
    matrix, _, _ = approximate_search_details(split, batch, cfg)
    return matrix


def approximate_search_details(split: SplitTree, batch: QueryBatch, cfg: SearchConfig):
    """approximate_search plus per-query node visits and the routing."""
    cfg.validate(split)
    t = split.tree
    nq = len(batch)
    routed = route_queries(split, batch, cfg)
    rows = np.empty((nq, cfg.k_max), np.int32)
    valid = np.zeros(nq, np.int32)
    repl = np.zeros(nq, np.int32)
    visits = np.zeros(nq, np.int64)
    self_exclude = bool(batch.self_query and not cfg.include_self)
    _kernels.functional_batch(
        t.node_point, t.node_axis, t.node_split, t.node_left, t.node_right,
        t.points, split.subtree_roots, batch.queries, routed.assigned,
        routed.seed_idx, routed.seed_d2, routed.seed_n,
        float(cfg.radius) * float(cfg.radius), cfg.k_max,
        self_exclude, batch.self_query,
        rows, valid, repl, visits)
    if split.h_t >= 2:
        visits += split.h_t - 1  # routing-level descent reads
    return NeighborMatrix(rows, valid, repl), visits, routed


def recall(approx: NeighborMatrix, exact: list[NeighborList]) -> float:
    """Mean per-query |approx row ∩ exact| / |exact|; empty exact rows score 1."""
    if len(approx) != len(exact):
        raise InvalidArgument(
            f"query count mismatch: matrix has {len(approx)}, oracle has {len(exact)}")
    total = 0.0
    for q in range(len(approx)):
        truth = set(int(i) for i in exact[q].indices)
        if not truth:
            total += 1.0
            continue
        got = set(int(i) for i in approx.rows[q, :int(approx.valid_counts[q])])
        total += len(got & truth) / len(truth)
    return total / len(approx)


def recall_from_arrays(approx: NeighborMatrix, exact_rows: np.ndarray,
                       exact_counts: np.ndarray) -> float:
    """recall() against the padded-array oracle form (brute_force_batch)."""
    if len(approx) != exact_rows.shape[0]:
        raise InvalidArgument("query count mismatch between matrix and oracle rows")
    total = 0.0
    for q in range(len(approx)):
        n = int(exact_counts[q])
        if n == 0:
            total += 1.0
            continue
        truth = set(int(i) for i in exact_rows[q, :n])
        got = set(int(i) for i in approx.rows[q, :int(approx.valid_counts[q])])
        total += len(got & truth) / n
    return total / len(approx)
