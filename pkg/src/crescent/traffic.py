"""DRAM/SRAM traffic classification, the two prior-accelerator baselines,
and energy accounting with an exact four-way savings decomposition.

Energy accumulates in integer micro-units (model units scaled by 3) so the
default 25:1 SRAM and 3:1 streaming ratios and every conservation assertion
hold bit-exactly. Record sizes are fixed: 16-byte tree nodes, 16-byte query
records, 4-byte neighbor indices.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .geometry import PointCloud, QueryBatch
from .kdtree import KdTree, SplitTree
from .memsim import BankConfig, PEConfig, PhaseStats, SimStats, streaming_dram_bytes
from .split_search import NeighborMatrix, SearchConfig, route_queries

NODE_RECORD_BYTES = 16
QUERY_RECORD_BYTES = 16
NEIGHBOR_INDEX_BYTES = 4
WORD_BYTES = 4
TRAFFIC_SCHEMA = "crescent.traffic.v1"
SAVINGS_SCHEMA = "crescent.savings.v1"

SAVINGS_COMPONENTS = (
    "random_to_streaming_conversion",
    "dram_traffic_reduction",
    "sram_reduction_neighbor_search",
    "sram_reduction_aggregation",
)


@dataclass(frozen=True)
class EnergyModel:
    """Per-access energies in integer micro-units (1 model unit = 3 micro).

    Defaults encode 1.0 : 25/3 : 25.0 for SRAM : streaming DRAM : random
    DRAM accesses, i.e. a 3:1 random-to-streaming and 25:1 random-to-SRAM
    ratio.
    """

    sram_mu: int = 3
    dram_stream_mu: int = 25
    dram_random_mu: int = 75

    @property
    def e_sram(self) -> float:
        return self.sram_mu / 3.0

    @property
    def e_dram_stream(self) -> float:
        return self.dram_stream_mu / 3.0

    @property
    def e_dram_random(self) -> float:
        return self.dram_random_mu / 3.0


@dataclass(frozen=True)
class QueueConfig:
    """Per-sub-tree result-buffer queue: queries held before a flush.

    The default is 96 = 1.5 KB of result buffer / 16-byte query records.
    """

    capacity: int = 96

    def __post_init__(self):
        if self.capacity < 1:
            raise InvalidArgument("queue capacity must be at least 1")


@dataclass
class TrafficReport:
    queries_in_bytes: int = 0
    queue_flush_out_bytes: int = 0
    subtree_stream_in_bytes: int = 0
    subtree_queries_in_bytes: int = 0
    top_tree_in_bytes: int = 0
    dram_bytes_streaming: int = 0
    dram_bytes_random: int = 0
    flush_bursts: list = field(default_factory=list)
    sram_tree: int = 0
    sram_query: int = 0
    sram_result: int = 0
    sram_point: int = 0

    @property
    def dram_bytes_total(self) -> int:
        return self.dram_bytes_streaming + self.dram_bytes_random

    @property
    def sram_neighbor_search(self) -> int:
        return self.sram_tree + self.sram_query + self.sram_result

    def to_json(self) -> dict:
        return {
            "schema": TRAFFIC_SCHEMA,
            "queries_in_bytes": self.queries_in_bytes,
            "queue_flush_out_bytes": self.queue_flush_out_bytes,
            "subtree_stream_in_bytes": self.subtree_stream_in_bytes,
            "subtree_queries_in_bytes": self.subtree_queries_in_bytes,
            "top_tree_in_bytes": self.top_tree_in_bytes,
            "dram_bytes_streaming": self.dram_bytes_streaming,
            "dram_bytes_random": self.dram_bytes_random,
            "flush_bursts": list(self.flush_bursts),
            "sram_accesses": {
                "tree_buffer": self.sram_tree,
                "query_buffer": self.sram_query,
                "result_buffer": self.sram_result,
                "point_buffer": self.sram_point,
            },
        }


def _sram_from_stats(report: TrafficReport, stats: SimStats) -> None:
    report.sram_tree = sum(p.sram_tree for p in (stats.top, stats.subtree, stats.aggregation))
    report.sram_query = sum(p.sram_query for p in (stats.top, stats.subtree, stats.aggregation))
    report.sram_result = sum(p.sram_result for p in (stats.top, stats.subtree, stats.aggregation))
    report.sram_point = sum(p.sram_point for p in (stats.top, stats.subtree, stats.aggregation))


def account_split_tree(split: SplitTree, batch: QueryBatch, stats: SimStats,
                       queue: QueueConfig) -> TrafficReport:
    """Classify a split-tree run's DRAM traffic; everything streams.

    Queue write-backs happen in capacity-sized bursts plus one final
    partial flush per non-empty sub-tree; each such sub-tree and the
    routing-level image stream in exactly once.
    """
    counts = stats.subtree_routed_counts
    if len(counts) != split.subtree_count:
        raise InvalidArgument("stats routed counts do not match the split's sub-trees")
    q = int(sum(counts))
    report = TrafficReport()
    report.queries_in_bytes = q * QUERY_RECORD_BYTES
    report.queue_flush_out_bytes = q * QUERY_RECORD_BYTES
    report.subtree_queries_in_bytes = q * QUERY_RECORD_BYTES
    report.top_tree_in_bytes = int(
        np.count_nonzero(split.tree.node_level <= split.h_t)) * NODE_RECORD_BYTES
    report.subtree_stream_in_bytes = sum(
        int(split.subtree_sizes[s]) * NODE_RECORD_BYTES
        for s in range(split.subtree_count) if counts[s] > 0)
    report.flush_bursts = [math.ceil(c / queue.capacity) for c in counts]
    report.dram_bytes_streaming = (
        report.queries_in_bytes + report.queue_flush_out_bytes
        + report.subtree_queries_in_bytes + report.top_tree_in_bytes
        + report.subtree_stream_in_bytes)
    report.dram_bytes_random = 0
    _sram_from_stats(report, stats)
    return report


def baseline_exhaustive(split: SplitTree, batch: QueryBatch, cfg: SearchConfig,
                        banks: BankConfig, pes: PEConfig,
                        queue: QueueConfig | None = None):
    """Prior-accelerator style scan baseline: identical routing, then every
    routed query distance-tests every point of its sub-tree.

    The scan is a broadcast stream (all PEs read the same node per cycle),
    so it is conflict-free; it simply does more work. Returns
    (NeighborMatrix, SimStats, TrafficReport).
    """
    cfg.validate(split)
    queue = queue or QueueConfig()
    t = split.tree
    pts = t.points
    nq = len(batch)
    k = cfg.k_max
    routed = route_queries(split, batch, cfg)
    r2 = float(cfg.radius) * float(cfg.radius)
    self_exclude = bool(batch.self_query and not cfg.include_self)

    rows = np.empty((nq, k), np.int32)
    valid = np.zeros(nq, np.int32)
    repl = np.zeros(nq, np.int32)
    sub_visits = 0
    sub_cycles = 0
    for s in range(split.subtree_count):
        ids = routed.order[routed.sub_start[s]:routed.sub_start[s + 1]]
        if len(ids) == 0:
            continue
        lo, hi = int(split.subtree_start[s]), int(split.subtree_start[s + 1])
        m = hi - lo
        member_pts = t.node_point[lo:hi].astype(np.int64)
        sub_visits += m * len(ids)
        sub_cycles += m * math.ceil(len(ids) / pes.num_pes)
        block = pts[member_pts].astype(np.float64)
        for q in ids:
            q = int(q)
            diff = block - batch.queries[q].astype(np.float64)
            d2 = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
            cand_i = member_pts[d2 <= r2]
            cand_d = d2[d2 <= r2]
            ns = int(routed.seed_n[q])
            if ns:
                cand_i = np.concatenate([cand_i, routed.seed_idx[q, :ns].astype(np.int64)])
                cand_d = np.concatenate([cand_d, routed.seed_d2[q, :ns]])
            if self_exclude:
                keep = cand_i != q
                cand_i, cand_d = cand_i[keep], cand_d[keep]
            order = np.lexsort((cand_i, cand_d))[:k]
            n = len(order)
            rows[q, :n] = cand_i[order].astype(np.int32)
            valid[q] = n
            repl[q] = k - n
            if n < k:
                if n > 0:
                    donor = rows[q, 0]
                elif batch.self_query:
                    donor = np.int32(q)
                else:
                    donor = t.node_point[lo]
                rows[q, n:] = donor
    top_visits = nq * max(split.h_t - 1, 0)
    stats = SimStats(
        top=PhaseStats(cycles=math.ceil(top_visits / pes.num_pes),
                       node_visits=top_visits, requests=top_visits,
                       sram_tree=top_visits, sram_query=nq),
        subtree=PhaseStats(cycles=sub_cycles, node_visits=sub_visits,
                           requests=sub_visits, sram_tree=sub_visits,
                           sram_query=nq, sram_result=int(np.sum(valid))),
        dram_bytes_streaming=streaming_dram_bytes(split, np.diff(routed.sub_start)),
        dram_bytes_random=0,
        subtree_routed_counts=np.diff(routed.sub_start).tolist(),
    )
    report = account_split_tree(split, batch, stats, queue)
    return NeighborMatrix(rows, valid, repl), stats, report


def baseline_reload(split: SplitTree, batch: QueryBatch, queue: QueueConfig,
                    stats: SimStats | None = None,
                    cfg: SearchConfig | None = None) -> TrafficReport:
    """Reload-per-flush baseline: a sub-tree streams in once per queue flush.

    Routing and queue capacity match the split-tree run so the report
    isolates the reload effect; SRAM fields copy from ``stats`` when given.
    """
    if stats is not None:
        counts = stats.subtree_routed_counts
    else:
        if cfg is None:
            raise InvalidArgument("baseline_reload needs a SimStats or a SearchConfig")
        counts = np.diff(route_queries(split, batch, cfg).sub_start).tolist()
    q = int(sum(counts))
    report = TrafficReport()
    report.queries_in_bytes = q * QUERY_RECORD_BYTES
    report.queue_flush_out_bytes = q * QUERY_RECORD_BYTES
    report.subtree_queries_in_bytes = q * QUERY_RECORD_BYTES
    report.top_tree_in_bytes = int(
        np.count_nonzero(split.tree.node_level <= split.h_t)) * NODE_RECORD_BYTES
    report.flush_bursts = [math.ceil(c / queue.capacity) for c in counts]
    report.subtree_stream_in_bytes = sum(
        int(b) * int(split.subtree_sizes[s]) * NODE_RECORD_BYTES
        for s, b in enumerate(report.flush_bursts))
    report.dram_bytes_streaming = (
        report.queries_in_bytes + report.queue_flush_out_bytes
        + report.subtree_queries_in_bytes + report.top_tree_in_bytes
        + report.subtree_stream_in_bytes)
    report.dram_bytes_random = 0
    if stats is not None:
        _sram_from_stats(report, stats)
    return report


def characterize_random_access(tree: KdTree, cloud: PointCloud, batch: QueryBatch,
                               cfg: SearchConfig, cache_bytes: int = 6144) -> TrafficReport:
    """Monolithic exact-search DRAM characterization.

    Replays the tree search's node-access trace through an LRU cache of
    ``cache_bytes`` (default: one tree-buffer's worth); every miss is a
    random DRAM access. This reproduces the non-streaming access profile a
    split-free accelerator sees.
    """
    cap = max(1, cache_bytes // NODE_RECORD_BYTES)
    lru: OrderedDict[int, None] = OrderedDict()
    misses = 0
    visits_total = 0
    found_total = 0
    r2 = float(cfg.radius) * float(cfg.radius)
    pts = tree.points
    for q in range(len(batch)):
        query = batch.queries[q].astype(np.float64)
        stack = [tree.root]
        while stack:
            nid = stack.pop()
            visits_total += 1
            if nid in lru:
                lru.move_to_end(nid)
            else:
                misses += 1
                lru[nid] = None
                if len(lru) > cap:
                    lru.popitem(last=False)
            d = pts[int(tree.node_point[nid])].astype(np.float64) - query
            if float(d @ d) <= r2:
                found_total += 1
            ax = int(tree.node_axis[nid])
            delta = float(query[ax]) - float(tree.node_split[nid])
            near = tree.node_left[nid] if delta <= 0 else tree.node_right[nid]
            far = tree.node_right[nid] if delta <= 0 else tree.node_left[nid]
            if far >= 0 and delta * delta <= r2:
                stack.append(int(far))
            if near >= 0:
                stack.append(int(near))
    report = TrafficReport()
    report.queries_in_bytes = len(batch) * QUERY_RECORD_BYTES
    report.dram_bytes_random = misses * NODE_RECORD_BYTES
    report.dram_bytes_streaming = report.queries_in_bytes
    report.sram_tree = visits_total
    report.sram_query = len(batch)
    report.sram_result = found_total
    return report


def energy_total(report: TrafficReport, model: EnergyModel) -> int:
    """Total energy of one run in integer micro-units."""
    for name, b in (("streaming", report.dram_bytes_streaming),
                    ("random", report.dram_bytes_random)):
        if b % WORD_BYTES:
            raise InvalidArgument(f"{name} DRAM bytes {b} not word-aligned")
    words_r = report.dram_bytes_random // WORD_BYTES
    words_s = report.dram_bytes_streaming // WORD_BYTES
    sram = report.sram_neighbor_search + report.sram_point
    return (words_r * model.dram_random_mu + words_s * model.dram_stream_mu
            + sram * model.sram_mu)


def energy_report(base: TrafficReport, ours: TrafficReport,
                  model: EnergyModel | None = None) -> dict:
    """Energy totals plus the four-way savings decomposition.

    Components (all in micro-units, negative values reported as-is):
    converting random DRAM to streaming, total DRAM traffic reduction, SRAM
    reduction in neighbor search, and SRAM reduction in aggregation. They
    sum bit-exactly to E(base) - E(ours).
    """
    model = model or EnergyModel()
    e_base = energy_total(base, model)
    e_ours = energy_total(ours, model)
    wr_b = base.dram_bytes_random // WORD_BYTES
    wr_o = ours.dram_bytes_random // WORD_BYTES
    wt_b = base.dram_bytes_total // WORD_BYTES
    wt_o = ours.dram_bytes_total // WORD_BYTES
    conv = (wr_b - wr_o) * (model.dram_random_mu - model.dram_stream_mu)
    dram_red = (wt_b - wt_o) * model.dram_stream_mu
    sram_ns = (base.sram_neighbor_search - ours.sram_neighbor_search) * model.sram_mu
    sram_agg = (base.sram_point - ours.sram_point) * model.sram_mu
    components = {
        "random_to_streaming_conversion": conv,
        "dram_traffic_reduction": dram_red,
        "sram_reduction_neighbor_search": sram_ns,
        "sram_reduction_aggregation": sram_agg,
    }
    total = sum(components.values())
    assert total == e_base - e_ours, "savings decomposition must conserve energy"
    return {
        "schema": SAVINGS_SCHEMA,
        "energy_base_mu": e_base,
        "energy_ours_mu": e_ours,
        "savings_total_mu": total,
        "components_mu": components,
    }


def savings_csv(savings: dict) -> str:
    lines = [f"#schema: {SAVINGS_SCHEMA}", "component,savings_mu"]
    for name in SAVINGS_COMPONENTS:
        lines.append(f"{name},{savings['components_mu'][name]}")
    return "\n".join(lines) + "\n"
