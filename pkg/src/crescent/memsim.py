"""Cycle-stepped timing model of the banked tree buffer and the PE array.

Each PE owns one in-flight query and walks it through a five-stage visit
pipeline (RS, FN, CD, SR, US). Only the FN stage touches the shared banked
tree buffer; per cycle each bank grants one requester (lowest PE index) and
the losers either stall and retry or, under elision, abandon the lost stack
entry when its node lies below the elision height h_e. Results are identical
to the functional search whenever elision is off; only timing differs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import _kernels
from .errors import InvalidArgument
from .geometry import QueryBatch
from .kdtree import SplitTree
from .split_search import NeighborMatrix, SearchConfig, group_by_subtree

PIPELINE_STAGES = ("RS", "FN", "CD", "SR", "US")
# One PE sustains one FN every ISSUE_INTERVAL cycles: the five-stage visit
# pipeline overlaps the next visit's RS/FN with the current CD/SR/US, but the
# stack loop dependency keeps successive fetches from issuing back to back.
ISSUE_INTERVAL = 3
ALLOWED_BANKS = (1, 2, 4, 8, 16, 32)
TRACE_OUTCOMES = ("grant", "stall", "elide")
TRACE_PHASES = ("top", "subtree")
STATS_SCHEMA = "crescent.stats.v1"


@dataclass(frozen=True)
class BankConfig:
    """Banked SRAM shape; low-order address bits select the bank."""

    num_banks: int = 4
    concurrency: int = 4
    word_bytes: int = 4

    def __post_init__(self):
        if self.num_banks not in ALLOWED_BANKS:
            raise InvalidArgument(
                f"num_banks must be one of {ALLOWED_BANKS}, got {self.num_banks}")
        if self.concurrency < 1:
            raise InvalidArgument("concurrency must be at least 1")


@dataclass(frozen=True)
class PEConfig:
    num_pes: int = 4
    stages: tuple = PIPELINE_STAGES

    def __post_init__(self):
        if self.num_pes < 1:
            raise InvalidArgument("num_pes must be at least 1")


def bank_of(node_id: int, cfg: BankConfig) -> int:
    """Bank selected by the low-order bits of the node address."""
    if node_id < 0:
        raise InvalidArgument(f"invalid node id {node_id}")
    return int(node_id) % cfg.num_banks


def arbitration(requests, h_e: int, elide: bool) -> list[str | None]:
    """Resolve one cycle of tree-buffer requests.

    ``requests`` maps PE index -> (bank, node, level) with None for idle
    PEs. Per bank exactly one request is granted (lowest PE index); the
    rest stall, except that under elision a loser whose node level exceeds
    h_e is elided. Pure function of its inputs.
    """
    outcomes: list[str | None] = [None] * len(requests)
    taken: dict[int, int] = {}
    for pe, req in enumerate(requests):
        if req is None:
            continue
        bank = req[0]
        if bank not in taken:
            taken[bank] = pe
    for pe, req in enumerate(requests):
        if req is None:
            continue
        bank, _node, level = req
        if taken[bank] == pe:
            outcomes[pe] = "granted"
        elif elide and level > h_e:
            outcomes[pe] = "elided"
        else:
            outcomes[pe] = "stalled"
    return outcomes


@dataclass
class PhaseStats:
    cycles: int = 0
    node_visits: int = 0
    requests: int = 0
    conflicts: int = 0
    conflicts_elided: int = 0
    stall_cycles: int = 0
    conflict_cycles: int = 0
    sram_tree: int = 0
    sram_query: int = 0
    sram_result: int = 0
    sram_point: int = 0

    @staticmethod
    def from_counters(c: np.ndarray) -> "PhaseStats":
        return PhaseStats(
            cycles=int(c[_kernels.C_CYCLES]),
            node_visits=int(c[_kernels.C_VISITS]),
            requests=int(c[_kernels.C_REQUESTS]),
            conflicts=int(c[_kernels.C_CONFLICTS]),
            conflicts_elided=int(c[_kernels.C_ELIDED]),
            stall_cycles=int(c[_kernels.C_STALLS]),
            conflict_cycles=int(c[_kernels.C_CONFLICT_CYCLES]),
            sram_tree=int(c[_kernels.C_VISITS]),
            sram_query=int(c[_kernels.C_SRAM_QUERY]),
            sram_result=int(c[_kernels.C_SRAM_RESULT]),
        )


@dataclass
class SimStats:
    """Counters from one simulated run; totals sum the per-phase breakdowns."""

    top: PhaseStats = field(default_factory=PhaseStats)
    subtree: PhaseStats = field(default_factory=PhaseStats)
    aggregation: PhaseStats = field(default_factory=PhaseStats)
    dram_bytes_streaming: int = 0
    dram_bytes_random: int = 0
    subtree_routed_counts: list = field(default_factory=list)
    visits_per_query: np.ndarray | None = None

    def _phases(self):
        return (self.top, self.subtree, self.aggregation)

    @property
    def cycles(self) -> int:
        return sum(p.cycles for p in self._phases())

    @property
    def node_visits(self) -> int:
        return sum(p.node_visits for p in self._phases())

    @property
    def requests_total(self) -> int:
        return sum(p.requests for p in self._phases())

    @property
    def conflicts_total(self) -> int:
        return sum(p.conflicts for p in self._phases())

    @property
    def conflicts_elided(self) -> int:
        return sum(p.conflicts_elided for p in self._phases())

    @property
    def elided_accesses(self) -> int:
        return self.conflicts_elided

    @property
    def stall_cycles(self) -> int:
        return sum(p.stall_cycles for p in self._phases())

    @property
    def skipped_nodes(self) -> int:
        """Cheap proxy: elided accesses. The counterfactual measure is
        skipped_fraction()."""
        return self.conflicts_elided

    @property
    def sram_accesses(self) -> int:
        return sum(p.sram_tree + p.sram_query + p.sram_result + p.sram_point
                   for p in self._phases())

    @property
    def conflict_rate_requests(self) -> float:
        return self.conflicts_total / self.requests_total if self.requests_total else 0.0

    @property
    def conflict_rate_cycles(self) -> float:
        cyc = self.cycles
        return sum(p.conflict_cycles for p in self._phases()) / cyc if cyc else 0.0

    def to_json(self) -> dict:
        d = {
            "schema": STATS_SCHEMA,
            "cycles": self.cycles,
            "node_visits": self.node_visits,
            "requests_total": self.requests_total,
            "conflicts_total": self.conflicts_total,
            "conflicts_elided": self.conflicts_elided,
            "elided_accesses": self.elided_accesses,
            "stall_cycles": self.stall_cycles,
            "skipped_nodes": self.skipped_nodes,
            "sram_accesses": self.sram_accesses,
            "conflict_rate_requests": self.conflict_rate_requests,
            "conflict_rate_cycles": self.conflict_rate_cycles,
            "dram_bytes_streaming": self.dram_bytes_streaming,
            "dram_bytes_random": self.dram_bytes_random,
            "subtree_routed_counts": [int(x) for x in self.subtree_routed_counts],
            "phases": {
                "top": asdict(self.top),
                "subtree": asdict(self.subtree),
                "aggregation": asdict(self.aggregation),
            },
        }
        return d

    def counter_map(self) -> dict:
        """Flat name -> integer mapping (binding-facing view)."""
        out = {}
        for name, phase in (("top", self.top), ("subtree", self.subtree),
                            ("aggregation", self.aggregation)):
            for k, v in asdict(phase).items():
                out[f"{name}.{k}"] = int(v)
        for k in ("cycles", "node_visits", "requests_total", "conflicts_total",
                  "conflicts_elided", "elided_accesses", "stall_cycles",
                  "skipped_nodes", "sram_accesses",
                  "dram_bytes_streaming", "dram_bytes_random"):
            out[k] = int(getattr(self, k))
        return out


def streaming_dram_bytes(split: SplitTree, routed_counts, node_bytes: int = 16,
                         query_bytes: int = 16) -> int:
    """Total streamed DRAM traffic of one split-tree run.

    Queries are read once per phase and written back once through the
    queues; the routing-level image and each sub-tree that received at
    least one query stream in exactly once.
    """
    q = int(np.sum(routed_counts))
    top_nodes = int(np.count_nonzero(split.tree.node_level <= split.h_t))
    sub_nodes = int(sum(int(split.subtree_sizes[s])
                        for s in range(split.subtree_count) if routed_counts[s] > 0))
    return (2 * q + q) * query_bytes + (top_nodes + sub_nodes) * node_bytes


def simulate_search(split: SplitTree, batch: QueryBatch, cfg: SearchConfig,
                    banks: BankConfig, pes: PEConfig, elide: bool,
                    seed: int = 0, trace_path: str | None = None,
                    trace_cap: int = 4_000_000,
                    issue_interval: int | None = None):
    """Run the cycle model; returns (NeighborMatrix, SimStats).

    With ``elide`` off the matrix equals approximate_search's output
    exactly. ``seed`` feeds the deterministic issue jitter, so re-runs with
    identical arguments are bit-identical. ``issue_interval`` is the
    visit-to-visit FN spacing of one PE (default: the pipeline depth).
    """
    cfg.validate(split)
    t = split.tree
    nq = len(batch)
    interval = ISSUE_INTERVAL if issue_interval is None else int(issue_interval)
    k = cfg.k_max
    r2 = float(cfg.radius) * float(cfg.radius)
    self_exclude = bool(batch.self_query and not cfg.include_self)

    max_seeds = max(split.h_t, 1)
    assigned = np.zeros(nq, np.int32)
    completion = np.arange(nq, dtype=np.int32)
    seed_idx = np.zeros((nq, max_seeds), np.int32)
    seed_d2 = np.zeros((nq, max_seeds), np.float64)
    seed_n = np.zeros(nq, np.int32)
    visits_q = np.zeros(nq, np.int64)
    rows = np.empty((nq, k), np.int32)
    valid = np.zeros(nq, np.int32)
    repl = np.zeros(nq, np.int32)

    tracing = trace_path is not None
    cap = trace_cap if tracing else 0
    trace = np.zeros((cap if tracing else 1, 6), np.int64)
    trace_n = np.zeros(1, np.int64)

    top_c = np.zeros(_kernels.N_COUNTERS, np.int64)
    sub_c = np.zeros(_kernels.N_COUNTERS, np.int64)

    cycle = 0
    if split.h_t >= 2:
        completion = np.zeros(nq, np.int32)
        cycle = _kernels.sim_top_phase(
            t.node_point, t.node_axis, t.node_split, t.node_left, t.node_right,
            t.node_level, t.points, split.subtree_of, batch.queries,
            split.h_t, cfg.h_e, r2, cfg.seed_top_hits,
            banks.num_banks, pes.num_pes, elide, seed, interval, 0,
            assigned, completion, seed_idx, seed_d2, seed_n,
            visits_q, top_c, trace, cap, trace_n)

    order, sub_start = group_by_subtree(assigned, completion, split.subtree_count)
    _kernels.sim_subtree_phase(
        t.node_point, t.node_axis, t.node_split, t.node_left, t.node_right,
        t.node_level, t.points, split.subtree_roots, batch.queries,
        order, sub_start, assigned,
        cfg.h_e, r2, k, self_exclude, batch.self_query,
        banks.num_banks, pes.num_pes, elide, seed, interval, cycle,
        seed_idx, seed_d2, seed_n,
        rows, valid, repl, visits_q, sub_c, trace, cap, trace_n)

    routed_counts = np.diff(sub_start).tolist()
    stats = SimStats(
        top=PhaseStats.from_counters(top_c),
        subtree=PhaseStats.from_counters(sub_c),
        dram_bytes_streaming=streaming_dram_bytes(split, routed_counts),
        dram_bytes_random=0,
        subtree_routed_counts=routed_counts,
        visits_per_query=visits_q,
    )
    if tracing:
        if int(trace_n[0]) >= cap:
            raise InvalidArgument(
                f"trace buffer overflow at {cap} events; raise trace_cap")
        _write_trace(trace_path, trace, int(trace_n[0]))
    return NeighborMatrix(rows, valid, repl), stats


def _write_trace(path: str, trace: np.ndarray, n: int) -> None:
    with open(path, "w") as f:
        f.write("cycle,pe,stage_event,node,bank,outcome\n")
        for i in range(n):
            cyc, pe, phase, node, bank, out = trace[i]
            f.write(f"{cyc},{pe},fn.{TRACE_PHASES[phase]},{node},{bank},"
                    f"{TRACE_OUTCOMES[out]}\n")


def skipped_fraction(split: SplitTree, batch: QueryBatch, cfg: SearchConfig,
                     banks: BankConfig, pes: PEConfig, seed: int = 0) -> float:
    """Counterfactual skipped-node measure.

    Replays the identical workload with elision off and on and returns the
    per-query mean of 1 - visits_on / visits_off.
    """
    _, off = simulate_search(split, batch, cfg, banks, pes, elide=False, seed=seed)
    _, on = simulate_search(split, batch, cfg, banks, pes, elide=True, seed=seed)
    v_off = off.visits_per_query.astype(np.float64)
    v_on = on.visits_per_query.astype(np.float64)
    if np.any(v_off == 0):
        raise InvalidArgument("a query recorded zero visits; cannot form the ratio")
    return float(np.mean(1.0 - v_on / v_off))
