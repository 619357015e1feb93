"""Feature-gather simulation over a banked point buffer.

A row's k_max fetches issue left to right in groups of ``concurrency``; all
fetches in a group belong to one query, so conflicting requests are always
asking for neighbors of the same point. Without elision same-bank fetches
serialize and accrue stalls; with elision the losers reuse the granted
fetch's data, which replicates a neighbor in hardware.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidArgument
from .memsim import BankConfig, PhaseStats, SimStats
from .split_search import NeighborMatrix

GATHER_SCHEMA = "crescent.gather.v1"


@dataclass(frozen=True)
class GatherResult:
    effective: np.ndarray    # int32[Q, k], post-elision fetched indices
    substituted: np.ndarray  # uint8[Q, k], 1 where a loser reused granted data
    cycles: int
    conflicts_total: int
    conflicts_elided: int
    stall_cycles: int
    substitutions: int
    point_accesses: int

    def to_csv(self, requested: np.ndarray) -> str:
        buf = io.StringIO()
        buf.write(f"#schema: {GATHER_SCHEMA}\n")
        buf.write("qid,slot,requested_index,effective_index,substituted\n")
        for q in range(self.effective.shape[0]):
            for j in range(self.effective.shape[1]):
                buf.write(f"{q},{j},{int(requested[q, j])},"
                          f"{int(self.effective[q, j])},{int(self.substituted[q, j])}\n")
        return buf.getvalue()


def gather(matrix: NeighborMatrix, banks: BankConfig, elide: bool) -> GatherResult:
    """Fetch every row's neighbors through the banked point buffer."""
    rows = matrix.rows
    if rows.ndim != 2:
        raise InvalidArgument("neighbor matrix rows must be 2-D")
    effective = np.empty_like(rows)
    substituted = np.zeros(rows.shape, np.uint8)
    stats = np.zeros(6, np.int64)
    _kernels.gather_rows(rows, banks.num_banks, banks.concurrency, bool(elide),
                         effective, substituted, stats)
    return GatherResult(
        effective=effective,
        substituted=substituted,
        cycles=int(stats[0]),
        conflicts_total=int(stats[1]),
        conflicts_elided=int(stats[2]),
        stall_cycles=int(stats[3]),
        substitutions=int(stats[4]),
        point_accesses=int(stats[5]),
    )


def gather_distortion(matrix: NeighborMatrix, banks: BankConfig) -> float:
    """Fraction of entries replaced under elision: substitutions / (Q * k)."""
    result = gather(matrix, banks, elide=True)
    total = matrix.rows.shape[0] * matrix.rows.shape[1]
    return result.substitutions / total if total else 0.0


def merge_into_stats(stats: SimStats, result: GatherResult) -> SimStats:
    """Record a gather pass as the aggregation phase of a SimStats."""
    stats.aggregation = PhaseStats(
        cycles=result.cycles,
        node_visits=0,
        requests=result.point_accesses + result.substitutions,
        conflicts=result.conflicts_total,
        conflicts_elided=result.conflicts_elided,
        stall_cycles=result.stall_cycles,
        conflict_cycles=0,
        sram_point=result.point_accesses,
    )
    return stats
