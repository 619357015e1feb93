"""Session bindings for batched approximate neighbor search.

A session wraps one built split tree plus a fixed hardware shape so an
external training loop can run per-batch searches under a sampled
approximation pair h = (h_t, h_e) and replay the simulated bank-conflict
elision in both neighbor search and aggregation. Results are bit-identical
to the core CLI's outputs for the same inputs; the binding adds no
semantics of its own.

The top-tree height is fixed when the session is built. Varying h_t across
batches means opening one session per h_t value; re-splitting inside a
session is rejected because it would rebuild the tree in the training hot
loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from crescent.aggregate import gather
from crescent.geometry import PointCloud, QueryBatch
from crescent.kdtree import SplitTree, build_kdtree, split_tree
from crescent.memsim import BankConfig, PEConfig, simulate_search
from crescent.split_search import NeighborMatrix, SearchConfig

__version__ = "0.1.0"

POINT_BANKS = BankConfig(num_banks=16, concurrency=16)


@dataclass(frozen=True)
class BoundSession:
    """Handle to one built split tree plus its hardware configuration."""

    split: SplitTree
    banks: BankConfig
    pes: PEConfig
    sim_seed: int = 0

    @property
    def h_t(self) -> int:
        return self.split.h_t

    @property
    def height(self) -> int:
        return self.split.height


def _as_point_buffer(buf, what: str) -> np.ndarray:
    arr = np.asarray(buf)
    if arr.dtype != np.float32:
        raise TypeError(f"{what} must be float32, got {arr.dtype}")
    if arr.ndim == 1:
        if arr.size % 3:
            raise ValueError(f"{what} length {arr.size} is not a multiple of 3")
        arr = arr.reshape(-1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{what} must be an (n, 3) float32 array")
    if arr.size == 0:
        raise ValueError(f"{what} is empty")
    return np.ascontiguousarray(arr)


def session_open(cloud_buffer, h_t: int, buffer_words: int,
                 banks: BankConfig | None = None,
                 pes: PEConfig | None = None,
                 sim_seed: int = 0) -> BoundSession:
    """Build the tree and split once; returns an opaque session.

    ``cloud_buffer`` is a contiguous float32 triple array. Capacity
    violations raise the same errors the CLI reports.
    """
    pts = _as_point_buffer(cloud_buffer, "cloud buffer")
    cloud = PointCloud(pts, id="session")
    tree = build_kdtree(cloud)
    split = split_tree(tree, h_t, buffer_words)
    return BoundSession(split=split,
                        banks=banks or BankConfig(),
                        pes=pes or PEConfig(),
                        sim_seed=sim_seed)


def session_search(session: BoundSession, query_buffer, h: tuple[int, int],
                   r: float, k_max: int, elide: bool = False):
    """Batched search under the approximation pair ``h`` = (h_t, h_e).

    Returns (index matrix int32[Q, k_max], stats mapping). The matrix is
    bit-identical to the CLI's neighbors.csv rows for the same inputs.
    """
    h_t, h_e = int(h[0]), int(h[1])
    if h_t != session.h_t:
        raise ValueError(
            f"h_t={h_t} does not match the session's built h_t={session.h_t}; "
            f"re-splitting per batch is rejected, open one session per h_t")
    if not 1 <= h_e <= session.height:
        raise ValueError(f"h_e={h_e} outside the permissible range "
                         f"[1, {session.height}]")
    queries = _as_point_buffer(query_buffer, "query buffer")
    batch = QueryBatch(queries, self_query=False)
    cfg = SearchConfig(h_t=h_t, h_e=h_e, radius=float(r), k_max=int(k_max))
    matrix, stats = simulate_search(session.split, batch, cfg, session.banks,
                                    session.pes, elide=bool(elide),
                                    seed=session.sim_seed)
    return matrix.rows.copy(), stats.counter_map()


def session_gather(session: BoundSession, index_matrix, elide: bool = False):
    """Aggregation gather over the session's banked point buffer.

    Returns (effective index matrix, distortion fraction); equals the core
    gather on the same inputs.
    """
    rows = np.asarray(index_matrix, dtype=np.int32)
    if rows.ndim != 2:
        raise ValueError("index matrix must be 2-D")
    q, k = rows.shape
    m = NeighborMatrix(rows, np.full(q, k, np.int32), np.zeros(q, np.int32))
    res = gather(m, POINT_BANKS, elide=bool(elide))
    distortion = res.substitutions / (q * k) if q * k else 0.0
    return res.effective.copy(), distortion
