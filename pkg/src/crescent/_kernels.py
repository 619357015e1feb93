"""Jitted numeric kernels: tree construction, traversals, the cycle-stepped
bank-conflict simulator, and the aggregation gather loop.

Everything here operates on flat arrays so the same node/point data can be
shared by the functional search path and the timing model. All floating-point
distance math is float64 computed from float32 inputs, identically in every
kernel, so result comparisons across paths are exact.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STACK_CAP = 80  # 2H + slack; H <= 31 for any cloud this artifact handles

# counter indices shared with memsim.SimStats
C_CYCLES = 0
C_VISITS = 1
C_REQUESTS = 2
C_CONFLICTS = 3
C_ELIDED = 4
C_STALLS = 5
C_CONFLICT_CYCLES = 6
C_SRAM_QUERY = 7
C_SRAM_RESULT = 8
N_COUNTERS = 9

OUTCOME_GRANT = 0
OUTCOME_STALL = 1
OUTCOME_ELIDE = 2


# ---------------------------------------------------------------------------
# ordering helpers


@njit(cache=True)
def _mono_key(vals, idx):
    """Encode (f32 value, original index) as one order-preserving uint64."""
    n = vals.shape[0]
    out = np.empty(n, np.uint64)
    raw = vals.view(np.uint32)
    for i in range(n):
        u = np.uint64(raw[i])
        if u & np.uint64(0x80000000):
            u = np.uint64(0xFFFFFFFF) - u
        else:
            u = u | np.uint64(0x80000000)
        out[i] = (u << np.uint64(32)) | np.uint64(idx[i])
    return out


@njit(cache=True)
def _hash_bit(seed, pe, node, cycle):
    """Deterministic issue jitter; int64 arithmetic wraps."""
    h = (
        seed * 6364136223846793005
        + pe * 1442695040888963407
        + node * 2862933555777941757
        + cycle * 3202034522624059733
    )
    h ^= h >> 29
    h *= 7046029254386353087
    h ^= h >> 32
    return (h >> 17) & 1


# ---------------------------------------------------------------------------
# tree construction (median split, axes cycling by depth, BFS node ids)


@njit(cache=True)
def build_tree(pts):
    n = pts.shape[0]
    node_point = np.empty(n, np.int32)
    node_axis = np.empty(n, np.int8)
    node_split = np.empty(n, np.float32)
    node_left = np.full(n, -1, np.int32)
    node_right = np.full(n, -1, np.int32)
    node_level = np.empty(n, np.int32)

    idx = np.arange(n).astype(np.int64)
    # BFS work queue of (lo, hi, level, parent, is_left)
    q_lo = np.empty(n, np.int64)
    q_hi = np.empty(n, np.int64)
    q_lv = np.empty(n, np.int32)
    q_par = np.empty(n, np.int32)
    q_side = np.empty(n, np.int8)
    head = 0
    tail = 0
    q_lo[0], q_hi[0], q_lv[0], q_par[0], q_side[0] = 0, n, 1, -1, 0
    tail = 1
    next_id = 0
    height = 1
    while head < tail:
        lo, hi = q_lo[head], q_hi[head]
        level, parent, side = q_lv[head], q_par[head], q_side[head]
        head += 1
        m = hi - lo
        axis = (level - 1) % 3
        sub = idx[lo:hi]
        keys = _mono_key(pts[:, axis][sub].copy(), sub)
        order = np.argsort(keys)
        for j in range(m):
            keys[j] = np.uint64(sub[order[j]])  # reuse as temp
        for j in range(m):
            idx[lo + j] = np.int64(keys[j])
        rank = lo + (m - 1) // 2
        nid = next_id
        next_id += 1
        pi = idx[rank]
        node_point[nid] = pi
        node_axis[nid] = axis
        node_split[nid] = pts[pi, axis]
        node_level[nid] = level
        if level > height:
            height = level
        if parent >= 0:
            if side == 0:
                node_left[parent] = nid
            else:
                node_right[parent] = nid
        if rank > lo:
            q_lo[tail], q_hi[tail], q_lv[tail] = lo, rank, level + 1
            q_par[tail], q_side[tail] = nid, 0
            tail += 1
        if rank + 1 < hi:
            q_lo[tail], q_hi[tail], q_lv[tail] = rank + 1, hi, level + 1
            q_par[tail], q_side[tail] = nid, 1
            tail += 1
    return node_point, node_axis, node_split, node_left, node_right, node_level, height


@njit(cache=True)
def relabel_regions(node_left, node_right, node_level, roots, n_top):
    """Permute node ids into [top levels 1..ht-1][subtree 0 BFS][subtree 1 BFS]...

    Top-region nodes keep their relative (level) order; each sub-tree is laid
    out breadth-first from its shared root so a streamed sub-tree occupies a
    contiguous id range. Returns (perm old->new, subtree_start offsets,
    subtree_of new-id -> subtree index or -1).
    """
    n = node_left.shape[0]
    perm = np.full(n, -1, np.int32)
    nxt = 0
    for i in range(n):  # build ids are level-ordered, so this is the top prefix
        if node_level[i] < node_level[roots[0]]:
            perm[i] = nxt
            nxt += 1
    if nxt != n_top:
        raise ValueError("top region size mismatch")
    n_sub = roots.shape[0]
    subtree_start = np.empty(n_sub + 1, np.int32)
    queue = np.empty(n, np.int32)
    for s in range(n_sub):
        subtree_start[s] = nxt
        head = 0
        tail = 0
        queue[tail] = roots[s]
        tail += 1
        while head < tail:
            old = queue[head]
            head += 1
            perm[old] = nxt
            nxt += 1
            l = node_left[old]
            r = node_right[old]
            if l >= 0:
                queue[tail] = l
                tail += 1
            if r >= 0:
                queue[tail] = r
                tail += 1
    subtree_start[n_sub] = nxt
    if nxt != n:
        raise ValueError("relabel did not cover all nodes")
    subtree_of = np.full(n, -1, np.int32)
    for s in range(n_sub):
        for j in range(subtree_start[s], subtree_start[s + 1]):
            subtree_of[j] = s
    return perm, subtree_start, subtree_of


# ---------------------------------------------------------------------------
# candidate heap: max-heap on (distance^2, point index)


@njit(cache=True, inline="always")
def _heap_less(d1, i1, d2, i2):
    return d1 < d2 or (d1 == d2 and i1 < i2)


@njit(cache=True)
def _heap_insert(hd, hi, n, k_max, d2, idx):
    """Insert with displacement; returns (new_n, inserted)."""
    if n < k_max:
        j = n
        hd[j] = d2
        hi[j] = idx
        while j > 0:
            p = (j - 1) // 2
            if _heap_less(hd[p], hi[p], hd[j], hi[j]):
                hd[p], hd[j] = hd[j], hd[p]
                hi[p], hi[j] = hi[j], hi[p]
                j = p
            else:
                break
        return n + 1, True
    if not _heap_less(d2, idx, hd[0], hi[0]):
        return n, False
    hd[0] = d2
    hi[0] = idx
    j = 0
    while True:
        l = 2 * j + 1
        r = l + 1
        big = j
        if l < n and _heap_less(hd[big], hi[big], hd[l], hi[l]):
            big = l
        if r < n and _heap_less(hd[big], hi[big], hd[r], hi[r]):
            big = r
        if big == j:
            break
        hd[big], hd[j] = hd[j], hd[big]
        hi[big], hi[j] = hi[j], hi[big]
        j = big
    return n, True


@njit(cache=True)
def _sorted_from_heap(hd, hi, n, out_d, out_i):
    for j in range(n):
        out_d[j] = hd[j]
        out_i[j] = hi[j]
    # insertion sort ascending by (d2, idx); n <= k_max is small
    for j in range(1, n):
        dj = out_d[j]
        ij = out_i[j]
        p = j - 1
        while p >= 0 and _heap_less(dj, ij, out_d[p], out_i[p]):
            out_d[p + 1] = out_d[p]
            out_i[p + 1] = out_i[p]
            p -= 1
        out_d[p + 1] = dj
        out_i[p + 1] = ij


@njit(cache=True, inline="always")
def _dist2(pts, pi, qx, qy, qz):
    dx = np.float64(pts[pi, 0]) - qx
    dy = np.float64(pts[pi, 1]) - qy
    dz = np.float64(pts[pi, 2]) - qz
    return dx * dx + dy * dy + dz * dz


# ---------------------------------------------------------------------------
# exact oracle traversal (best-bin-first radius tightening)


@njit(cache=True)
def kd_query_exact(node_point, node_axis, node_split, node_left, node_right,
                   pts, root, qx, qy, qz, r2, k_max, excl):
    hd = np.empty(k_max, np.float64)
    hi = np.empty(k_max, np.int64)
    n = 0
    stack = np.empty(STACK_CAP, np.int32)
    top = 0
    stack[top] = root
    top += 1
    visits = 0
    while top > 0:
        top -= 1
        nid = stack[top]
        visits += 1
        pi = node_point[nid]
        d2 = _dist2(pts, pi, qx, qy, qz)
        if d2 <= r2 and pi != excl:
            n, _ = _heap_insert(hd, hi, n, k_max, d2, np.int64(pi))
        ax = node_axis[nid]
        if ax == 0:
            delta = qx - np.float64(node_split[nid])
        elif ax == 1:
            delta = qy - np.float64(node_split[nid])
        else:
            delta = qz - np.float64(node_split[nid])
        near = node_left[nid] if delta <= 0.0 else node_right[nid]
        far = node_right[nid] if delta <= 0.0 else node_left[nid]
        prune2 = r2
        if n == k_max and hd[0] < prune2:
            prune2 = hd[0]
        if far >= 0 and delta * delta <= prune2:
            stack[top] = far
            top += 1
        if near >= 0:
            stack[top] = near
            top += 1
    out_d = np.empty(n, np.float64)
    out_i = np.empty(n, np.int64)
    _sorted_from_heap(hd, hi, n, out_d, out_i)
    return out_i, out_d, visits


@njit(cache=True)
def brute_batch(pts, queries, r2, k_max, self_exclude):
    """Enumeration oracle: full distance scan per query, top-k by (d2, idx)."""
    nq = queries.shape[0]
    n = pts.shape[0]
    rows = np.full((nq, k_max), -1, np.int64)
    dists = np.full((nq, k_max), np.inf, np.float64)
    counts = np.zeros(nq, np.int64)
    hd = np.empty(k_max, np.float64)
    hi = np.empty(k_max, np.int64)
    for q in range(nq):
        qx = np.float64(queries[q, 0])
        qy = np.float64(queries[q, 1])
        qz = np.float64(queries[q, 2])
        excl = q if self_exclude else -1
        m = 0
        for p in range(n):
            if p == excl:
                continue
            d2 = _dist2(pts, p, qx, qy, qz)
            if d2 <= r2:
                m, _ = _heap_insert(hd, hi, m, k_max, d2, np.int64(p))
        _sorted_from_heap(hd, hi, m, dists[q, :m], rows[q, :m])
        counts[q] = m
    return rows, dists, counts


# ---------------------------------------------------------------------------
# split search, functional path (static-radius pruning, no tightening)


@njit(cache=True)
def route_top(node_point, node_axis, node_split, node_left, node_right,
              pts, subtree_of, queries, h_t, r2, collect_seeds,
              assigned, seed_idx, seed_d2, seed_n):
    """Descend levels 1..h_t per query; record in-radius path nodes as seeds."""
    nq = queries.shape[0]
    for q in range(nq):
        seed_n[q] = 0
        if h_t <= 1:
            assigned[q] = 0
            continue
        qx = np.float64(queries[q, 0])
        qy = np.float64(queries[q, 1])
        qz = np.float64(queries[q, 2])
        nid = 0  # root id is 0 in every layout
        for _level in range(1, h_t):
            pi = node_point[nid]
            if collect_seeds:
                d2 = _dist2(pts, pi, qx, qy, qz)
                if d2 <= r2:
                    k = seed_n[q]
                    seed_idx[q, k] = pi
                    seed_d2[q, k] = d2
                    seed_n[q] = k + 1
            ax = node_axis[nid]
            if ax == 0:
                go_left = qx <= np.float64(node_split[nid])
            elif ax == 1:
                go_left = qy <= np.float64(node_split[nid])
            else:
                go_left = qz <= np.float64(node_split[nid])
            nid = node_left[nid] if go_left else node_right[nid]
        assigned[q] = subtree_of[nid]


@njit(cache=True)
def subtree_query_static(node_point, node_axis, node_split, node_left, node_right,
                         pts, root, qx, qy, qz, r2, k_max, excl,
                         seed_idx, seed_d2, n_seeds,
                         hd, hi, out_d, out_i):
    """Radius-k search confined to the tree under ``root``.

    Pruning uses the fixed search radius only, so an elided replay of the
    same traversal can only remove visits, never add them.
    """
    n = 0
    for s in range(n_seeds):
        if seed_idx[s] != excl:
            n, _ = _heap_insert(hd, hi, n, k_max, seed_d2[s], np.int64(seed_idx[s]))
    stack = np.empty(STACK_CAP, np.int32)
    top = 0
    stack[top] = root
    top += 1
    visits = 0
    while top > 0:
        top -= 1
        nid = stack[top]
        visits += 1
        pi = node_point[nid]
        d2 = _dist2(pts, pi, qx, qy, qz)
        if d2 <= r2 and pi != excl:
            n, _ = _heap_insert(hd, hi, n, k_max, d2, np.int64(pi))
        ax = node_axis[nid]
        if ax == 0:
            delta = qx - np.float64(node_split[nid])
        elif ax == 1:
            delta = qy - np.float64(node_split[nid])
        else:
            delta = qz - np.float64(node_split[nid])
        near = node_left[nid] if delta <= 0.0 else node_right[nid]
        far = node_right[nid] if delta <= 0.0 else node_left[nid]
        if far >= 0 and delta * delta <= r2:
            stack[top] = far
            top += 1
        if near >= 0:
            stack[top] = near
            top += 1
    _sorted_from_heap(hd, hi, n, out_d, out_i)
    return n, visits


@njit(cache=True)
def functional_batch(node_point, node_axis, node_split, node_left, node_right,
                     pts, subtree_roots, queries, assigned,
                     seed_idx, seed_d2, seed_n,
                     r2, k_max, self_exclude, self_query,
                     rows, valid, repl, visits_q):
    nq = queries.shape[0]
    hd = np.empty(k_max, np.float64)
    hi = np.empty(k_max, np.int64)
    out_d = np.empty(k_max, np.float64)
    out_i = np.empty(k_max, np.int64)
    for q in range(nq):
        qx = np.float64(queries[q, 0])
        qy = np.float64(queries[q, 1])
        qz = np.float64(queries[q, 2])
        excl = q if self_exclude else -1
        root = subtree_roots[assigned[q]]
        n, visits = subtree_query_static(
            node_point, node_axis, node_split, node_left, node_right,
            pts, root, qx, qy, qz, r2, k_max, excl,
            seed_idx[q], seed_d2[q], seed_n[q], hd, hi, out_d, out_i)
        visits_q[q] += visits
        for j in range(n):
            rows[q, j] = np.int32(out_i[j])
        valid[q] = n
        repl[q] = k_max - n
        if n < k_max:
            if n > 0:
                donor = rows[q, 0]
            elif self_query:
                donor = np.int32(q)
            else:
                donor = node_point[root]
            for j in range(n, k_max):
                rows[q, j] = donor


# ---------------------------------------------------------------------------
# cycle-stepped timing model
#
# Each PE runs one query through a five-stage visit pipeline. The FN stage
# issues one tree-buffer read; a granted visit occupies the PE for the
# pipeline depth (plus one deterministic jitter cycle so independent PEs do
# not phase-lock into an artificially conflict-free schedule). A lost
# arbitration round costs one stall cycle and retries; under elision a lost
# round at a node deeper than h_e abandons that stack entry instead.


@njit(cache=True)
def sim_top_phase(node_point, node_axis, node_split, node_left, node_right,
                  node_level, pts, subtree_of, queries,
                  h_t, h_e, r2, collect_seeds, num_banks, num_pes,
                  elide, seed, interval, cycle0,
                  assigned, completion, seed_idx, seed_d2, seed_n,
                  visits_q, counters,
                  trace, trace_cap, trace_n):
    nq = queries.shape[0]
    pe_q = np.full(num_pes, -1, np.int32)
    pe_node = np.zeros(num_pes, np.int32)
    pe_issue = np.zeros(num_pes, np.int64)
    bank_taken = np.empty(num_banks, np.int32)
    next_q = 0
    done = 0
    n_completed = 0
    cycle = cycle0
    while done < nq:
        # dispatch idle PEs in routed (input) order
        for p in range(num_pes):
            if pe_q[p] < 0 and next_q < nq:
                pe_q[p] = next_q
                pe_node[p] = 0
                pe_issue[p] = cycle
                seed_n[next_q] = 0
                counters[C_SRAM_QUERY] += 1
                next_q += 1
        for b in range(num_banks):
            bank_taken[b] = -1
        # arbitration: lowest PE index wins each bank
        for p in range(num_pes):
            if pe_q[p] >= 0 and pe_issue[p] <= cycle:
                b = pe_node[p] % num_banks
                if bank_taken[b] < 0:
                    bank_taken[b] = p
        had_conflict = False
        for p in range(num_pes):
            if pe_q[p] < 0 or pe_issue[p] > cycle:
                continue
            q = pe_q[p]
            nid = pe_node[p]
            b = nid % num_banks
            counters[C_REQUESTS] += 1
            if bank_taken[b] == p:
                outcome = OUTCOME_GRANT
                counters[C_VISITS] += 1
                visits_q[q] += 1
                qx = np.float64(queries[q, 0])
                qy = np.float64(queries[q, 1])
                qz = np.float64(queries[q, 2])
                pi = node_point[nid]
                if collect_seeds:
                    d2 = _dist2(pts, pi, qx, qy, qz)
                    if d2 <= r2:
                        k = seed_n[q]
                        seed_idx[q, k] = pi
                        seed_d2[q, k] = d2
                        seed_n[q] = k + 1
                ax = node_axis[nid]
                if ax == 0:
                    go_left = qx <= np.float64(node_split[nid])
                elif ax == 1:
                    go_left = qy <= np.float64(node_split[nid])
                else:
                    go_left = qz <= np.float64(node_split[nid])
                child = node_left[nid] if go_left else node_right[nid]
                if node_level[child] >= h_t:
                    assigned[q] = subtree_of[child]
                    completion[n_completed] = q
                    n_completed += 1
                    pe_q[p] = -1
                    done += 1
                else:
                    pe_node[p] = child
                    pe_issue[p] = cycle + interval + _hash_bit(seed, p, nid, cycle)
            else:
                had_conflict = True
                counters[C_CONFLICTS] += 1
                if elide and node_level[nid] > h_e:
                    outcome = OUTCOME_ELIDE
                    counters[C_ELIDED] += 1
                    # routing access lost: fall to the leftmost sub-tree
                    # beneath the lost node, keeping seeds found so far
                    walk = nid
                    while node_level[walk] < h_t:
                        nxt = node_left[walk]
                        if nxt < 0:
                            nxt = node_right[walk]
                        walk = nxt
                    assigned[q] = subtree_of[walk]
                    completion[n_completed] = q
                    n_completed += 1
                    pe_q[p] = -1
                    done += 1
                else:
                    outcome = OUTCOME_STALL
                    counters[C_STALLS] += 1
                    pe_issue[p] = cycle + 1
            if trace_cap > 0 and trace_n[0] < trace_cap:
                t = trace_n[0]
                trace[t, 0] = cycle
                trace[t, 1] = p
                trace[t, 2] = 0
                trace[t, 3] = nid
                trace[t, 4] = b
                trace[t, 5] = outcome
                trace_n[0] = t + 1
        if had_conflict:
            counters[C_CONFLICT_CYCLES] += 1
        cycle += 1
        counters[C_CYCLES] += 1
    return cycle


@njit(cache=True)
def sim_subtree_phase(node_point, node_axis, node_split, node_left, node_right,
                      node_level, pts, subtree_roots, queries,
                      order, sub_start, assigned,
                      h_e, r2, k_max, self_exclude, self_query,
                      num_banks, num_pes, elide, seed, interval, cycle0,
                      seed_idx, seed_d2, seed_n,
                      rows, valid, repl, visits_q, counters,
                      trace, trace_cap, trace_n):
    n_sub = subtree_roots.shape[0]
    stack = np.empty((num_pes, STACK_CAP), np.int32)
    stack_n = np.zeros(num_pes, np.int32)
    hd = np.empty((num_pes, k_max), np.float64)
    hi = np.empty((num_pes, k_max), np.int64)
    heap_n = np.zeros(num_pes, np.int32)
    pe_q = np.full(num_pes, -1, np.int32)
    pe_issue = np.zeros(num_pes, np.int64)
    bank_taken = np.empty(num_banks, np.int32)
    out_d = np.empty(k_max, np.float64)
    out_i = np.empty(k_max, np.int64)
    cycle = cycle0
    for s in range(n_sub):
        head = sub_start[s]
        end = sub_start[s + 1]
        if head == end:
            continue
        root = subtree_roots[s]
        active = 0
        while head < end or active > 0:
            for p in range(num_pes):
                if pe_q[p] < 0 and head < end:
                    q = order[head]
                    head += 1
                    pe_q[p] = q
                    stack[p, 0] = root
                    stack_n[p] = 1
                    hn = 0
                    excl = q if self_exclude else -1
                    for j in range(seed_n[q]):
                        if seed_idx[q, j] != excl:
                            hn, ins = _heap_insert(hd[p], hi[p], hn, k_max,
                                                   seed_d2[q, j],
                                                   np.int64(seed_idx[q, j]))
                    heap_n[p] = hn
                    pe_issue[p] = cycle
                    counters[C_SRAM_QUERY] += 1
                    active += 1
            for b in range(num_banks):
                bank_taken[b] = -1
            for p in range(num_pes):
                if pe_q[p] >= 0 and stack_n[p] > 0 and pe_issue[p] <= cycle:
                    b = stack[p, stack_n[p] - 1] % num_banks
                    if bank_taken[b] < 0:
                        bank_taken[b] = p
            had_conflict = False
            for p in range(num_pes):
                if pe_q[p] < 0 or stack_n[p] == 0 or pe_issue[p] > cycle:
                    continue
                q = pe_q[p]
                nid = stack[p, stack_n[p] - 1]
                b = nid % num_banks
                counters[C_REQUESTS] += 1
                if bank_taken[b] == p:
                    outcome = OUTCOME_GRANT
                    stack_n[p] -= 1
                    counters[C_VISITS] += 1
                    visits_q[q] += 1
                    qx = np.float64(queries[q, 0])
                    qy = np.float64(queries[q, 1])
                    qz = np.float64(queries[q, 2])
                    pi = node_point[nid]
                    d2 = _dist2(pts, pi, qx, qy, qz)
                    excl = q if self_exclude else -1
                    if d2 <= r2 and pi != excl:
                        hn, ins = _heap_insert(hd[p], hi[p], heap_n[p], k_max,
                                               d2, np.int64(pi))
                        heap_n[p] = hn
                        if ins:
                            counters[C_SRAM_RESULT] += 1
                    ax = node_axis[nid]
                    if ax == 0:
                        delta = qx - np.float64(node_split[nid])
                    elif ax == 1:
                        delta = qy - np.float64(node_split[nid])
                    else:
                        delta = qz - np.float64(node_split[nid])
                    near = node_left[nid] if delta <= 0.0 else node_right[nid]
                    far = node_right[nid] if delta <= 0.0 else node_left[nid]
                    if far >= 0 and delta * delta <= r2:
                        stack[p, stack_n[p]] = far
                        stack_n[p] += 1
                    if near >= 0:
                        stack[p, stack_n[p]] = near
                        stack_n[p] += 1
                    pe_issue[p] = cycle + interval + _hash_bit(seed, p, nid, cycle)
                else:
                    had_conflict = True
                    counters[C_CONFLICTS] += 1
                    if elide and node_level[nid] > h_e:
                        outcome = OUTCOME_ELIDE
                        counters[C_ELIDED] += 1
                        stack_n[p] -= 1  # abandon the lost branch
                    else:
                        outcome = OUTCOME_STALL
                        counters[C_STALLS] += 1
                    pe_issue[p] = cycle + 1
                if trace_cap > 0 and trace_n[0] < trace_cap:
                    t = trace_n[0]
                    trace[t, 0] = cycle
                    trace[t, 1] = p
                    trace[t, 2] = 1
                    trace[t, 3] = nid
                    trace[t, 4] = b
                    trace[t, 5] = outcome
                    trace_n[0] = t + 1
                if stack_n[p] == 0:
                    # query finished: sort candidates and fill the row
                    n = heap_n[p]
                    _sorted_from_heap(hd[p], hi[p], n, out_d, out_i)
                    for j in range(n):
                        rows[q, j] = np.int32(out_i[j])
                    valid[q] = n
                    repl[q] = k_max - n
                    if n < k_max:
                        if n > 0:
                            donor = rows[q, 0]
                        elif self_query:
                            donor = np.int32(q)
                        else:
                            donor = node_point[root]
                        for j in range(n, k_max):
                            rows[q, j] = donor
                    heap_n[p] = 0
                    pe_q[p] = -1
                    active -= 1
            if had_conflict:
                counters[C_CONFLICT_CYCLES] += 1
            cycle += 1
            counters[C_CYCLES] += 1
    return cycle


# ---------------------------------------------------------------------------
# aggregation gather


@njit(cache=True)
def gather_rows(rows, num_banks, concurrency, elide,
                effective, substituted, stats):
    """Fetch each row's neighbors through a banked point buffer.

    stats: [cycles, conflicts, elided, stalls, substitutions, accesses]
    """
    nq = rows.shape[0]
    k = rows.shape[1]
    winner = np.empty(num_banks, np.int32)
    for q in range(nq):
        g0 = 0
        while g0 < k:
            g1 = min(g0 + concurrency, k)
            for b in range(num_banks):
                winner[b] = -1
            distinct = 0
            maxcnt = 1
            for j in range(g0, g1):
                b = rows[q, j] % num_banks
                if winner[b] < 0:
                    winner[b] = j
                    distinct += 1
            # per-bank multiplicities decide serialization depth
            for b in range(num_banks):
                if winner[b] >= 0:
                    cnt = 0
                    for j in range(g0, g1):
                        if rows[q, j] % num_banks == b:
                            cnt += 1
                    if cnt > maxcnt:
                        maxcnt = cnt
            gsize = g1 - g0
            lost = gsize - distinct
            stats[1] += lost
            if elide:
                stats[0] += 1
                stats[2] += lost
                stats[4] += lost
                stats[5] += distinct
                for j in range(g0, g1):
                    b = rows[q, j] % num_banks
                    if winner[b] == j:
                        effective[q, j] = rows[q, j]
                    else:
                        effective[q, j] = rows[q, winner[b]]
                        substituted[q, j] = 1
            else:
                stats[0] += maxcnt
                stats[3] += maxcnt - 1
                stats[5] += gsize
                for j in range(g0, g1):
                    effective[q, j] = rows[q, j]
            g0 = g1
