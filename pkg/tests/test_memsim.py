import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import crescent as c
from crescent.exact_search import brute_force_batch
from crescent.geometry import PointCloud, QueryBatch
from crescent.kdtree import build_kdtree, split_tree
from crescent.memsim import (BankConfig, PEConfig, arbitration, bank_of,
                             simulate_search, skipped_fraction)
from crescent.split_search import SearchConfig, approximate_search


def small_setup(rng, n=3000, ht=3, r=0.12, k=8):
    cloud = PointCloud(rng.random((n, 3)).astype(np.float32))
    tree = build_kdtree(cloud)
    split = split_tree(tree, ht, 2 ** (tree.height + 1))
    batch = QueryBatch(cloud.points[:512], self_query=True)
    cfg = SearchConfig(h_t=ht, h_e=tree.height, radius=r, k_max=k)
    return cloud, split, batch, cfg


def test_bank_of_examples():
    assert bank_of(5, BankConfig(num_banks=4)) == 1
    assert bank_of(7, BankConfig(num_banks=4)) == 3
    assert bank_of(8, BankConfig(num_banks=8)) == 0
    with pytest.raises(c.InvalidArgument):
        bank_of(-1, BankConfig())
    with pytest.raises(c.InvalidArgument):
        BankConfig(num_banks=3)


def test_arbitration_examples():
    # two requests to different banks: both granted
    assert arbitration([(0, 10, 5), (1, 11, 5)], h_e=16, elide=False) == \
        ["granted", "granted"]
    # same bank, elide off: lowest PE id wins, the other stalls
    assert arbitration([(2, 10, 5), (2, 11, 5)], h_e=16, elide=False) == \
        ["granted", "stalled"]
    # same bank, elide on, loser one level below h_e: elided
    assert arbitration([(2, 10, 5), (2, 11, 6)], h_e=5, elide=True) == \
        ["granted", "elided"]
    # idle slots stay None
    assert arbitration([None, (1, 3, 2)], h_e=4, elide=True) == [None, "granted"]


@settings(max_examples=80, deadline=None)
@given(st.lists(st.one_of(st.none(),
                          st.tuples(st.integers(0, 7), st.integers(0, 100),
                                    st.integers(1, 14))),
                min_size=1, max_size=8),
       st.integers(1, 14), st.booleans())
def test_arbitration_grant_uniqueness(reqs, h_e, elide):
    outcomes = arbitration(reqs, h_e=h_e, elide=elide)
    grants_per_bank = {}
    for pe, (req, out) in enumerate(zip(reqs, outcomes)):
        if req is None:
            assert out is None
            continue
        assert out in ("granted", "stalled", "elided")
        if out == "granted":
            grants_per_bank.setdefault(req[0], []).append(pe)
        elif out == "elided":
            assert elide and req[2] > h_e
    for bank, pes in grants_per_bank.items():
        assert len(pes) == 1
    # every requested bank has exactly one grant
    for pe, req in enumerate(reqs):
        if req is not None:
            assert req[0] in grants_per_bank


def test_single_pe_no_conflicts(rng):
    cloud, split, batch, cfg = small_setup(rng)
    fm = approximate_search(split, batch, cfg)
    m, st_ = simulate_search(split, batch, cfg, BankConfig(4, 1), PEConfig(1),
                             elide=False)
    assert st_.conflicts_total == 0 and st_.stall_cycles == 0
    assert np.array_equal(m.rows, fm.rows)
    assert np.array_equal(m.valid_counts, fm.valid_counts)


def test_elide_off_equals_functional_many(rng):
    for trial in range(6):
        n = int(rng.integers(200, 4000))
        ht = int(rng.integers(0, 5))
        cloud = PointCloud(rng.random((n, 3)).astype(np.float32))
        tree = build_kdtree(cloud)
        split = split_tree(tree, min(ht, tree.height - 1), 2 ** (tree.height + 1))
        batch = QueryBatch(rng.random((128, 3)).astype(np.float32))
        cfg = SearchConfig(h_t=split.h_t, h_e=tree.height,
                           radius=float(rng.uniform(0.05, 0.3)),
                           k_max=int(rng.integers(1, 17)))
        fm = approximate_search(split, batch, cfg)
        m, _ = simulate_search(split, batch, cfg,
                               BankConfig(4, 4), PEConfig(4), elide=False,
                               seed=trial)
        assert np.array_equal(m.rows, fm.rows)
        assert np.array_equal(m.valid_counts, fm.valid_counts)
        assert np.array_equal(m.replicated, fm.replicated)


def test_elide_at_full_height_is_noop(rng):
    cloud, split, batch, cfg = small_setup(rng)
    m_off, st_off = simulate_search(split, batch, cfg, BankConfig(4, 4),
                                    PEConfig(4), elide=False)
    m_on, st_on = simulate_search(split, batch, cfg, BankConfig(4, 4),
                                  PEConfig(4), elide=True)
    assert st_on.conflicts_elided == 0
    assert np.array_equal(m_on.rows, m_off.rows)
    assert st_on.cycles == st_off.cycles


def test_rows_insensitive_to_seed_without_elision(rng):
    cloud, split, batch, cfg = small_setup(rng)
    m0, _ = simulate_search(split, batch, cfg, BankConfig(4, 4), PEConfig(4),
                            elide=False, seed=0)
    m1, _ = simulate_search(split, batch, cfg, BankConfig(4, 4), PEConfig(4),
                            elide=False, seed=99)
    assert np.array_equal(m0.rows, m1.rows)


def test_run_determinism(rng):
    cloud, split, batch, cfg = small_setup(rng)
    cfg = SearchConfig(h_t=cfg.h_t, h_e=split.height - 2, radius=cfg.radius,
                       k_max=cfg.k_max)
    a = simulate_search(split, batch, cfg, BankConfig(4, 4), PEConfig(4),
                        elide=True, seed=5)
    b = simulate_search(split, batch, cfg, BankConfig(4, 4), PEConfig(4),
                        elide=True, seed=5)
    assert np.array_equal(a[0].rows, b[0].rows)
    assert a[1].to_json() == b[1].to_json()


def test_elision_only_removes_work(rng):
    cloud, split, batch, _ = small_setup(rng, n=4000, ht=3)
    H = split.height
    cfg = SearchConfig(h_t=3, h_e=H - 3, radius=0.12, k_max=8)
    _, off = simulate_search(split, batch, cfg, BankConfig(2, 4), PEConfig(4),
                             elide=False, seed=1)
    m_on, on = simulate_search(split, batch, cfg, BankConfig(2, 4), PEConfig(4),
                               elide=True, seed=1)
    assert np.all(on.visits_per_query <= off.visits_per_query)
    # every real neighbor the elided run returns lies in the candidate
    # space the full run searched: in-radius points of the sub-tree + seeds
    m_full = approximate_search(split, batch, cfg)
    pts = cloud.points.astype(np.float64)
    r2 = cfg.radius * cfg.radius
    t = split.tree
    for q in range(len(batch)):
        qd = batch.queries[q].astype(np.float64)
        full = set(int(x) for x in m_full.rows[q, :int(m_full.valid_counts[q])])
        for j in range(int(m_on.valid_counts[q])):
            p = int(m_on.rows[q, j])
            d = pts[p] - qd
            assert float(d @ d) <= r2
        # without capacity displacement the elided row is a subset
        if int(m_full.valid_counts[q]) < cfg.k_max:
            got = set(int(x) for x in m_on.rows[q, :int(m_on.valid_counts[q])])
            assert got <= full


def test_conflict_monotone_in_banks(rng):
    cloud, split, batch, cfg = small_setup(rng, n=4000)
    rates = []
    for b in (1, 2, 4, 8, 16, 32):
        _, st_ = simulate_search(split, batch, cfg, BankConfig(b, 8), PEConfig(8),
                                 elide=False, seed=0)
        rates.append(st_.conflicts_total)
    assert all(rates[i] >= rates[i + 1] for i in range(len(rates) - 1))


def test_skipped_fraction_zero_at_full_height(rng):
    cloud, split, batch, cfg = small_setup(rng)
    assert skipped_fraction(split, batch, cfg, BankConfig(4, 4), PEConfig(4)) == 0.0


def test_skipped_fraction_monotone_in_he(rng):
    cloud, split, batch, _ = small_setup(rng, n=6000, ht=3)
    H = split.height
    fracs = []
    for he in range(4, H + 1):
        cfg = SearchConfig(h_t=3, h_e=he, radius=0.12, k_max=8)
        fracs.append(skipped_fraction(split, batch, cfg, BankConfig(2, 4),
                                      PEConfig(4), seed=0))
    assert all(fracs[i] >= fracs[i + 1] - 1e-12 for i in range(len(fracs) - 1))
    assert fracs[-1] == 0.0


def test_forced_conflicts_skip_nearly_everything(rng):
    cloud, split, batch, _ = small_setup(rng, n=6000, ht=3)
    cfg = SearchConfig(h_t=3, h_e=1, radius=0.12, k_max=8)
    frac = skipped_fraction(split, batch, cfg, BankConfig(1, 4), PEConfig(4))
    assert frac > 0.9


def test_termination_under_heavy_elision(rng):
    cloud, split, batch, _ = small_setup(rng, n=2000, ht=2)
    cfg = SearchConfig(h_t=2, h_e=1, radius=0.3, k_max=16)
    m, st_ = simulate_search(split, batch, cfg, BankConfig(1, 8), PEConfig(8),
                             elide=True)
    assert st_.cycles > 0
    assert np.all(m.valid_counts + m.replicated == 16)


def test_stats_structure(rng):
    cloud, split, batch, cfg = small_setup(rng)
    _, st_ = simulate_search(split, batch, cfg, BankConfig(4, 4), PEConfig(4),
                             elide=False)
    assert st_.conflicts_elided <= st_.conflicts_total
    assert st_.dram_bytes_random == 0
    assert st_.cycles == st_.top.cycles + st_.subtree.cycles + st_.aggregation.cycles
    assert st_.node_visits == st_.top.node_visits + st_.subtree.node_visits
    assert sum(st_.subtree_routed_counts) == len(batch)
    d = st_.to_json()
    assert d["schema"] == "crescent.stats.v1"
    assert d["dram_bytes_random"] == 0
    assert d["phases"]["top"]["node_visits"] == st_.top.node_visits


def test_trace_output(tmp_path, rng):
    cloud, split, batch, cfg = small_setup(rng, n=500)
    path = tmp_path / "trace.csv"
    _, st_ = simulate_search(split, batch, cfg, BankConfig(2, 4), PEConfig(4),
                             elide=False, trace_path=str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "cycle,pe,stage_event,node,bank,outcome"
    grants = sum(1 for l in lines[1:] if l.endswith(",grant"))
    stalls = sum(1 for l in lines[1:] if l.endswith(",stall"))
    assert grants == st_.node_visits
    assert stalls == st_.conflicts_total
    assert len(lines) - 1 == st_.requests_total


def test_pipeline_config():
    assert PEConfig().stages == ("RS", "FN", "CD", "SR", "US")
    with pytest.raises(c.InvalidArgument):
        PEConfig(num_pes=0)
