import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import crescent as c
from crescent.geometry import PointCloud, QueryBatch, generate_cloud
from crescent.kdtree import build_kdtree, split_tree
from crescent.memsim import BankConfig, PEConfig, simulate_search
from crescent.split_search import SearchConfig, approximate_search
from crescent.traffic import (EnergyModel, QueueConfig, TrafficReport,
                              account_split_tree, baseline_exhaustive,
                              baseline_reload, characterize_random_access,
                              energy_report, energy_total, savings_csv,
                              NODE_RECORD_BYTES)


def run_once(rng, n=2000, ht=3, r=0.12, k=8, queries=256, capacity=96,
             kind=None, seed=None):
    if kind:
        cloud = generate_cloud(kind, n, seed or 1)
    else:
        cloud = PointCloud(rng.random((n, 3)).astype(np.float32))
    tree = build_kdtree(cloud)
    split = split_tree(tree, ht, 2 ** (tree.height + 1))
    batch = QueryBatch(cloud.points[:queries], self_query=True)
    cfg = SearchConfig(h_t=ht, h_e=tree.height, radius=r, k_max=k)
    _, stats = simulate_search(split, batch, cfg, BankConfig(4, 4), PEConfig(4),
                               elide=False)
    return cloud, tree, split, batch, cfg, stats, QueueConfig(capacity)


def test_energy_model_default_ratios_exact():
    m = EnergyModel()
    assert m.dram_random_mu == 3 * m.dram_stream_mu  # 3:1 random vs streaming
    assert m.dram_random_mu == 25 * m.sram_mu        # 25:1 random vs SRAM
    assert m.e_sram == 1.0 and m.e_dram_random == 25.0


def test_queue_default_capacity_from_buffer_sizing():
    assert QueueConfig().capacity == 96  # 1.5 KB / 16-byte query records


def test_subtree_stream_bytes_definitional(rng):
    # one sub-tree of 1023 nodes streams exactly once: 1023 * 16 bytes
    cloud = PointCloud(rng.random((1023, 3)).astype(np.float32))
    tree = build_kdtree(cloud)
    split = split_tree(tree, 0, 2048)
    batch = QueryBatch(cloud.points[:100], self_query=True)
    cfg = SearchConfig(h_t=0, h_e=tree.height, radius=0.1, k_max=4)
    _, stats = simulate_search(split, batch, cfg, BankConfig(4, 4), PEConfig(4),
                               elide=False)
    rep = account_split_tree(split, batch, stats, QueueConfig(96))
    assert rep.subtree_stream_in_bytes == 1023 * NODE_RECORD_BYTES == 16368
    assert rep.flush_bursts == [2]  # 100 queries at capacity 96: 96 + 4
    assert rep.dram_bytes_random == 0


def test_account_matches_sim_counters(rng):
    cloud, tree, split, batch, cfg, stats, queue = run_once(rng)
    rep = account_split_tree(split, batch, stats, queue)
    assert rep.dram_bytes_streaming == stats.dram_bytes_streaming
    assert rep.dram_bytes_random == 0
    assert rep.sram_tree == stats.top.sram_tree + stats.subtree.sram_tree


def test_reload_equals_split_when_no_overflow(rng):
    cloud, tree, split, batch, cfg, stats, _ = run_once(rng, queries=256,
                                                        capacity=512)
    queue = QueueConfig(512)
    rep = account_split_tree(split, batch, stats, queue)
    rel = baseline_reload(split, batch, queue, stats=stats)
    assert rel.dram_bytes_total == rep.dram_bytes_total


def test_reload_triples_on_triple_overflow(rng):
    # single sub-tree, 3x capacity queries: sub-tree bytes tripled
    cloud = PointCloud(rng.random((511, 3)).astype(np.float32))
    tree = build_kdtree(cloud)
    split = split_tree(tree, 0, 1024)
    batch = QueryBatch(cloud.points[:96], self_query=True)
    cfg = SearchConfig(h_t=0, h_e=tree.height, radius=0.1, k_max=4)
    _, stats = simulate_search(split, batch, cfg, BankConfig(4, 4), PEConfig(4),
                               elide=False)
    queue = QueueConfig(32)
    rep = account_split_tree(split, batch, stats, queue)
    rel = baseline_reload(split, batch, queue, stats=stats)
    assert rel.subtree_stream_in_bytes == 3 * rep.subtree_stream_in_bytes


@settings(max_examples=25, deadline=None)
@given(n=st.integers(64, 1200), ht=st.integers(0, 4), queries=st.integers(8, 256),
       capacity=st.integers(1, 128), seed=st.integers(0, 5))
def test_reload_dominance_property(n, ht, queries, capacity, seed):
    rng = np.random.default_rng(seed)
    cloud = PointCloud(rng.random((n, 3)).astype(np.float32))
    tree = build_kdtree(cloud)
    ht = min(ht, tree.height - 1)
    split = split_tree(tree, ht, 2 ** (tree.height + 1))
    batch = QueryBatch(rng.random((queries, 3)).astype(np.float32))
    cfg = SearchConfig(h_t=ht, h_e=tree.height, radius=0.15, k_max=4)
    _, stats = simulate_search(split, batch, cfg, BankConfig(4, 4), PEConfig(4),
                               elide=False)
    queue = QueueConfig(capacity)
    rep = account_split_tree(split, batch, stats, queue)
    rel = baseline_reload(split, batch, queue, stats=stats)
    assert rel.dram_bytes_total >= rep.dram_bytes_total
    overflow = any(b > 1 for b in rep.flush_bursts)
    assert (rel.dram_bytes_total > rep.dram_bytes_total) == overflow


def test_exhaustive_visit_arithmetic(rng):
    cloud, tree, split, batch, cfg, stats, queue = run_once(rng, n=1500, ht=2,
                                                            queries=128)
    matrix, ex_stats, rep = baseline_exhaustive(split, batch, cfg,
                                                BankConfig(4, 4), PEConfig(4))
    routed = ex_stats.subtree_routed_counts
    expected = sum(int(split.subtree_sizes[s]) * routed[s]
                   for s in range(split.subtree_count))
    assert ex_stats.subtree.node_visits == expected
    assert stats.subtree.node_visits <= expected
    # identical candidate space: identical result matrix
    fm = approximate_search(split, batch, cfg)
    assert np.array_equal(matrix.rows, fm.rows)
    assert np.array_equal(matrix.valid_counts, fm.valid_counts)
    assert ex_stats.subtree.conflicts == 0  # broadcast scan cannot conflict


def test_exhaustive_dominance_with_margin(rng):
    cloud, tree, split, batch, cfg, stats, queue = run_once(
        rng, n=8192, ht=4, r=0.08, k=16, queries=1024)
    _, ex_stats, _ = baseline_exhaustive(split, batch, cfg, BankConfig(4, 4),
                                         PEConfig(4))
    reduction = 1 - stats.subtree.node_visits / ex_stats.subtree.node_visits
    assert reduction >= 0.2


def test_energy_conservation_and_components(rng):
    cloud, tree, split, batch, cfg, stats, queue = run_once(rng)
    ours = account_split_tree(split, batch, stats, queue)
    mono = characterize_random_access(tree, cloud, batch, cfg, cache_bytes=6144)
    sav = energy_report(mono, ours)
    comps = sav["components_mu"]
    assert sum(comps.values()) == sav["savings_total_mu"]
    assert sav["savings_total_mu"] == sav["energy_base_mu"] - sav["energy_ours_mu"]
    assert comps["random_to_streaming_conversion"] > 0
    # identical reports: all four components zero
    zero = energy_report(ours, ours)
    assert all(v == 0 for v in zero["components_mu"].values())


def test_conversion_component_arithmetic():
    a = TrafficReport(dram_bytes_random=4000, dram_bytes_streaming=0)
    b = TrafficReport(dram_bytes_random=0, dram_bytes_streaming=4000)
    sav = energy_report(a, b)
    # bytes/4 words converted at (random - streaming) per-access cost
    assert sav["components_mu"]["random_to_streaming_conversion"] == 1000 * 50
    assert sav["components_mu"]["dram_traffic_reduction"] == 0
    assert sav["savings_total_mu"] == 1000 * 50


def test_negative_components_reported_not_clamped():
    a = TrafficReport(dram_bytes_streaming=400)
    b = TrafficReport(dram_bytes_streaming=800)
    sav = energy_report(a, b)
    assert sav["components_mu"]["dram_traffic_reduction"] < 0
    assert sum(sav["components_mu"].values()) == sav["savings_total_mu"]


def test_energy_total_word_alignment():
    with pytest.raises(c.InvalidArgument):
        energy_total(TrafficReport(dram_bytes_streaming=6), EnergyModel())


def test_characterize_monolithic_random_traffic(rng):
    cloud, tree, split, batch, cfg, stats, queue = run_once(rng, n=6000,
                                                            queries=512)
    rep = characterize_random_access(tree, cloud, batch, cfg, cache_bytes=6144)
    assert rep.dram_bytes_random > 0
    assert rep.dram_bytes_random % NODE_RECORD_BYTES == 0
    # a tree-buffer-sized cache cannot hold a 6000-node working set
    misses = rep.dram_bytes_random // NODE_RECORD_BYTES
    assert misses > rep.sram_tree * 0.2
    # the split-tree run of the same workload is fully streaming
    ours = account_split_tree(split, batch, stats, queue)
    assert ours.dram_bytes_random == 0


def test_savings_csv_schema():
    a = TrafficReport(dram_bytes_random=400)
    b = TrafficReport(dram_bytes_streaming=400)
    lines = savings_csv(energy_report(a, b)).splitlines()
    assert lines[0] == "#schema: crescent.savings.v1"
    assert lines[1] == "component,savings_mu"
    assert len(lines) == 6


def test_traffic_json_shape(rng):
    cloud, tree, split, batch, cfg, stats, queue = run_once(rng)
    d = account_split_tree(split, batch, stats, queue).to_json()
    assert d["schema"] == "crescent.traffic.v1"
    assert set(d["sram_accesses"]) == {"tree_buffer", "query_buffer",
                                       "result_buffer", "point_buffer"}
    assert d["dram_bytes_random"] == 0
