"""Experiment orchestration: build/search/sweep/compare runs and report files.

Every run is deterministic for a fixed config, so re-running a sweep with
the same inputs produces byte-identical output files. Volatile data (wall
time) lives only on the in-memory RunRecord, never in the files.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

from . import aggregate, traffic
from .errors import CrescentError, InvalidArgument
from .geometry import PointCloud, QueryBatch, generate_cloud, load_cloud, save_cloud
from .kdtree import SplitTree, build_kdtree, split_from_json, split_to_json, split_tree
from .memsim import BankConfig, PEConfig, SimStats, simulate_search
from .split_search import NeighborMatrix, SearchConfig, recall_from_arrays
from .exact_search import brute_force_batch
from .traffic import EnergyModel, QueueConfig, TrafficReport

CONFIG_VERSION = 1
SWEEP_SCHEMA = "crescent.sweep.v1"
SWEEP_HEADER = ("scheme,ht,he,elide,recall,cycles,visits,conflicts,conflicts_elided,"
                "stall_cycles,dram_bytes_streaming,dram_bytes_random,sram_accesses,"
                "energy_mu")

DEFAULT_RADIUS = 0.05   # ~32 exact neighbors on the default 65,536-point cube
DEFAULT_K = 32


@dataclass
class ExperimentConfig:
    """One experiment: dataset, knob ranges, hardware shape, seeds, output."""

    cloud_kind: str = "uniform-cube"
    cloud_n: int = 65536
    cloud_path: str | None = None
    queries: int = 4096
    ht_list: list = field(default_factory=lambda: [0, 2, 4, 6])
    he_list: list = field(default_factory=lambda: [0])  # 0 means h_e = H
    radius: float = DEFAULT_RADIUS
    k_max: int = DEFAULT_K
    buffer_words: int = 262144
    banks: int = 4
    pes: int = 4
    queue_capacity: int = 96
    elide: bool = True
    seed: int = 1
    sim_seed: int = 0
    energy: dict = field(default_factory=dict)  # micro-unit overrides
    jobs: int = 1
    out_dir: str = "runs"

    @staticmethod
    def from_json(path: str) -> "ExperimentConfig":
        with open(path) as f:
            raw = json.load(f)
        version = raw.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise InvalidArgument(f"config version {version} unsupported")
        cfg = ExperimentConfig()
        for k, v in raw.items():
            if not hasattr(cfg, k):
                raise InvalidArgument(f"unknown config key {k!r}")
            setattr(cfg, k, v)
        return cfg

    def to_json(self) -> dict:
        d = asdict(self)
        d["version"] = CONFIG_VERSION
        return d

    def energy_model(self) -> EnergyModel:
        return EnergyModel(**self.energy) if self.energy else EnergyModel()


@dataclass
class RunRecord:
    config: dict
    stats: SimStats
    report: TrafficReport
    matrix: NeighborMatrix
    recall: float | None
    energy_mu: int
    wall_time_s: float


def make_dataset(cfg: ExperimentConfig) -> tuple[PointCloud, QueryBatch]:
    if cfg.cloud_path:
        cloud = load_cloud(cfg.cloud_path)
    else:
        cloud = generate_cloud(cfg.cloud_kind, cfg.cloud_n, cfg.seed)
    if cfg.queries >= len(cloud):
        batch = QueryBatch.from_cloud(cloud)
    else:
        # deterministic self-query subset: the first q points still index
        # the cloud, so self-query semantics hold
        batch = QueryBatch(cloud.points[:cfg.queries], self_query=True)
    return cloud, batch


def effective_he(he: int, height: int) -> int:
    """he <= 0 selects h_e = H (elision disabled by height)."""
    return height if he <= 0 else he


def validate_grid(cfg: ExperimentConfig, split: SplitTree) -> None:
    H = split.height
    for he in cfg.he_list:
        he = effective_he(he, H)
        if not 1 <= he <= H:
            raise InvalidArgument(f"h_e={he} outside [1, {H}]")


def run_search(split: SplitTree, batch: QueryBatch, scfg: SearchConfig,
               banks: BankConfig, pes: PEConfig, queue: QueueConfig,
               model: EnergyModel, elide: bool, sim_seed: int) -> RunRecord:
    """One full simulated run: search, gather, traffic, energy."""
    t0 = time.perf_counter()
    matrix, stats = simulate_search(split, batch, scfg, banks, pes,
                                    elide=elide, seed=sim_seed)
    point_banks = BankConfig(num_banks=16, concurrency=16)
    g = aggregate.gather(matrix, point_banks, elide=elide)
    aggregate.merge_into_stats(stats, g)
    report = traffic.account_split_tree(split, batch, stats, queue)
    energy = traffic.energy_total(report, model)
    wall = time.perf_counter() - t0
    return RunRecord(config={}, stats=stats, report=report, matrix=matrix,
                     recall=None, energy_mu=energy, wall_time_s=wall)


def _sweep_row(scheme: str, ht, he, elide, rec, stats: SimStats | None,
               report: TrafficReport, energy: int) -> str:
    if stats is None:
        cyc = vis = con = eli = stl = sra = ""
    else:
        cyc, vis = stats.cycles, stats.node_visits
        con, eli = stats.conflicts_total, stats.conflicts_elided
        stl, sra = stats.stall_cycles, stats.sram_accesses
    rec_txt = "" if rec is None else f"{rec:.6f}"
    return (f"{scheme},{ht},{he},{int(elide)},{rec_txt},{cyc},{vis},{con},{eli},"
            f"{stl},{report.dram_bytes_streaming},{report.dram_bytes_random},"
            f"{report.sram_neighbor_search + report.sram_point},{energy}")


def _sweep_cell(args):
    (cloud, batch, ht, he, cfg_dict) = args
    cfg = ExperimentConfig(**cfg_dict)
    tree = build_kdtree(cloud)
    split = split_tree(tree, ht, cfg.buffer_words)
    return _run_cell(cloud, batch, split, ht, he, cfg)


def _run_cell(cloud, batch, split, ht, he, cfg: ExperimentConfig):
    H = split.height
    scfg = SearchConfig(h_t=ht, h_e=effective_he(he, H), radius=cfg.radius,
                        k_max=cfg.k_max)
    banks = BankConfig(num_banks=cfg.banks, concurrency=cfg.pes)
    pes = PEConfig(num_pes=cfg.pes)
    queue = QueueConfig(capacity=cfg.queue_capacity)
    return run_search(split, batch, scfg, banks, pes, queue, cfg.energy_model(),
                      elide=cfg.elide, sim_seed=cfg.sim_seed)


def run_sweep(cfg: ExperimentConfig) -> tuple[str, list[RunRecord]]:
    """Grid sweep over (h_t, h_e) plus the two baselines; returns the CSV
    text (rows in grid order) and the records."""
    cloud, batch = make_dataset(cfg)
    tree = build_kdtree(cloud)
    H = tree.height
    splits = {}
    for ht in cfg.ht_list:
        splits[ht] = split_tree(tree, ht, cfg.buffer_words)
        validate_grid(cfg, splits[ht])

    exact_rows, _, exact_counts = brute_force_batch(cloud, batch.queries,
                                                    cfg.radius, cfg.k_max)

    lines = [f"#schema: {SWEEP_SCHEMA}", SWEEP_HEADER]
    records: list[RunRecord] = []
    cells = [(ht, he) for ht in cfg.ht_list for he in cfg.he_list]

    def one(ht, he):
        try:
            return _run_cell(cloud, batch, splits[ht], ht, he, cfg)
        except CrescentError as e:
            raise CrescentError(f"sweep cell (h_t={ht}, h_e={he}) failed: {e}") from e

    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futs = [pool.submit(_sweep_cell,
                                (cloud, batch, ht, he, asdict(cfg)))
                    for ht, he in cells]
            results = []
            for (ht, he), f in zip(cells, futs):
                try:
                    results.append(f.result())
                except Exception as e:
                    raise CrescentError(
                        f"sweep cell (h_t={ht}, h_e={he}) failed: {e}") from e
    else:
        results = [one(ht, he) for ht, he in cells]

    for (ht, he), rr in zip(cells, results):
        he_eff = effective_he(he, H)
        rr.recall = recall_from_arrays(rr.matrix, exact_rows, exact_counts)
        lines.append(_sweep_row("split", ht, he_eff, cfg.elide, rr.recall,
                                rr.stats, rr.report, rr.energy_mu))
        records.append(rr)

    # baselines once each, at the first grid h_t
    ht0 = cfg.ht_list[0]
    split0 = splits[ht0]
    scfg0 = SearchConfig(h_t=ht0, h_e=H, radius=cfg.radius, k_max=cfg.k_max)
    banks = BankConfig(num_banks=cfg.banks, concurrency=cfg.pes)
    pes = PEConfig(num_pes=cfg.pes)
    queue = QueueConfig(capacity=cfg.queue_capacity)
    model = cfg.energy_model()

    bm, bs, brep = traffic.baseline_exhaustive(split0, batch, scfg0, banks, pes, queue)
    g = aggregate.gather(bm, BankConfig(num_banks=16, concurrency=16), elide=False)
    aggregate.merge_into_stats(bs, g)
    brep = traffic.account_split_tree(split0, batch, bs, queue)
    b_rec = recall_from_arrays(bm, exact_rows, exact_counts)
    lines.append(_sweep_row("baseline_exhaustive", ht0, H, False, b_rec, bs, brep,
                            traffic.energy_total(brep, model)))

    # reload differs from the first grid cell only in DRAM bytes
    rrep = traffic.baseline_reload(split0, batch, queue, stats=records[0].stats)
    lines.append(_sweep_row("baseline_reload", ht0, H, False, None, None, rrep,
                            traffic.energy_total(rrep, model)))
    return "\n".join(lines) + "\n", records


def run_compare(cfg: ExperimentConfig, ht: int | None = None) -> dict:
    """Visit and DRAM reductions against the two baselines, plus the
    four-way energy savings against a monolithic random-access run."""
    cloud, batch = make_dataset(cfg)
    tree = build_kdtree(cloud)
    ht = cfg.ht_list[0] if ht is None else ht
    split = split_tree(tree, ht, cfg.buffer_words)
    H = split.height
    he = effective_he(cfg.he_list[0], H)
    scfg = SearchConfig(h_t=ht, h_e=he, radius=cfg.radius, k_max=cfg.k_max)
    banks = BankConfig(num_banks=cfg.banks, concurrency=cfg.pes)
    pes = PEConfig(num_pes=cfg.pes)
    queue = QueueConfig(capacity=cfg.queue_capacity)
    model = cfg.energy_model()

    ours = run_search(split, batch, scfg, banks, pes, queue, model,
                      elide=cfg.elide, sim_seed=cfg.sim_seed)
    _, ex_stats, _ = traffic.baseline_exhaustive(split, batch, scfg, banks, pes, queue)
    reload_rep = traffic.baseline_reload(split, batch, queue, stats=ours.stats)

    ours_sub_visits = ours.stats.subtree.node_visits
    ex_sub_visits = ex_stats.subtree.node_visits
    visit_red = 1.0 - ours_sub_visits / ex_sub_visits if ex_sub_visits else 0.0
    dram_red = 1.0 - (ours.report.dram_bytes_total / reload_rep.dram_bytes_total
                      if reload_rep.dram_bytes_total else 1.0)

    mono = traffic.characterize_random_access(tree, cloud, batch, scfg)
    mono_agg = aggregate.gather(ours.matrix, BankConfig(16, 16), elide=False)
    mono.sram_point = mono_agg.point_accesses
    savings = traffic.energy_report(mono, ours.report, model)
    return {
        "schema": "crescent.compare.v1",
        "ht": ht,
        "he": he,
        "subtree_visits": int(ours_sub_visits),
        "exhaustive_subtree_visits": int(ex_sub_visits),
        "visit_reduction_vs_exhaustive_pct": round(100.0 * visit_red, 3),
        "dram_bytes": int(ours.report.dram_bytes_total),
        "reload_dram_bytes": int(reload_rep.dram_bytes_total),
        "dram_reduction_vs_reload_pct": round(100.0 * dram_red, 3),
        "monolithic_non_streaming_fraction": round(
            mono.dram_bytes_random / mono.dram_bytes_total, 6)
            if mono.dram_bytes_total else 0.0,
        "conflict_rate_requests": round(ours.stats.conflict_rate_requests, 6),
        "energy_savings_vs_monolithic": savings,
    }


# ---------------------------------------------------------------------------
# artifact I/O used by the CLI


def write_tree_artifact(out_dir: str, cloud: PointCloud, split: SplitTree) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_cloud(cloud, os.path.join(out_dir, "cloud.f32le"))
    with open(os.path.join(out_dir, "tree.json"), "w") as f:
        json.dump(split_to_json(split), f, separators=(",", ":"))
        f.write("\n")


def read_tree_artifact(tree_dir: str) -> tuple[PointCloud, SplitTree]:
    cloud = load_cloud(os.path.join(tree_dir, "cloud.f32le"))
    with open(os.path.join(tree_dir, "tree.json")) as f:
        d = json.load(f)
    return cloud, split_from_json(d, cloud)


def write_run_outputs(out_dir: str, matrix: NeighborMatrix, stats: SimStats,
                      report: TrafficReport, extra_stats: dict | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "neighbors.csv"), "w") as f:
        f.write(matrix.to_csv())
    stats_d = stats.to_json()
    if extra_stats:
        stats_d.update(extra_stats)
    with open(os.path.join(out_dir, "stats.json"), "w") as f:
        json.dump(stats_d, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, "traffic.json"), "w") as f:
        json.dump(report.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")
