"""Command-line interface: ``crescent build|search|sweep|compare|gen``.

Exit codes: 0 success, 2 configuration or validation error, 3 I/O error.
Set CRESCENT_LOG=debug|info|warning for verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import aggregate, harness, traffic
from .errors import CapacityError, CrescentError, ParseError
from .geometry import QueryBatch, generate_cloud, load_cloud, save_cloud
from .kdtree import build_kdtree, split_tree
from .memsim import BankConfig, PEConfig, simulate_search
from .split_search import SearchConfig, recall_from_arrays
from .exact_search import brute_force_batch
from .traffic import QueueConfig

log = logging.getLogger("crescent")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def _setup_logging():
    level = os.environ.get("CRESCENT_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _add_cloud_args(p: argparse.ArgumentParser):
    p.add_argument("--cloud", help="path to a .xyz or .f32le cloud file")
    p.add_argument("--gen", default="uniform-cube",
                   help="generator kind when --cloud is absent")
    p.add_argument("--n", type=int, default=65536, help="generated cloud size")
    p.add_argument("--seed", type=int, default=1, help="dataset seed")


def _add_search_args(p: argparse.ArgumentParser):
    p.add_argument("--ht", type=int, default=4, help="top-tree height")
    p.add_argument("--he", type=int, default=0, help="elision height (0 = tree height)")
    p.add_argument("--radius", type=float, default=harness.DEFAULT_RADIUS)
    p.add_argument("--k", type=int, default=harness.DEFAULT_K)
    p.add_argument("--banks", type=int, default=4)
    p.add_argument("--pes", type=int, default=4)
    p.add_argument("--queue-capacity", type=int, default=96)
    p.add_argument("--elide", action="store_true")
    p.add_argument("--sim-seed", type=int, default=0)
    p.add_argument("--queries", type=int, default=4096)


def _load_or_gen(args) -> "PointCloud":
    if args.cloud:
        return load_cloud(args.cloud)
    return generate_cloud(args.gen, args.n, args.seed)


def cmd_gen(args) -> int:
    cloud = generate_cloud(args.kind, args.n, args.seed)
    save_cloud(cloud, args.out, None)
    print(f"wrote {len(cloud)} points to {args.out}")
    return EXIT_OK


def cmd_build(args) -> int:
    cloud = _load_or_gen(args)
    tree = build_kdtree(cloud)
    split = split_tree(tree, args.ht, args.buffer_words)
    harness.write_tree_artifact(args.out, cloud, split)
    print(f"N={len(cloud)} H={tree.height} h_t={split.h_t} "
          f"subtrees={split.subtree_count} out={args.out}")
    return EXIT_OK


def cmd_search(args) -> int:
    cloud, split = harness.read_tree_artifact(args.tree)
    if args.queries_file:
        qcloud = load_cloud(args.queries_file)
        batch = QueryBatch(qcloud.points, self_query=False)
    else:
        q = min(args.queries, len(cloud))
        batch = (QueryBatch.from_cloud(cloud) if q >= len(cloud)
                 else QueryBatch(cloud.points[:q], self_query=True))
    H = split.height
    he = H if args.he <= 0 else args.he
    scfg = SearchConfig(h_t=split.h_t, h_e=he, radius=args.radius, k_max=args.k)
    scfg.validate(split)
    banks = BankConfig(num_banks=args.banks, concurrency=args.pes)
    pes = PEConfig(num_pes=args.pes)
    queue = QueueConfig(capacity=args.queue_capacity)

    matrix, stats = simulate_search(split, batch, scfg, banks, pes,
                                    elide=args.elide, seed=args.sim_seed,
                                    trace_path=args.trace)
    g = aggregate.gather(matrix, BankConfig(num_banks=16, concurrency=16),
                         elide=args.elide)
    aggregate.merge_into_stats(stats, g)
    report = traffic.account_split_tree(split, batch, stats, queue)
    extra = {"energy_mu": traffic.energy_total(report, traffic.EnergyModel())}
    if args.exact_oracle:
        rows, _, counts = brute_force_batch(cloud, batch.queries, args.radius, args.k,
                                            self_exclude=False)
        extra["recall"] = recall_from_arrays(matrix, rows, counts)
    harness.write_run_outputs(args.out, matrix, stats, report, extra)
    print(f"queries={len(batch)} cycles={stats.cycles} visits={stats.node_visits} "
          f"conflicts={stats.conflicts_total} out={args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.config:
        cfg = harness.ExperimentConfig.from_json(args.config)
    else:
        cfg = harness.ExperimentConfig()
    # CLI flags override file values
    if args.cloud:
        cfg.cloud_path = args.cloud
    if args.gen:
        cfg.cloud_kind = args.gen
    if args.n is not None:
        cfg.cloud_n = args.n
    if args.queries is not None:
        cfg.queries = args.queries
    if args.ht:
        cfg.ht_list = [int(x) for x in args.ht.split(",")]
    if args.he:
        cfg.he_list = [int(x) for x in args.he.split(",")]
    for name in ("radius", "banks", "pes", "seed", "sim_seed", "jobs",
                 "buffer_words"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if args.k is not None:
        cfg.k_max = args.k
    if args.queue_capacity is not None:
        cfg.queue_capacity = args.queue_capacity
    cfg.elide = bool(args.elide)
    cfg.out_dir = args.out
    csv_text, _ = harness.run_sweep(cfg)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "sweep.csv")
    with open(path, "w") as f:
        f.write(csv_text)
    with open(os.path.join(args.out, "config.json"), "w") as f:
        json.dump(cfg.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = harness.ExperimentConfig()
    if args.cloud:
        cfg.cloud_path = args.cloud
    if args.n is not None:
        cfg.cloud_n = args.n
    if args.queries is not None:
        cfg.queries = args.queries
    cfg.cloud_kind = args.gen
    cfg.seed = args.seed
    cfg.ht_list = [args.ht]
    cfg.he_list = [args.he]
    cfg.radius = args.radius
    cfg.k_max = args.k
    cfg.banks = args.banks
    cfg.pes = args.pes
    cfg.queue_capacity = args.queue_capacity
    cfg.elide = bool(args.elide)
    cfg.sim_seed = args.sim_seed
    result = harness.run_compare(cfg)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "compare.json")
    with open(path, "w") as f:
        json.dump(result, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"visit reduction vs exhaustive: {result['visit_reduction_vs_exhaustive_pct']}%")
    print(f"DRAM reduction vs reload: {result['dram_reduction_vs_reload_pct']}%")
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crescent",
                                 description="split K-d tree neighbor search simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic cloud file")
    g.add_argument("kind", choices=("uniform-cube", "gaussian-clusters", "grid"))
    g.add_argument("n", type=int)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("build", help="build and split a tree artifact")
    _add_cloud_args(b)
    b.add_argument("--ht", type=int, default=4)
    b.add_argument("--buffer-words", type=int, default=262144)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build)

    s = sub.add_parser("search", help="run the simulated search on an artifact")
    s.add_argument("--tree", required=True, help="directory from `crescent build`")
    s.add_argument("--queries-file", help="query cloud (.xyz/.f32le); default self-query")
    _add_search_args(s)
    s.add_argument("--exact-oracle", action="store_true",
                   help="also run brute force and report recall")
    s.add_argument("--trace", help="write a per-cycle trace CSV to this path")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_search)

    w = sub.add_parser("sweep", help="grid sweep over (h_t, h_e) plus baselines")
    w.add_argument("--config", help="JSON ExperimentConfig; flags override")
    w.add_argument("--cloud", help="path to a .xyz or .f32le cloud file")
    w.add_argument("--gen", default=None, help="generator kind when --cloud is absent")
    w.add_argument("--n", type=int, default=None)
    w.add_argument("--seed", type=int, default=None)
    w.add_argument("--queries", type=int, default=None)
    w.add_argument("--ht", help="comma list of top-tree heights")
    w.add_argument("--he", help="comma list of elision heights (0 = tree height)")
    w.add_argument("--radius", type=float, default=None)
    w.add_argument("--k", type=int, default=None)
    w.add_argument("--banks", type=int, default=None)
    w.add_argument("--pes", type=int, default=None)
    w.add_argument("--queue-capacity", type=int, default=None)
    w.add_argument("--buffer-words", type=int, default=None)
    w.add_argument("--elide", action="store_true")
    w.add_argument("--sim-seed", type=int, default=None)
    w.add_argument("--jobs", type=int, default=None)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="compare against both prior-accelerator baselines")
    _add_cloud_args(c)
    _add_search_args(c)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, OSError) as e:
        print(f"crescent: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except CapacityError as e:
        print(f"crescent: capacity error (inequality {e.equation}): {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CrescentError as e:
        print(f"crescent: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
