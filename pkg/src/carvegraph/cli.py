"""Command-line driver: gen, groundtruth, build, search, knngraph.

Machine-readable results go to stdout as ``key: value`` lines (search prints
a tab-separated table); logs go to stderr. Settings resolve as command-line
flag, then ``--config`` file key, then built-in default.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import dataset as ds
from .builder import BuildParams, build_knn_graph, build_with_stats
from .graph import NavGraph, brute_force_knn, choose_start, recall_at, search
from .leafbuild import PICK_MODES, LeafParams
from .partition import PartitionParams
from .pruning import PruneParams

log = logging.getLogger("carvegraph")

DEFAULTS = {
    "dataset": None,
    "queries": None,
    "groundtruth": None,
    "graph": None,
    "out": None,
    "metric": "l2",
    "threads": 0,
    "seed": 0,
    "cmax": 1024,
    "cmin": 100,
    "sample_frac": 0.01,
    "leader_cap": 1000,
    "fanout": "10,3",
    "replicas": 1,
    "k_leaf": 2,
    "pick_mode": "bidirected",
    "hash_bits": 12,
    "reservoir": 64,
    "alpha": 1.2,
    "max_degree": 64,
    "final_prune": True,
    "beam": "10,20,50,100",
    "k": 10,
    "target": None,
}

_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


class UsageError(Exception):
    pass


def _int_list(text) -> list[int]:
    try:
        vals = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}")
    if not vals:
        raise UsageError("empty list")
    return vals


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys raise."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def _coerce(key, value):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        low = str(value).lower()
        if low not in _BOOL:
            raise UsageError(f"{key}: expected a boolean, got {value!r}")
        return _BOOL[low]
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float) or key == "target":
            return float(value)
    except ValueError:
        raise UsageError(f"{key}: cannot parse {value!r}")
    return value


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config-file values over defaults."""
    cfg = read_config(args.config) if getattr(args, "config", None) else {}
    merged = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in cfg:
            merged[key] = cfg[key]
        else:
            merged[key] = default
    if merged["threads"] <= 0:
        merged["threads"] = ds.available_threads()
    return merged


def build_params(cfg: dict) -> BuildParams:
    try:
        return BuildParams(
            partition=PartitionParams(
                cmax=cfg["cmax"], cmin=cfg["cmin"], sample_frac=cfg["sample_frac"],
                leader_cap=cfg["leader_cap"], fanout=tuple(_int_list(cfg["fanout"])),
                replicas=cfg["replicas"], seed=cfg["seed"],
            ),
            leaf=LeafParams(k=cfg["k_leaf"], pick_mode=cfg["pick_mode"]),
            hash_bits=cfg["hash_bits"],
            reservoir=cfg["reservoir"],
            prune=PruneParams(alpha=cfg["alpha"], R=cfg["max_degree"]),
            final_prune=cfg["final_prune"],
            seed=cfg["seed"],
        )
    except ValueError as e:
        raise UsageError(str(e))


def _require(cfg, *keys):
    for key in keys:
        if not cfg[key]:
            raise UsageError(f"--{key.replace('_', '-')} is required")


def _load(path, cfg) -> ds.Dataset:
    return ds.load(path, measure=cfg["metric"])


def emit(stats: dict, out=None) -> None:
    out = out or sys.stdout
    for key, value in stats.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        print(f"{key}: {value}", file=out)
    out.flush()


# -- subcommands ----------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = resolve(args)
    _require(cfg, "out")
    total = args.n + (args.num_queries or 0)
    full = ds.gen_synthetic(total, args.d, args.clusters, args.spread, seed=cfg["seed"])
    base = full.data[:args.n]
    ds.save(base, cfg["out"])
    stats = {"points": args.n, "dim": args.d, "file": cfg["out"],
             "sha256": ds.file_checksum(cfg["out"])}
    if args.num_queries:
        _require(cfg, "queries")
        ds.save(np.ascontiguousarray(full.data[args.n:]), cfg["queries"])
        stats["queries"] = args.num_queries
        stats["queries_file"] = cfg["queries"]
    emit(stats)
    return 0


def cmd_groundtruth(args) -> int:
    cfg = resolve(args)
    _require(cfg, "dataset", "queries", "out")
    data = _load(cfg["dataset"], cfg)
    queries = ds.load(cfg["queries"]).data
    t = time.perf_counter()
    ids, dists = brute_force_knn(data, queries, cfg["k"])
    ds.save_groundtruth(cfg["out"], ids, dists)
    emit({"queries": len(ids), "k": cfg["k"], "file": cfg["out"],
          "seconds": time.perf_counter() - t})
    return 0


def cmd_build(args) -> int:
    cfg = resolve(args)
    _require(cfg, "dataset")
    out = cfg["graph"] or cfg["out"]
    if not out:
        raise UsageError("--graph or --out is required")
    params = build_params(cfg)
    data = _load(cfg["dataset"], cfg)
    graph, stats = build_with_stats(data, params, threads=cfg["threads"])
    graph.validate()
    if stats.max_degree > params.prune.R:
        log.error("max out-degree %d exceeds cap %d", stats.max_degree, params.prune.R)
        return 1
    graph.save(out)
    emit({"points": data.n, "graph": out, **stats.as_dict(),
          "graph_sha256": ds.file_checksum(out)})
    return 0


def cmd_search(args) -> int:
    cfg = resolve(args)
    _require(cfg, "graph", "dataset", "queries")
    data = _load(cfg["dataset"], cfg)
    graph = NavGraph.load(cfg["graph"])
    queries = ds.load(cfg["queries"]).data
    truth = ds.load_groundtruth(cfg["groundtruth"])[0] if cfg["groundtruth"] else None
    k = cfg["k"]
    start = choose_start(data, seed=cfg["seed"])
    print("L\trecall\tmean_visited\tmean_comparisons\tqps")
    for L in _int_list(cfg["beam"]):
        t = time.perf_counter()
        res = search(graph, data, queries, L, start, cfg["threads"])
        elapsed = time.perf_counter() - t
        recall = recall_at(res.ids, truth, k) if truth is not None else float("nan")
        qps = len(queries) / elapsed if elapsed > 0 else float("inf")
        print(f"{L}\t{recall:.4f}\t{res.visited.mean():.2f}\t{res.comparisons.mean():.2f}\t{qps:.1f}")
    sys.stdout.flush()
    return 0


def _self_excluded_truth(data: ds.Dataset, k: int) -> np.ndarray:
    ids, _ = brute_force_knn(data, data.data, min(k + 1, data.n))
    rows = np.full((data.n, k), -1, dtype=np.int64)
    for p in range(data.n):
        row = ids[p][ids[p] != p][:k]
        rows[p, :len(row)] = row
    return rows


def cmd_knngraph(args) -> int:
    cfg = resolve(args)
    _require(cfg, "dataset", "out")
    data = _load(cfg["dataset"], cfg)
    params = build_params(cfg)
    k = cfg["k"]
    L = _int_list(cfg["beam"])[-1]
    graph = NavGraph.load(cfg["graph"]) if cfg["graph"] else None
    t = time.perf_counter()
    try:
        ids, dists = build_knn_graph(data, params, k, L, cfg["threads"], graph=graph)
    except ValueError as e:
        raise UsageError(str(e))
    elapsed = time.perf_counter() - t
    rows = 0
    with open(cfg["out"], "w") as f:
        f.write("src\tdst\trank\tdist\n")
        for p in range(data.n):
            for r in range(k):
                if ids[p, r] < 0:
                    break
                f.write(f"{p}\t{ids[p, r]}\t{r}\t{dists[p, r]:.9g}\n")
                rows += 1
    stats = {"points": data.n, "k": k, "L": L, "edges": rows, "file": cfg["out"], "seconds": elapsed}
    status = 0
    if args.check or cfg["target"] is not None:
        if k >= data.n:
            raise UsageError(f"k={k} needs at least k+1 points for a recall check")
        recall = recall_at(ids, _self_excluded_truth(data, k), k)
        stats["recall"] = recall
        if cfg["target"] is not None:
            stats["target"] = cfg["target"]
            stats["target_met"] = recall >= cfg["target"]
            status = 0 if recall >= cfg["target"] else 1
    emit(stats)
    return status


# -- parser ---------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--threads", type=int, help="worker threads (default: all available)")
    p.add_argument("--seed", type=int)
    p.add_argument("--metric", choices=ds.MEASURES)
    p.add_argument("--out")
    p.add_argument("-v", "--verbose", action="store_true")


def _io(p, *names):
    for name in names:
        p.add_argument(f"--{name}")


def _build_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("build parameters")
    g.add_argument("--cmax", type=int)
    g.add_argument("--cmin", type=int)
    g.add_argument("--sample-frac", dest="sample_frac", type=float)
    g.add_argument("--leader-cap", dest="leader_cap", type=int)
    g.add_argument("--fanout", help="comma list of per-level fanout, e.g. 10,3")
    g.add_argument("--replicas", type=int)
    g.add_argument("--k-leaf", dest="k_leaf", type=int)
    g.add_argument("--pick-mode", dest="pick_mode", choices=PICK_MODES)
    g.add_argument("--hash-bits", dest="hash_bits", type=int)
    g.add_argument("--reservoir", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--max-degree", dest="max_degree", type=int)
    g.add_argument("--no-final-prune", dest="final_prune", action="store_const", const=False)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carvegraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic clustered dataset")
    p.add_argument("n", type=int)
    p.add_argument("d", type=int)
    p.add_argument("clusters", type=int)
    p.add_argument("spread", type=float)
    p.add_argument("--num-queries", dest="num_queries", type=int, default=0,
                   help="also draw this many held-out points from the same generator")
    _io(p, "queries")
    _common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("groundtruth", help="exact k nearest neighbors by full scan")
    _io(p, "dataset", "queries")
    p.add_argument("--k", type=int)
    _common(p)
    p.set_defaults(func=cmd_groundtruth)

    p = sub.add_parser("build", help="build a graph index")
    _io(p, "dataset", "graph")
    _build_flags(p)
    _common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("search", help="beam search sweep with recall and throughput")
    _io(p, "graph", "dataset", "queries", "groundtruth")
    p.add_argument("--beam", help="comma list of beam widths")
    p.add_argument("--k", type=int)
    _common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("knngraph", help="approximate k-NN graph as a TSV edge table")
    _io(p, "dataset", "graph")
    p.add_argument("--beam", help="beam width (the last value of a list is used)")
    p.add_argument("--k", type=int)
    p.add_argument("--check", action="store_true", help="report recall against brute force")
    p.add_argument("--target", type=float, help="exit 1 if recall falls below this")
    _build_flags(p)
    _common(p)
    p.set_defaults(func=cmd_knngraph)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"carvegraph {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"carvegraph {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
