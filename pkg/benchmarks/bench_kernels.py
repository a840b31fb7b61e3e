"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py --n 5000 --d 32

Each stage runs on identical inputs under both backends; the outputs are
compared and the table reports seconds per stage and the speedup.
"""

import argparse
import time

import numpy as np

import carvegraph as cg
from carvegraph import _backend
from carvegraph.builder import leaf_edges
from carvegraph.dataset import MIPS
from carvegraph.graph import search
from carvegraph.hashprune import ReservoirArena, SketchTable, to_bf16


def timed(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def stages(data, graph, queries, args):
    params = cg.BuildParams()
    leafset = cg.carve(data, params.partition_params())
    sketch = SketchTable.build(data, params.hash_bits, params.seed)
    edges = [leaf_edges(data, leaf, params.leaf) for leaf in leafset.leaves]
    src = np.concatenate([e[0] for e in edges]).astype(np.uint32)
    dst = np.concatenate([e[1] for e in edges]).astype(np.uint32)
    dist = to_bf16(np.concatenate([e[2] for e in edges]))

    def pick():
        return [leaf_edges(data, leaf, params.leaf)[1] for leaf in leafset.leaves]

    def stream():
        arena = ReservoirArena(data.n, params.reservoir)
        arena.stream(src, dst, sketch.hashes(src, dst), dist, args.threads)
        return arena

    arena = stream()

    def prune():
        return _backend.kernels.prune_all(data.f32, int(data.measure == MIPS), arena.slots, arena.counts,
                                          params.prune.alpha, True, params.prune.R, args.threads)

    def beam():
        return search(graph, data, queries, args.L, cg.choose_start(data), args.threads)

    return {"pick": pick, "stream": stream, "prune": prune, "search": beam}


def fingerprint(name, out):
    if name == "pick":
        return b"".join(np.ascontiguousarray(a).tobytes() for a in out)
    if name == "stream":
        return out.slots.tobytes() + out.counts.tobytes()
    if name == "prune":
        return out[0].tobytes() + out[1].tobytes()
    return out.ids.tobytes() + out.comparisons.tobytes()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--d", type=int, default=32)
    ap.add_argument("--clusters", type=int, default=50)
    ap.add_argument("--spread", type=float, default=0.3)
    ap.add_argument("--queries", type=int, default=200)
    ap.add_argument("--L", type=int, default=50)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = cg.available_backends()
    full = cg.gen_synthetic(args.n + args.queries, args.d, args.clusters, args.spread, seed=args.seed)
    data = cg.Dataset(full.data[:args.n].copy())
    queries = np.ascontiguousarray(full.data[args.n:])
    graph = cg.build(data, threads=args.threads)

    times, prints = {}, {}
    for be in backends:
        with cg.use_backend(be):
            for name, fn in stages(data, graph, queries, args).items():
                times[be, name], out = timed(fn, args.repeat)
                prints[be, name] = fingerprint(name, out)

    print(f"n={args.n} d={args.d} threads={args.threads} repeat={args.repeat}")
    print("stage\t" + "\t".join(f"{be}_s" for be in backends) + "\tspeedup\tidentical")
    for name in ("pick", "stream", "prune", "search"):
        row = [f"{times[be, name]:.4f}" for be in backends]
        if len(backends) > 1:
            speed = f"{times['python', name] / times['compiled', name]:.1f}x"
            same = "yes" if len({prints[be, name] for be in backends}) == 1 else "NO"
        else:
            speed, same = "-", "-"
        print("\t".join([name, *row, speed, same]))


if __name__ == "__main__":
    main()
