"""Independent reference implementations used as test oracles.

They are written for clarity, not speed, and share no code with the package
beyond the bf16 rounding helper whose own tests pin it down separately.
"""

import itertools
import math

import numpy as np


def bf16_value(x: float) -> float:
    """Round-to-nearest-even to 8 significand bits, by integer arithmetic on the float32 bits."""
    bits = int(np.float32(x).view(np.uint32))
    upper, lower = bits >> 16, bits & 0xFFFF
    if lower > 0x8000 or (lower == 0x8000 and upper & 1):
        upper += 1
    out = float(np.uint32((upper & 0xFFFF) << 16).view(np.float32))
    return 0.0 if out == 0 else out


def reservoir_reference(candidates, capacity):
    """Final reservoir contents: closest per hash bucket, then the ``capacity`` closest.

    ``candidates`` holds ``(id, hash, dist)``; comparisons use the bf16
    distance and then the id. Returns ``[(id, bf16 dist)]`` sorted.
    """
    best = {}
    for cid, h, d in candidates:
        key = (bf16_value(d), cid)
        if h not in best or key < best[h]:
            best[h] = key
    chosen = sorted(best.values())[:capacity]
    return [(cid, d) for d, cid in chosen]


def naive_all_pairs(x, measure="l2"):
    """Double loop in float64."""
    x = np.asarray(x, dtype=np.float64)
    m = len(x)
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if measure == "mips":
                out[i, j] = -float(np.dot(x[i], x[j]))
            else:
                diff = x[i] - x[j]
                out[i, j] = float(np.dot(diff, diff))
    return out


def knn_full_sort(dist_row, self_pos, gids, k):
    """Positions of the ``k`` nearest non-self entries by full sort on (dist, gid)."""
    order = sorted((float(dist_row[j]), int(gids[j]), j) for j in range(len(dist_row)) if j != self_pos)
    return [j for _, _, j in order[:k]]


def quadratic_knn(data, queries, k, measure="l2"):
    """Exact k-NN by a pure-Python scan with id tie-breaks."""
    data = np.asarray(data, dtype=np.float64)
    out = []
    for q in np.asarray(queries, dtype=np.float64):
        scored = []
        for i, x in enumerate(data):
            if measure == "mips":
                d = -float(np.dot(q, x))
            else:
                diff = q - x
                d = float(np.dot(diff, diff))
            scored.append((d, i))
        scored.sort()
        out.append([i for _, i in scored[:k]])
    return np.array(out, dtype=np.int64)


def beam_search_reference(neighbors, dist_to_q, start, L):
    """Textbook beam search over Python sets.

    ``neighbors(p)`` lists out-neighbors and ``dist_to_q(p)`` scores a point.
    The beam keeps the L best by (dist, id); each visit adds neighbors that
    are neither visited nor in the beam. Returns ``(ids, visited count)``.
    """
    beam = {start}
    visited = set()
    while True:
        frontier = [u for u in beam if u not in visited]
        if not frontier:
            break
        p = min(frontier, key=lambda u: (dist_to_q(u), u))
        visited.add(p)
        beam |= {u for u in neighbors(p) if u not in visited}
        if len(beam) > L:
            beam = set(sorted(beam, key=lambda u: (dist_to_q(u), u))[:L])
    return sorted(beam, key=lambda u: (dist_to_q(u), u)), len(visited)


def exact_medoid_vs_mean(x, measure="l2"):
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=0)
    if measure == "mips":
        scores = [-float(np.dot(r, mean)) for r in x]
    else:
        scores = [float(np.dot(r - mean, r - mean)) for r in x]
    return int(np.argmin(scores))


def collision_probability(theta, m):
    return (1.0 - theta / math.pi) ** m


def all_orders(items):
    return itertools.permutations(items)
