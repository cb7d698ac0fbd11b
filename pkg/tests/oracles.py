"""Independent brute-force reference implementations used as test oracles.

These deliberately avoid the package's own helpers: plain loops, exact
fractions and direct counting.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from fractions import Fraction


def delta_bruteforce(shares: list[str], pole_of: dict[str, int]) -> tuple[Fraction | None, int]:
    """Exact domain score from a flat list of shared domains (one entry per share)."""
    vals = [pole_of[d] for d in shares if d in pole_of]
    if not vals:
        return None, 0
    return Fraction(sum(vals), len(vals)), len(vals)


def nearest_rank_lo_hi(values: list[float], q: Fraction) -> tuple[float, float]:
    """lo: smallest v with #{x <= v} >= q*n; hi: largest v with #{x >= v} >= q*n."""
    n = len(values)
    need = q * n
    uniq = sorted(set(values))
    lo = next(v for v in uniq if sum(1 for x in values if x <= v) >= need)
    hi = next(v for v in reversed(uniq) if sum(1 for x in values if x >= v) >= need)
    return lo, hi


def lpa_fixed_points(n: int, edges: list[tuple[int, int]], seeds: dict[int, int]) -> list[tuple[int, ...]]:
    """All labelings in {-1,+1}^free that are stable under the weighted-majority rule.

    Undirected unit-weight edges; a node is stable if its label is a
    (possibly tied) majority label among its neighbors.
    """
    nbrs = [[] for _ in range(n)]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    free = [v for v in range(n) if v not in seeds]
    out = []
    for combo in itertools.product((-1, 1), repeat=len(free)):
        lab = dict(seeds)
        lab.update(zip(free, combo))
        ok = True
        for v in free:
            pos = sum(1 for u in nbrs[v] if lab[u] == 1)
            neg = sum(1 for u in nbrs[v] if lab[u] == -1)
            if (lab[v] == 1 and neg > pos) or (lab[v] == -1 and pos > neg):
                ok = False
                break
        if ok:
            out.append(tuple(lab[v] for v in range(n)))
    return out


def cooccur_counts(tweets: list[set[str]], seeds: set[str]) -> Counter:
    c: Counter = Counter()
    for tags in tweets:
        if any(s in tags for s in seeds):
            for t in tags:
                if t not in seeds:
                    c[t] += 1
    return c


def tfidf_bruteforce(user_tags: dict[str, Counter], vocab: list[str]) -> tuple[dict[str, dict[str, float]], dict[str, float]]:
    users = [u for u in user_tags if any(user_tags[u][h] > 0 for h in vocab)]
    n = len(users)
    idf = {}
    for h in vocab:
        df = sum(1 for u in users if user_tags[u][h] > 0)
        idf[h] = math.log((1 + n) / (1 + df)) + 1
    feats = {u: {h: user_tags[u][h] * idf[h] for h in vocab if user_tags[u][h] > 0} for u in users}
    return feats, idf


def umass_bruteforce(top: list[str], docs: list[set[str]]) -> float:
    scores = []
    for i in range(1, len(top)):
        for j in range(i):
            dj = sum(1 for d in docs if top[j] in d)
            dij = sum(1 for d in docs if top[i] in d and top[j] in d)
            scores.append(math.log((dij + 1) / dj))
    return sum(scores) / len(scores)


def drift_bruteforce(paths: list[list[float]]) -> list[float]:
    n = len(paths)
    T = len(paths[0])
    return [sum(abs(p[t] - p[t - 1]) for p in paths) / n for t in range(1, T)]


def cumulative_path(bucket_shares: list[list[int]]) -> list[float]:
    """Cumulative mean of pole values through each bucket."""
    out, acc = [], []
    for vals in bucket_shares:
        acc.extend(vals)
        out.append(sum(acc) / len(acc))
    return out


def histogram2d_bruteforce(points: list[tuple[float, float]], bins: int) -> list[list[int]]:
    grid = [[0] * bins for _ in range(bins)]
    width = Fraction(2, bins)
    for x, y in points:
        i = min(int((Fraction(x) + 1) / width), bins - 1)
        j = min(int((Fraction(y) + 1) / width), bins - 1)
        grid[i][j] += 1
    return grid


def sigmoid(z: float) -> float:
    return 1 / (1 + math.exp(-z))
