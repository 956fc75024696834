"""Synthetic small-world benchmark graphs with configurable label skew."""

from __future__ import annotations

import math
import random

from .graph import DataGraph

LABEL_DISTRIBUTIONS = ("uniform", "gaussian", "zipf")


def small_world_graph(
    n: int,
    avg_degree: float,
    label_domain_size: int,
    label_distribution: str = "uniform",
    seed: int = 7,
    zipf_exponent: float = 1.2,
) -> DataGraph:
    """Generate a Newman-Watts-Strogatz small-world graph with vertex labels.

    Starts from a ring where every vertex connects to its ``k`` nearest
    neighbors (``k`` the largest even number <= avg_degree, at least 2) and
    adds random shortcut edges with the probability that brings the expected
    degree up to ``avg_degree``. Shortcuts are added, never rewired, so the
    ring keeps the graph connected.
    """
    if n < 3:
        raise ValueError("need at least 3 vertices")
    if label_distribution not in LABEL_DISTRIBUTIONS:
        raise ValueError(f"unknown label distribution {label_distribution!r}")
    rng = random.Random(seed)
    k = max(2, 2 * int(avg_degree // 2))
    if k >= n:
        k = (n - 1) if (n - 1) % 2 == 0 else n - 2
    shortcut_p = max(0.0, (avg_degree - k) / k)
    edges: set[tuple[int, int]] = set()
    for v in range(n):
        for step in range(1, k // 2 + 1):
            u = (v + step) % n
            edges.add((min(v, u), max(v, u)))
    for v in range(n):
        for _ in range(k // 2):
            if rng.random() < shortcut_p:
                u = rng.randrange(n)
                if u != v:
                    edges.add((min(v, u), max(v, u)))
    adjacency: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adjacency[u].append(v)
        adjacency[v].append(u)
    labels = _draw_labels(n, label_domain_size, label_distribution, rng, zipf_exponent)
    return DataGraph(adjacency, labels, label_domain_size)


def _draw_labels(
    n: int,
    domain: int,
    distribution: str,
    rng: random.Random,
    zipf_exponent: float,
) -> list[int]:
    if distribution == "uniform":
        return [rng.randint(1, domain) for _ in range(n)]
    if distribution == "gaussian":
        mean = (domain + 1) / 2
        sigma = max(domain / 6.0, 1.0)
        out = []
        for _ in range(n):
            x = round(rng.gauss(mean, sigma))
            out.append(min(domain, max(1, x)))
        return out
    # zipf: P(label = i) proportional to 1 / i^s over [1, domain]
    weights = [1.0 / (i**zipf_exponent) for i in range(1, domain + 1)]
    total = math.fsum(weights)
    cdf = []
    acc = 0.0
    for w in weights:
        acc += w / total
        cdf.append(acc)
    out = []
    for _ in range(n):
        r = rng.random()
        lo, hi = 0, domain - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if cdf[mid] < r:
                lo = mid + 1
            else:
                hi = mid
        out.append(lo + 1)
    return out
