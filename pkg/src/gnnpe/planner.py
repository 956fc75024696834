"""Cost-based decomposition of a query graph into covering query paths."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, Sequence

from .graph import QueryGraph, enumerate_paths

STRATEGIES = ("OIP", "AIP", "eIP")
DEFAULT_EPSILON = 3

WeightFn = Callable[[tuple[int, ...]], float]


@dataclass(frozen=True)
class QueryPlan:
    """An ordered set of query paths covering every query vertex.

    ``residual_edges`` are query edges on no plan path; the matcher checks
    them during refinement so no edge constraint is ever dropped. A plan is
    ``flagged`` when the query has no simple path of the requested length
    (or some vertex lies on none); the matcher then falls back to
    vertex-level candidate filtering.
    """

    paths: tuple[tuple[int, ...], ...]
    weights: tuple[float, ...]
    cost: float
    residual_edges: tuple[tuple[int, int], ...]
    path_length: int
    flagged: bool

    @property
    def overlap_map(self) -> dict[tuple[int, int], tuple[int, ...]]:
        out = {}
        for i in range(len(self.paths)):
            for j in range(i + 1, len(self.paths)):
                shared = sorted(set(self.paths[i]) & set(self.paths[j]))
                if shared:
                    out[(i, j)] = tuple(shared)
        return out


def path_weight_deg(q: QueryGraph, path: Sequence[int]) -> float:
    """Negated degree sum: high-degree paths are cheap (few candidates)."""
    return -float(sum(q.degree(v) for v in path))


def select_plan(
    q: QueryGraph,
    length: int,
    strategy: str = "AIP",
    weight_fn: WeightFn | None = None,
    epsilon: int = DEFAULT_EPSILON,
    seed: int = 0,
) -> QueryPlan:
    """Greedy covering plan in the style of the seeded local-search loop.

    The start vertex is the highest-degree query vertex (ties to the smaller
    id). Seed paths through it come from the strategy: the single cheapest
    one, all of them, or ``epsilon`` sampled ones. Each seed grows a local
    plan by repeatedly adding the connected path with the fewest shared
    vertices and then the smallest weight, until every query vertex is
    covered; the cheapest local plan wins.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if weight_fn is None:
        weight_fn = lambda p: path_weight_deg(q, p)
    all_vertices = frozenset(range(q.vertex_count))
    eff_len, candidates = _longest_feasible(q, length)
    flagged = eff_len < length
    start = max(range(q.vertex_count), key=lambda v: (q.degree(v), -v))
    through = [p for p in candidates if start in p]
    if not through:
        through = list(candidates)
    weights = {p: weight_fn(p) for p in candidates}
    if strategy == "OIP":
        seeds = [min(through, key=lambda p: (weights[p], p))]
    elif strategy == "AIP":
        seeds = sorted(through)
    else:
        rng = random.Random(seed)
        pool = sorted(through)
        seeds = pool if len(pool) <= epsilon else rng.sample(pool, epsilon)
    best: list[tuple[int, ...]] | None = None
    best_cost = float("inf")
    best_covered: frozenset[int] = frozenset()
    for seed_path in seeds:
        local = [seed_path]
        covered = set(seed_path)
        cost = weights[seed_path]
        chosen = {seed_path}
        while covered != all_vertices:
            pick = None
            pick_key = None
            for p in candidates:
                if p in chosen:
                    continue
                shared = len(covered.intersection(p))
                if shared == 0:
                    continue
                key = (shared, weights[p], p)
                if pick_key is None or key < pick_key:
                    pick, pick_key = p, key
            if pick is None or not set(pick) - covered:
                break  # no connected path adds coverage; plan stays partial
            local.append(pick)
            chosen.add(pick)
            covered.update(pick)
            cost += weights[pick]
        if covered == all_vertices and cost < best_cost:
            best, best_cost, best_covered = local, cost, frozenset(covered)
    if best is None:
        # no seed covers everything: keep the cheapest partial plan, flagged
        flagged = True
        seed_path = seeds[0] if seeds else None
        best = [seed_path] if seed_path else []
        best_cost = weights.get(seed_path, 0.0) if seed_path else 0.0
        best_covered = frozenset(best[0]) if best else frozenset()
    if best_covered != all_vertices:
        flagged = True
    on_paths = {
        (min(a, b), max(a, b))
        for p in best
        for a, b in zip(p, p[1:])
    }
    residual = tuple(e for e in q.edges() if e not in on_paths)
    return QueryPlan(
        paths=tuple(best),
        weights=tuple(weights[p] for p in best),
        cost=best_cost,
        residual_edges=residual,
        path_length=eff_len,
        flagged=flagged,
    )


def _longest_feasible(q: QueryGraph, length: int) -> tuple[int, list[tuple[int, ...]]]:
    """Paths of the requested length, or of the longest length that exists."""
    for eff in range(length, -1, -1):
        paths = enumerate_paths(q, range(q.vertex_count), eff)
        if paths:
            return eff, paths
    return 0, []


def format_plan(plan: QueryPlan) -> str:
    """`p <v-ids...> w=<weight>` lines, residual edges, then the total cost."""
    lines = [
        "p " + " ".join(str(v) for v in path) + f" w={weight}"
        for path, weight in zip(plan.paths, plan.weights)
    ]
    lines.extend(f"residual {u} {v}" for u, v in plan.residual_edges)
    lines.append(f"cost={plan.cost}")
    return "\n".join(lines) + "\n"
