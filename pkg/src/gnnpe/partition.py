"""Balanced edge-cut graph partitioning and l-hop partition expansion."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .graph import DataGraph


@dataclass(frozen=True)
class Partition:
    """One block of a disjoint vertex cover of the data graph."""

    id: int
    core_vertices: frozenset[int]
    cut_edges: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class ExpandedPartition:
    """A partition's core plus every vertex within l hops of it."""

    id: int
    core_vertices: frozenset[int]
    halo_vertices: frozenset[int]
    hops: int

    @property
    def vertices(self) -> frozenset[int]:
        return self.core_vertices | self.halo_vertices


@dataclass
class _Level:
    """One coarsening level: adjacency with weights plus the projection map."""

    adj: list[dict[int, int]]  # neighbor -> edge weight
    vertex_weight: list[int]
    coarse_of: list[int] = field(default_factory=list)  # finer id -> coarse id


def _heavy_edge_matching(adj: list[dict[int, int]]) -> list[int]:
    """Greedy matching preferring heavy edges; returns mate (or self) per vertex."""
    n = len(adj)
    mate = list(range(n))
    matched = [False] * n
    order = sorted(range(n), key=lambda v: len(adj[v]))
    for v in order:
        if matched[v]:
            continue
        best, best_w = -1, -1
        for u, w in adj[v].items():
            if not matched[u] and u != v and (w > best_w or (w == best_w and u < best)):
                best, best_w = u, w
        if best >= 0:
            mate[v] = best
            mate[best] = v
            matched[v] = True
            matched[best] = True
    return mate


def _coarsen(level: _Level) -> _Level:
    adj = level.adj
    n = len(adj)
    mate = _heavy_edge_matching(adj)
    coarse_id = [-1] * n
    count = 0
    for v in range(n):
        if coarse_id[v] < 0:
            coarse_id[v] = count
            if mate[v] != v:
                coarse_id[mate[v]] = count
            count += 1
    coarse_adj: list[dict[int, int]] = [dict() for _ in range(count)]
    coarse_weight = [0] * count
    for v in range(n):
        cv = coarse_id[v]
        coarse_weight[cv] += level.vertex_weight[v]
        for u, w in adj[v].items():
            cu = coarse_id[u]
            if cu != cv:
                coarse_adj[cv][cu] = coarse_adj[cv].get(cu, 0) + w
    level.coarse_of = coarse_id
    return _Level(adj=coarse_adj, vertex_weight=coarse_weight)


def _region_grow(level: _Level, m: int) -> list[int]:
    """Split a level into m parts by BFS region growing on vertex weight."""
    adj = level.adj
    weights = level.vertex_weight
    n = len(adj)
    total = sum(weights)
    assign = [-1] * n
    remaining_w = total
    unassigned = n
    for part in range(m):
        if unassigned == 0:
            break
        parts_left = m - part
        budget = math.ceil(remaining_w / parts_left)
        seed = min(v for v in range(n) if assign[v] < 0)
        queue = deque([seed])
        size = 0
        reserve = parts_left - 1  # leave at least one vertex per later part
        while queue and size < budget and unassigned > reserve:
            v = queue.popleft()
            if assign[v] >= 0:
                continue
            assign[v] = part
            size += weights[v]
            unassigned -= 1
            remaining_w -= weights[v]
            for u in sorted(adj[v]):
                if assign[u] < 0:
                    queue.append(u)
            if not queue and size < budget and unassigned > reserve:
                queue.append(min(v for v in range(n) if assign[v] < 0))
    for v in range(n):
        if assign[v] < 0:
            assign[v] = m - 1
    return assign


def _refine(level: _Level, assign: list[int], m: int, max_weight: int, passes: int = 4) -> None:
    """Boundary Kernighan-Lin style passes: greedy positive-gain moves."""
    adj = level.adj
    weights = level.vertex_weight
    part_weight = [0] * m
    for v, p in enumerate(assign):
        part_weight[p] += weights[v]
    for _ in range(passes):
        moved = 0
        for v in range(len(adj)):
            p = assign[v]
            if part_weight[p] - weights[v] <= 0:
                continue
            link: dict[int, int] = {}
            for u, w in adj[v].items():
                link[assign[u]] = link.get(assign[u], 0) + w
            internal = link.get(p, 0)
            best_part, best_gain = p, 0
            for q in sorted(link):
                if q == p or part_weight[q] + weights[v] > max_weight:
                    continue
                gain = link[q] - internal
                if gain > best_gain:
                    best_part, best_gain = q, gain
            if best_part != p:
                part_weight[p] -= weights[v]
                part_weight[best_part] += weights[v]
                assign[v] = best_part
                moved += 1
        if moved == 0:
            break


def partition(g: DataGraph, target_size: int) -> list[Partition]:
    """Split the graph into ceil(|V| / target_size) balanced min-cut parts.

    Multilevel scheme: coarsen by heavy-edge matching, split the coarsest
    graph by BFS region growing, then project back, refining with boundary
    Kernighan-Lin passes at every level. Deterministic for a fixed graph.
    """
    if target_size < 1:
        raise ValueError("target_size must be >= 1")
    n = g.vertex_count
    m = max(1, math.ceil(n / target_size))
    if m == 1:
        return [Partition(0, frozenset(range(n)), ())]
    levels = [
        _Level(
            adj=[{u: 1 for u in g.adjacency[v]} for v in range(n)],
            vertex_weight=[1] * n,
        )
    ]
    while len(levels[-1].adj) > max(8 * m, 64):
        nxt = _coarsen(levels[-1])
        if len(nxt.adj) >= len(levels[-1].adj):
            break
        levels.append(nxt)
    max_weight = 2 * target_size
    assign = _region_grow(levels[-1], m)
    _refine(levels[-1], assign, m, max_weight)
    for level_idx in range(len(levels) - 2, -1, -1):
        finer = levels[level_idx]
        assign = [assign[finer.coarse_of[v]] for v in range(len(finer.adj))]
        _refine(finer, assign, m, max_weight)
    cores: list[set[int]] = [set() for _ in range(m)]
    for v, p in enumerate(assign):
        cores[p].add(v)
    parts = []
    for pid in range(m):
        cut = tuple(
            (u, v)
            for u in sorted(cores[pid])
            for v in g.adjacency[u]
            if v not in cores[pid]
        )
        parts.append(Partition(pid, frozenset(cores[pid]), cut))
    return parts


def expand(g: DataGraph, p: Partition, hops: int) -> ExpandedPartition:
    """Add every vertex within ``hops`` of the core, so all anchored paths
    of that length stay inside the expanded vertex set."""
    frontier = set(p.core_vertices)
    reached = set(p.core_vertices)
    for _ in range(hops):
        nxt: set[int] = set()
        for v in frontier:
            for u in g.adjacency[v]:
                if u not in reached:
                    reached.add(u)
                    nxt.add(u)
        frontier = nxt
        if not frontier:
            break
    return ExpandedPartition(
        id=p.id,
        core_vertices=p.core_vertices,
        halo_vertices=frozenset(reached - p.core_vertices),
        hops=hops,
    )


def format_assignment(parts: list[Partition]) -> str:
    """`<vertex-id> <partition-id>` lines, vertex order."""
    owner: dict[int, int] = {}
    for p in parts:
        for v in p.core_vertices:
            owner[v] = p.id
    return "\n".join(f"{v} {owner[v]}" for v in sorted(owner)) + "\n"


def parse_assignment(text: str, g: DataGraph) -> list[Partition]:
    """Rebuild partitions from `<vertex-id> <partition-id>` lines."""
    owner: dict[int, int] = {}
    for ln in text.splitlines():
        if not ln.strip():
            continue
        v_s, p_s = ln.split()
        owner[int(v_s)] = int(p_s)
    if sorted(owner) != list(range(g.vertex_count)):
        raise ValueError("assignment does not cover the vertex set exactly")
    m = max(owner.values()) + 1
    cores: list[set[int]] = [set() for _ in range(m)]
    for v, p in owner.items():
        cores[p].add(v)
    parts = []
    for pid in range(m):
        cut = tuple(
            (u, v)
            for u in sorted(cores[pid])
            for v in g.adjacency[u]
            if v not in cores[pid]
        )
        parts.append(Partition(pid, frozenset(cores[pid]), cut))
    return parts
