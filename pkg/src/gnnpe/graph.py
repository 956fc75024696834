"""Labeled undirected graph model, parsing, stars, paths, and query sampling."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence


class GraphFormatError(ValueError):
    """Raised when a graph file violates the expected text format."""


class SamplingError(RuntimeError):
    """Raised when query-graph sampling exhausts its restart budget."""


class DataGraph:
    """Undirected vertex-labeled graph with sorted adjacency lists.

    Vertices are 0..n-1, labels are integers in [1, label_domain_size].
    Instances are immutable after construction and safe to share across
    threads.
    """

    __slots__ = ("vertex_count", "adjacency", "labels", "label_domain_size")

    def __init__(
        self,
        adjacency: Sequence[Sequence[int]],
        labels: Sequence[int],
        label_domain_size: int | None = None,
    ):
        n = len(adjacency)
        if len(labels) != n:
            raise ValueError("labels and adjacency must have equal length")
        adj: list[tuple[int, ...]] = []
        for v, nbrs in enumerate(adjacency):
            seen = sorted(set(nbrs))
            if v in seen:
                raise ValueError(f"self-loop at vertex {v}")
            for u in seen:
                if not 0 <= u < n:
                    raise ValueError(f"neighbor {u} of vertex {v} out of range")
            adj.append(tuple(seen))
        for v, nbrs in enumerate(adj):
            for u in nbrs:
                if v not in adj[u]:
                    raise ValueError(f"asymmetric edge ({v}, {u})")
        domain = max(labels, default=0) if label_domain_size is None else label_domain_size
        for v, lab in enumerate(labels):
            if not 1 <= lab <= domain:
                raise ValueError(f"label {lab} of vertex {v} outside [1, {domain}]")
        self.adjacency = tuple(adj)
        self.labels = tuple(int(x) for x in labels)
        self.vertex_count = n
        self.label_domain_size = domain

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def has_edge(self, u: int, v: int) -> bool:
        nbrs = self.adjacency[u]
        lo, hi = 0, len(nbrs)
        while lo < hi:
            mid = (lo + hi) // 2
            if nbrs[mid] < v:
                lo = mid + 1
            else:
                hi = mid
        return lo < len(nbrs) and nbrs[lo] == v

    @property
    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def edges(self) -> Iterator[tuple[int, int]]:
        for u, nbrs in enumerate(self.adjacency):
            for v in nbrs:
                if u < v:
                    yield (u, v)

    def is_connected(self) -> bool:
        if self.vertex_count == 0:
            return True
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for u in self.adjacency[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return len(seen) == self.vertex_count


class QueryGraph(DataGraph):
    """A connected pattern graph; same representation as :class:`DataGraph`."""

    def __init__(self, adjacency, labels, label_domain_size=None):
        super().__init__(adjacency, labels, label_domain_size)
        if self.vertex_count < 1:
            raise ValueError("query graph needs at least one vertex")
        if not self.is_connected():
            raise ValueError("query graph must be connected")


@dataclass(frozen=True)
class StarGraph:
    """A center vertex with all of its 1-hop neighbors."""

    center: int
    center_label: int
    neighbors: tuple[tuple[int, int], ...]  # (vertex-id, label), sorted by id

    @property
    def degree(self) -> int:
        return len(self.neighbors)


@dataclass(frozen=True)
class StarSubstructure:
    """The center of a star plus a subset of its neighbors (possibly empty)."""

    center: int
    center_label: int
    neighbors: tuple[tuple[int, int], ...]

    @property
    def degree(self) -> int:
        return len(self.neighbors)


def parse_graph(text: str) -> DataGraph:
    """Parse the `t/v/e` graph format into a validated :class:`DataGraph`.

    Line 1 is ``t |V| |E|``, then one ``v <id> <label> <degree>`` line per
    vertex and one ``e <u> <v>`` line per edge.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise GraphFormatError("empty graph file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "t":
        raise GraphFormatError(f"bad header line: {lines[0]!r}")
    try:
        n, m = int(head[1]), int(head[2])
    except ValueError as exc:
        raise GraphFormatError(f"bad header counts: {lines[0]!r}") from exc
    if len(lines) != 1 + n + m:
        raise GraphFormatError(
            f"expected {1 + n + m} lines for |V|={n}, |E|={m}, got {len(lines)}"
        )
    labels = [0] * n
    declared_deg = [0] * n
    seen_vertex = [False] * n
    for ln in lines[1 : 1 + n]:
        parts = ln.split()
        if len(parts) != 4 or parts[0] != "v":
            raise GraphFormatError(f"bad vertex line: {ln!r}")
        try:
            vid, lab, deg = int(parts[1]), int(parts[2]), int(parts[3])
        except ValueError as exc:
            raise GraphFormatError(f"bad vertex line: {ln!r}") from exc
        if not 0 <= vid < n:
            raise GraphFormatError(f"vertex id {vid} out of range")
        if seen_vertex[vid]:
            raise GraphFormatError(f"duplicate vertex id {vid}")
        if lab < 1:
            raise GraphFormatError(f"label {lab} of vertex {vid} must be >= 1")
        seen_vertex[vid] = True
        labels[vid] = lab
        declared_deg[vid] = deg
    edges: set[tuple[int, int]] = set()
    for ln in lines[1 + n :]:
        parts = ln.split()
        if len(parts) != 3 or parts[0] != "e":
            raise GraphFormatError(f"bad edge line: {ln!r}")
        try:
            u, v = int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise GraphFormatError(f"bad edge line: {ln!r}") from exc
        if u == v:
            raise GraphFormatError(f"self-loop at vertex {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(f"dangling vertex id in edge ({u}, {v})")
        edges.add((min(u, v), max(u, v)))
    if len(edges) != m:
        raise GraphFormatError(f"declared |E|={m} but found {len(edges)} distinct edges")
    adjacency: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adjacency[u].append(v)
        adjacency[v].append(u)
    graph = DataGraph(adjacency, labels)
    for v in range(n):
        if graph.degree(v) != declared_deg[v]:
            raise GraphFormatError(
                f"vertex {v} declares degree {declared_deg[v]} but has {graph.degree(v)}"
            )
    return graph


def format_graph(g: DataGraph) -> str:
    """Serialize a graph in the exact format accepted by :func:`parse_graph`."""
    out = [f"t {g.vertex_count} {g.edge_count}"]
    for v in range(g.vertex_count):
        out.append(f"v {v} {g.labels[v]} {g.degree(v)}")
    for u, v in g.edges():
        out.append(f"e {u} {v}")
    return "\n".join(out) + "\n"


def extract_unit_star(g: DataGraph, v: int) -> StarGraph:
    """The unit star of ``v``: the center plus all of its 1-hop neighbors."""
    if not 0 <= v < g.vertex_count:
        raise IndexError(f"vertex id {v} out of range")
    nbrs = tuple((u, g.labels[u]) for u in g.adjacency[v])
    return StarGraph(center=v, center_label=g.labels[v], neighbors=nbrs)


def enumerate_substructures(
    star: StarGraph, max_degree: int | None = None
) -> Iterator[StarSubstructure]:
    """All 2^deg neighbor subsets of a star, in increasing-bitmask order.

    Bit i of the mask selects the i-th neighbor in vertex-id order, so the
    sequence starts with the isolated center and ends with the full star.
    Raises if the star degree exceeds ``max_degree``; such vertices must use
    the all-ones embedding fallback instead of enumeration.
    """
    nbrs = star.neighbors
    if max_degree is not None and len(nbrs) > max_degree:
        raise ValueError(
            f"star degree {len(nbrs)} exceeds enumeration cutoff {max_degree}"
        )
    for mask in range(1 << len(nbrs)):
        subset = tuple(nbrs[i] for i in range(len(nbrs)) if mask >> i & 1)
        yield StarSubstructure(star.center, star.center_label, subset)


def enumerate_paths(g: DataGraph, anchors: Iterable[int], length: int) -> list[tuple[int, ...]]:
    """All directed simple paths of the given length whose first vertex is an anchor.

    A path of length ``l`` visits ``l + 1`` distinct vertices; both
    orientations of a vertex sequence are distinct paths. ``length == 0``
    yields one single-vertex path per anchor.
    """
    if length < 0:
        raise ValueError("path length must be >= 0")
    result: list[tuple[int, ...]] = []
    stack: list[int] = []
    on_path: set[int] = set()

    def extend(v: int) -> None:
        stack.append(v)
        on_path.add(v)
        if len(stack) == length + 1:
            result.append(tuple(stack))
        else:
            for u in g.adjacency[v]:
                if u not in on_path:
                    extend(u)
        on_path.discard(v)
        stack.pop()

    for a in sorted(set(anchors)):
        if not 0 <= a < g.vertex_count:
            raise IndexError(f"anchor {a} out of range")
        extend(a)
    return result


def label_permutation(domain_size: int, seed: int) -> tuple[int, ...]:
    """A seeded permutation of [1, domain_size]; seed 0 is the identity.

    Index i holds the image of label i+1.
    """
    values = list(range(1, domain_size + 1))
    if seed != 0:
        random.Random(seed).shuffle(values)
    return tuple(values)


def randomize_labels(g: DataGraph, seed: int) -> DataGraph:
    """Remap every vertex label through a seeded permutation of the domain.

    Equal labels stay equal and distinct labels stay distinct, so the
    vertex partition induced by labels is preserved.
    """
    perm = label_permutation(g.label_domain_size, seed)
    new_labels = [perm[lab - 1] for lab in g.labels]
    out = DataGraph.__new__(DataGraph)
    out.adjacency = g.adjacency
    out.labels = tuple(new_labels)
    out.vertex_count = g.vertex_count
    out.label_domain_size = g.label_domain_size
    return out


def _bridges(adjacency: dict[int, set[int]]) -> set[frozenset[int]]:
    """Bridge edges of an undirected graph given as a dict of neighbor sets."""
    order: dict[int, int] = {}
    low: dict[int, int] = {}
    bridges: set[frozenset[int]] = set()
    counter = 0
    for root in adjacency:
        if root in order:
            continue
        stack: list[tuple[int, int | None, Iterator[int]]] = [(root, None, iter(adjacency[root]))]
        order[root] = low[root] = counter
        counter += 1
        while stack:
            v, parent, it = stack[-1]
            advanced = False
            for u in it:
                if u == parent:
                    continue
                if u in order:
                    low[v] = min(low[v], order[u])
                else:
                    order[u] = low[u] = counter
                    counter += 1
                    stack.append((u, v, iter(adjacency[u])))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                if stack:
                    p = stack[-1][0]
                    low[p] = min(low[p], low[v])
                    if low[v] > order[p]:
                        bridges.add(frozenset((p, v)))
    return bridges


def sample_query_graph(
    g: DataGraph,
    n_q: int,
    avg_deg_q: float,
    seed: int,
    max_restarts: int = 100,
) -> QueryGraph:
    """Sample a connected query graph by random walk plus edge thinning.

    Walks the data graph until ``n_q`` distinct vertices are collected and
    takes their induced subgraph. If the induced average degree reaches the
    target, non-bridge edges are deleted at random until the edge count
    matches ``n_q * avg_deg_q / 2`` (rounded); otherwise the walk restarts
    from a fresh vertex, up to ``max_restarts`` times.
    """
    if n_q < 2:
        raise ValueError("n_q must be >= 2")
    if g.vertex_count < n_q:
        raise SamplingError(f"graph has only {g.vertex_count} vertices, need {n_q}")
    rng = random.Random(seed)
    target_edges = round(n_q * avg_deg_q / 2)
    for _ in range(max_restarts):
        start = rng.randrange(g.vertex_count)
        if not g.adjacency[start]:
            continue
        visited: list[int] = [start]
        visited_set = {start}
        current = start
        budget = 200 * n_q
        while len(visited) < n_q and budget > 0:
            budget -= 1
            nxt = rng.choice(g.adjacency[current])
            if nxt not in visited_set:
                visited_set.add(nxt)
                visited.append(nxt)
            current = nxt
        if len(visited) < n_q:
            continue
        vmap = {v: i for i, v in enumerate(visited)}
        adj: dict[int, set[int]] = {i: set() for i in range(n_q)}
        for v in visited:
            for u in g.adjacency[v]:
                if u in visited_set:
                    adj[vmap[v]].add(vmap[u])
        edge_cnt = sum(len(s) for s in adj.values()) // 2
        if 2 * edge_cnt / n_q < avg_deg_q:
            continue
        while edge_cnt > target_edges:
            bridges = _bridges(adj)
            deletable = [
                (u, v)
                for u in adj
                for v in adj[u]
                if u < v and frozenset((u, v)) not in bridges
            ]
            if not deletable:
                break
            u, v = deletable[rng.randrange(len(deletable))]
            adj[u].discard(v)
            adj[v].discard(u)
            edge_cnt -= 1
        if edge_cnt > target_edges:
            continue
        labels = [g.labels[v] for v in visited]
        return QueryGraph([sorted(adj[i]) for i in range(n_q)], labels, g.label_domain_size)
    raise SamplingError(
        f"no walk produced a query with {n_q} vertices and average degree {avg_deg_q} "
        f"after {max_restarts} restarts"
    )
