"""Path embedding records and the aggregate R*-tree over them.

Every indexed path carries three families of vectors: the primary embedding,
one embedding per auxiliary model, and the label embedding. Tree nodes
aggregate a bounding box per family; retrieval prunes a subtree when the
query's label vector falls outside the label box or when the query embedding
fails to dominate the upper corner of a dominance box.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .embedder import TrainedEmbedder
from .graph import DataGraph

MAX_FANOUT = 64
MIN_FILL = 0.4
REINSERT_FRACTION = 0.3


def dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """Component-wise a <= b over equal-length vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return bool((a <= b).all())


def path_vector(per_vertex: list[np.ndarray]) -> np.ndarray:
    """Concatenate per-vertex embeddings in path order."""
    return np.concatenate([np.asarray(v, dtype=np.float64) for v in per_vertex])


@dataclass(frozen=True)
class PathRecord:
    """One indexed path with its three embedding families."""

    path: tuple[int, ...]
    partition_id: int
    primary: np.ndarray  # ((l+1)*d,)
    aux: tuple[np.ndarray, ...]  # n vectors of the same shape
    label: np.ndarray


@dataclass(frozen=True)
class QueryPathRecord:
    """A query path embedded with one partition's models."""

    path: tuple[int, ...]  # query vertex ids
    primary: np.ndarray
    aux: tuple[np.ndarray, ...]
    label: np.ndarray

    @property
    def l1(self) -> float:
        return float(self.primary.sum())


class PathRecords:
    """Column-stacked record storage for one partition and one path length."""

    def __init__(
        self,
        partition_id: int,
        path_length: int,
        paths: np.ndarray,
        primary: np.ndarray,
        aux: np.ndarray,
        label: np.ndarray,
    ):
        self.partition_id = partition_id
        self.path_length = path_length
        self.paths = paths  # (N, l+1) int64
        self.primary = primary  # (N, D)
        self.aux = aux  # (n_aux, N, D)
        self.label = label  # (N, D)

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def dims(self) -> int:
        return self.primary.shape[1]

    @property
    def aux_count(self) -> int:
        return self.aux.shape[0]

    def record(self, i: int) -> PathRecord:
        return PathRecord(
            path=tuple(int(v) for v in self.paths[i]),
            partition_id=self.partition_id,
            primary=self.primary[i],
            aux=tuple(self.aux[k, i] for k in range(self.aux_count)),
            label=self.label[i],
        )


def build_path_records(
    g: DataGraph,
    embedder: TrainedEmbedder,
    paths: list[tuple[int, ...]],
    path_length: int,
) -> PathRecords:
    """Assemble record matrices by gathering per-vertex cached embeddings."""
    d = embedder.config.embed_dim
    n_aux = embedder.aux_count
    n = len(paths)
    width = (path_length + 1) * d
    path_arr = np.asarray(paths, dtype=np.int64).reshape(n, path_length + 1)
    row_lookup = np.full(g.vertex_count, -1, dtype=np.int64)
    for row, v in enumerate(embedder.vertex_ids):
        row_lookup[v] = row
    rows = row_lookup[path_arr]
    if (rows < 0).any():
        raise ValueError("path visits a vertex outside the embedded partition")
    primary = embedder.vertex_emb[0][rows].reshape(n, width)
    aux = np.empty((n_aux, n, width))
    for k in range(n_aux):
        aux[k] = embedder.vertex_emb[k + 1][rows].reshape(n, width)
    labels = np.asarray(g.labels, dtype=np.int64)[path_arr]
    label = embedder.label_emb[labels].reshape(n, width)
    return PathRecords(embedder.partition_id, path_length, path_arr, primary, aux, label)


def make_path_record(
    g: DataGraph, embedder: TrainedEmbedder, path: tuple[int, ...]
) -> PathRecord:
    """Record for a single data path, concatenating cached vertex embeddings."""
    primary = path_vector([embedder.vertex_embedding(v, 0) for v in path])
    aux = tuple(
        path_vector([embedder.vertex_embedding(v, k + 1) for v in path])
        for k in range(embedder.aux_count)
    )
    label = path_vector([embedder.label_embedding(g.labels[v]) for v in path])
    return PathRecord(tuple(path), embedder.partition_id, primary, aux, label)


# ---------------------------------------------------------------------------
# aggregate R*-tree


class _Node:
    __slots__ = (
        "id",
        "level",
        "children",
        "records",
        "parent",
        "p_lo",
        "p_hi",
        "a_lo",
        "a_hi",
        "l_lo",
        "l_hi",
    )

    def __init__(self, node_id: int, level: int):
        self.id = node_id
        self.level = level  # 0 = leaf
        self.children: list["_Node"] = []
        self.records: list[int] = []
        self.parent: "_Node | None" = None
        self.p_lo = self.p_hi = None
        self.a_lo = self.a_hi = None
        self.l_lo = self.l_hi = None

    @property
    def is_leaf(self) -> bool:
        return self.level == 0

    def entries(self):
        return self.records if self.is_leaf else self.children


class ARTree:
    """R*-tree with repeated insertion, forced reinsert, and three aggregate
    bounding-box families on every node."""

    def __init__(
        self,
        records: PathRecords,
        max_fanout: int = MAX_FANOUT,
        min_fill: float = MIN_FILL,
    ):
        if max_fanout < 4:
            raise ValueError("max_fanout must be >= 4")
        self.records = records
        self.max_fanout = max_fanout
        self.min_entries = max(2, int(min_fill * max_fanout))
        self._next_id = 0
        self.root = self._new_node(level=0)
        self._reinserted_levels: set[int] = set()
        for rid in range(len(records)):
            self.insert(rid)

    def _new_node(self, level: int) -> _Node:
        node = _Node(self._next_id, level)
        self._next_id += 1
        return node

    # -- bounds helpers ------------------------------------------------

    def _record_bounds(self, rid: int):
        r = self.records
        return (r.primary[rid], r.primary[rid], r.aux[:, rid], r.aux[:, rid], r.label[rid], r.label[rid])

    def _entry_bounds(self, node: _Node, entry):
        if node.is_leaf:
            return self._record_bounds(entry)
        return (entry.p_lo, entry.p_hi, entry.a_lo, entry.a_hi, entry.l_lo, entry.l_hi)

    def _recompute_bounds(self, node: _Node) -> None:
        parts = [self._entry_bounds(node, e) for e in node.entries()]
        if not parts:
            node.p_lo = node.p_hi = node.a_lo = node.a_hi = node.l_lo = node.l_hi = None
            return
        node.p_lo = np.minimum.reduce([p[0] for p in parts])
        node.p_hi = np.maximum.reduce([p[1] for p in parts])
        node.a_lo = np.minimum.reduce([p[2] for p in parts])
        node.a_hi = np.maximum.reduce([p[3] for p in parts])
        node.l_lo = np.minimum.reduce([p[4] for p in parts])
        node.l_hi = np.maximum.reduce([p[5] for p in parts])

    def _extend_bounds(self, node: _Node, bounds) -> None:
        p_lo, p_hi, a_lo, a_hi, l_lo, l_hi = bounds
        if node.p_lo is None:
            node.p_lo, node.p_hi = p_lo.copy(), p_hi.copy()
            node.a_lo, node.a_hi = a_lo.copy(), a_hi.copy()
            node.l_lo, node.l_hi = l_lo.copy(), l_hi.copy()
            return
        np.minimum(node.p_lo, p_lo, out=node.p_lo)
        np.maximum(node.p_hi, p_hi, out=node.p_hi)
        np.minimum(node.a_lo, a_lo, out=node.a_lo)
        np.maximum(node.a_hi, a_hi, out=node.a_hi)
        np.minimum(node.l_lo, l_lo, out=node.l_lo)
        np.maximum(node.l_hi, l_hi, out=node.l_hi)

    def _recompute_upward(self, node: _Node | None) -> None:
        while node is not None:
            self._recompute_bounds(node)
            node = node.parent

    # -- insertion ------------------------------------------------------

    def insert(self, rid: int) -> None:
        self._reinserted_levels = set()
        self._insert_entry(rid, level=0)

    def _insert_entry(self, entry, level: int) -> None:
        node = self._choose_subtree(entry, level)
        bounds = self._entry_bounds(node, entry)
        if node.is_leaf:
            node.records.append(entry)
        else:
            entry.parent = node
            node.children.append(entry)
        self._extend_bounds(node, bounds)
        up = node.parent
        while up is not None:
            self._extend_bounds(up, bounds)
            up = up.parent
        if len(node.entries()) > self.max_fanout:
            self._overflow(node)

    def _choose_subtree(self, entry, level: int) -> _Node:
        node = self.root
        while node.level > level:
            if node.level == level + 1 and level == 0:
                child = self._least_overlap_child(node, entry)
            else:
                child = self._least_area_child(node, entry)
            node = child
        return node

    def _least_area_child(self, node: _Node, entry) -> _Node:
        p_lo, p_hi, *_ = self._entry_bounds(node, entry)
        best = None
        best_key = None
        for child in node.children:
            lo = np.minimum(child.p_lo, p_lo)
            hi = np.maximum(child.p_hi, p_hi)
            area = float(np.prod(hi - lo))
            old_area = float(np.prod(child.p_hi - child.p_lo))
            key = (area - old_area, old_area, child.id)
            if best_key is None or key < best_key:
                best, best_key = child, key
        return best

    def _least_overlap_child(self, node: _Node, entry) -> _Node:
        bounds = self._entry_bounds(node, entry)
        p_lo, p_hi = bounds[0], bounds[1]
        kids = node.children
        los = np.stack([c.p_lo for c in kids])
        his = np.stack([c.p_hi for c in kids])
        new_los = np.minimum(los, p_lo)
        new_his = np.maximum(his, p_hi)
        best = None
        best_key = None
        for i, child in enumerate(kids):
            overlap = 0.0
            for j in range(len(kids)):
                if j == i:
                    continue
                inter_lo = np.maximum(new_los[i], los[j])
                inter_hi = np.minimum(new_his[i], his[j])
                ext = np.clip(inter_hi - inter_lo, 0.0, None)
                overlap += float(np.prod(ext))
                old_lo = np.maximum(los[i], los[j])
                old_hi = np.minimum(his[i], his[j])
                overlap -= float(np.prod(np.clip(old_hi - old_lo, 0.0, None)))
            area = float(np.prod(new_his[i] - new_los[i]))
            old_area = float(np.prod(his[i] - los[i]))
            key = (overlap, area - old_area, old_area, child.id)
            if best_key is None or key < best_key:
                best, best_key = child, key
        return best

    def _overflow(self, node: _Node) -> None:
        if node is not self.root and node.level not in self._reinserted_levels:
            self._reinserted_levels.add(node.level)
            self._forced_reinsert(node)
        else:
            self._split(node)

    def _forced_reinsert(self, node: _Node) -> None:
        center = (node.p_lo + node.p_hi) / 2.0
        scored = []
        for pos, entry in enumerate(node.entries()):
            lo, hi, *_ = self._entry_bounds(node, entry)
            e_center = (lo + hi) / 2.0
            dist = float(((e_center - center) ** 2).sum())
            scored.append((dist, pos, entry))
        scored.sort(key=lambda t: (-t[0], t[1]))
        count = max(1, int(REINSERT_FRACTION * self.max_fanout))
        removed = scored[:count]
        removed_pos = {pos for _, pos, _ in removed}
        if node.is_leaf:
            node.records = [e for i, e in enumerate(node.records) if i not in removed_pos]
        else:
            node.children = [c for i, c in enumerate(node.children) if i not in removed_pos]
        self._recompute_upward(node)
        # close reinsert: nearest of the removed entries goes back first
        for _, _, entry in sorted(removed, key=lambda t: (t[0], t[1])):
            self._insert_entry(entry, node.level)

    def _split(self, node: _Node) -> None:
        entries = list(node.entries())
        bounds = [self._entry_bounds(node, e) for e in entries]
        los = np.stack([b[0] for b in bounds])
        his = np.stack([b[1] for b in bounds])
        total = len(entries)
        m = self.min_entries
        dims = los.shape[1]
        best_axis, best_axis_margin = 0, None
        orders = {}
        for axis in range(dims):
            by_lo = np.lexsort((his[:, axis], los[:, axis]))
            by_hi = np.lexsort((los[:, axis], his[:, axis]))
            margin = 0.0
            for order in (by_lo, by_hi):
                for k in range(m, total - m + 1):
                    left, right = order[:k], order[k:]
                    margin += self._margin(los[left], his[left])
                    margin += self._margin(los[right], his[right])
            orders[axis] = (by_lo, by_hi)
            if best_axis_margin is None or margin < best_axis_margin:
                best_axis, best_axis_margin = axis, margin
        by_lo, by_hi = orders[best_axis]
        best_key, best_split = None, None
        for order in (by_lo, by_hi):
            for k in range(m, total - m + 1):
                left, right = order[:k], order[k:]
                l_lo, l_hi = los[left].min(0), his[left].max(0)
                r_lo, r_hi = los[right].min(0), his[right].max(0)
                inter = np.clip(np.minimum(l_hi, r_hi) - np.maximum(l_lo, r_lo), 0.0, None)
                overlap = float(np.prod(inter))
                area = float(np.prod(l_hi - l_lo)) + float(np.prod(r_hi - r_lo))
                key = (overlap, area)
                if best_key is None or key < best_key:
                    best_key = key
                    best_split = (order[:k].copy(), order[k:].copy())
        left_idx, right_idx = best_split
        sibling = self._new_node(node.level)
        if node.is_leaf:
            all_records = node.records
            node.records = [all_records[i] for i in left_idx]
            sibling.records = [all_records[i] for i in right_idx]
        else:
            all_children = node.children
            node.children = [all_children[i] for i in left_idx]
            sibling.children = [all_children[i] for i in right_idx]
            for c in sibling.children:
                c.parent = sibling
        self._recompute_bounds(node)
        self._recompute_bounds(sibling)
        if node is self.root:
            new_root = self._new_node(node.level + 1)
            new_root.children = [node, sibling]
            node.parent = new_root
            sibling.parent = new_root
            self._recompute_bounds(new_root)
            self.root = new_root
            return
        parent = node.parent
        sibling.parent = parent
        parent.children.append(sibling)
        self._recompute_upward(parent)
        if len(parent.children) > self.max_fanout:
            self._overflow(parent)

    @staticmethod
    def _margin(los: np.ndarray, his: np.ndarray) -> float:
        return float((his.max(0) - los.min(0)).sum())

    # -- integrity ------------------------------------------------------

    def audit(self) -> None:
        """Verify every node's three bound families against a full subtree
        scan and the fanout limits; raises AssertionError on any violation."""
        seen: set[int] = set()

        def walk(node: _Node) -> tuple:
            if node is not self.root:
                assert self.min_entries <= len(node.entries()) <= self.max_fanout
            elif not node.is_leaf:
                assert len(node.children) >= 2
            if node.is_leaf:
                ids = list(node.records)
                assert not (set(ids) & seen)
                seen.update(ids)
                r = self.records
                exp = (
                    r.primary[ids].min(0),
                    r.primary[ids].max(0),
                    r.aux[:, ids].min(1),
                    r.aux[:, ids].max(1),
                    r.label[ids].min(0),
                    r.label[ids].max(0),
                )
            else:
                parts = [walk(c) for c in node.children]
                for c in node.children:
                    assert c.parent is node and c.level == node.level - 1
                exp = (
                    np.minimum.reduce([p[0] for p in parts]),
                    np.maximum.reduce([p[1] for p in parts]),
                    np.minimum.reduce([p[2] for p in parts]),
                    np.maximum.reduce([p[3] for p in parts]),
                    np.minimum.reduce([p[4] for p in parts]),
                    np.maximum.reduce([p[5] for p in parts]),
                )
            got = (node.p_lo, node.p_hi, node.a_lo, node.a_hi, node.l_lo, node.l_hi)
            for g_arr, e_arr in zip(got, exp):
                assert np.array_equal(g_arr, e_arr)
            return exp

        if len(self.records) > 0:
            walk(self.root)
            assert seen == set(range(len(self.records)))


# ---------------------------------------------------------------------------
# retrieval


def linear_scan_candidates(records: PathRecords, qr: QueryPathRecord) -> list[int]:
    """Reference filter: label vectors bit-equal and the query embedding
    dominates the record under the primary and every auxiliary model."""
    if len(records) == 0:
        return []
    mask = (records.label == qr.label).all(axis=1)
    mask &= (records.primary >= qr.primary).all(axis=1)
    for k in range(records.aux_count):
        mask &= (records.aux[k] >= qr.aux[k]).all(axis=1)
    return np.nonzero(mask)[0].tolist()


def traverse(tree: ARTree, queries: list[QueryPathRecord]) -> list[list[int]]:
    """One best-first pass of the index shared by all query paths.

    Nodes are visited from a max-heap keyed by the L1 norm of the primary
    box's upper corner; once the key drops below the smallest query norm no
    remaining record can be dominated by any query, so the walk stops. Each
    heap entry carries the query subset that survived its parent's checks.
    """
    results: list[list[int]] = [[] for _ in queries]
    if len(tree.records) == 0 or not queries:
        return results
    records = tree.records
    min_norm = min(q.l1 for q in queries)
    root = tree.root
    heap: list[tuple[float, int, _Node, list[int]]] = []
    root_key = float(root.p_hi.sum())
    heapq.heappush(heap, (-root_key, root.id, root, list(range(len(queries)))))
    while heap:
        neg_key, _, node, qlist = heapq.heappop(heap)
        if -neg_key < min_norm:
            break
        if node.is_leaf:
            ids = np.array(node.records, dtype=np.int64)
            for qi in qlist:
                q = queries[qi]
                mask = (records.label[ids] == q.label).all(axis=1)
                mask &= (records.primary[ids] >= q.primary).all(axis=1)
                for k in range(records.aux_count):
                    mask &= (records.aux[k][ids] >= q.aux[k]).all(axis=1)
                results[qi].extend(int(r) for r in ids[mask])
        else:
            for child in node.children:
                passed = [
                    qi
                    for qi in qlist
                    if _label_in_box(queries[qi].label, child.l_lo, child.l_hi)
                    and _dominance_overlap(queries[qi], child)
                ]
                if passed:
                    key = float(child.p_hi.sum())
                    heapq.heappush(heap, (-key, child.id, child, passed))
    return results


def _label_in_box(label_vec: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> bool:
    return bool(((label_vec >= lo) & (label_vec <= hi)).all())


def _dominance_overlap(q: QueryPathRecord, node: _Node) -> bool:
    """The dominating region of the query meets a box iff the query vector is
    component-wise <= the box's upper corner, for every embedding family."""
    if not (q.primary <= node.p_hi).all():
        return False
    for k in range(len(q.aux)):
        if not (q.aux[k] <= node.a_hi[k]).all():
            return False
    return True


# ---------------------------------------------------------------------------
# persistence


def index_to_text(tree: ARTree) -> str:
    """Structure-only serialization; vectors are rebuilt from the embedder."""
    r = tree.records
    lines = ["gnnpe-index 1"]
    lines.append(
        f"partition {r.partition_id} length {r.path_length} dims {r.dims} "
        f"aux {r.aux_count} records {len(r)} fanout {tree.max_fanout}"
    )
    for i in range(len(r)):
        lines.append("p " + " ".join(str(v) for v in r.paths[i]))
    nodes: list[_Node] = []

    def collect(node: _Node) -> None:
        nodes.append(node)
        for c in node.children:
            collect(c)

    collect(tree.root)
    lines.append(f"nodes {len(nodes)} root {tree.root.id} next {tree._next_id}")
    for node in nodes:
        if node.is_leaf:
            lines.append(f"n {node.id} 0 r " + " ".join(str(x) for x in node.records))
        else:
            lines.append(
                f"n {node.id} {node.level} c " + " ".join(str(c.id) for c in node.children)
            )
    return "\n".join(lines) + "\n"


def index_from_text(text: str, g: DataGraph, embedder: TrainedEmbedder) -> ARTree:
    """Rebuild a persisted tree; bounds are recomputed from the embedder's
    caches so they round-trip bit-exactly with the model file."""
    lines = text.splitlines()
    if lines[0].split() != ["gnnpe-index", "1"]:
        raise ValueError("not an index file")
    head = lines[1].split()
    pid, length = int(head[1]), int(head[3])
    n_records, fanout = int(head[9]), int(head[11])
    if pid != embedder.partition_id:
        raise ValueError("index/embedder partition mismatch")
    paths = []
    for ln in lines[2 : 2 + n_records]:
        parts = ln.split()
        paths.append(tuple(int(x) for x in parts[1:]))
    records = build_path_records(g, embedder, paths, length)
    meta = lines[2 + n_records].split()
    n_nodes, root_id, next_id = int(meta[1]), int(meta[3]), int(meta[5])
    tree = ARTree.__new__(ARTree)
    tree.records = records
    tree.max_fanout = fanout
    tree.min_entries = max(2, int(MIN_FILL * fanout))
    tree._next_id = next_id
    tree._reinserted_levels = set()
    by_id: dict[int, _Node] = {}
    child_ids: dict[int, list[int]] = {}
    for ln in lines[3 + n_records : 3 + n_records + n_nodes]:
        parts = ln.split()
        node = _Node(int(parts[1]), int(parts[2]))
        by_id[node.id] = node
        if parts[3] == "r":
            node.records = [int(x) for x in parts[4:]]
        else:
            child_ids[node.id] = [int(x) for x in parts[4:]]
    for nid, kids in child_ids.items():
        node = by_id[nid]
        node.children = [by_id[k] for k in kids]
        for c in node.children:
            c.parent = node
    tree.root = by_id[root_id]

    def fix(node: _Node) -> None:
        for c in node.children:
            fix(c)
        tree._recompute_bounds(node)

    fix(tree.root)
    return tree
