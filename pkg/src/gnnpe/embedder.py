"""Attention-based star embedder trained to exact dominance (zero loss).

A tiny three-layer network (multi-head attention over a star, sum readout,
sigmoid output) maps a vertex's 1-hop star, or any substructure of it, to a
vector in (0,1)^d. Training drives the hinge loss to exactly zero so that
every substructure embedding is component-wise <= its parent star embedding;
that exact certificate is what downstream pruning relies on.

Stars are canonicalized to (center label, sorted neighbor labels) before
embedding and every consumer reads one shared per-model cache, so two
label-isomorphic stars always embed to bit-identical vectors.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .graph import DataGraph, StarGraph, StarSubstructure, label_permutation

LEAKY_SLOPE = 0.2
CHUNK = 4096

StarKey = tuple[int, tuple[int, ...]]


class TrainingError(RuntimeError):
    """Raised when no restart reaches exactly zero loss within max_epochs."""


@dataclass(frozen=True)
class EmbedderConfig:
    """Hyperparameters of the star embedder and its training loop."""

    feature_dim: int = 1  # size of the per-vertex input feature
    heads: int = 3  # attention heads
    hidden_dim: int = 32  # per-head hidden width
    embed_dim: int = 2  # output embedding size
    learning_rate: float = 1e-3
    batch_size: int = 256
    degree_cap: int = 10  # stars above this degree use the all-ones fallback
    restarts: int = 1  # random restarts per model, best kept by query cost
    aux_models: int = 2  # extra models over randomized labels
    max_epochs: int = 500

    def validate(self) -> None:
        for name in (
            "feature_dim",
            "heads",
            "hidden_dim",
            "embed_dim",
            "batch_size",
            "restarts",
            "max_epochs",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.degree_cap < 0 or self.aux_models < 0:
            raise ValueError("degree_cap and aux_models must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class CapacityCheck:
    passed: bool
    capacity: int
    required: int

    @property
    def margin(self) -> int:
        return self.capacity - self.required


def capacity_check(config: EmbedderConfig) -> CapacityCheck:
    """Network capacity (depth x width) against the largest star it must learn.

    The model has three hidden layers of width heads*hidden_dim, and the
    largest input is a full star of degree_cap + 1 vertices; capacity must be
    at least the square of that input size.
    """
    cap = 3 * self_width(config)
    need = (config.degree_cap + 1) ** 2
    return CapacityCheck(passed=cap >= need, capacity=cap, required=need)


def self_width(config: EmbedderConfig) -> int:
    return config.heads * config.hidden_dim


@dataclass
class GnnModel:
    """Weights of one star embedder."""

    config: EmbedderConfig
    w: np.ndarray  # (K, F', F) per-head linear maps
    attn: np.ndarray  # (K, 2F') per-head attention scorer
    out_w: np.ndarray  # (d, K*F') output layer

    def copy(self) -> "GnnModel":
        return GnnModel(self.config, self.w.copy(), self.attn.copy(), self.out_w.copy())

    def params(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "attn": self.attn, "out_w": self.out_w}


def init_model(config: EmbedderConfig, seed: int, zero_output: bool = False) -> GnnModel:
    """Fan-in scaled uniform initialization, deterministic per seed.

    ``zero_output`` zeroes the output layer, which collapses every embedding
    to exactly 0.5 per component regardless of input.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    f, k, fp, d = config.feature_dim, config.heads, config.hidden_dim, config.embed_dim
    w = rng.uniform(-1, 1, size=(k, fp, f)) / np.sqrt(f)
    attn = rng.uniform(-1, 1, size=(k, 2 * fp)) / np.sqrt(2 * fp)
    if zero_output:
        out_w = np.zeros((d, k * fp))
    else:
        out_w = rng.uniform(-1, 1, size=(d, k * fp)) / np.sqrt(k * fp)
    return GnnModel(config, w, attn, out_w)


# ---------------------------------------------------------------------------
# canonical stars and star tables


def canonical_key(center_label: int, neighbor_labels: Iterable[int]) -> StarKey:
    return (center_label, tuple(sorted(neighbor_labels)))


def star_key(star: StarGraph | StarSubstructure) -> StarKey:
    return canonical_key(star.center_label, (lab for _, lab in star.neighbors))


def _attention_mask(v: int) -> np.ndarray:
    """Who attends to whom inside a star: everyone to themselves, the center
    to every leaf, every leaf to the center."""
    mask = np.zeros((v, v), dtype=bool)
    mask[0, :] = True
    idx = np.arange(v)
    mask[idx, idx] = True
    mask[1:, 0] = True
    return mask


def _features(labels: np.ndarray, domain: int, feature_dim: int) -> np.ndarray:
    """Label-encoded input features: label / domain, broadcast to feature_dim."""
    x = labels.astype(np.float64) / float(domain)
    return np.repeat(x[..., None], feature_dim, axis=-1)


@dataclass
class StarTable:
    """All distinct canonical stars of a vertex set plus the training pairs.

    ``pair_weight`` carries the multiplicity with which each distinct
    (parent, child) pair occurs across vertices, so losses and costs match
    the full enumeration.
    """

    keys: list[StarKey]
    index: dict[StarKey, int]
    domain: int
    pair_parent: np.ndarray  # (P,) int indices into keys
    pair_child: np.ndarray  # (P,) int
    pair_weight: np.ndarray  # (P,) float multiplicities
    size_groups: dict[int, np.ndarray] = field(default_factory=dict)
    group_labels: dict[int, np.ndarray] = field(default_factory=dict)
    star_size: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    pos_in_group: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def pair_count(self) -> int:
        return int(self.pair_weight.sum())


def build_star_table(
    labels: Sequence[int],
    adjacency: Sequence[Sequence[int]],
    vertices: Iterable[int],
    degree_cap: int,
    domain: int,
) -> StarTable:
    """Collect canonical stars and (parent, child) pairs over a vertex set.

    Vertices above the degree cap contribute nothing; isolated-vertex stars
    for every label in the domain are always present so label embeddings
    exist even for labels unused in this partition.
    """
    keys: dict[StarKey, int] = {}
    pair_counts: Counter[tuple[int, int]] = Counter()

    def intern(key: StarKey) -> int:
        idx = keys.get(key)
        if idx is None:
            idx = len(keys)
            keys[key] = idx
        return idx

    for lab in range(1, domain + 1):
        intern((lab, ()))
    for v in sorted(set(vertices)):
        nbrs = adjacency[v]
        if len(nbrs) > degree_cap:
            continue
        center = labels[v]
        nbr_labels = [labels[u] for u in nbrs]
        parent = intern(canonical_key(center, nbr_labels))
        deg = len(nbr_labels)
        for bits in range(1 << deg):
            subset = [nbr_labels[i] for i in range(deg) if bits >> i & 1]
            child = intern(canonical_key(center, subset))
            pair_counts[(parent, child)] += 1
    ordered = sorted(keys, key=lambda k: (k[0], len(k[1]), k[1]))
    remap = {keys[k]: i for i, k in enumerate(ordered)}
    index = {k: i for i, k in enumerate(ordered)}
    parents = np.array([remap[p] for p, _ in pair_counts], dtype=np.int64)
    children = np.array([remap[c] for _, c in pair_counts], dtype=np.int64)
    weights = np.array(list(pair_counts.values()), dtype=np.float64)
    groups: dict[int, list[int]] = {}
    for i, key in enumerate(ordered):
        groups.setdefault(len(key[1]), []).append(i)
    size_groups = {m: np.array(ix, dtype=np.int64) for m, ix in groups.items()}
    group_labels = {}
    star_size = np.empty(len(ordered), dtype=np.int64)
    pos_in_group = np.empty(len(ordered), dtype=np.int64)
    for m, idx in size_groups.items():
        mat = np.empty((len(idx), m + 1), dtype=np.float64)
        for row, i in enumerate(idx):
            key = ordered[i]
            mat[row, 0] = key[0]
            mat[row, 1:] = key[1]
            star_size[i] = m
            pos_in_group[i] = row
        group_labels[m] = mat
    return StarTable(
        keys=ordered,
        index=index,
        domain=domain,
        pair_parent=parents,
        pair_child=children,
        pair_weight=weights,
        size_groups=size_groups,
        group_labels=group_labels,
        star_size=star_size,
        pos_in_group=pos_in_group,
    )


def _group_features(table: StarTable, size: int, rows: np.ndarray, feature_dim: int) -> np.ndarray:
    """Features for same-size stars: row = center label then sorted neighbors."""
    return _features(table.group_labels[size][rows], table.domain, feature_dim)


# ---------------------------------------------------------------------------
# forward / backward


def _forward(model: GnnModel, feats: np.ndarray, want_cache: bool = False):
    """Batched forward pass over same-size stars.

    feats: (B, V, F) with the center at position 0. Returns (B, d) embeddings
    and, when requested, the intermediates needed for the backward pass.
    """
    cfg = model.config
    b, v, _ = feats.shape
    fp = cfg.hidden_dim
    mask = _attention_mask(v)
    h = np.einsum("bvf,kgf->bkvg", feats, model.w)  # (B,K,V,F')
    a_src = model.attn[:, :fp]
    a_dst = model.attn[:, fp:]
    src = np.einsum("bkvg,kg->bkv", h, a_src)
    dst = np.einsum("bkvg,kg->bkv", h, a_dst)
    pre = src[:, :, :, None] + dst[:, :, None, :]  # (B,K,V,V)
    e = np.where(pre > 0, pre, LEAKY_SLOPE * pre)
    e = np.where(mask, e, -np.inf)
    e_max = e.max(axis=3, keepdims=True)
    ex = np.exp(e - e_max)
    ex = np.where(mask, ex, 0.0)
    alpha = ex / ex.sum(axis=3, keepdims=True)
    z = np.einsum("bkij,bkjg->bkig", alpha, h)
    xp = 1.0 / (1.0 + np.exp(-z))  # (B,K,V,F')
    cat = xp.transpose(0, 2, 1, 3).reshape(b, v, cfg.heads * fp)
    y = cat.sum(axis=1)  # (B, K*F')
    u = y @ model.out_w.T
    o = 1.0 / (1.0 + np.exp(-u))  # (B, d)
    if not want_cache:
        return o, None
    cache = {"feats": feats, "h": h, "pre": pre, "alpha": alpha, "xp": xp, "y": y, "o": o}
    return o, cache


def _backward(model: GnnModel, cache: dict, d_o: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss with upstream d_o = dL/do, shape (B, d)."""
    cfg = model.config
    fp = cfg.hidden_dim
    feats, h, pre = cache["feats"], cache["h"], cache["pre"]
    alpha, xp, y, o = cache["alpha"], cache["xp"], cache["y"], cache["o"]
    b, v, _ = feats.shape
    du = d_o * o * (1.0 - o)  # (B,d)
    d_out_w = du.T @ y
    dy = du @ model.out_w  # (B, K*F')
    dxp = np.broadcast_to(dy[:, None, :], (b, v, cfg.heads * fp))
    dxp = dxp.reshape(b, v, cfg.heads, fp).transpose(0, 2, 1, 3)
    dz = dxp * xp * (1.0 - xp)  # (B,K,V,F')
    dalpha = np.einsum("bkig,bkjg->bkij", dz, h)
    dh = np.einsum("bkij,bkig->bkjg", alpha, dz)
    s = (alpha * dalpha).sum(axis=3, keepdims=True)
    de = alpha * (dalpha - s)
    dpre = de * np.where(pre > 0, 1.0, LEAKY_SLOPE)
    dsrc = dpre.sum(axis=3)  # (B,K,V)
    ddst = dpre.sum(axis=2)
    a_src = model.attn[:, :fp]
    a_dst = model.attn[:, fp:]
    d_a_src = np.einsum("bkv,bkvg->kg", dsrc, h)
    d_a_dst = np.einsum("bkv,bkvg->kg", ddst, h)
    dh += dsrc[..., None] * a_src[None, :, None, :]
    dh += ddst[..., None] * a_dst[None, :, None, :]
    d_w = np.einsum("bkvg,bvf->kgf", dh, feats)
    return {"w": d_w, "attn": np.concatenate([d_a_src, d_a_dst], axis=1), "out_w": d_out_w}


def embed_table(model: GnnModel, table: StarTable, chunk: int = CHUNK) -> np.ndarray:
    """Embed every canonical star of the table; fixed chunking keeps the
    result bit-reproducible across runs and processes."""
    out = np.empty((len(table.keys), model.config.embed_dim))
    for size, idx in sorted(table.size_groups.items()):
        for lo in range(0, len(idx), chunk):
            part = idx[lo : lo + chunk]
            feats = _group_features(
                table, size, np.arange(lo, lo + len(part)), model.config.feature_dim
            )
            o, _ = _forward(model, feats)
            out[part] = o
    return out


def embed_star(
    model: GnnModel,
    star: StarGraph | StarSubstructure,
    domain: int,
    max_degree: int | None = None,
) -> np.ndarray:
    """Embedding of a single star; canonical neighbor order makes the result
    invariant to input neighbor order."""
    if max_degree is not None and star.degree > max_degree:
        raise ValueError(f"star degree {star.degree} exceeds cap {max_degree}")
    key = star_key(star)
    labels = np.array([[key[0], *key[1]]], dtype=np.float64)
    o, _ = _forward(model, _features(labels, domain, model.config.feature_dim))
    return o[0]


def pair_losses(star_emb: np.ndarray, table: StarTable) -> np.ndarray:
    """Per-distinct-pair hinge losses ||max(0, o(child) - o(parent))||_2^2."""
    diff = star_emb[table.pair_child] - star_emb[table.pair_parent]
    r = np.maximum(0.0, diff)
    return (r * r).sum(axis=1)


def table_loss(star_emb: np.ndarray, table: StarTable) -> float:
    """Total training loss including pair multiplicities."""
    return float((pair_losses(star_emb, table) * table.pair_weight).sum())


def dominance_loss(
    model: GnnModel,
    batch: Sequence[tuple[StarGraph, StarSubstructure]],
    domain: int,
) -> float:
    """Hinge dominance loss of explicit (parent, child) star pairs."""
    total = 0.0
    for parent, child in batch:
        op = embed_star(model, parent, domain)
        oc = embed_star(model, child, domain)
        r = np.maximum(0.0, oc - op)
        total += float((r * r).sum())
    return total


def loss_and_grads(
    model: GnnModel,
    table: StarTable,
    pair_idx: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and analytic weight gradients for a batch of pair indices."""
    parents = table.pair_parent[pair_idx]
    children = table.pair_child[pair_idx]
    weights = table.pair_weight[pair_idx]
    stars = np.unique(np.concatenate([parents, children]))
    emb = np.empty((len(stars), model.config.embed_dim))
    caches = []
    sizes = table.star_size[stars]
    for size in np.unique(sizes):
        rows = np.nonzero(sizes == size)[0]
        feats = _group_features(
            table, int(size), table.pos_in_group[stars[rows]], model.config.feature_dim
        )
        o, cache = _forward(model, feats, want_cache=True)
        emb[rows] = o
        caches.append((rows, cache))
    p_loc = np.searchsorted(stars, parents)
    c_loc = np.searchsorted(stars, children)
    diff = emb[c_loc] - emb[p_loc]
    r = np.maximum(0.0, diff)
    loss = float(((r * r).sum(axis=1) * weights).sum())
    d_emb = np.zeros_like(emb)
    pull = (2.0 * weights)[:, None] * r
    np.add.at(d_emb, c_loc, pull)
    np.add.at(d_emb, p_loc, -pull)
    grads = {k: np.zeros_like(p) for k, p in model.params().items()}
    for rows, cache in caches:
        part = _backward(model, cache, d_emb[rows])
        for k in grads:
            grads[k] += part[k]
    return loss, grads


# ---------------------------------------------------------------------------
# optimizer and the training loop


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            m_hat = self.m[k] / (1 - self.beta1**self.t)
            v_hat = self.v[k] / (1 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainedModel:
    """One converged model: weights plus the frozen star-embedding cache."""

    model: GnnModel
    table: StarTable
    star_emb: np.ndarray  # (num_keys, d), the zero-loss certificate values
    label_map: tuple[int, ...] | None  # aux label permutation, None = identity
    label_seed: int  # 0 for the primary model
    init_seed: int
    epochs: int
    query_cost: float


def _train_once(
    table: StarTable,
    config: EmbedderConfig,
    init_seed: int,
    shuffle_seed: int,
) -> tuple[GnnModel, np.ndarray, int] | None:
    """Run the shuffled-batch loop until the full-table loss is exactly zero.

    Returns (model, star embeddings, epochs) or None if max_epochs elapse
    with residual loss.
    """
    model = init_model(config, init_seed)
    order = np.random.default_rng(shuffle_seed).permutation(len(table.pair_parent))
    batches = [
        order[lo : lo + config.batch_size]
        for lo in range(0, len(order), config.batch_size)
    ]
    adam = Adam(model.params(), config.learning_rate)
    for epoch in range(1, config.max_epochs + 1):
        for batch in batches:
            loss, grads = loss_and_grads(model, table, batch)
            if loss != 0.0:
                adam.step(model.params(), grads)
        star_emb = embed_table(model, table)
        if table_loss(star_emb, table) == 0.0:
            return model, star_emb, epoch
    return None


def model_query_cost(
    star_emb: np.ndarray,
    pair_child: np.ndarray,
    pair_weight: np.ndarray,
    vertex_emb: np.ndarray,
    chunk: int = 512,
) -> float:
    """Expected candidate-vertex count when each training substructure is
    replayed as a query star: mean (with multiplicity) over pairs of how many
    vertex embeddings the child embedding dominates."""
    if len(pair_child) == 0:
        return 0.0
    uniq, inverse = np.unique(pair_child, return_inverse=True)
    counts = np.empty(len(uniq))
    for lo in range(0, len(uniq), chunk):
        block = star_emb[uniq[lo : lo + chunk]]
        dominated = (block[:, None, :] <= vertex_emb[None, :, :]).all(axis=2)
        counts[lo : lo + chunk] = dominated.sum(axis=1)
    total = float((counts[inverse] * pair_weight).sum())
    return total / float(pair_weight.sum())


def _vertex_matrix(
    trained: TrainedModel,
    labels: Sequence[int],
    adjacency: Sequence[Sequence[int]],
    vertex_ids: Sequence[int],
    degree_cap: int,
) -> np.ndarray:
    """Per-vertex embeddings for a model: cached star values, or exact
    all-ones above the degree cap."""
    d = trained.model.config.embed_dim
    out = np.ones((len(vertex_ids), d))
    for row, v in enumerate(vertex_ids):
        nbrs = adjacency[v]
        if len(nbrs) > degree_cap:
            continue
        key = canonical_key(labels[v], (labels[u] for u in nbrs))
        out[row] = trained.star_emb[trained.table.index[key]]
    return out


@dataclass
class TrainedEmbedder:
    """A partition's primary model, its auxiliary models, and all caches."""

    partition_id: int
    config: EmbedderConfig
    domain: int
    vertex_ids: tuple[int, ...]  # sorted embedded vertices (core + halo)
    models: list[TrainedModel]  # slot 0 primary, slots 1.. auxiliary
    vertex_emb: list[np.ndarray]  # per model, aligned with vertex_ids
    label_emb: np.ndarray  # (domain + 1, d) via the primary model
    _row_of: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._row_of:
            self._row_of = {v: i for i, v in enumerate(self.vertex_ids)}

    @property
    def aux_count(self) -> int:
        return len(self.models) - 1

    @property
    def theta(self) -> int:
        return self.config.degree_cap

    def vertex_embedding(self, v: int, model_idx: int = 0) -> np.ndarray:
        return self.vertex_emb[model_idx][self._row_of[v]]

    def label_embedding(self, label: int) -> np.ndarray:
        if not 1 <= label <= self.domain:
            raise KeyError(f"label {label} outside the data label domain [1, {self.domain}]")
        return self.label_emb[label]

    def has_label(self, label: int) -> bool:
        return 1 <= label <= self.domain

    def query_star_embedding(
        self, center_label: int, neighbor_labels: Sequence[int], model_idx: int
    ) -> np.ndarray:
        """Embed a query star under one model, remapping labels for auxiliary
        models. Cached canonical stars return their exact trained values."""
        trained = self.models[model_idx]
        if trained.label_map is not None:
            center_label = trained.label_map[center_label - 1]
            neighbor_labels = [trained.label_map[lab - 1] for lab in neighbor_labels]
        key = canonical_key(center_label, neighbor_labels)
        idx = trained.table.index.get(key)
        if idx is not None:
            return trained.star_emb[idx]
        labels = np.array([[key[0], *key[1]]], dtype=np.float64)
        feats = _features(labels, self.domain, self.config.feature_dim)
        o, _ = _forward(trained.model, feats)
        return o[0]

    def certificate_violations(self) -> int:
        """Exact post-hoc audit: how many (parent, child) pairs across all
        models break component-wise dominance. Must be zero."""
        bad = 0
        for trained in self.models:
            losses = pair_losses(trained.star_emb, trained.table)
            bad += int((losses != 0.0).sum())
        return bad


def node_embedding(
    t: TrainedEmbedder, g: DataGraph, v: int, which: int = 0
) -> np.ndarray:
    """Cached star embedding of a vertex, or the exact all-ones fallback for
    degrees above the cap."""
    if g.degree(v) > t.theta:
        return np.ones(t.config.embed_dim)
    return t.vertex_embedding(v, which)


def _aux_label_seed(master_seed: int, partition_id: int, slot: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(partition_id, 7000 + slot))
    val = int(ss.generate_state(1)[0])
    return val if val != 0 else 1  # 0 is the identity-permutation sentinel


def _restart_seed(master_seed: int, partition_id: int, slot: int, restart: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(partition_id, slot, restart))
    return int(ss.generate_state(1)[0])


def train(
    g: DataGraph,
    vertices: Iterable[int],
    config: EmbedderConfig,
    partition_id: int = 0,
    master_seed: int = 0,
) -> TrainedEmbedder:
    """Train the primary and auxiliary models of one (expanded) partition.

    Each model runs up to ``restarts`` random initializations and keeps the
    zero-loss one with the lowest expected query cost; a model with no
    converged restart aborts the run. Stars are taken from the full graph so
    halo vertices carry their complete neighborhoods.
    """
    config.validate()
    check = capacity_check(config)
    if not check.passed:
        raise ValueError(
            f"configuration fails the capacity check: {check.capacity} < {check.required}"
        )
    vertex_ids = tuple(sorted(set(vertices)))
    domain = g.label_domain_size
    models: list[TrainedModel] = []
    for slot in range(1 + config.aux_models):
        if slot == 0:
            label_map = None
            label_seed = 0
            labels: Sequence[int] = g.labels
        else:
            label_seed = _aux_label_seed(master_seed, partition_id, slot)
            label_map = label_permutation(domain, label_seed)
            labels = [label_map[lab - 1] for lab in g.labels]
        table = build_star_table(labels, g.adjacency, vertex_ids, config.degree_cap, domain)
        candidates: list[TrainedModel] = []
        for restart in range(config.restarts):
            init_seed = _restart_seed(master_seed, partition_id, slot, restart)
            outcome = _train_once(table, config, init_seed, shuffle_seed=init_seed + 1)
            if outcome is None:
                continue
            model, star_emb, epochs = outcome
            candidates.append(
                TrainedModel(
                    model=model,
                    table=table,
                    star_emb=star_emb,
                    label_map=label_map,
                    label_seed=label_seed,
                    init_seed=init_seed,
                    epochs=epochs,
                    query_cost=0.0,
                )
            )
        if not candidates:
            raise TrainingError(
                f"partition {partition_id} model {slot}: no restart of {config.restarts} "
                f"reached zero loss within {config.max_epochs} epochs"
            )
        if len(candidates) > 1:
            for cand in candidates:
                vm = _vertex_matrix(cand, labels, g.adjacency, vertex_ids, config.degree_cap)
                cand.query_cost = model_query_cost(
                    cand.star_emb, cand.table.pair_child, cand.table.pair_weight, vm
                )
            best = min(range(len(candidates)), key=lambda i: (candidates[i].query_cost, i))
        else:
            best = 0
        models.append(candidates[best])

    vertex_mats = []
    for slot, trained in enumerate(models):
        if trained.label_map is None:
            labels = g.labels
        else:
            labels = [trained.label_map[lab - 1] for lab in g.labels]
        vertex_mats.append(
            _vertex_matrix(trained, labels, g.adjacency, vertex_ids, config.degree_cap)
        )
    primary = models[0]
    d = config.embed_dim
    label_emb = np.zeros((domain + 1, d))
    for lab in range(1, domain + 1):
        label_emb[lab] = primary.star_emb[primary.table.index[(lab, ())]]
    return TrainedEmbedder(
        partition_id=partition_id,
        config=config,
        domain=domain,
        vertex_ids=vertex_ids,
        models=models,
        vertex_emb=vertex_mats,
        label_emb=label_emb,
    )


# ---------------------------------------------------------------------------
# persistence


def _write_floats(lines: list[str], name: str, arr: np.ndarray) -> None:
    flat = arr.reshape(-1)
    lines.append(f"{name} {' '.join(str(x) for x in arr.shape)}")
    for lo in range(0, len(flat), 16):
        lines.append(" ".join(repr(float(x)) for x in flat[lo : lo + 16]))


class _FloatReader:
    def __init__(self, lines: list[str]):
        self.lines = lines
        self.pos = 0

    def line(self) -> str:
        ln = self.lines[self.pos]
        self.pos += 1
        return ln

    def array(self, name: str) -> np.ndarray:
        head = self.line().split()
        if head[0] != name:
            raise ValueError(f"expected array {name!r}, found {head[0]!r}")
        shape = tuple(int(x) for x in head[1:])
        count = int(np.prod(shape)) if shape else 1
        vals: list[float] = []
        while len(vals) < count:
            vals.extend(float(tok) for tok in self.line().split())
        return np.array(vals).reshape(shape)


def embedder_to_text(t: TrainedEmbedder) -> str:
    """Full-precision text serialization; floats round-trip bit-exactly."""
    cfg = t.config
    lines = ["gnnpe-embedder 1"]
    lines.append(f"partition {t.partition_id}")
    lines.append(f"domain {t.domain}")
    lines.append("config " + json.dumps(cfg.__dict__, sort_keys=True))
    lines.append(f"vertices {len(t.vertex_ids)}")
    lines.append(" ".join(str(v) for v in t.vertex_ids))
    lines.append(f"models {len(t.models)}")
    for slot, trained in enumerate(t.models):
        lines.append(
            f"model {slot} init_seed {trained.init_seed} label_seed {trained.label_seed} "
            f"epochs {trained.epochs} cost {repr(trained.query_cost)}"
        )
        _write_floats(lines, "w", trained.model.w)
        _write_floats(lines, "attn", trained.model.attn)
        _write_floats(lines, "out_w", trained.model.out_w)
        _write_floats(lines, "vertex_emb", t.vertex_emb[slot])
    _write_floats(lines, "label_emb", t.label_emb)
    return "\n".join(lines) + "\n"


def embedder_from_text(text: str, g: DataGraph) -> TrainedEmbedder:
    """Rebuild a trained embedder; star caches are recomputed with the same
    deterministic chunking used at training time, so values are bit-equal."""
    lines = text.splitlines()
    rd = _FloatReader(lines)
    magic = rd.line().split()
    if magic[:2] != ["gnnpe-embedder", "1"]:
        raise ValueError("not an embedder file")
    pid = int(rd.line().split()[1])
    domain = int(rd.line().split()[1])
    cfg = EmbedderConfig(**json.loads(rd.line().split(" ", 1)[1]))
    n_vertices = int(rd.line().split()[1])
    vertex_ids = tuple(int(x) for x in rd.line().split())
    if len(vertex_ids) != n_vertices:
        raise ValueError("vertex id count mismatch")
    n_models = int(rd.line().split()[1])
    models: list[TrainedModel] = []
    vertex_mats: list[np.ndarray] = []
    for _ in range(n_models):
        head = rd.line().split()
        init_seed, label_seed = int(head[3]), int(head[5])
        epochs, cost = int(head[7]), float(head[9])
        w = rd.array("w")
        attn = rd.array("attn")
        out_w = rd.array("out_w")
        vm = rd.array("vertex_emb")
        model = GnnModel(cfg, w, attn, out_w)
        if label_seed == 0:
            label_map = None
            labels: Sequence[int] = g.labels
        else:
            label_map = label_permutation(domain, label_seed)
            labels = [label_map[lab - 1] for lab in g.labels]
        table = build_star_table(labels, g.adjacency, vertex_ids, cfg.degree_cap, domain)
        star_emb = embed_table(model, table)
        models.append(
            TrainedModel(
                model=model,
                table=table,
                star_emb=star_emb,
                label_map=label_map,
                label_seed=label_seed,
                init_seed=init_seed,
                epochs=epochs,
                query_cost=cost,
            )
        )
        vertex_mats.append(vm)
    label_emb = rd.array("label_emb")
    return TrainedEmbedder(
        partition_id=pid,
        config=cfg,
        domain=domain,
        vertex_ids=vertex_ids,
        models=models,
        vertex_emb=vertex_mats,
        label_emb=label_emb,
    )
