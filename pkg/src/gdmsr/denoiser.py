"""Preference-guided relation scoring, the self-correcting curriculum and graph denoising."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from . import numerics as nx
from .dataset import FAKE, OBSERVED, Dataset, SocialGraph
from .graphconv import Adjacency, ModelParams, bpr_loss, gcn_forward
from .numerics import Tensor

log = logging.getLogger(__name__)

SCORERS = ("transformer-history", "user-layer-0", "user-layer-1", "item-mean-pool")
RATIO_MODES = ("adaptive", "uniform")
ETA_CAP = 0.99
_NEG_INF = -1e9


@dataclass
class DenoiseConfig:
    alpha: float = 0.5
    beta: float = 0.5
    curriculum_period: int = 10
    epsilon: int = 5
    gamma: float = 1.0
    R: float = 0.02
    L: int = 30
    K: int = 2
    lr: float = 0.005
    dropout: float = 0.0
    epochs: int = 200
    batch: int = 1024
    dim: int = 8
    seed: int = 0
    scorer: str = "transformer-history"
    interaction_fraction: float = 1.0
    ratio_mode: str = "adaptive"
    uniform_ratio: float = 0.0
    curriculum: bool = True
    symmetric: bool = False
    heads: int = 2
    ff_dim: int = 32
    layers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.epsilon < 1:
            raise ValueError("epsilon must be >= 1")
        if self.R <= 0:
            raise ValueError("R must be > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if not 0.0 < self.interaction_fraction <= 1.0:
            raise ValueError("interaction_fraction must lie in (0, 1]")
        if self.scorer not in SCORERS:
            raise ValueError(f"unknown scorer {self.scorer!r}; expected one of {SCORERS}")
        if self.ratio_mode not in RATIO_MODES:
            raise ValueError(f"unknown ratio_mode {self.ratio_mode!r}; expected one of {RATIO_MODES}")
        if self.curriculum_period < 1 or self.L < 1 or self.K < 0 or self.batch < 1:
            raise ValueError("curriculum_period, L and batch must be >= 1 and K >= 0")
        if self.dim % self.heads:
            raise ValueError("dim must be divisible by heads")


# ----------------------------------------------------------------- histories


@dataclass
class HistorySequence:
    items: np.ndarray  # (L,) item ids, padding slots hold 0
    mask: np.ndarray  # (L,) True for real items
    user: int


def _popularity_order(d: Dataset) -> np.ndarray:
    """Rank of every item under (popularity desc, index asc)."""
    order = np.lexsort((np.arange(d.n_items), -d.popularity))
    rank = np.empty(d.n_items, dtype=np.int64)
    rank[order] = np.arange(d.n_items)
    return rank


def build_history(d: Dataset, u: int, L: int) -> HistorySequence:
    items = d.items_of(u)
    if len(items) == 0:
        raise ValueError(f"user {u} has no train interactions")
    rank = _popularity_order(d)
    kept = items[np.argsort(rank[items], kind="stable")][:L]
    out = np.zeros(L, dtype=np.int64)
    out[: len(kept)] = kept
    mask = np.zeros(L, dtype=bool)
    mask[: len(kept)] = True
    return HistorySequence(out, mask, u)


def build_histories(d: Dataset, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-length histories for every user: ``(items (N, L), mask (N, L))``."""
    rank = _popularity_order(d)
    rows = kernels.row_ids(d.user_indptr)
    order = np.lexsort((rank[d.user_items], rows))
    pos = np.arange(len(order)) - d.user_indptr[rows[order]]
    keep = pos < L
    items = np.zeros((d.n_users, L), dtype=np.int64)
    mask = np.zeros((d.n_users, L), dtype=bool)
    items[rows[order][keep], pos[keep]] = d.user_items[order][keep]
    mask[rows[order][keep], pos[keep]] = True
    return items, mask


# -------------------------------------------------------------- scoring head


class ConfidenceHead:
    """Transformer encoder over two item histories plus a trailing CLS token.

    No positional encodings: the only order signal is the segment embedding
    telling the source user's tokens from the friend's.
    """

    def __init__(self, dim: int = 8, heads: int = 2, ff_dim: int = 32, layers: int = 1,
                 seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.dim, self.heads, self.ff_dim, self.n_layers = dim, heads, ff_dim, layers

        def w(*shape, name):
            fan = shape[0] + shape[-1]
            return Tensor(rng.normal(0.0, np.sqrt(2.0 / fan), shape).astype(dtype), requires_grad=True, name=name)

        def const(value, *shape, name):
            return Tensor(np.full(shape, value, dtype=dtype), requires_grad=True, name=name)

        self.params: dict[str, Tensor] = {
            "cls": Tensor(rng.normal(0.0, 0.1, (1, 1, dim)).astype(dtype), requires_grad=True, name="cls"),
            "seg_a": Tensor(rng.normal(0.0, 0.1, (dim,)).astype(dtype), requires_grad=True, name="seg_a"),
            "seg_b": Tensor(rng.normal(0.0, 0.1, (dim,)).astype(dtype), requires_grad=True, name="seg_b"),
        }
        for k in range(layers):
            p = f"layer{k}."
            for m in ("wq", "wk", "wv", "wo"):
                self.params[p + m] = w(dim, dim, name=p + m)
                self.params[p + "b" + m[1]] = const(0.0, dim, name=p + "b" + m[1])
            self.params[p + "ln1_g"] = const(1.0, dim, name=p + "ln1_g")
            self.params[p + "ln1_b"] = const(0.0, dim, name=p + "ln1_b")
            self.params[p + "ff1"] = w(dim, ff_dim, name=p + "ff1")
            self.params[p + "ff1_b"] = const(0.0, ff_dim, name=p + "ff1_b")
            self.params[p + "ff2"] = w(ff_dim, dim, name=p + "ff2")
            self.params[p + "ff2_b"] = const(0.0, dim, name=p + "ff2_b")
            self.params[p + "ln2_g"] = const(1.0, dim, name=p + "ln2_g")
            self.params[p + "ln2_b"] = const(0.0, dim, name=p + "ln2_b")
        self.params["mlp1"] = w(dim, dim, name="mlp1")
        self.params["mlp1_b"] = const(0.0, dim, name="mlp1_b")
        self.params["mlp2"] = w(dim, 1, name="mlp2")
        self.params["mlp2_b"] = const(0.0, 1, name="mlp2_b")

    def tensors(self) -> list[Tensor]:
        return list(self.params.values())

    def _attention(self, x_q: Tensor, x: Tensor, key_pad: np.ndarray, p: str, keep: float,
                   training: bool, rng) -> Tensor:
        P = self.params
        B, T, D = x.shape
        Tq = x_q.shape[1]
        h, dh = self.heads, D // self.heads
        q = (x_q @ P[p + "wq"] + P[p + "bq"]).reshape(B, Tq, h, dh).transpose(0, 2, 1, 3)
        k = (x @ P[p + "wk"] + P[p + "bk"]).reshape(B, T, h, dh).transpose(0, 2, 3, 1)
        v = (x @ P[p + "wv"] + P[p + "bv"]).reshape(B, T, h, dh).transpose(0, 2, 1, 3)
        scores = (q @ k) * (1.0 / np.sqrt(dh))
        scores = nx.masked_fill(scores, np.broadcast_to(key_pad[:, None, None, :], scores.shape), _NEG_INF)
        attn = nx.dropout(nx.softmax(scores, axis=-1), keep, training, rng)
        ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(B, Tq, D)
        return ctx @ P[p + "wo"] + P[p + "bo"]

    def __call__(self, tokens_u: Tensor, mask_u: np.ndarray, tokens_v: Tensor, mask_v: np.ndarray,
                 dropout: float = 0.0, training: bool = False, rng=None) -> Tensor:
        """Logits for a batch: tokens are (B, L, D) item embeddings, masks (B, L)."""
        P = self.params
        B = tokens_u.shape[0]
        keep = 1.0 - dropout
        cls = Tensor(np.zeros((B, 1, self.dim), dtype=tokens_u.dtype)) + P["cls"]
        x = nx.concat([tokens_u + P["seg_a"], tokens_v + P["seg_b"], cls], axis=1)
        key_pad = np.concatenate([~mask_u, ~mask_v, np.zeros((B, 1), dtype=bool)], axis=1)
        T = x.shape[1]
        for k in range(self.n_layers):
            p = f"layer{k}."
            last = k == self.n_layers - 1
            # the final layer only feeds the CLS position, so only its query is needed
            x_q = nx.reshape(nx.take(x, T - 1, axis=1), (B, 1, self.dim)) if last else x
            a = self._attention(x_q, x, key_pad, p, keep, training, rng)
            x1 = nx.layer_norm(x_q + a, P[p + "ln1_g"], P[p + "ln1_b"])
            f = nx.gelu(x1 @ P[p + "ff1"] + P[p + "ff1_b"]) @ P[p + "ff2"] + P[p + "ff2_b"]
            f = nx.dropout(f, keep, training, rng)
            x = nx.layer_norm(x1 + f, P[p + "ln2_g"], P[p + "ln2_b"])
        out = nx.take(x, 0, axis=1)
        hidden = nx.relu(out @ P["mlp1"] + P["mlp1_b"])
        return (hidden @ P["mlp2"] + P["mlp2_b"]).reshape(B)


def _tokens(E2: Tensor, items: np.ndarray, mask: np.ndarray) -> Tensor:
    return nx.gather_rows(E2, items) * mask[..., None].astype(E2.dtype)


def confidence_logits(head: ConfidenceHead | None, params: ModelParams, hist_items: np.ndarray,
                      hist_mask: np.ndarray, us, vs, scorer: str = "transformer-history",
                      stack=None, dropout: float = 0.0, training: bool = False, rng=None) -> Tensor:
    """Batched relation confidence logits for directed pairs (us[b], vs[b])."""
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    if scorer == "transformer-history":
        mu, mv = hist_mask[us], hist_mask[vs]
        return head(_tokens(params.E2, hist_items[us], mu), mu, _tokens(params.E2, hist_items[vs], mv), mv,
                    dropout=dropout, training=training, rng=rng)
    if scorer == "item-mean-pool":
        def pooled(idx):
            m = hist_mask[idx]
            count = np.maximum(m.sum(axis=1, keepdims=True), 1).astype(params.E2.dtype)
            return _tokens(params.E2, hist_items[idx], m).sum(axis=1) * (1.0 / count)
        return (pooled(us) * pooled(vs)).sum(axis=-1)
    if scorer == "user-layer-0":
        table = params.E1
    elif scorer == "user-layer-1":
        if stack is None or len(stack.users) < 2:
            raise ValueError("user-layer-1 scorer needs a layer stack with K >= 1")
        table = stack.users[1]
    else:
        raise ValueError(f"unknown scorer {scorer!r}")
    return (nx.gather_rows(table, us) * nx.gather_rows(table, vs)).sum(axis=-1)


def relation_confidence(head: ConfidenceHead | None, E2: Tensor, hu: HistorySequence, hv: HistorySequence,
                        variant: str = "transformer-history", E1: Tensor | None = None,
                        stack=None) -> float:
    """Single-pair logit; see :func:`confidence_logits` for the batched form."""
    L = len(hu.items)
    items = np.zeros((max(hu.user, hv.user) + 1, L), dtype=np.int64)
    mask = np.zeros_like(items, dtype=bool)
    items[hu.user], mask[hu.user] = hu.items, hu.mask
    items[hv.user], mask[hv.user] = hv.items, hv.mask
    params = ModelParams(E1 if E1 is not None else Tensor(np.zeros((1, E2.shape[1]))), E2)
    return float(confidence_logits(head, params, items, mask, [hu.user], [hv.user], variant, stack=stack).data[0])


# -------------------------------------------------------------------- losses


def bce_link_loss(logits_pos, logits_neg) -> Tensor:
    """``-sum ln sigmoid(pos) - sum ln(1 - sigmoid(neg))``."""
    terms = []
    for logits, sign in ((logits_pos, 1.0), (logits_neg, -1.0)):
        t = logits if isinstance(logits, Tensor) else Tensor(np.asarray(logits, dtype=np.float64))
        if t.data.size:
            terms.append(-nx.log_sigmoid(t * sign).sum())
    if not terms:
        return Tensor(np.zeros(()))
    return terms[0] if len(terms) == 1 else terms[0] + terms[1]


def joint_loss(bce, bpr, alpha: float):
    return alpha * bce + (1.0 - alpha) * bpr


# --------------------------------------------------------- smoothing & ratio


@dataclass
class ConfidenceStore:
    scores: np.ndarray  # smoothed logit per directed edge, graph edge order
    period: int = 0


def smooth_scores(store: ConfidenceStore | None, raw: np.ndarray, beta: float, k: int) -> ConfidenceStore:
    raw = np.asarray(raw, dtype=np.float64)
    if store is None or k <= 1:
        return ConfidenceStore(raw.copy(), k)
    if store.scores.shape != raw.shape:
        raise ValueError("raw scores must cover the same edges as the store")
    return ConfidenceStore(beta * store.scores + (1.0 - beta) * raw, k)


def _floor_log10(n: np.ndarray) -> np.ndarray:
    n = np.asarray(n, dtype=np.int64)
    powers = 10 ** np.arange(19, dtype=np.int64)
    return np.searchsorted(powers, n, side="right") - 1


def denoise_ratio(friend_count, epsilon: int = 5, gamma: float = 1.0, R: float = 0.02, cap: float = ETA_CAP):
    """Per-user removal fraction; scalar in, scalar out, or elementwise on arrays."""
    fc = np.asarray(friend_count, dtype=np.int64)
    digits = np.maximum(_floor_log10(np.maximum(fc, 1)), 0).astype(np.float64)
    eta = np.where(fc < epsilon, 0.0, np.minimum(digits**gamma * R, cap))
    return float(eta) if eta.ndim == 0 else eta


def user_ratios(g: SocialGraph, cfg: DenoiseConfig) -> np.ndarray:
    deg = g.out_degree()
    if cfg.ratio_mode == "uniform":
        return np.full(g.n_users, min(cfg.uniform_ratio, ETA_CAP))
    return denoise_ratio(deg, cfg.epsilon, cfg.gamma, cfg.R)


def removal_counts(g: SocialGraph, eta: np.ndarray) -> np.ndarray:
    # the epsilon guards products such as 0.29 * 100 = 28.999...
    return np.floor(eta * g.out_degree() + 1e-9).astype(np.int64)


def curriculum_update(g: SocialGraph, store: ConfidenceStore, cfg: DenoiseConfig,
                      eta: np.ndarray | None = None) -> np.ndarray:
    """Active flags over the original edge list: each user's lowest-scored share goes inactive."""
    if len(store.scores) != g.n_edges:
        raise ValueError("store must score every original edge")
    eta = user_ratios(g, cfg) if eta is None else eta
    n_remove = removal_counts(g, eta)
    inactive = kernels.bottom_mask(g.indptr, g.indices, np.ascontiguousarray(store.scores, dtype=np.float64), n_remove)
    if cfg.symmetric:
        rev = _reverse_edge_index(g)
        inactive = inactive | np.where(rev >= 0, inactive[np.maximum(rev, 0)], False)
    return ~inactive


def _reverse_edge_index(g: SocialGraph) -> np.ndarray:
    keys = g.src * g.n_users + g.indices
    rkeys = g.indices * g.n_users + g.src
    pos = np.minimum(np.searchsorted(keys, rkeys), len(keys) - 1)
    return np.where(keys[pos] == rkeys, pos, -1)


# ------------------------------------------------------------------ training


@dataclass
class Denoiser:
    params: ModelParams
    head: ConfidenceHead | None
    cfg: DenoiseConfig
    store: ConfidenceStore
    graph: SocialGraph  # curriculum state at the end of training
    losses: list = field(default_factory=list)
    n_updates: int = 0

    def tensors(self) -> dict:
        out = {"E1": self.params.E1.data, "E2": self.params.E2.data}
        if self.head is not None:
            out.update({k: v.data for k, v in self.head.params.items()})
        return out


def subsample_train(d: Dataset, fraction: float, seed: int) -> Dataset:
    """Per-user seeded subsample keeping at least one interaction per user."""
    if fraction >= 1.0:
        return d
    rng = np.random.default_rng(seed)
    keep = []
    for u in range(d.n_users):
        lo, hi = d.user_indptr[u], d.user_indptr[u + 1]
        n = hi - lo
        if n == 0:
            continue
        k = max(1, int(round(fraction * n)))
        keep.append(np.column_stack([np.full(k, u), np.sort(rng.choice(d.user_items[lo:hi], size=k, replace=False))]))
    return d.with_train(np.concatenate(keep))


def sample_items_not_in(rng, indptr, indices, users: np.ndarray, n_items: int) -> np.ndarray:
    """One uniform item per user outside that user's CSR row; -1 where the row covers every item."""
    users = np.asarray(users, dtype=np.int64)
    out = rng.integers(0, n_items, size=len(users))
    feasible = (indptr[users + 1] - indptr[users]) < n_items
    out[~feasible] = -1
    bad = feasible & kernels.csr_contains(indptr, indices, users, out)
    while bad.any():
        out[bad] = rng.integers(0, n_items, size=int(bad.sum()))
        bad = feasible & kernels.csr_contains(indptr, indices, users, out)
    return out


def _sample_non_friends(rng, g: SocialGraph, users: np.ndarray) -> np.ndarray:
    """Uniform w with (u, w) outside the original edge set; -1 for users adjacent to everybody."""
    out = rng.integers(0, g.n_users, size=len(users))
    feasible = g.out_degree()[users] < g.n_users - 1
    out[~feasible] = -1
    bad = feasible & ((out == users) | g.has_edges(users, out))
    while bad.any():
        out[bad] = rng.integers(0, g.n_users, size=int(bad.sum()))
        bad = feasible & ((out == users) | g.has_edges(users, out))
    return out


def _sample_active_friends(rng, indptr, indices, users: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    deg = indptr[users + 1] - indptr[users]
    ok = deg > 0
    off = np.floor(rng.random(len(users)) * np.maximum(deg, 1)).astype(np.int64)
    v = indices[np.minimum(indptr[users] + off, len(indices) - 1)] if len(indices) else np.zeros(len(users), np.int64)
    return v, ok


def score_edges(model: Denoiser, d: Dataset, g: SocialGraph, batch: int = 4096) -> np.ndarray:
    """Raw logits for every original directed edge, inference mode."""
    hist_items, hist_mask = build_histories(d, model.cfg.L)
    stack = None
    if model.cfg.scorer == "user-layer-1":
        stack = gcn_forward(model.params, Adjacency.build(d, model.graph))
    out = np.empty(g.n_edges, dtype=np.float64)
    for lo in range(0, g.n_edges, batch):
        hi = min(lo + batch, g.n_edges)
        out[lo:hi] = confidence_logits(model.head, model.params, hist_items, hist_mask, g.src[lo:hi],
                                       g.indices[lo:hi], model.cfg.scorer, stack=stack).data
    return out


def train_denoiser(d: Dataset, g: SocialGraph, cfg: DenoiseConfig, callback=None) -> Denoiser:
    """Joint BPR + link-prediction training with the periodic self-correcting curriculum.

    When ``cfg.interaction_fraction < 1`` the model only ever sees a per-user
    subsample of the train interactions; the returned store is then refreshed
    with one extra scoring period on the full histories.
    """
    rng = np.random.default_rng(cfg.seed)
    d_fit = subsample_train(d, cfg.interaction_fraction, cfg.seed + 7919)
    params = ModelParams.init(d.n_users, d.n_items, cfg.dim, cfg.K, seed=cfg.seed)
    head = ConfidenceHead(cfg.dim, cfg.heads, cfg.ff_dim, cfg.layers, seed=cfg.seed + 1) \
        if cfg.scorer == "transformer-history" else None
    trainable = params.tensors() + (head.tensors() if head else [])
    opt = nx.Adam(trainable, lr=cfg.lr)
    graph = g.reset()
    model = Denoiser(params, head, cfg, ConfidenceStore(np.zeros(g.n_edges)), graph)
    hist_items, hist_mask = build_histories(d_fit, cfg.L)
    adj = Adjacency.build(d_fit, graph)
    pairs = d_fit.train
    use_bpr = cfg.alpha < 1.0 or cfg.scorer == "user-layer-1"
    store = None
    period = 0
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(pairs))
        total = 0.0
        for lo in range(0, len(pairs), cfg.batch):
            b = pairs[perm[lo:lo + cfg.batch]]
            u, i = b[:, 0], b[:, 1]
            j = sample_items_not_in(rng, d_fit.user_indptr, d_fit.user_items, u, d.n_items)
            v, has_friend = _sample_active_friends(rng, adj.social_indptr, adj.social_indices, u)
            w = _sample_non_friends(rng, g, u)
            scale = 1.0 / len(b)
            with nx.GradientTape():
                stack = gcn_forward(params, adj) if use_bpr else None
                terms = []
                if cfg.alpha < 1.0:
                    ok = j >= 0
                    bpr = bpr_loss(stack, np.column_stack([u[ok], i[ok], j[ok]])) * scale
                    terms.append((1.0 - cfg.alpha, bpr))
                rel = has_friend & (w >= 0)
                if cfg.alpha > 0.0 and rel.any():
                    uu = u[rel]
                    both_u = np.concatenate([uu, uu])
                    both_v = np.concatenate([v[rel], w[rel]])
                    logits = confidence_logits(head, params, hist_items, hist_mask, both_u, both_v, cfg.scorer,
                                               stack=stack, dropout=cfg.dropout, training=True, rng=rng)
                    n = len(uu)
                    split = nx.reshape(logits, (2, n))
                    bce = bce_link_loss(nx.take(split, 0, axis=0), nx.take(split, 1, axis=0)) * scale
                    terms.append((cfg.alpha, bce))
                if not terms:
                    continue
                loss = terms[0][0] * terms[0][1]
                for wgt, t in terms[1:]:
                    loss = loss + wgt * t
            grads = nx.backward(loss, trainable)
            if not np.isfinite(loss.data):
                raise FloatingPointError(f"denoiser loss diverged at epoch {epoch}")
            opt.step(grads)
            for p in trainable:
                p.grad = None
            total += float(loss.data) * len(b)
        model.losses.append(total / max(len(pairs), 1))
        if epoch % cfg.curriculum_period == 0:
            period += 1
            raw = score_edges(model, d_fit, g)
            store = smooth_scores(store, raw, cfg.beta, period)
            model.store = store
            if cfg.curriculum:
                graph = graph.with_active(curriculum_update(g, store, cfg))
                model.graph = graph
                adj = Adjacency.build(d_fit, graph)
                model.n_updates += 1
            log.debug("epoch %d period %d loss %.5f active %d/%d", epoch, period, model.losses[-1],
                      int(graph.active.sum()), graph.n_edges)
        if callback is not None:
            callback(epoch, model)
    if store is None or d_fit is not d:
        period += 1
        store = smooth_scores(store, score_edges(model, d, g), cfg.beta, period)
    model.store = store
    return model


# ----------------------------------------------------------------- denoising


@dataclass
class DenoiseResult:
    graph: SocialGraph  # original edges, active = retained
    summary: dict


def _summary(g: SocialGraph, active: np.ndarray) -> dict:
    total = g.n_edges
    out = {"n_edges": total, "n_retained": int(active.sum()),
           "overall_removal_ratio": float(1.0 - active.sum() / total) if total else 0.0}
    retention = {}
    for name, tag in (("observed", OBSERVED), ("fake", FAKE)):
        sel = g.provenance == tag
        if sel.any():
            retention[name] = float(active[sel].mean())
    out["per_provenance_retention"] = retention
    return out


def denoise_graph(g: SocialGraph, store: ConfidenceStore, cfg: DenoiseConfig,
                  eta: np.ndarray | None = None) -> DenoiseResult:
    active = curriculum_update(g, store, cfg, eta=eta)
    return DenoiseResult(g.with_active(active), _summary(g, active))


def rule_based_denoise(d: Dataset, g: SocialGraph, ratio) -> DenoiseResult:
    """Drop each user's friends with the fewest co-interacted train items.

    ``ratio`` is one fraction for everybody or a per-user array (e.g. the
    adaptive ratios of a GDMSR run, so both arms remove the same counts).
    """
    eta = np.broadcast_to(np.asarray(ratio, dtype=np.float64), (g.n_users,))
    if eta.size and not ((eta >= 0.0) & (eta < 1.0)).all():
        raise ValueError("ratio must lie in [0, 1)")
    shared = kernels.shared_counts(d.user_indptr, d.user_items, g.src, g.indices).astype(np.float64)
    n_remove = removal_counts(g, eta)
    active = ~kernels.bottom_mask(g.indptr, g.indices, shared, n_remove)
    return DenoiseResult(g.with_active(active), _summary(g, active))


def calibrate_R(g: SocialGraph, target: float, epsilon: int = 5, gamma: float = 1.0, tol: float = 1e-4) -> float:
    """Smallest R (by bisection) whose adaptive removal reaches ``target`` overall, or the cap."""
    deg = g.out_degree()
    total = deg.sum()

    def removed(R):
        return removal_counts(g, denoise_ratio(deg, epsilon, gamma, R)).sum() / total

    lo, hi = 1e-6, 1.0
    while removed(hi) < target and hi < 1e6:
        hi *= 2
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if removed(mid) >= target:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol * hi:
            break
    return hi


def write_denoised(tsv_path, json_path, result: DenoiseResult, store: ConfidenceStore | None,
                   cfg: DenoiseConfig | None, seed: int) -> None:
    g = result.graph
    scores = store.scores if store is not None else np.zeros(g.n_edges)
    with open(tsv_path, "w", encoding="utf-8") as fh:
        for a, b, s, keep in zip(g.src.tolist(), g.indices.tolist(), scores.tolist(), g.active.tolist()):
            if keep:
                fh.write(f"{a}\t{b}\t{s!r}\n")
    summary = dict(result.summary)
    summary["config"] = asdict(cfg) if cfg is not None else None
    summary["seed"] = seed
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
