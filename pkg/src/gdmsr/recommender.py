"""Downstream GCN social recommender trained with BPR on a fixed social graph."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .dataset import Dataset, SocialGraph
from .denoiser import sample_items_not_in
from .evaluation import evaluate_ranking
from .graphconv import Adjacency, LayerStack, ModelParams, bpr_loss, gcn_forward, predict_score

log = logging.getLogger(__name__)


@dataclass
class RecConfig:
    dim: int = 8
    K: int = 2
    lr: float = 0.005
    batch: int = 1024
    epochs: int = 200
    eval_every: int = 5
    patience: int = 20
    n_negatives: int = 100
    seed: int = 0
    init_std: float = 0.01


@dataclass
class TrainedRecommender:
    params: ModelParams
    stack: LayerStack
    graph: SocialGraph
    history: list = field(default_factory=list)

    @property
    def user_table(self) -> np.ndarray:
        return self.stack.user_star.data

    @property
    def item_table(self) -> np.ndarray:
        return self.stack.item_star.data


def _snapshot(params: ModelParams, adj: Adjacency) -> LayerStack:
    frozen = ModelParams(nx.Tensor(params.E1.data.copy()), nx.Tensor(params.E2.data.copy()), params.K)
    return gcn_forward(frozen, adj)


def train_recommender(d: Dataset, g: SocialGraph, cfg: RecConfig | None = None) -> TrainedRecommender:
    """Mini-batch BPR with Adam and early stopping on validation Recall@1.

    The social graph is used as given (active edges only) and never mutated.
    """
    cfg = cfg or RecConfig()
    rng = np.random.default_rng(cfg.seed)
    params = ModelParams.init(d.n_users, d.n_items, cfg.dim, cfg.K, seed=cfg.seed, std=cfg.init_std)
    adj = Adjacency.build(d, g)
    opt = nx.Adam(params.tensors(), lr=cfg.lr)
    best = (-1.0, _snapshot(params, adj), 0)
    stale = 0
    history = []
    has_valid = len(d.valid) > 0
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(d.train))
        for lo in range(0, len(d.train), cfg.batch):
            b = d.train[perm[lo:lo + cfg.batch]]
            j = sample_items_not_in(rng, d.user_indptr, d.user_items, b[:, 0], d.n_items)
            ok = j >= 0
            if not ok.any():
                continue
            with nx.GradientTape():
                loss = bpr_loss(gcn_forward(params, adj), np.column_stack([b[ok], j[ok]])) * (1.0 / len(b))
            if not np.isfinite(loss.data):
                raise FloatingPointError(f"recommender loss diverged at epoch {epoch}")
            opt.step(nx.backward(loss, params.tensors()))
        if has_valid and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            stack = _snapshot(params, adj)
            probe = TrainedRecommender(params, stack, g)
            r1 = evaluate_ranking(probe, d, cfg.n_negatives, seed=cfg.seed, split="valid")["recall@1"]
            history.append((epoch, r1))
            if r1 > best[0]:
                best = (r1, stack, epoch)
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    log.debug("early stop at epoch %d (best %d)", epoch, best[2])
                    break
    stack = best[1] if has_valid and best[0] >= 0 else _snapshot(params, adj)
    final = ModelParams(stack.users[0], stack.items[0], cfg.K)
    return TrainedRecommender(final, stack, g, history)


def score_all(m: TrainedRecommender, u: int, candidates) -> list[float]:
    return [predict_score(m.stack, u, int(i)) for i in candidates]
