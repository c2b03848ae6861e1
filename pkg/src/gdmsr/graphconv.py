"""GCN propagation over the social and interaction graphs, scoring and BPR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .dataset import Dataset, SocialGraph
from .numerics import Tensor


@dataclass
class ModelParams:
    E1: Tensor  # users x D
    E2: Tensor  # items x D
    K: int = 2

    @property
    def D(self) -> int:
        return self.E1.shape[1]

    @classmethod
    def init(cls, n_users: int, n_items: int, dim: int = 8, K: int = 2, seed: int = 0,
             std: float = 0.01, dtype=np.float32) -> "ModelParams":
        rng = np.random.default_rng(seed)
        return cls(
            Tensor(rng.normal(0.0, std, (n_users, dim)).astype(dtype), requires_grad=True, name="E1"),
            Tensor(rng.normal(0.0, std, (n_items, dim)).astype(dtype), requires_grad=True, name="E2"),
            K,
        )

    def tensors(self) -> list[Tensor]:
        return [self.E1, self.E2]


@dataclass
class LayerStack:
    users: list  # K+1 tensors
    items: list
    user_star: Tensor
    item_star: Tensor


@dataclass
class Adjacency:
    """CSR views the propagation needs: active social, user->items, item->users."""

    social_indptr: np.ndarray
    social_indices: np.ndarray
    ui_indptr: np.ndarray
    ui_indices: np.ndarray
    iu_indptr: np.ndarray
    iu_indices: np.ndarray

    @classmethod
    def build(cls, d: Dataset, g: SocialGraph) -> "Adjacency":
        sp, si = g.active_csr()
        return cls(sp, si, d.user_indptr, d.user_items, d.item_indptr, d.item_users)


def social_hop(adj: Adjacency, users: Tensor) -> Tensor:
    return nx.self_mean_aggregate(adj.social_indptr, adj.social_indices, users, users)


def gcn_forward(params: ModelParams, adj: Adjacency, K: int | None = None) -> LayerStack:
    """K hops of self-loop-mean propagation, mean-pool combine, layer averaging."""
    K = params.K if K is None else K
    u_layers, i_layers = [params.E1], [params.E2]
    for _ in range(K):
        u_prev, i_prev = u_layers[-1], i_layers[-1]
        social = social_hop(adj, u_prev)
        pref = nx.self_mean_aggregate(adj.ui_indptr, adj.ui_indices, u_prev, i_prev)
        u_layers.append((social + pref) * 0.5)
        i_layers.append(nx.self_mean_aggregate(adj.iu_indptr, adj.iu_indices, i_prev, u_prev))
    return LayerStack(u_layers, i_layers, _layer_mean(u_layers), _layer_mean(i_layers))


def _layer_mean(layers: list) -> Tensor:
    if len(layers) == 1:
        return layers[0]
    acc = layers[0]
    for t in layers[1:]:
        acc = acc + t
    return acc * (1.0 / len(layers))


def predict_score(stack: LayerStack, u: int, i: int) -> float:
    return float(np.dot(stack.user_star.data[u], stack.item_star.data[i]))


def pair_scores(stack: LayerStack, users, items) -> Tensor:
    """Differentiable ``E1*(u) . E2*(i)`` for aligned index arrays."""
    pu = nx.gather_rows(stack.user_star, users)
    qi = nx.gather_rows(stack.item_star, items)
    return (pu * qi).sum(axis=-1)


def bpr_loss(stack: LayerStack, triples) -> Tensor:
    """Sum over (u, i_pos, i_neg) of ``-ln sigmoid(p_ui - p_uj)``."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(triples) == 0:
        return Tensor(np.zeros((), dtype=stack.user_star.dtype))
    diff = pair_scores(stack, triples[:, 0], triples[:, 1]) - pair_scores(stack, triples[:, 0], triples[:, 2])
    return -nx.log_sigmoid(diff).sum()

