"""Independent reference implementations used as test oracles.

Nothing here imports the package's propagation or ranking code; each oracle
re-derives its result from first principles with dense matrices or plain
Python loops.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


# ------------------------------------------------------------------ GCN


def row_normalized(adj: np.ndarray) -> np.ndarray:
    """(I + A) with each row divided by its sum (self-loop mean)."""
    a = np.eye(adj.shape[0]) + adj
    return a / a.sum(axis=1, keepdims=True)


def dense_gcn(E1, E2, social, interactions, K):
    """Dense layer stacks for the self-loop-mean GCN.

    ``social`` is an N x N 0/1 matrix of active directed edges (row = source),
    ``interactions`` an N x M 0/1 matrix of train pairs.
    """
    N, M = interactions.shape
    S = row_normalized(social.astype(float))
    deg_u = interactions.sum(axis=1, keepdims=True)
    deg_i = interactions.sum(axis=0)[:, None]
    users, items = [np.array(E1, float)], [np.array(E2, float)]
    for _ in range(K):
        u, i = users[-1], items[-1]
        soc = S @ u
        pref = (u + interactions @ i) / (1.0 + deg_u)
        users.append(0.5 * (soc + pref))
        items.append((i + interactions.T @ u) / (1.0 + deg_i))
    return users, items, sum(users) / len(users), sum(items) / len(items)


# -------------------------------------------------------------- ranking


def exhaustive_metrics(scores, items, positives, ks):
    """Rank by (-score, item) with a plain sort and evaluate Recall/NDCG."""
    ranked = [it for _, it in sorted(zip((-float(s) for s in scores), items.tolist()))]
    pos = set(int(p) for p in positives)
    out = {}
    for k in ks:
        top = ranked[:k]
        hits = [1.0 if it in pos else 0.0 for it in top]
        out[f"recall@{k}"] = sum(hits) / len(pos)
        dcg = sum(h / math.log2(r + 2) for r, h in enumerate(hits))
        idcg = sum(1.0 / math.log2(r + 2) for r in range(min(k, len(pos))))
        out[f"ndcg@{k}"] = dcg / idcg
    return out


# ----------------------------------------------------------------- Adam


def adam_closed_form(grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8, x0=0.0):
    """Scalar Adam trajectory written out longhand."""
    x, m, v = x0, 0.0, 0.0
    out = []
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        x = x - lr * mh / (math.sqrt(vh) + eps)
        out.append(x)
    return out


# ------------------------------------------------------------ smoothing


def smoothed_closed_form(raws, beta):
    """Unrolled store after len(raws) periods.

    store_k = (1-beta) * sum_{t=2..k} beta^(k-t) raw_t + beta^(k-1) raw_1
    """
    k = len(raws)
    acc = beta ** (k - 1) * np.asarray(raws[0], float)
    for t in range(2, k + 1):
        acc = acc + (1 - beta) * beta ** (k - t) * np.asarray(raws[t - 1], float)
    return acc


# ------------------------------------------------------------ curriculum


def bottom_by_score(src, dst, scores, counts):
    """Set of (u, v) edges a per-user bottom-n rule must remove, via full sorting."""
    removed = set()
    by_user: dict = {}
    for u, v, s in zip(src.tolist(), dst.tolist(), scores.tolist()):
        by_user.setdefault(u, []).append((s, v))
    for u, lst in by_user.items():
        # descending score, ascending v: the last n are removed
        ranked = sorted(lst, key=lambda t: (-t[0], t[1]))
        n = counts[u]
        for s, v in ranked[len(ranked) - n:] if n else []:
            removed.add((u, v))
    return removed


def eta_reference(count, epsilon, gamma, R, cap=0.99):
    if count < epsilon:
        return 0.0
    digits = len(str(int(count))) - 1
    return min(digits**gamma * R, cap)


def all_pairs(n):
    return list(itertools.combinations(range(n), 2))
