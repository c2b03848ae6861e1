"""Real-plus-N ranking evaluation and the social-side inference benchmark."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dataset import Dataset, SocialGraph, to_csr


@dataclass
class RankingReport:
    metrics: dict  # e.g. {"recall@1": .., "recall@3": .., "ndcg@3": ..}
    per_user: list
    seed: int
    ks: tuple
    n_negatives: int
    flagged: list = field(default_factory=list)

    def __getitem__(self, key):
        return self.metrics[key]


def _all_items_csr(d: Dataset):
    pairs = d.all_pairs()
    return to_csr(pairs[:, 0], pairs[:, 1], d.n_users)


def sample_candidates(d: Dataset, n_negatives: int, seed: int, split: str = "test"):
    """Yield ``(user, positives, negatives, short)`` for users with held-out items in ``split``."""
    held = getattr(d, split)
    indptr, indices = to_csr(held[:, 0], held[:, 1], d.n_users)
    all_ptr, all_idx = _all_items_csr(d)
    rng = np.random.default_rng(seed)
    for u in np.flatnonzero(np.diff(indptr)):
        pos = indices[indptr[u]:indptr[u + 1]]
        seen = all_idx[all_ptr[u]:all_ptr[u + 1]]
        pool_size = d.n_items - len(seen)
        short = pool_size < n_negatives
        if short:
            negs = np.setdiff1d(np.arange(d.n_items), seen)
        else:
            chosen: list = []
            taken = set()
            while len(chosen) < n_negatives:
                draw = rng.integers(0, d.n_items, size=2 * (n_negatives - len(chosen)) + 8)
                ok = ~kernels.csr_contains(all_ptr, all_idx, np.full(len(draw), u), draw)
                for it in draw[ok].tolist():
                    if it not in taken:
                        taken.add(it)
                        chosen.append(it)
                        if len(chosen) == n_negatives:
                            break
            negs = np.array(chosen, dtype=np.int64)
        yield int(u), pos, negs, short


def rank_metrics(scores: np.ndarray, items: np.ndarray, is_pos: np.ndarray, ks=(1, 3)) -> dict:
    """Recall@K and NDCG@K for one candidate list (ties by ascending item id)."""
    order = np.lexsort((items, -scores))
    hits = is_pos[order]
    n_pos = int(is_pos.sum())
    disc = 1.0 / np.log2(np.arange(2, len(order) + 2))
    out = {}
    for k in ks:
        top = hits[:k]
        out[f"recall@{k}"] = float(top.sum() / n_pos)
        idcg = disc[: min(k, n_pos)].sum()
        out[f"ndcg@{k}"] = float((disc[:k][top]).sum() / idcg)
    return out


def evaluate_ranking(model, d: Dataset, n_negatives: int = 100, seed: int = 0, split: str = "test",
                     ks=(1, 3)) -> RankingReport:
    """``model`` exposes ``user_table`` and ``item_table`` (averaged layers)."""
    U, V = model.user_table, model.item_table
    per_user, flagged = [], []
    for u, pos, negs, short in sample_candidates(d, n_negatives, seed, split):
        items = np.concatenate([pos, negs])
        is_pos = np.zeros(len(items), dtype=bool)
        is_pos[: len(pos)] = True
        scores = V[items] @ U[u]
        rec = rank_metrics(scores, items, is_pos, ks)
        rec["user"] = u
        per_user.append(rec)
        if short:
            flagged.append(u)
    if not per_user:
        raise ValueError(f"no users with {split} interactions to evaluate")
    keys = [f"{m}@{k}" for k in ks for m in ("recall", "ndcg")]
    metrics = {k: float(np.mean([r[k] for r in per_user])) for k in keys}
    return RankingReport(metrics, per_user, seed, tuple(ks), n_negatives, flagged)


@dataclass
class BenchReport:
    ratio: float
    n_edges: int
    median_seconds: float
    times: list
    repetitions: int
    workload: int

    @property
    def dispersion(self) -> float:
        return float(np.subtract(*np.percentile(self.times, [75, 25])))


def bench_inference(user_table: np.ndarray, graphs: dict, workload: int, hops: int = 2, repeats: int = 5,
                    batch: int = 1024, seed: int = 0) -> list[BenchReport]:
    """Time social-side mean aggregation for ``workload`` inference records.

    ``graphs`` maps denoising ratio -> SocialGraph (active edges are used).
    Each record is a user whose friends' representations are aggregated
    ``hops`` times; records are processed in batches. The median over
    ``repeats`` (>= 3) runs is reported.
    """
    repeats = max(3, repeats)
    users = np.random.default_rng(seed).integers(0, user_table.shape[0], size=workload)
    x = np.ascontiguousarray(user_table)
    reports = []
    for ratio, g in sorted(graphs.items()):
        indptr, indices = g.active_csr()
        if workload:
            kernels.subset_mean(indptr, indices, users[:1], x)  # warm-up / JIT
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            for lo in range(0, workload, batch):
                rows = users[lo:lo + batch]
                for _ in range(hops):
                    kernels.subset_mean(indptr, indices, rows, x)
            times.append(time.perf_counter() - t0)
        reports.append(BenchReport(float(ratio), int(len(indices)), float(np.median(times)), times, repeats, workload))
    return reports
