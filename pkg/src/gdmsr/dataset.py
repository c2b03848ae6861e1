"""Interaction / social-graph ingestion and the dense-index data structures."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels

OBSERVED = 0
FAKE = 1


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True)
class FilterConfig:
    min_user_interactions: int = 5
    min_item_interactions: int = 5
    min_friends: int = 2
    min_rating: float = 4.0


@dataclass(frozen=True)
class SplitConfig:
    train: float = 0.8
    valid: float = 0.1
    test: float = 0.1


def to_csr(rows: np.ndarray, cols: np.ndarray, n_rows: int) -> tuple[np.ndarray, np.ndarray]:
    """CSR (indptr, indices) with columns sorted within each row."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    order = np.lexsort((cols, rows))
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
    return indptr, cols[order]


@dataclass
class Dataset:
    n_users: int
    n_items: int
    train: np.ndarray  # (n, 2) int64 (user, item)
    valid: np.ndarray
    test: np.ndarray
    user_ids: list = field(default_factory=list)
    item_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.user_indptr, self.user_items = to_csr(self.train[:, 0], self.train[:, 1], self.n_users)
        self.item_indptr, self.item_users = to_csr(self.train[:, 1], self.train[:, 0], self.n_items)
        self.popularity = np.diff(self.item_indptr)

    def items_of(self, u: int) -> np.ndarray:
        return self.user_items[self.user_indptr[u]:self.user_indptr[u + 1]]

    def with_train(self, train: np.ndarray) -> "Dataset":
        return replace(self, train=np.asarray(train, dtype=np.int64).reshape(-1, 2))

    def all_pairs(self) -> np.ndarray:
        return np.concatenate([self.train, self.valid, self.test])


class SocialGraph:
    """Directed user->friend CSR graph with per-edge active flags and provenance.

    ``provenance`` is read-only after construction; ``active`` is the only
    mutable state and is owned by the curriculum.
    """

    def __init__(self, n_users: int, src, dst, provenance=None, active=None):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        prov = np.zeros(len(src), dtype=np.uint8) if provenance is None else np.asarray(provenance, dtype=np.uint8)
        act = np.ones(len(src), dtype=bool) if active is None else np.asarray(active, dtype=bool)
        if np.any(src == dst):
            raise DataError("social graph contains self-loops")
        if len(src) and (src.min() < 0 or max(src.max(), dst.max()) >= n_users or dst.min() < 0):
            raise DataError("social edge index out of range")
        order = np.lexsort((dst, src))
        src, dst, prov, act = src[order], dst[order], prov[order], act[order]
        if len(src) > 1 and np.any((src[1:] == src[:-1]) & (dst[1:] == dst[:-1])):
            raise DataError("social graph contains duplicate directed edges")
        self.n_users = n_users
        self.indptr, self.indices = to_csr(src, dst, n_users)
        self.src = src
        prov.setflags(write=False)
        self.provenance = prov
        self.active = act

    @classmethod
    def from_undirected(cls, n_users: int, pairs, provenance=None) -> "SocialGraph":
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        prov = np.zeros(len(pairs), dtype=np.uint8) if provenance is None else np.asarray(provenance, dtype=np.uint8)
        return cls(
            n_users,
            np.concatenate([pairs[:, 0], pairs[:, 1]]),
            np.concatenate([pairs[:, 1], pairs[:, 0]]),
            np.concatenate([prov, prov]),
        )

    @property
    def dst(self) -> np.ndarray:
        return self.indices

    @property
    def n_edges(self) -> int:
        return len(self.indices)

    def out_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def active_degree(self) -> np.ndarray:
        return np.bincount(self.src[self.active], minlength=self.n_users)

    def active_csr(self) -> tuple[np.ndarray, np.ndarray]:
        return to_csr(self.src[self.active], self.indices[self.active], self.n_users)

    def friends(self, u: int, active_only: bool = True) -> np.ndarray:
        lo, hi = self.indptr[u], self.indptr[u + 1]
        nb = self.indices[lo:hi]
        return nb[self.active[lo:hi]] if active_only else nb

    def has_edges(self, src, dst) -> np.ndarray:
        return kernels.csr_contains(self.indptr, self.indices, src, dst)

    def with_active(self, active: np.ndarray) -> "SocialGraph":
        g = object.__new__(SocialGraph)
        g.n_users, g.indptr, g.indices, g.src, g.provenance = (
            self.n_users, self.indptr, self.indices, self.src, self.provenance)
        g.active = np.asarray(active, dtype=bool).copy()
        return g

    def reset(self) -> "SocialGraph":
        return self.with_active(np.ones(self.n_edges, dtype=bool))

    def materialize(self) -> "SocialGraph":
        """New graph holding only the active edges, all active."""
        keep = self.active
        return SocialGraph(self.n_users, self.src[keep], self.indices[keep], self.provenance[keep])

    def undirected_count(self) -> int:
        return int(np.sum(self.src < self.indices))


# -------------------------------------------------------------------- loading


def _read_tsv(path, min_cols: int, max_cols: int):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if not min_cols <= len(parts) <= max_cols or any(p.strip() == "" for p in parts):
                raise DataError(f"{path}:{lineno}: expected {min_cols}-{max_cols} tab-separated fields, got {line!r}")
            rows.append((lineno, [p.strip() for p in parts]))
    return rows


def _sort_ids(ids):
    ids = list(ids)
    if all(s.lstrip("-").isdigit() for s in ids):
        return sorted(ids, key=int)
    return sorted(ids)


def filter_interactions(pairs: set, social: set, cfg: FilterConfig):
    """Drop low-activity users/items until every threshold holds (fixpoint)."""
    pairs = set(pairs)
    social = set(social)
    while True:
        ucount, icount, fcount = {}, {}, {}
        for u, i in pairs:
            ucount[u] = ucount.get(u, 0) + 1
            icount[i] = icount.get(i, 0) + 1
        live_users = {u for u, c in ucount.items() if c >= cfg.min_user_interactions}
        social = {(a, b) for a, b in social if a in live_users and b in live_users}
        for a, b in social:
            fcount[a] = fcount.get(a, 0) + 1
            fcount[b] = fcount.get(b, 0) + 1
        if cfg.min_friends > 0:
            live_users = {u for u in live_users if fcount.get(u, 0) >= cfg.min_friends}
        live_items = {i for i, c in icount.items() if c >= cfg.min_item_interactions}
        kept = {(u, i) for u, i in pairs if u in live_users and i in live_items}
        social_kept = {(a, b) for a, b in social if a in live_users and b in live_users}
        if kept == pairs and social_kept == social:
            return pairs, social
        pairs, social = kept, social_kept


def split_pairs(pairs: np.ndarray, n_users: int, cfg: SplitConfig, seed: int):
    """Per-user random split; every user keeps at least one train interaction."""
    rng = np.random.default_rng(seed)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    indptr = np.zeros(n_users + 1, dtype=np.int64)
    np.cumsum(np.bincount(pairs[:, 0], minlength=n_users), out=indptr[1:])
    parts = ([], [], [])
    for u in range(n_users):
        rows = pairs[indptr[u]:indptr[u + 1]]
        n = len(rows)
        if n == 0:
            continue
        rows = rows[rng.permutation(n)]
        n_train = max(1, int(np.floor(n * cfg.train + 0.5)))
        rest = n - n_train
        held = cfg.valid + cfg.test
        n_valid = int(np.floor(rest * cfg.valid / held)) if held > 0 else 0
        parts[0].append(rows[:n_train])
        parts[1].append(rows[n_train:n_train + n_valid])
        parts[2].append(rows[n_train + n_valid:])
    return tuple(np.concatenate(p) if p else np.zeros((0, 2), dtype=np.int64) for p in parts)


def load_dataset(interactions_path, social_path, filter: FilterConfig | None = None,
                 split: SplitConfig | None = None, seed: int = 0) -> tuple[Dataset, SocialGraph]:
    """Read raw TSV files into a filtered, remapped, split ``Dataset`` and ``SocialGraph``."""
    rows = []
    for lineno, parts in _read_tsv(interactions_path, 2, 3):
        rating = None
        if len(parts) == 3:
            try:
                rating = float(parts[2])
            except ValueError:
                raise DataError(f"{interactions_path}:{lineno}: rating {parts[2]!r} is not a number") from None
        rows.append((parts[0], parts[1], rating))
    social = [tuple(parts) for _, parts in _read_tsv(social_path, 2, 2)]
    return build_dataset(rows, social, filter, split, seed)


def build_dataset(interactions, social_rows, filter: FilterConfig | None = None,
                  split: SplitConfig | None = None, seed: int = 0) -> tuple[Dataset, SocialGraph]:
    """Filter, remap and split in-memory rows.

    ``interactions`` holds ``(user, item)`` or ``(user, item, rating)``
    tuples; rows with a rating below ``filter.min_rating`` are dropped.
    """
    filter = filter or FilterConfig()
    split = split or SplitConfig()
    pairs = set()
    for row in interactions:
        rating = row[2] if len(row) > 2 else None
        if rating is not None and float(rating) < filter.min_rating:
            continue
        pairs.add((str(row[0]), str(row[1])))
    social = set()
    for a, b in social_rows:
        a, b = str(a), str(b)
        if a != b:
            social.add((a, b) if a < b else (b, a))
    pairs, social = filter_interactions(pairs, social, filter)
    if not pairs:
        raise DataError("dataset is empty after filtering")
    user_ids = _sort_ids({u for u, _ in pairs})
    item_ids = _sort_ids({i for _, i in pairs})
    umap = {u: k for k, u in enumerate(user_ids)}
    imap = {i: k for k, i in enumerate(item_ids)}
    arr = np.array(sorted((umap[u], imap[i]) for u, i in pairs), dtype=np.int64).reshape(-1, 2)
    train, valid, test = split_pairs(arr, len(user_ids), split, seed)
    data = Dataset(len(user_ids), len(item_ids), train, valid, test, user_ids, item_ids)
    und = np.array(sorted((umap[a], umap[b]) for a, b in social), dtype=np.int64).reshape(-1, 2)
    return data, SocialGraph.from_undirected(len(user_ids), und)


def save_prepared(path, d: Dataset, g: SocialGraph) -> None:
    """Store a prepared dataset and graph as a single ``.npz``."""
    np.savez(
        path, n_users=d.n_users, n_items=d.n_items, train=d.train, valid=d.valid, test=d.test,
        user_ids=np.array(d.user_ids, dtype=str), item_ids=np.array(d.item_ids, dtype=str),
        social_src=g.src, social_dst=g.indices, provenance=g.provenance, active=g.active,
    )


def load_prepared(path) -> tuple[Dataset, SocialGraph]:
    z = np.load(path, allow_pickle=False)
    d = Dataset(int(z["n_users"]), int(z["n_items"]), z["train"], z["valid"], z["test"],
                z["user_ids"].tolist(), z["item_ids"].tolist())
    g = SocialGraph(d.n_users, z["social_src"], z["social_dst"], z["provenance"], z["active"])
    return d, g


# -------------------------------------------------------------- fake relations


def inject_fake_relations(g: SocialGraph, seed: int) -> SocialGraph:
    """Add as many uniformly sampled non-edges as there are observed undirected edges."""
    n = g.n_users
    observed = g.provenance == OBSERVED
    src, dst = g.src[observed], g.indices[observed]
    und = src < dst
    m = int(und.sum())
    existing = set(zip(src[und].tolist(), dst[und].tolist()))
    complement = n * (n - 1) // 2 - len(existing)
    if complement < m or (m > 0 and complement == 0):
        raise DataError(f"graph too dense to inject {m} fake relations ({complement} non-edges available)")
    rng = np.random.default_rng(seed)
    fakes: set = set()
    while len(fakes) < m:
        need = m - len(fakes)
        a = rng.integers(0, n, size=2 * need + 16)
        b = rng.integers(0, n, size=2 * need + 16)
        for x, y in zip(a.tolist(), b.tolist()):
            if x == y:
                continue
            key = (x, y) if x < y else (y, x)
            if key in existing or key in fakes:
                continue
            fakes.add(key)
            if len(fakes) == m:
                break
    fake_pairs = np.array(sorted(fakes), dtype=np.int64).reshape(-1, 2)
    all_src = np.concatenate([src, fake_pairs[:, 0], fake_pairs[:, 1]])
    all_dst = np.concatenate([dst, fake_pairs[:, 1], fake_pairs[:, 0]])
    prov = np.concatenate([np.zeros(len(src), np.uint8), np.full(2 * m, FAKE, np.uint8)])
    return SocialGraph(n, all_src, all_dst, prov)


# ------------------------------------------------------------------ statistics


def co_interaction_stats(d: Dataset, g: SocialGraph) -> tuple[np.ndarray, np.ndarray]:
    """Per user with friends: fraction of friends sharing at least one train item."""
    shared = kernels.shared_counts(d.user_indptr, d.user_items, g.src, g.indices)
    deg = g.out_degree()
    hits = np.bincount(g.src, weights=(shared > 0), minlength=g.n_users)
    users = np.flatnonzero(deg > 0)
    return users, hits[users] / deg[users]


def write_stats_csv(path, users: np.ndarray, ratios: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_index", "ratio"])
        for u, r in zip(users.tolist(), ratios.tolist()):
            w.writerow([u, repr(float(r))])


# ------------------------------------------------------------------ synthetic


def synthetic_raw(n_users: int = 600, n_items: int = 900, n_clusters: int = 8, seed: int = 0,
                  mean_interactions: float = 22.0, mean_friends: float = 14.0,
                  close_friends: int = 6, rating_noise: float = 0.15):
    """Generate raw rating and social rows from a planted cluster model.

    Users and items belong to latent taste clusters. Interactions mostly hit
    the user's own cluster with popularity skew; a small share are rated low.
    Each user has a bounded number of same-cluster close friends and the rest
    of a heavy-tailed degree budget is spent on random weak ties, so dense
    users carry proportionally more uninformative relations.

    Returns ``(interaction_rows, social_rows)`` with string ids.
    """
    rng = np.random.default_rng(seed)
    ucl = rng.integers(0, n_clusters, size=n_users)
    icl = rng.integers(0, n_clusters, size=n_items)
    pop = rng.pareto(1.5, size=n_items) + 1.0
    by_cluster = [np.flatnonzero(icl == c) for c in range(n_clusters)]
    users_by_cluster = [np.flatnonzero(ucl == c) for c in range(n_clusters)]
    inter = []
    for u in range(n_users):
        k = max(6, int(rng.lognormal(np.log(mean_interactions), 0.5)))
        own = by_cluster[ucl[u]]
        n_own = int(round(k * 0.8))
        p_own = pop[own] / pop[own].sum()
        items = set(rng.choice(own, size=min(n_own, len(own)), replace=False, p=p_own).tolist())
        items |= set(rng.choice(n_items, size=k - n_own, replace=False, p=pop / pop.sum()).tolist())
        for i in sorted(items):
            rating = int(rng.integers(1, 4)) if rng.random() < rating_noise else int(rng.integers(4, 6))
            inter.append((f"u{u}", f"i{i}", str(rating)))
    edges = set()
    for u in range(n_users):
        deg = max(2, int(rng.lognormal(np.log(mean_friends), 0.8)))
        peers = users_by_cluster[ucl[u]]
        n_close = min(close_friends, deg // 2 + 1, len(peers) - 1)
        for v in rng.choice(peers, size=n_close + 1, replace=False).tolist():
            if v != u:
                edges.add((min(u, v), max(u, v)))
        for v in rng.integers(0, n_users, size=max(0, deg - n_close)).tolist():
            if v != u:
                edges.add((min(u, v), max(u, v)))
    social = [(f"u{a}", f"u{b}") for a, b in sorted(edges)]
    return inter, social


def load_synthetic(filter: FilterConfig | None = None, split: SplitConfig | None = None, split_seed: int = 0,
                   **kwargs) -> tuple[Dataset, SocialGraph]:
    inter, social = synthetic_raw(**kwargs)
    return build_dataset([(u, i, float(r)) for u, i, r in inter], social, filter, split, split_seed)


def write_synthetic(out_dir, **kwargs) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inter, social = synthetic_raw(**kwargs)
    ip, sp = out / "interactions.tsv", out / "social.tsv"
    ip.write_text("".join("\t".join(r) + "\n" for r in inter), encoding="utf-8")
    sp.write_text("".join("\t".join(r) + "\n" for r in social), encoding="utf-8")
    return ip, sp
