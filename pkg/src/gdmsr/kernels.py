"""Hot graph kernels, each with a numba and a pure-numpy implementation.

The public names dispatch on :data:`gdmsr._accel.USE_NUMBA`. Both variants
are importable for equivalence tests and benchmarks via :data:`NUMPY` and
:data:`NUMBA`.

CSR arrays follow the usual convention: ``indptr`` has ``n_rows + 1``
monotone offsets and ``indices[indptr[r]:indptr[r + 1]]`` lists the
(sorted) column ids of row ``r``.
"""

from types import SimpleNamespace

import numpy as np

from ._accel import USE_NUMBA, njit


def row_ids(indptr: np.ndarray) -> np.ndarray:
    """Row index of every stored entry."""
    return np.repeat(np.arange(len(indptr) - 1, dtype=np.int64), np.diff(indptr))


def _segment_sum(segments, values, n):
    out = np.zeros((n, values.shape[1]), dtype=values.dtype)
    if len(segments) == 0:
        return out
    for d in range(values.shape[1]):
        out[:, d] = np.bincount(segments, weights=values[:, d], minlength=n)
    return out


# ---------------------------------------------------------------- numpy path


def _np_self_mean(indptr, indices, self_x, src_x):
    deg = np.diff(indptr)
    acc = self_x + _segment_sum(row_ids(indptr), src_x[indices], len(deg))
    return acc / (1.0 + deg)[:, None].astype(self_x.dtype)


def _np_self_mean_backward(indptr, indices, grad_out, n_src):
    deg = np.diff(indptr)
    g_self = grad_out / (1.0 + deg)[:, None].astype(grad_out.dtype)
    g_src = _segment_sum(indices, g_self[row_ids(indptr)], n_src)
    return g_self, g_src


def _np_scatter_add_rows(index, values, n_rows):
    return _segment_sum(np.asarray(index, dtype=np.int64), values, n_rows)


def _np_csr_contains(indptr, indices, rows, cols):
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if len(indices) == 0 or len(rows) == 0:
        return np.zeros(len(rows), dtype=np.bool_)
    stride = np.int64(max(int(indices.max()), int(cols.max()) if len(cols) else 0) + 1)
    keys = row_ids(indptr) * stride + indices
    query = rows * stride + cols
    pos = np.searchsorted(keys, query)
    pos = np.minimum(pos, len(keys) - 1)
    return keys[pos] == query


def _np_shared_counts(ui_indptr, ui_indices, src, dst):
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    lens = ui_indptr[src + 1] - ui_indptr[src]
    total = int(lens.sum())
    if total == 0:
        return np.zeros(len(src), dtype=np.int64)
    edge = np.repeat(np.arange(len(src), dtype=np.int64), lens)
    starts = np.repeat(ui_indptr[src], lens)
    offsets = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(lens) - lens, lens)
    items = ui_indices[starts + offsets]
    hit = _np_csr_contains(ui_indptr, ui_indices, dst[edge], items)
    return np.bincount(edge, weights=hit, minlength=len(src)).astype(np.int64)


def _np_bottom_mask(indptr, indices, scores, n_remove):
    deg = np.diff(indptr)
    rows = row_ids(indptr)
    order = np.lexsort((indices, -scores, rows))
    pos = np.arange(len(order)) - indptr[rows[order]]
    mask = np.zeros(len(order), dtype=np.bool_)
    mask[order] = pos >= (deg - n_remove)[rows[order]]
    return mask


def _np_subset_mean(indptr, indices, rows, x):
    rows = np.asarray(rows, dtype=np.int64)
    lens = indptr[rows + 1] - indptr[rows]
    total = int(lens.sum())
    out = x[rows].copy()
    if total:
        seg = np.repeat(np.arange(len(rows), dtype=np.int64), lens)
        starts = np.repeat(indptr[rows], lens)
        offsets = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(lens) - lens, lens)
        out += _segment_sum(seg, x[indices[starts + offsets]], len(rows))
    return out / (1.0 + lens)[:, None].astype(x.dtype)


# ---------------------------------------------------------------- numba path


@njit(cache=True)
def _nb_self_mean(indptr, indices, self_x, src_x):
    n, d = self_x.shape
    out = np.empty_like(self_x)
    for r in range(n):
        lo, hi = indptr[r], indptr[r + 1]
        for k in range(d):
            acc = self_x[r, k]
            for p in range(lo, hi):
                acc += src_x[indices[p], k]
            out[r, k] = acc / (1.0 + (hi - lo))
    return out


@njit(cache=True)
def _nb_self_mean_backward(indptr, indices, grad_out, n_src):
    n, d = grad_out.shape
    g_self = np.empty_like(grad_out)
    g_src = np.zeros((n_src, d), dtype=grad_out.dtype)
    for r in range(n):
        lo, hi = indptr[r], indptr[r + 1]
        scale = 1.0 / (1.0 + (hi - lo))
        for k in range(d):
            g = grad_out[r, k] * scale
            g_self[r, k] = g
            for p in range(lo, hi):
                g_src[indices[p], k] += g
    return g_self, g_src


@njit(cache=True)
def _nb_scatter_add_rows(index, values, n_rows):
    out = np.zeros((n_rows, values.shape[1]), dtype=values.dtype)
    for b in range(len(index)):
        r = index[b]
        for k in range(values.shape[1]):
            out[r, k] += values[b, k]
    return out


@njit(cache=True)
def _nb_row_has(indptr, indices, row, col):
    lo, hi = indptr[row], indptr[row + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        if indices[mid] < col:
            lo = mid + 1
        else:
            hi = mid
    return lo < indptr[row + 1] and indices[lo] == col


@njit(cache=True)
def _nb_csr_contains(indptr, indices, rows, cols):
    out = np.zeros(len(rows), dtype=np.bool_)
    for b in range(len(rows)):
        out[b] = _nb_row_has(indptr, indices, rows[b], cols[b])
    return out


@njit(cache=True)
def _nb_shared_counts(ui_indptr, ui_indices, src, dst):
    out = np.zeros(len(src), dtype=np.int64)
    for e in range(len(src)):
        a, a_end = ui_indptr[src[e]], ui_indptr[src[e] + 1]
        b, b_end = ui_indptr[dst[e]], ui_indptr[dst[e] + 1]
        c = 0
        while a < a_end and b < b_end:
            x, y = ui_indices[a], ui_indices[b]
            if x == y:
                c += 1
                a += 1
                b += 1
            elif x < y:
                a += 1
            else:
                b += 1
        out[e] = c
    return out


@njit(cache=True)
def _nb_bottom_mask(indptr, indices, scores, n_remove):
    mask = np.zeros(len(indices), dtype=np.bool_)
    for r in range(len(indptr) - 1):
        lo, hi = indptr[r], indptr[r + 1]
        k = n_remove[r]
        if k <= 0 or hi == lo:
            continue
        # segment is sorted by column, so a stable sort on -score keeps
        # ascending-column order among ties
        order = np.argsort(-scores[lo:hi], kind="mergesort")
        for p in range(hi - lo - k, hi - lo):
            mask[lo + order[p]] = True
    return mask


@njit(cache=True)
def _nb_subset_mean(indptr, indices, rows, x):
    d = x.shape[1]
    out = np.empty((len(rows), d), dtype=x.dtype)
    for b in range(len(rows)):
        r = rows[b]
        lo, hi = indptr[r], indptr[r + 1]
        for k in range(d):
            acc = x[r, k]
            for p in range(lo, hi):
                acc += x[indices[p], k]
            out[b, k] = acc / (1.0 + (hi - lo))
    return out


def _nb_csr_contains_wrapper(indptr, indices, rows, cols):
    return _nb_csr_contains(
        indptr, indices, np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)
    )


def _nb_shared_counts_wrapper(ui_indptr, ui_indices, src, dst):
    return _nb_shared_counts(
        ui_indptr, ui_indices, np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64)
    )


def _nb_scatter_wrapper(index, values, n_rows):
    return _nb_scatter_add_rows(np.asarray(index, dtype=np.int64), values, n_rows)


def _nb_subset_wrapper(indptr, indices, rows, x):
    return _nb_subset_mean(indptr, indices, np.asarray(rows, dtype=np.int64), x)


NUMPY = SimpleNamespace(
    self_mean=_np_self_mean,
    self_mean_backward=_np_self_mean_backward,
    scatter_add_rows=_np_scatter_add_rows,
    csr_contains=_np_csr_contains,
    shared_counts=_np_shared_counts,
    bottom_mask=_np_bottom_mask,
    subset_mean=_np_subset_mean,
)

NUMBA = SimpleNamespace(
    self_mean=_nb_self_mean,
    self_mean_backward=_nb_self_mean_backward,
    scatter_add_rows=_nb_scatter_wrapper,
    csr_contains=_nb_csr_contains_wrapper,
    shared_counts=_nb_shared_counts_wrapper,
    bottom_mask=_nb_bottom_mask,
    subset_mean=_nb_subset_wrapper,
)

_active = NUMBA if USE_NUMBA else NUMPY

self_mean = _active.self_mean
self_mean_backward = _active.self_mean_backward
scatter_add_rows = _active.scatter_add_rows
csr_contains = _active.csr_contains
shared_counts = _active.shared_counts
bottom_mask = _active.bottom_mask
subset_mean = _active.subset_mean
