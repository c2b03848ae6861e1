"""The numba and numpy kernel paths must agree on arbitrary CSR inputs."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gdmsr import kernels
from gdmsr._accel import HAVE_NUMBA
from gdmsr.dataset import to_csr

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


@st.composite
def csr_graphs(draw, max_rows=8, max_cols=8):
    n_rows = draw(st.integers(1, max_rows))
    n_cols = draw(st.integers(1, max_cols))
    cells = draw(st.sets(st.tuples(st.integers(0, n_rows - 1), st.integers(0, n_cols - 1)), max_size=30))
    cells = sorted(cells)
    rows = np.array([c[0] for c in cells], dtype=np.int64)
    cols = np.array([c[1] for c in cells], dtype=np.int64)
    indptr, indices = to_csr(rows, cols, n_rows)
    return n_rows, n_cols, indptr, indices


@given(csr_graphs(), st.integers(0, 2**31))
def test_self_mean_paths_agree(g, seed):
    n_rows, n_cols, indptr, indices = g
    r = np.random.default_rng(seed)
    xs, xc = r.normal(size=(n_rows, 3)), r.normal(size=(n_cols, 3))
    np.testing.assert_allclose(kernels.NUMBA.self_mean(indptr, indices, xs, xc),
                               kernels.NUMPY.self_mean(indptr, indices, xs, xc), rtol=1e-12, atol=1e-14)
    go = r.normal(size=(n_rows, 3))
    for a, b in zip(kernels.NUMBA.self_mean_backward(indptr, indices, go, n_cols),
                    kernels.NUMPY.self_mean_backward(indptr, indices, go, n_cols)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@given(csr_graphs(), st.lists(st.tuples(st.integers(0, 7), st.integers(0, 9)), max_size=20))
def test_csr_contains_paths_agree(g, queries):
    n_rows, _, indptr, indices = g
    q = [(r, c) for r, c in queries if r < n_rows]
    rows = np.array([a for a, _ in q], dtype=np.int64)
    cols = np.array([b for _, b in q], dtype=np.int64)
    truth = np.array([c in set(indices[indptr[r]:indptr[r + 1]].tolist()) for r, c in q], dtype=bool)
    np.testing.assert_array_equal(kernels.NUMBA.csr_contains(indptr, indices, rows, cols), truth)
    np.testing.assert_array_equal(kernels.NUMPY.csr_contains(indptr, indices, rows, cols), truth)


@given(csr_graphs(max_rows=6, max_cols=6), st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=15))
def test_shared_counts_paths_agree(g, pairs):
    n_rows, _, indptr, indices = g
    pairs = [(a, b) for a, b in pairs if a < n_rows and b < n_rows]
    src = np.array([a for a, _ in pairs], dtype=np.int64)
    dst = np.array([b for _, b in pairs], dtype=np.int64)
    truth = [len(set(indices[indptr[a]:indptr[a + 1]].tolist()) & set(indices[indptr[b]:indptr[b + 1]].tolist()))
             for a, b in pairs]
    np.testing.assert_array_equal(kernels.NUMBA.shared_counts(indptr, indices, src, dst), truth)
    np.testing.assert_array_equal(kernels.NUMPY.shared_counts(indptr, indices, src, dst), truth)


@given(csr_graphs(), st.integers(0, 2**31))
def test_bottom_mask_paths_agree(g, seed):
    n_rows, _, indptr, indices = g
    r = np.random.default_rng(seed)
    scores = r.integers(-2, 3, size=len(indices)).astype(np.float64)  # many ties
    deg = np.diff(indptr)
    n_remove = np.array([r.integers(0, d + 1) for d in deg], dtype=np.int64)
    a = kernels.NUMBA.bottom_mask(indptr, indices, scores, n_remove)
    b = kernels.NUMPY.bottom_mask(indptr, indices, scores, n_remove)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(np.bincount(kernels.row_ids(indptr)[a], minlength=n_rows), n_remove)


@given(csr_graphs(), st.integers(0, 2**31))
def test_subset_mean_and_scatter_paths_agree(g, seed):
    n_rows, n_cols, indptr, indices = g
    r = np.random.default_rng(seed)
    x = r.normal(size=(max(n_rows, n_cols), 4))
    rows = r.integers(0, n_rows, size=5)
    np.testing.assert_allclose(kernels.NUMBA.subset_mean(indptr, indices, rows, x),
                               kernels.NUMPY.subset_mean(indptr, indices, rows, x), rtol=1e-12)
    idx = r.integers(0, n_cols, size=7)
    vals = r.normal(size=(7, 4))
    np.testing.assert_allclose(kernels.NUMBA.scatter_add_rows(idx, vals, n_cols),
                               kernels.NUMPY.scatter_add_rows(idx, vals, n_cols), rtol=1e-12)


def test_subset_mean_value():
    indptr, indices = to_csr(np.array([0, 0]), np.array([1, 2]), 3)
    x = np.array([[3.0], [0.0], [6.0]])
    np.testing.assert_allclose(kernels.subset_mean(indptr, indices, np.array([0, 1]), x), [[3.0], [0.0]])


def test_backend_flag_selects_numpy_in_subprocess():
    import os
    import subprocess
    import sys

    env = dict(os.environ, GDMSR_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "import gdmsr; print(gdmsr.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
