"""The numba-jitted kernels and their numpy fallbacks must agree."""

import numpy as np
import pytest

from tkbc import _kernels


def random_csr(rng, n_entities, n_rel, max_deg=6, t_max=50):
    degrees = rng.integers(0, max_deg, size=n_entities)
    indptr = np.zeros(n_entities + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(degrees)
    nnz = int(indptr[-1])
    rels = rng.integers(0, n_rel, size=nnz).astype(np.int64)
    times = rng.integers(0, t_max, size=nnz).astype(np.float64)
    return indptr, rels, times


def pair_tables(rng, n_rel):
    mu = rng.normal(scale=10, size=(n_rel, n_rel))
    sigma = np.abs(rng.normal(loc=3, scale=1, size=(n_rel, n_rel))) + 1.0
    bias = rng.normal(size=(n_rel, n_rel))
    wgt = rng.normal(size=(n_rel, n_rel))
    has = rng.random((n_rel, n_rel)) < 0.7
    return mu, sigma, bias, wgt, has


@pytest.mark.skipif("numba" not in _kernels.implementations("pair_side_scores"),
                    reason="numba unavailable")
class TestBackendAgreement:
    def test_pair_side_scores(self):
        rng = np.random.default_rng(0)
        indptr, rels, times = random_csr(rng, 40, 6)
        tables = pair_tables(rng, 6)
        cands = rng.integers(0, 40, size=25).astype(np.int64)
        impls = _kernels.implementations("pair_side_scores")
        outs = {}
        for name, fn in impls.items():
            out = np.empty(cands.shape[0])
            fn(indptr, rels, times, cands, 2, 17.0, *tables, out)
            outs[name] = out
        np.testing.assert_allclose(outs["numba"], outs["numpy"], rtol=1e-12)

    def test_pair_side_grads(self):
        rng = np.random.default_rng(1)
        indptr, rels, times = random_csr(rng, 30, 5)
        tables = pair_tables(rng, 5)
        cands = rng.integers(0, 30, size=12).astype(np.int64)
        coefs = rng.normal(size=12)
        impls = _kernels.implementations("pair_side_grads")
        grads = {}
        for name, fn in impls.items():
            gb = np.zeros((5, 5))
            gw = np.zeros((5, 5))
            fn(indptr, rels, times, cands, coefs, 1, 9.0, *tables, gb, gw)
            grads[name] = (gb, gw)
        np.testing.assert_allclose(grads["numba"][0], grads["numpy"][0], atol=1e-12)
        np.testing.assert_allclose(grads["numba"][1], grads["numpy"][1], atol=1e-12)

    def test_time_aware_rank(self):
        rng = np.random.default_rng(2)
        impls = _kernels.implementations("time_aware_rank")
        for _ in range(30):
            n_above = int(rng.integers(0, 8))
            counts = rng.integers(0, 4, size=n_above)
            indptr = np.zeros(n_above + 1, dtype=np.int64)
            indptr[1:] = np.cumsum(counts)
            begins = rng.integers(0, 20, size=int(indptr[-1])).astype(np.int64)
            ends = begins + rng.integers(0, 10, size=begins.shape[0])
            qb = int(rng.integers(0, 15))
            qe = qb + int(rng.integers(0, 6))
            values = {name: fn(indptr, begins, ends, qb, qe)
                      for name, fn in impls.items()}
            assert values["numba"] == pytest.approx(values["numpy"], rel=1e-12)

    def test_greedy_coalesce(self):
        rng = np.random.default_rng(3)
        impls = _kernels.implementations("greedy_coalesce_bounds")
        for _ in range(50):
            n = int(rng.integers(1, 30))
            probs = rng.random(n)
            probs /= probs.sum()
            theta = float(rng.uniform(0.05, 1.0))
            bounds = {name: fn(probs, theta) for name, fn in impls.items()}
            assert tuple(bounds["numba"]) == tuple(bounds["numpy"])

    def test_greedy_coalesce_batch(self):
        rng = np.random.default_rng(4)
        probs = rng.random((20, 15))
        probs /= probs.sum(axis=1, keepdims=True)
        thetas = rng.uniform(0.1, 1.0, size=20)
        impls = _kernels.implementations("greedy_coalesce_batch")
        results = {}
        for name, fn in impls.items():
            los = np.zeros(20, dtype=np.int64)
            his = np.zeros(20, dtype=np.int64)
            fn(probs, thetas, los, his)
            results[name] = (los.copy(), his.copy())
        np.testing.assert_array_equal(results["numba"][0], results["numpy"][0])
        np.testing.assert_array_equal(results["numba"][1], results["numpy"][1])


def test_backend_selection_reports():
    assert _kernels.BACKEND in ("numba", "numpy")
    impls = _kernels.implementations("time_aware_rank")
    assert "numpy" in impls
