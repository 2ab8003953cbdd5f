"""Dual-backend numeric kernels for the hot evaluation and gadget loops.

Each kernel exists twice: a loop implementation compiled with numba @njit and
a pure-numpy fallback.  Selection happens once at import via the TKBC_BACKEND
environment variable: "auto" (default; numba when importable), "numba" or
"numpy".  TKBC_THREADS, when set, caps the numba thread pool.

benchmarks/bench_kernels.py times the two backends against each other.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _pick_backend() -> str:
    choice = os.environ.get("TKBC_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"TKBC_BACKEND must be auto, numba or numpy, got {choice!r}")
    if choice == "numba" and numba is None:
        raise RuntimeError("TKBC_BACKEND=numba but numba is not importable")
    if choice == "auto":
        return "numba" if numba is not None else "numpy"
    return choice


BACKEND = _pick_backend()

if numba is not None and BACKEND == "numba":
    threads = os.environ.get("TKBC_THREADS")
    if threads:
        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# --- loop bodies (numba-compilable) -------------------------------------------

def _time_aware_rank_loops(indptr, begins, ends, qb, qe):
    # indptr delimits, per above-gold entity, its asserted intervals.
    n_above = indptr.shape[0] - 1
    total = 0.0
    for t in range(qb, qe + 1):
        unfiltered = 0
        for i in range(n_above):
            covered = False
            for j in range(indptr[i], indptr[i + 1]):
                if begins[j] <= t <= ends[j]:
                    covered = True
                    break
            if not covered:
                unfiltered += 1
        total += 1.0 + unfiltered
    return total / (qe - qb + 1)


def _greedy_coalesce_loops(probs, theta):
    n = probs.shape[0]
    best = 0
    for t in range(1, n):
        if probs[t] > probs[best]:
            best = t
    lo = best
    hi = best
    mass = probs[best]
    while mass < theta and (lo > 0 or hi < n - 1):
        if lo == 0:
            hi += 1
            mass += probs[hi]
        elif hi == n - 1:
            lo -= 1
            mass += probs[lo]
        elif probs[hi + 1] >= probs[lo - 1]:
            hi += 1
            mass += probs[hi]
        else:
            lo -= 1
            mass += probs[lo]
    return lo, hi


def _greedy_coalesce_batch_loops(probs, thetas, los, his):
    for i in range(probs.shape[0]):
        lo, hi = _greedy_coalesce_loops(probs[i], thetas[i])
        los[i] = lo
        his[i] = hi


def _pair_side_scores_loops(indptr, rels, times, cands, qrel, qt,
                            mu, sigma, bias, wgt, has_stats, out):
    # Softmax-weighted Gaussian gap features over each candidate's neighbor
    # facts, skipping neighbors that share the query relation.
    for c in range(cands.shape[0]):
        e = cands[c]
        start = indptr[e]
        stop = indptr[e + 1]
        zmax = -1e300
        count = 0
        for j in range(start, stop):
            if rels[j] != qrel:
                count += 1
                z = wgt[qrel, rels[j]]
                if z > zmax:
                    zmax = z
        if count == 0:
            out[c] = 0.0
            continue
        denom = 0.0
        acc = 0.0
        for j in range(start, stop):
            ri = rels[j]
            if ri == qrel:
                continue
            a = math.exp(wgt[qrel, ri] - zmax)
            denom += a
            sc = bias[qrel, ri]
            if has_stats[qrel, ri]:
                x = (qt - times[j] - mu[qrel, ri]) / sigma[qrel, ri]
                sc += _INV_SQRT_2PI / sigma[qrel, ri] * math.exp(-0.5 * x * x)
            acc += a * sc
        out[c] = acc / denom


def _pair_side_grads_loops(indptr, rels, times, cands, coefs, qrel, qt,
                           mu, sigma, bias, wgt, has_stats, grad_b, grad_w):
    # Accumulates d(sum_c coef_c * phi_side(cand_c)) into grad_b / grad_w rows.
    for c in range(cands.shape[0]):
        coef = coefs[c]
        if coef == 0.0:
            continue
        e = cands[c]
        start = indptr[e]
        stop = indptr[e + 1]
        zmax = -1e300
        count = 0
        for j in range(start, stop):
            if rels[j] != qrel:
                count += 1
                z = wgt[qrel, rels[j]]
                if z > zmax:
                    zmax = z
        if count == 0:
            continue
        denom = 0.0
        phi = 0.0
        for j in range(start, stop):
            ri = rels[j]
            if ri == qrel:
                continue
            a = math.exp(wgt[qrel, ri] - zmax)
            denom += a
            sc = bias[qrel, ri]
            if has_stats[qrel, ri]:
                x = (qt - times[j] - mu[qrel, ri]) / sigma[qrel, ri]
                sc += _INV_SQRT_2PI / sigma[qrel, ri] * math.exp(-0.5 * x * x)
            phi += a * sc
        phi /= denom
        for j in range(start, stop):
            ri = rels[j]
            if ri == qrel:
                continue
            a = math.exp(wgt[qrel, ri] - zmax) / denom
            sc = bias[qrel, ri]
            if has_stats[qrel, ri]:
                x = (qt - times[j] - mu[qrel, ri]) / sigma[qrel, ri]
                sc += _INV_SQRT_2PI / sigma[qrel, ri] * math.exp(-0.5 * x * x)
            grad_b[qrel, ri] += coef * a
            grad_w[qrel, ri] += coef * a * (sc - phi)


# --- pure-numpy fallbacks ------------------------------------------------------

def _time_aware_rank_numpy(indptr, begins, ends, qb, qe):
    n_above = indptr.shape[0] - 1
    if n_above == 0:
        return 1.0
    ts = np.arange(qb, qe + 1)
    if begins.shape[0] == 0:
        return 1.0 + n_above
    covered = (begins[:, None] <= ts[None, :]) & (ends[:, None] >= ts[None, :])
    lengths = np.diff(indptr)
    owner = np.repeat(np.arange(n_above), lengths)
    per_entity = np.zeros((n_above, ts.shape[0]), dtype=bool)
    np.logical_or.at(per_entity, owner, covered)
    unfiltered = n_above - per_entity.sum(axis=0)
    return float(np.mean(1.0 + unfiltered))


def _greedy_coalesce_numpy(probs, theta):
    # Inherently sequential; plain-python loop over numpy scalars.
    return _greedy_coalesce_loops(probs, theta)


def _greedy_coalesce_batch_numpy(probs, thetas, los, his):
    for i in range(probs.shape[0]):
        lo, hi = _greedy_coalesce_loops(probs[i], thetas[i])
        los[i] = lo
        his[i] = hi


def _gauss_np(x, mu, sigma):
    return _INV_SQRT_2PI / sigma * np.exp(-0.5 * ((x - mu) / sigma) ** 2)


def _pair_side_scores_numpy(indptr, rels, times, cands, qrel, qt,
                            mu, sigma, bias, wgt, has_stats, out):
    for c in range(cands.shape[0]):
        e = cands[c]
        ri = rels[indptr[e]:indptr[e + 1]]
        ti = times[indptr[e]:indptr[e + 1]]
        keep = ri != qrel
        if not keep.any():
            out[c] = 0.0
            continue
        ri = ri[keep]
        ti = ti[keep]
        z = wgt[qrel, ri]
        a = np.exp(z - z.max())
        a /= a.sum()
        sc = bias[qrel, ri] + np.where(
            has_stats[qrel, ri],
            _gauss_np(qt - ti, mu[qrel, ri], sigma[qrel, ri]),
            0.0,
        )
        out[c] = float(a @ sc)


def _pair_side_grads_numpy(indptr, rels, times, cands, coefs, qrel, qt,
                           mu, sigma, bias, wgt, has_stats, grad_b, grad_w):
    for c in range(cands.shape[0]):
        coef = coefs[c]
        if coef == 0.0:
            continue
        e = cands[c]
        ri = rels[indptr[e]:indptr[e + 1]]
        ti = times[indptr[e]:indptr[e + 1]]
        keep = ri != qrel
        if not keep.any():
            continue
        ri = ri[keep]
        ti = ti[keep]
        z = wgt[qrel, ri]
        a = np.exp(z - z.max())
        a /= a.sum()
        sc = bias[qrel, ri] + np.where(
            has_stats[qrel, ri],
            _gauss_np(qt - ti, mu[qrel, ri], sigma[qrel, ri]),
            0.0,
        )
        phi = float(a @ sc)
        np.add.at(grad_b[qrel], ri, coef * a)
        np.add.at(grad_w[qrel], ri, coef * a * (sc - phi))


# --- backend dispatch -----------------------------------------------------------

_NUMPY_IMPLS = {
    "time_aware_rank": _time_aware_rank_numpy,
    "greedy_coalesce_bounds": _greedy_coalesce_numpy,
    "greedy_coalesce_batch": _greedy_coalesce_batch_numpy,
    "pair_side_scores": _pair_side_scores_numpy,
    "pair_side_grads": _pair_side_grads_numpy,
}

if numba is not None:
    _jit = numba.njit(cache=True)
    _greedy_nb = _jit(_greedy_coalesce_loops)

    @numba.njit(cache=True)
    def _greedy_coalesce_batch_nb(probs, thetas, los, his):
        for i in range(probs.shape[0]):
            lo, hi = _greedy_nb(probs[i], thetas[i])
            los[i] = lo
            his[i] = hi

    _NUMBA_IMPLS = {
        "time_aware_rank": _jit(_time_aware_rank_loops),
        "greedy_coalesce_bounds": _greedy_nb,
        "greedy_coalesce_batch": _greedy_coalesce_batch_nb,
        "pair_side_scores": _jit(_pair_side_scores_loops),
        "pair_side_grads": _jit(_pair_side_grads_loops),
    }
else:  # pragma: no cover
    _NUMBA_IMPLS = None

_ACTIVE = _NUMBA_IMPLS if BACKEND == "numba" else _NUMPY_IMPLS

time_aware_rank = _ACTIVE["time_aware_rank"]
greedy_coalesce_bounds = _ACTIVE["greedy_coalesce_bounds"]
greedy_coalesce_batch = _ACTIVE["greedy_coalesce_batch"]
pair_side_scores = _ACTIVE["pair_side_scores"]
pair_side_grads = _ACTIVE["pair_side_grads"]


def implementations(name: str) -> dict[str, object]:
    """Both backends of one kernel, keyed by backend name (for tests/benchmarks)."""
    impls = {"numpy": _NUMPY_IMPLS[name]}
    if _NUMBA_IMPLS is not None:
        impls["numba"] = _NUMBA_IMPLS[name]
    return impls
