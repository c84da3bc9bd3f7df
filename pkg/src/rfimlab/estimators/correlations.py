"""Uniformity of multi-point correlations away from the boundary."""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .. import _kernels as K
from ..disorder import make_rng
from ..lattice import LatticeSpec, interior_window
from ..stats import batch_means
from .quenched import EstimatorError


def tuple_correlations(X: np.ndarray, tuples: np.ndarray, weights=None, chunk: int = 2048) -> np.ndarray:
    """<prod_k s_{t_k}> for every tuple, averaging rows of X with ``weights``."""
    X = np.ascontiguousarray(X, dtype=np.int8)
    S = X.shape[0]
    w = np.full(S, 1.0 / S) if weights is None else np.asarray(weights, dtype=np.float64) / np.sum(weights)
    tuples = np.ascontiguousarray(tuples, dtype=np.int64)
    out = np.empty(tuples.shape[0])
    for a in range(0, tuples.shape[0], chunk):
        t = tuples[a : a + chunk]
        P = np.empty((S, t.shape[0]), dtype=np.int8)
        K.tuple_products(X, t, P)
        out[a : a + chunk] = w @ P
    return out


def admissible_tuples(lattice: LatticeSpec, eps: float, length: int, count: int, seed: int,
                      max_tries: int = 200) -> np.ndarray:
    """Uniform tuples of window sites with all pairwise l1 distances >= eps * n."""
    window = interior_window(lattice, eps)
    need = eps * lattice.n
    coords = lattice.coords[window]
    # widest possible separation inside the window
    span = 2 * int(np.abs(coords).max(initial=0)) * lattice.d
    if window.size < length or span < need or need <= 0 and length > window.size:
        raise EstimatorError(f"no admissible {length}-tuples for eps = {eps} at n = {lattice.n}")
    rng = make_rng(seed)
    found = []
    got = 0
    for _ in range(max_tries):
        cand = rng.integers(0, window.size, size=(4 * count, length))
        ok = np.ones(cand.shape[0], dtype=bool)
        for a, b in combinations(range(length), 2):
            dist = np.abs(coords[cand[:, a]] - coords[cand[:, b]]).sum(axis=1)
            ok &= dist >= need
            ok &= cand[:, a] != cand[:, b]
        sel = window[cand[ok]]
        found.append(sel)
        got += sel.shape[0]
        if got >= count:
            break
    if got == 0:
        raise EstimatorError(f"no admissible {length}-tuples for eps = {eps} at n = {lattice.n}")
    return np.concatenate(found)[:count]


def correlation_uniformity(samples, lattice: LatticeSpec, eps: float, q_hat: float, *,
                           n_pairs: int = 10_000, n_quads: int = 10_000, seed: int = 0,
                           n_batches: int = 50) -> dict:
    """Budgeted maxima of |<s_i s_j> - q| and |<s_i s_j s_k s_l> - q^2| over admissible tuples."""
    if not 0 < eps < 1:
        raise EstimatorError(f"eps must lie in (0, 1), got {eps!r}")
    X = np.ascontiguousarray(samples, dtype=np.int8)
    out = {"eps": eps, "q_hat": q_hat, "samples": X.shape[0]}
    for name, length, count, target in (("delta", 2, n_pairs, q_hat), ("gamma", 4, n_quads, q_hat**2)):
        tuples = admissible_tuples(lattice, eps, length, count, seed + length)
        corr = tuple_correlations(X, tuples)
        dev = np.abs(corr - target)
        k = int(dev.argmax())
        prod = np.prod(X[:, tuples[k]].astype(np.int64), axis=1)
        _, se = batch_means(prod, n_batches)
        out[name] = float(dev[k])
        out[f"{name}_se"] = float(se)
        out[f"{name}_mean_abs"] = float(dev.mean())
        out[f"{name}_tuples"] = int(tuples.shape[0])
    return out
