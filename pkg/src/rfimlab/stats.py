"""Numerical helpers: quadrature, error bars, KS distances, bootstrap."""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import stats as sps
from scipy.special import ndtr

GH_DEGREE = 64


def gauss_hermite_expectation(f, degree: int = GH_DEGREE) -> float:
    """E f(Z) for standard Gaussian Z."""
    x, w = hermegauss(degree)
    return float(np.dot(w, f(x)) / math.sqrt(2.0 * math.pi))


def expected_tanh2(q: float, beta: float, h: float, degree: int = GH_DEGREE) -> float:
    """E tanh^2(sqrt(q) beta h Z)."""
    s = math.sqrt(q) * beta * h
    return gauss_hermite_expectation(lambda z: np.tanh(s * z) ** 2, degree)


def tanh2_law_cdf(x, q: float, beta: float, h: float) -> np.ndarray:
    """CDF of q tanh^2(sqrt(q) beta h Z)."""
    x = np.asarray(x, dtype=np.float64)
    s = abs(math.sqrt(q) * beta * h)
    out = np.where(x < 0, 0.0, 1.0)
    if s == 0:
        return out
    inside = (x >= 0) & (x < q)
    r = np.sqrt(np.clip(x[inside] / q, 0, 1))
    out[inside] = 2.0 * ndtr(np.arctanh(r) / s) - 1.0
    return out


def tanh2_law_cdf_quadrature(x, q: float, beta: float, h: float, degree: int = GH_DEGREE) -> np.ndarray:
    """Same CDF as a Gauss-Hermite average of indicators (coarse; for cross-checks)."""
    z, w = hermegauss(degree)
    vals = q * np.tanh(math.sqrt(q) * beta * h * z) ** 2
    w = w / w.sum()
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return (vals[None, :] <= x[:, None]) @ w


def ks_to_cdf(sample, cdf) -> float:
    sample = np.asarray(sample, dtype=np.float64)
    if sample.size == 0:
        return float("nan")
    return float(sps.kstest(sample, cdf).statistic)


def weighted_ks(values, w1, w2) -> float:
    """sup |F1 - F2| for two weightings of the same points."""
    order = np.argsort(values, kind="stable")
    v = np.asarray(values)[order]
    c1 = np.cumsum(np.asarray(w1, dtype=np.float64)[order])
    c2 = np.cumsum(np.asarray(w2, dtype=np.float64)[order])
    c1 /= c1[-1]
    c2 /= c2[-1]
    # evaluate only at the last index of each run of tied values
    last = np.r_[v[1:] != v[:-1], True]
    return float(np.max(np.abs(c1[last] - c2[last])))


def batch_means(x, n_batches: int = 50):
    """Mean and batch-means standard error of a time series."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        return float("nan"), float("nan")
    b = max(1, min(n_batches, n))
    size = n // b
    if b < 2 or size == 0:
        return float(x.mean()), float("inf") if n < 2 else float(x.std(ddof=1) / math.sqrt(n))
    means = x[: b * size].reshape(b, size, *x.shape[1:]).mean(axis=1)
    return x.mean(axis=0), means.std(axis=0, ddof=1) / math.sqrt(b)


def group_jackknife_ratio(num_groups, den_groups):
    """Ratio sum(num)/sum(den) and its leave-one-group-out jackknife error.

    Inputs have the group on axis 0; extra axes are independent ratios.
    """
    num = np.asarray(num_groups, dtype=np.float64)
    den = np.asarray(den_groups, dtype=np.float64)
    g = num.shape[0]
    tn, td = num.sum(axis=0), den.sum(axis=0)
    est = tn / td
    if g < 2:
        return est, np.full_like(est, np.inf)
    loo = (tn - num) / (td - den)
    se = np.sqrt((g - 1) / g * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    return est, se


def autocorrelation(x, max_lag: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean()
    n = x.shape[0]
    max_lag = n - 1 if max_lag is None else min(max_lag, n - 1)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[: max_lag + 1]
    return acf / acf[0] if acf[0] > 0 else np.ones_like(acf)


def integrated_time(x, window: int = 5) -> float:
    """Sokal's self-consistent window estimate of tau_int."""
    rho = autocorrelation(x)
    tau = 0.5
    for t in range(1, len(rho)):
        tau += rho[t]
        if t >= window * tau:
            break
    return float(tau)


def bootstrap_ci(data, statistic, n_boot: int = 2000, level: float = 0.95, seed: int = 0, axis_len=None):
    """Percentile bootstrap over rows of ``data`` (a dict of arrays with a
    shared first axis, or a single array)."""
    rng = np.random.Generator(np.random.Philox(seed))
    if isinstance(data, dict):
        n = len(next(iter(data.values())))
        take = lambda idx: {k: np.asarray(v)[idx] for k, v in data.items()}
    else:
        data = np.asarray(data)
        n = data.shape[0]
        take = lambda idx: data[idx]
    reps = np.array([statistic(take(rng.integers(0, n, n))) for _ in range(n_boot)])
    lo, hi = np.quantile(reps, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi), float(reps.std(ddof=1))


def strictly_decreasing(values) -> bool:
    v = list(values)
    return all(a > b for a, b in zip(v, v[1:]))


def energy_tv(e_samples, e_levels, e_probs, width: float = 1.0) -> float:
    """Total variation between a sampled and an exact energy law on unit bins."""
    lo = min(np.min(e_samples), np.min(e_levels)) - width
    hi = max(np.max(e_samples), np.max(e_levels)) + width
    edges = np.arange(math.floor(lo) - 0.5, math.ceil(hi) + width, width)
    h1, _ = np.histogram(e_samples, bins=edges)
    h2, _ = np.histogram(e_levels, bins=edges, weights=e_probs)
    return 0.5 * float(np.abs(h1 / h1.sum() - h2 / h2.sum()).sum())
