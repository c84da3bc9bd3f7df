"""The e^L reweighting identity and the Gaussian MGF comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..disorder import DisorderError, make_rng
from ..gibbs import log_weights_L
from .quenched import EstimatorError

NAMED = {
    "m": lambda X: X.mean(axis=1),
    "m2": lambda X: X.mean(axis=1) ** 2,
    "one": lambda X: np.ones(X.shape[0]),
}
NAMED_PAIR = {
    "R12": lambda g: g,
    "R12_sq": lambda g: g * g,
}


class ReweightingBreakdown(EstimatorError):
    """Effective sample size below the configured floor."""


@dataclass(frozen=True)
class ReweightResult:
    value: float
    ess: float
    mean_exp_L: float
    mean_exp_L_se: float
    log_mean_exp_L: float

    @property
    def jensen_ok(self) -> bool:
        """<e^L>_0 >= 1 within three standard errors."""
        return self.mean_exp_L >= 1.0 - 3.0 * self.mean_exp_L_se


def _weights(samples, disorder, beta, h, base_weights):
    X = np.asarray(samples, dtype=np.float64)
    L = log_weights_L(X, disorder, beta, h)
    if base_weights is None:
        base = np.full(X.shape[0], 1.0 / X.shape[0])
    else:
        base = np.asarray(base_weights, dtype=np.float64)
        base = base / base.sum()
    lw = L + np.log(np.where(base > 0, base, 1.0))
    lw[base <= 0] = -np.inf
    lz = logsumexp(lw)
    w = np.exp(lw - lz)
    return X, L, base, w, lz


def _exp_l_stats(L, base, grouped):
    lme = float(logsumexp(L, b=base))
    mean = math.exp(lme)
    if grouped:
        e = np.exp(L)
        size = max(1, len(e) // 50)
        blocks = e[: len(e) // size * size].reshape(-1, size).mean(axis=1)
        se = float(blocks.std(ddof=1) / math.sqrt(len(blocks))) if len(blocks) > 1 else float("inf")
    else:
        se = 0.0
    return mean, se, lme


def reweighted_expectation(samples, disorder, beta: float, h: float, observable="m", *,
                           base_weights=None, ess_floor: float = 0.0) -> ReweightResult:
    """sum f e^L / sum e^L over zero-field samples.

    ``base_weights`` turns the samples into an exact law (e.g. all states
    with their h = 0 probabilities); otherwise rows count equally.
    """
    f = NAMED[observable] if isinstance(observable, str) else observable
    X, L, base, w, _ = _weights(samples, disorder, beta, h, base_weights)
    ess = 1.0 / float(np.sum(w * w))
    if base_weights is None and ess < ess_floor:
        raise ReweightingBreakdown(f"effective sample size {ess:.1f} below floor {ess_floor}")
    vals = np.asarray(f(X.astype(np.int8) if X.dtype != np.int8 else X), dtype=np.float64)
    mean, se, lme = _exp_l_stats(L, base, base_weights is None)
    return ReweightResult(float(np.dot(w, vals)), ess, mean, se, lme)


def reweighted_pair_expectation(samples, disorder, beta: float, h: float, pair_fn="R12", *,
                                base_weights=None, ess_floor: float = 0.0) -> ReweightResult:
    """Two-replica average sum w_s w_t f(R_st) / sum w_s w_t.

    Exact laws include s = t (independent replicas may coincide); Monte
    Carlo streams exclude it.
    """
    f = NAMED_PAIR[pair_fn] if isinstance(pair_fn, str) else pair_fn
    X, L, base, w, _ = _weights(samples, disorder, beta, h, base_weights)
    ess = 1.0 / float(np.sum(w * w))
    if base_weights is None and ess < ess_floor:
        raise ReweightingBreakdown(f"effective sample size {ess:.1f} below floor {ess_floor}")
    g = (X @ X.T) / X.shape[1]
    F = f(g)
    num = float(w @ F @ w)
    den = 1.0
    if base_weights is None:
        num -= float(np.sum(w * w * np.diag(F)))
        den -= float(np.sum(w * w))
    mean, se, lme = _exp_l_stats(L, base, base_weights is None)
    return ReweightResult(num / den, ess, mean, se, lme)


@dataclass(frozen=True)
class MGFGap:
    gap: float
    gap_se: float
    exact_gap: float | None
    bound: float
    target: float
    estimate: float
    constant: float | None
    violated: bool | None


def mgf_gap(coefficients, distribution: str, n_draws: int, seed: int, *,
            theta: float = 4.0, constant: float | None = None) -> MGFGap:
    """|E exp(sum a_i J_i / sqrt|B|) - exp(sum a_i^2 / 2|B|)| against sum |a_i|^3 / |B|^{3/2}.

    The expectation is estimated from ``n_draws`` disorder draws; for
    rademacher disorder with constant coefficients it is also computed
    exactly from the binomial law of sum J_i.
    """
    a = np.asarray(coefficients, dtype=np.float64)
    nb = a.shape[0]
    if np.any(np.abs(a) > theta / 2):
        raise EstimatorError(f"coefficients exceed the bound theta/2 = {theta / 2}")
    if distribution not in ("gaussian", "rademacher"):
        raise DisorderError(f"unknown distribution {distribution!r}")
    target = math.exp(float(np.sum(a * a)) / (2 * nb))
    bound = float(np.sum(np.abs(a) ** 3)) / nb**1.5
    rng = make_rng(seed)
    est, se = target, 0.0
    if np.any(a != 0) and n_draws > 0:
        vals = np.empty(n_draws)
        step = max(1, (1 << 22) // nb)
        for s in range(0, n_draws, step):
            k = min(step, n_draws - s)
            if distribution == "gaussian":
                J = rng.standard_normal((k, nb))
            else:
                J = np.where(rng.random((k, nb)) < 0.5, -1.0, 1.0)
            vals[s : s + k] = np.exp(J @ a / math.sqrt(nb))
        est = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(n_draws)) if n_draws > 1 else float("inf")
    exact = None
    if distribution == "gaussian":
        exact = 0.0
    elif np.all(a == a[0]):
        # product of cosh for i.i.d. signs
        exact = abs(math.cosh(a[0] / math.sqrt(nb)) ** nb - target)
    gap = abs(est - target)
    violated = None
    if constant is not None:
        ref = exact if exact is not None else gap
        violated = bool(ref > constant * bound)
    return MGFGap(gap, se, exact, bound, target, est, constant, violated)
