"""Overlap statistics: concentration, non-self-averaging, ultrametricity, GG."""

from __future__ import annotations

import math

import numpy as np

from ..stats import bootstrap_ci, expected_tanh2, ks_to_cdf, tanh2_law_cdf
from .quenched import DisorderSweep, EstimatorError

HIST_BINS = 200


def _mean_se(x):
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return float("nan"), float("nan")
    se = x.std(ddof=1) / math.sqrt(x.size) if x.size > 1 else float("inf")
    return float(x.mean()), float(se)


def _need(sweep: DisorderSweep, replicas: int, key: str):
    if not sweep.records:
        raise EstimatorError("sweep holds no disorder records")
    for r in sweep.records:
        if r.samples < replicas or key not in r.values:
            raise EstimatorError(f"insufficient replicas: need {replicas} per disorder")


def overlap_histogram(sweep: DisorderSweep, bins: int = HIST_BINS):
    """Pooled histogram of sampled pair overlaps on [-1, 1]."""
    edges = np.linspace(-1.0, 1.0, bins + 1)
    counts = np.zeros(bins, dtype=np.int64)
    for r in sweep.records:
        if r.triples is not None:
            counts += np.histogram(r.overlap_triples().ravel(), bins=edges)[0]
    return edges, counts


def rsb_stats(sweep: DisorderSweep) -> dict:
    """E<(R12^2 - q^2)^2>, the pooled overlap histogram and the masses near +-q."""
    _need(sweep, 2, "rsb")
    q = sweep.q_hat
    stat, se = _mean_se(sweep.column("rsb"))
    mp, mm = sweep.column("mass_plus"), sweep.column("mass_minus")
    t2 = np.tanh(sweep.column("x_n")) ** 2
    predicted_plus = 0.5 * (1 + t2)
    edges, counts = overlap_histogram(sweep)
    frac, frac_se = _mean_se(mp + mm)
    return {
        "statistic": stat, "stderr": se,
        "mass_plus": mp, "mass_minus": mm,
        "mass_plus_predicted": predicted_plus,
        "mass_plus_residual": float(np.mean(mp / np.maximum(mp + mm, 1e-300) - predicted_plus)),
        "within_window": frac, "within_window_se": frac_se,
        "hist_edges": edges, "hist_counts": counts, "delta": sweep.meta.get("delta"),
        "q_hat": q, "q_provenance": sweep.q_provenance,
    }


def nsa_stats(sweep: DisorderSweep, min_disorders: int = 200) -> dict:
    """Residual <R12> - q tanh^2 X_n and the KS distance to the law of q tanh^2(sqrt(q) beta h Z)."""
    if len(sweep) < min_disorders:
        raise EstimatorError(f"need at least {min_disorders} disorder realizations, got {len(sweep)}")
    q = sweep.q_hat
    r12 = sweep.column("R12")
    pred = q * np.tanh(sweep.column("x_n")) ** 2
    res2, res2_se = _mean_se((r12 - pred) ** 2)
    ks = ks_to_cdf(r12, lambda x: tanh2_law_cdf(x, q, sweep.beta, sweep.h))
    return {
        "residual_second_moment": res2, "stderr": res2_se, "ks": ks,
        "residuals": r12 - pred, "q_hat": q, "q_provenance": sweep.q_provenance,
    }


def predicted_masses(x_n) -> np.ndarray:
    """(a, b, b, b) per disorder, in the order of quenched.support_points."""
    t2 = np.tanh(np.asarray(x_n, dtype=np.float64)) ** 2
    a = 0.25 * (1 + 3 * t2)
    b = 0.25 * (1 - t2)
    return np.stack([a, b, b, b], axis=-1)


def ultrametric_stats(sweep: DisorderSweep, eps: float) -> dict:
    """Violation rate of R13 >= min(R12, R23) - eps and masses at the four support points."""
    from .quenched import classify_triples

    if not sweep.records or any(r.triples is None for r in sweep.records):
        raise EstimatorError("insufficient replicas: need overlap triples (3 replicas) per disorder")
    q = sweep.q_hat
    rates, masses, agree, total, viol_total = [], [], [], 0, 0
    for r in sweep.records:
        t = r.overlap_triples()
        v = t[:, 1] < np.minimum(t[:, 0], t[:, 2]) - eps
        rates.append(v.mean())
        viol_total += int(v.sum())
        total += v.size
        cls = classify_triples(t, q)
        masses.append(np.bincount(cls, minlength=4) / t.shape[0])
        sign_cls = classify_triples(r.sign_triples.astype(np.float64), 1.0)
        agree.append(np.mean(cls == sign_cls))
    masses = np.array(masses)
    pred = predicted_masses(sweep.column("x_n"))
    dev = np.abs(masses - pred)
    return {
        "violation_rate": viol_total / total, "violation_per_disorder": np.array(rates),
        "masses": masses, "predicted": pred, "max_mass_deviation": float(dev.max()),
        "mass_deviation_per_disorder": dev.max(axis=1),
        "factorization_agreement": float(np.mean(agree)), "eps": eps,
        "triples_per_disorder": int(sweep.records[0].triples.shape[0]),
    }


def gg_residual(sweep: DisorderSweep, min_disorders: int = 200, n_boot: int = 2000, seed: int = 0) -> dict:
    """2 E<R12 R13> - (E<R12>)^2 - E<R12^2> with a bootstrap interval over disorder."""
    _need(sweep, 3, "R12_R13")
    if len(sweep) < min_disorders:
        raise EstimatorError(f"insufficient data: need {min_disorders} disorders, got {len(sweep)}")
    data = {k: sweep.column(k) for k in ("R12_R13", "R12", "R12_sq")}

    def stat(d):
        return 2 * d["R12_R13"].mean() - d["R12"].mean() ** 2 - d["R12_sq"].mean()

    value = float(stat(data))
    lo, hi, se = bootstrap_ci(data, stat, n_boot=n_boot, seed=seed)
    q = sweep.q_hat
    pred = -q * q * (1 - expected_tanh2(q, sweep.beta, sweep.h)) ** 2
    return {
        "statistic": value, "ci": (lo, hi), "stderr": se, "predicted": pred,
        "relative_error": abs(value - pred) / abs(pred) if pred else float("inf"),
        "excludes_zero": bool(hi < 0 or lo > 0),
    }


def gg_statistic_from_means(r12_r13, r12, r12_sq) -> float:
    return float(2 * np.mean(r12_r13) - np.mean(r12) ** 2 - np.mean(r12_sq))
