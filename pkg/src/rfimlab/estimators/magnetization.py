"""Magnetization statistics and the two-pure-state moment test."""

from __future__ import annotations

import math

import numpy as np

from .overlap import _mean_se
from .quenched import DisorderSweep, EstimatorError


def magnetization_stats(sweep: DisorderSweep, site_uniformity: bool = True) -> dict:
    """E<(m^2-q)^2>, E(<m> - sqrt(q) tanh X_n)^2, site uniformity, E<(R12 - m1 m2)^2>."""
    if not sweep.records:
        raise EstimatorError("sweep holds no disorder records")
    q = sweep.q_hat
    out = {"q_hat": q, "q_provenance": sweep.q_provenance}
    out["m2_q"], out["m2_q_se"] = _mean_se(sweep.column("m2_q"))
    pred = math.sqrt(q) * np.tanh(sweep.column("x_n"))
    out["m_tanh"], out["m_tanh_se"] = _mean_se((sweep.column("m") - pred) ** 2)
    if site_uniformity:
        if any("site_unif" not in r.values for r in sweep.records):
            raise EstimatorError("missing per-site records for the site-uniformity statistic")
        out["site_unif"], out["site_unif_se"] = _mean_se(sweep.column("site_unif"))
    out["fact"], out["fact_se"] = _mean_se(sweep.column("fact"))
    out["m2"], out["m2_se"] = _mean_se(sweep.column("m2"))
    return out


def moment_targets(q: float, x_n, l: int) -> np.ndarray:
    """q^{l/2}, times tanh X_n when l is odd."""
    base = q ** (l / 2)
    x_n = np.asarray(x_n, dtype=np.float64)
    return base * np.tanh(x_n) if l % 2 else np.full_like(x_n, base)


def pure_state_moment_test(sweep: DisorderSweep, l_max: int) -> dict:
    """Residuals of exchangeable site-tuple moments against the two-state mixture.

    The mixture puts Z = +-sqrt(q) with probabilities (1 +- tanh X_n)/2, so
    even moments are q^{l/2} and odd ones q^{l/2} tanh X_n.
    """
    if not 1 <= l_max <= 6:
        raise EstimatorError(f"l_max must lie in [1, 6], got {l_max!r}")
    if not sweep.records or any(f"tuple_l{l_max}" not in r.values for r in sweep.records):
        raise EstimatorError(f"records hold no tuple moments up to l = {l_max}")
    q = sweep.q_hat
    x_n = sweep.column("x_n")
    out = {"q_hat": q, "per_l": {}}
    moments = {l: sweep.column(f"tuple_l{l}") for l in range(1, l_max + 1)}
    for l, vals in moments.items():
        res = np.abs(vals - moment_targets(q, x_n, l))
        mean, se = _mean_se(res)
        out["per_l"][l] = {"mean_residual": mean, "stderr": se, "max_residual": float(res.max()),
                           "residuals": res}
    # two-point mixture fitted per disorder from the first two moments
    if l_max >= 3:
        q_fit = np.clip(moments[2], 1e-12, None)
        t_fit = np.clip(moments[1] / np.sqrt(q_fit), -1, 1)
        fit = {}
        for l in range(3, l_max + 1):
            pred = q_fit ** (l / 2) * (t_fit if l % 2 else 1.0)
            fit[l] = float(np.mean(np.abs(moments[l] - pred)))
        out["mixture_fit_residual"] = fit
    return out
