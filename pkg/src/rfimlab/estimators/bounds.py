"""Checks of the free-energy variance bound and the overlap fluctuation bound."""

from __future__ import annotations

import math

import numpy as np

from .overlap import _mean_se
from .quenched import DisorderSweep


def free_energy_variance(sweep_or_values, beta: float | None = None, h: float | None = None,
                         distribution: str | None = None) -> dict:
    """Sample variance over disorder of log<e^L>_0 against beta^2 h^2.

    F = F_0 + log<e^L>_0 with F_0 independent of J, so this is Var(F).
    The bound is proved for Gaussian disorder; otherwise the comparison is
    reported but marked not applicable.
    """
    if isinstance(sweep_or_values, DisorderSweep):
        sw = sweep_or_values
        values = sw.column("log_mean_exp_L")
        beta, h, distribution = sw.beta, sw.h, sw.distribution
    else:
        values = np.asarray(sweep_or_values, dtype=np.float64)
    n = values.size
    var = float(values.var(ddof=1)) if n > 1 else 0.0
    # standard error of a sample variance via the fourth central moment
    if n > 3:
        c = values - values.mean()
        var_se = math.sqrt(max(np.mean(c**4) - var**2, 0.0) / n)
    else:
        var_se = float("nan")
    bound = beta * beta * h * h
    applicable = distribution == "gaussian"
    return {
        "variance": var, "stderr": var_se, "bound": bound, "disorders": n,
        "applicable": applicable, "passed": (var <= bound) if applicable else None,
    }


def overlap_fluctuation_bound(beta: float, h: float) -> float:
    """2^{3/2} / (beta |h|)."""
    return 2**1.5 / (beta * abs(h)) if h else float("inf")


def replica_symmetry_trend(grid) -> list:
    """E<(R12 - <R12>)^2> per (n, h) grid point, with the large-h bound and,
    where recorded, the KS distance to the h = 0 overlap law."""
    rows = []
    for sw in grid:
        stat, se = _mean_se(sw.column("R12_var"))
        bound = overlap_fluctuation_bound(sw.beta, sw.h)
        row = {"n": sw.n, "h": sw.h, "statistic": stat, "stderr": se, "bound": bound,
               "within_bound": bool(stat <= bound + 3 * se),
               "informational": sw.distribution != "gaussian"}
        if sw.records and "ks_ising" in sw.records[0].values:
            row["ks_ising"], row["ks_ising_se"] = _mean_se(sw.column("ks_ising"))
        rows.append(row)
    return rows
