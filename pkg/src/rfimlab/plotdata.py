"""Long-format tables for figures, built from a result store."""

from __future__ import annotations

import numpy as np

from .estimators import EstimatorError
from .estimators.overlap import HIST_BINS, overlap_histogram
from .runner import load_sweep
from .store import ResultStore

FIGURE_KINDS = ("histogram", "scatter", "triples", "trend")


def _sweeps(store: ResultStore, tags=None):
    tags = list(tags) if tags else store.tags()
    out = []
    for t in tags:
        try:
            sw = load_sweep(store, t)
        except EstimatorError:
            continue
        if len(sw):
            out.append((t, sw))
    if not out:
        raise EstimatorError("missing statistic: store holds no disorder records")
    return out


def emit_plot_data(store: ResultStore, kind: str, tags=None, bins: int = HIST_BINS,
                   max_triples: int = 200):
    """Write ``plot_{kind}.csv`` into the store and return its path."""
    if kind not in FIGURE_KINDS:
        raise ValueError(f"unknown figure kind {kind!r}; choose from {FIGURE_KINDS}")
    sweeps = _sweeps(store, tags)
    rows = []
    if kind == "histogram":
        header = ["tag", "n", "h", "bin_lo", "bin_hi", "count"]
        for tag, sw in sweeps:
            if any(r.triples is None for r in sw.records):
                raise EstimatorError(f"missing statistic: no overlap samples in {tag}")
            edges, counts = overlap_histogram(sw, bins)
            rows += [[tag, sw.n, sw.h, edges[i], edges[i + 1], int(counts[i])] for i in range(bins)]
    elif kind == "scatter":
        header = ["tag", "n", "h", "index", "x_n", "r12", "r12_se", "prediction"]
        for tag, sw in sweeps:
            x = sw.column("x_n")
            pred = sw.q_hat * np.tanh(x) ** 2
            for r, p in zip(sw.records, pred):
                rows.append([tag, sw.n, sw.h, r.index, r.x_n, r.values["R12"], r.stderr["R12"], p])
    elif kind == "triples":
        header = ["tag", "n", "h", "index", "r12", "r13", "r23"]
        for tag, sw in sweeps:
            for r in sw.records:
                if r.triples is None:
                    raise EstimatorError(f"missing statistic: no overlap triples in {tag}")
                for t in r.overlap_triples()[:max_triples]:
                    rows.append([tag, sw.n, sw.h, r.index, *t])
    else:
        header = ["tag", "n", "h", "statistic", "value", "stderr"]
        keys = ("rsb", "m2_q", "fact", "site_unif", "R12_var", "ultra_violation")
        for tag, sw in sorted(sweeps, key=lambda p: (p[1].h, p[1].n)):
            for k in keys:
                if k not in sw.records[0].values:
                    continue
                col = sw.column(k)
                se = col.std(ddof=1) / np.sqrt(col.size) if col.size > 1 else float("nan")
                rows.append([tag, sw.n, sw.h, k, float(col.mean()), float(se)])
            col = (sw.column("R12") - sw.q_hat * np.tanh(sw.column("x_n")) ** 2) ** 2
            se = col.std(ddof=1) / np.sqrt(col.size) if col.size > 1 else float("nan")
            rows.append([tag, sw.n, sw.h, "nsa_residual", float(col.mean()), float(se)])
    return store.write_table(f"plot_{kind}.csv", header, rows)
