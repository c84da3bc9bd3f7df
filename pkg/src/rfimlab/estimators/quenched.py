"""Per-disorder quenched statistics from weighted sample banks.

All pair and triple averages are weighted U-statistics over distinct bank
rows. Writing G for the Gram matrix of overlaps, every pair moment is a
quadratic form w' f(G) w, so one blocked pass over G (never stored) with a
matrix of weight columns serves many disorders at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import _kernels as K
from ..disorder import DisorderField, derive_seed, field_sum_Xn, gauge_flip_field, make_rng
from ..gibbs import log_weights_L
from ..stats import group_jackknife_ratio, weighted_ks
from .bank import SampleBank

PAIR_KEYS = ("R12", "R12_sq", "rsb", "mass_plus", "mass_minus", "fact")


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class EngineOptions:
    delta: float = 0.05
    eps_ultra: float = 0.1
    n_triples: int = 1000
    n_tuples: int = 10_000
    l_max: int = 4
    n_site_subset: int = 512
    ks_pairs: int = 0
    block_rows: int = 256
    batch_size: int = 200
    ess_floor: float = 50.0
    seed: int = 0


@dataclass
class QuenchedRecord:
    index: int
    seed: int
    x_n: float
    samples: int
    ess: float
    log_mean_exp_L: float
    values: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)
    triples: np.ndarray | None = field(default=None, repr=False)
    sign_triples: np.ndarray | None = field(default=None, repr=False)
    num_sites: int = 1

    def row(self) -> dict:
        out = {
            "index": self.index, "seed": self.seed, "x_n": self.x_n, "samples": self.samples,
            "ess": self.ess, "log_mean_exp_L": self.log_mean_exp_L,
        }
        for k in sorted(self.values):
            out[k] = self.values[k]
            out[f"{k}_se"] = self.stderr.get(k, float("nan"))
        return out

    def overlap_triples(self) -> np.ndarray:
        """(T, 3) float array of (R12, R13, R23)."""
        if self.triples is None:
            raise EstimatorError("record holds no overlap triples")
        return self.triples.astype(np.float64) / self.num_sites


@dataclass
class DisorderSweep:
    """Records sharing (d, n, beta, h, distribution), plus q-hat and its provenance."""

    d: int
    n: int
    beta: float
    h: float
    distribution: str
    q_hat: float
    q_provenance: str
    interaction: str = "ferro"
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.q_hat <= 1:
            raise EstimatorError(f"q_hat must lie in (0, 1], got {self.q_hat!r}")

    @property
    def key(self):
        return (self.d, self.n, self.beta, self.h, self.distribution, self.interaction)

    def merge(self, other: "DisorderSweep") -> "DisorderSweep":
        """Order-independent union of two sweeps of the same model."""
        if self.key != other.key or self.q_hat != other.q_hat:
            raise EstimatorError("cannot merge sweeps of different models")
        recs = {r.index: r for r in self.records}
        for r in other.records:
            recs.setdefault(r.index, r)
        out = DisorderSweep(*self.key[:5], self.q_hat, self.q_provenance, self.interaction,
                            [recs[i] for i in sorted(recs)], dict(self.meta))
        return out

    def column(self, key: str) -> np.ndarray:
        if key in ("x_n", "ess", "log_mean_exp_L"):
            return np.array([getattr(r, key) for r in self.records], dtype=np.float64)
        return np.array([r.values[key] for r in self.records], dtype=np.float64)

    def column_se(self, key: str) -> np.ndarray:
        return np.array([r.stderr.get(key, np.nan) for r in self.records], dtype=np.float64)

    def __len__(self):
        return len(self.records)


def _onehot(groups: np.ndarray) -> np.ndarray:
    g = int(groups.max()) + 1
    H = np.zeros((g, groups.shape[0]))
    H[groups, np.arange(groups.shape[0])] = 1.0
    return H


def draw_tuples(num_sites: int, length: int, count: int, rng) -> np.ndarray:
    """Uniform tuples of distinct sites, one per row."""
    if length > num_sites:
        raise EstimatorError("tuple longer than the lattice")
    keys = rng.random((count, num_sites)) if num_sites <= 64 else None
    if keys is not None:
        return np.argsort(keys, axis=1)[:, :length].astype(np.int64)
    out = rng.integers(0, num_sites, size=(count, length))
    for _ in range(1000):
        srt = np.sort(out, axis=1)
        bad = np.any(srt[:, 1:] == srt[:, :-1], axis=1) if length > 1 else np.zeros(count, bool)
        if not bad.any():
            break
        out[bad] = rng.integers(0, num_sites, size=(int(bad.sum()), length))
    return out.astype(np.int64)


def tuple_product_means(X: np.ndarray, tuples: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Per bank row, the mean over tuples of prod_k s_{t_k}."""
    S = X.shape[0]
    acc = np.zeros(S)
    for a in range(0, tuples.shape[0], chunk):
        t = tuples[a : a + chunk]
        P = np.empty((S, t.shape[0]), dtype=np.int8)
        K.tuple_products(X, np.ascontiguousarray(t), P)
        acc += P.sum(axis=1, dtype=np.int64)
    return acc / tuples.shape[0]


def _draw_triples(rng, w: np.ndarray, T: int, groups: np.ndarray | None = None) -> np.ndarray:
    """T weighted replica triples; with ``groups`` the three come from distinct groups,
    which keeps mirror copies and close chain neighbours apart."""
    S = w.shape[0]
    if S < 3:
        raise EstimatorError("need at least three samples for triples")
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    if groups is None or int(groups.max()) + 1 < 3:
        groups = np.arange(S)

    def draw(k):
        return np.minimum(np.searchsorted(cdf, rng.random((k, 3)), side="right"), S - 1)

    idx = draw(T)
    for _ in range(1000):
        g = groups[idx]
        bad = (g[:, 0] == g[:, 1]) | (g[:, 0] == g[:, 2]) | (g[:, 1] == g[:, 2])
        if not bad.any():
            return idx
        idx[bad] = draw(int(bad.sum()))
    raise EstimatorError("weights too concentrated to draw distinct triples")


def _group_index(groups: np.ndarray, G: int) -> list:
    return [np.flatnonzero(groups == k) for k in range(G)]


def _pair_pass(Xf, W, m, q, delta, block_rows, members):
    """Row sums over t of w_t f(g_st) for the functions needed downstream.

    Also Q_s = sum_h a_s(h)^2 and P(h) = sum_s w_s a_s(h)^2, where
    a_s(h) = sum_{t in group h} w_t g_st.
    """
    S, N = Xf.shape
    D = W.shape[1]
    Wf = W.astype(np.float32)
    Wmf = (W * m[:, None]).astype(np.float32)
    names = ("g", "gm", "g2", "g4", "ip", "im", "Q")
    A = {k: np.zeros((S, D), dtype=np.float32) for k in names}
    P = np.zeros((len(members), D))
    inv_n = np.float32(1.0 / N)
    qf, df = np.float32(q), np.float32(delta)
    for a in range(0, S, block_rows):
        b = min(S, a + block_rows)
        g = Xf[a:b] @ Xf.T
        g *= inv_n
        for h, idx in enumerate(members):
            part = g[:, idx] @ Wf[idx]
            A["g"][a:b] += part
            sq = part * part
            A["Q"][a:b] += sq
            P[h] += (W[a:b] * sq).sum(axis=0)
        A["gm"][a:b] = g @ Wmf
        A["ip"][a:b] = (np.abs(g - qf) < df).astype(np.float32) @ Wf
        A["im"][a:b] = (np.abs(g + qf) < df).astype(np.float32) @ Wf
        g *= g
        A["g2"][a:b] = g @ Wf
        g *= g
        A["g4"][a:b] = g @ Wf
    out = {k: v.astype(np.float64) for k, v in A.items()}
    out["P"] = P
    return out


def _pair_apply(Xf, V, block_rows):
    """Row sums over t of g_st v_t for a weight matrix V (S, D)."""
    S, N = Xf.shape
    Vf = V.astype(np.float32)
    out = np.empty(V.shape, dtype=np.float32)
    inv_n = np.float32(1.0 / N)
    for a in range(0, S, block_rows):
        b = min(S, a + block_rows)
        g = Xf[a:b] @ Xf.T
        g *= inv_n
        out[a:b] = g @ Vf
    return out.astype(np.float64)



def _own_group_rows(Xf, W, m, q, delta, members):
    """Row sums restricted to the row's own group (diagonal included), for
    each pair kernel."""
    S, N = Xf.shape
    D = W.shape[1]
    out = {k: np.zeros((S, D)) for k in PAIR_KEYS}
    inv_n = np.float32(1.0 / N)
    qf, df = np.float32(q), np.float32(delta)
    for idx in members:
        g32 = Xf[idx] @ Xf[idx].T
        g32 *= inv_n
        g = g32.astype(np.float64)
        wk = W[idx]
        mk = m[idx]
        g2 = g * g
        out["R12"][idx] = g @ wk
        out["R12_sq"][idx] = g2 @ wk
        out["rsb"][idx] = ((g2 - q * q) ** 2) @ wk
        out["mass_plus"][idx] = (np.abs(g32 - qf) < df).astype(np.float64) @ wk
        out["mass_minus"][idx] = (np.abs(g32 + qf) < df).astype(np.float64) @ wk
        out["fact"][idx] = ((g - np.outer(mk, mk)) ** 2) @ wk
    return out


def _pair_jackknife(rows_g, den_g):
    """Ratio of cross-group pair sums with an exact delete-a-group jackknife.

    Pairs never share a group, so removing group h takes away its rows and,
    by symmetry, the same amount as partner: T - 2 R_h. Unlike the
    linearized form this keeps the second-order term, which dominates when
    the statistic sits near a degenerate point such as <R12> ~ 0.
    """
    T, Td = rows_g.sum(axis=0), den_g.sum(axis=0)
    est = T / Td
    G = rows_g.shape[0]
    if G < 2:
        return est, np.full_like(est, np.inf)
    loo = (T - 2 * rows_g) / (Td - 2 * den_g)
    se = np.sqrt((G - 1) / G * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    return est, se


def _quenched_batch(bank: SampleBank, logw: np.ndarray, q: float, opts: EngineOptions,
                    tuple_rho: dict, site_idx: np.ndarray, ks_pairs):
    """Statistics for the disorder columns of ``logw`` (S, D)."""
    X = bank.spins
    S, N = X.shape
    D = logw.shape[1]
    Xf = X.astype(np.float32)
    lmax = logw.max(axis=0)
    E = np.exp(logw - lmax)
    W = E / E.sum(axis=0)
    H = _onehot(bank.groups)
    G = H.shape[0]
    m = X.sum(axis=1, dtype=np.int64) / N
    out = [dict(values={}, stderr={}) for _ in range(D)]

    def put(key, est, se):
        for j in range(D):
            out[j]["values"][key] = float(est[j])
            out[j]["stderr"][key] = float(se[j])

    den1 = H @ W
    for key, obs in (("m", m), ("m2", m * m), ("abs_m", np.abs(m)), ("m2_q", (m * m - q) ** 2)):
        est, se = group_jackknife_ratio(H @ (W * obs[:, None]), den1)
        put(key, est, se)

    # <e^L>_0 on the raw scale, for the Jensen floor
    gm = (H @ E) / H.sum(axis=1, keepdims=True)
    mean_e = E.mean(axis=0)
    se_e = gm.std(axis=0, ddof=1) / math.sqrt(G) if G > 1 else np.full(D, np.inf)
    log_mean_exp = lmax + np.log(mean_e)
    scale = np.exp(np.clip(lmax, None, 700))
    put("exp_L_mean", mean_e * scale, se_e * scale)
    ess = 1.0 / (W * W).sum(axis=0)

    # replicas are paired only across groups: a symmetrized bank puts each
    # mirror copy in its original's group, and groups are long chain stretches
    members = _group_index(bank.groups, G)
    A = _pair_pass(Xf, W, m, q, opts.delta, opts.block_rows, members)
    wm2 = (W * (m * m)[:, None]).sum(axis=0)
    full = {
        "R12": A["g"], "R12_sq": A["g2"],
        "rsb": A["g4"] - 2 * q * q * A["g2"] + q**4,
        "mass_plus": A["ip"], "mass_minus": A["im"],
        "fact": A["g2"] - 2 * m[:, None] * A["gm"] + (m * m)[:, None] * wm2[None, :],
    }
    Wg = H @ W
    w_own = Wg[bank.groups]
    own = _own_group_rows(Xf, W, m, q, opts.delta, members)
    den2 = H @ (W * (1.0 - w_own))
    for key in PAIR_KEYS:
        est, se = _pair_jackknife(H @ (W * (full[key] - own[key])), den2)
        put(key, est, se)

    # three replicas from three distinct groups
    a_own = own["R12"]
    c = A["g"] - a_own
    centre = W * (c * c - (A["Q"] - a_own * a_own))
    # exact delete-a-group jackknife: dropping group h removes its centre rows
    # and, twice, the triples where h is an outer replica
    Wc = W * c
    B = _pair_apply(Xf, Wc, opts.block_rows)
    Bown = np.zeros_like(B)
    for idx in members:
        Bown[idx] = ((Xf[idx] @ Xf[idx].T).astype(np.float64) / N) @ Wc[idx]
    outer_g = H @ (W * (B - Bown)) - (A["P"] - H @ (W * a_own * a_own))
    T3 = centre.sum(axis=0)
    p2, p3 = (Wg**2).sum(axis=0), (Wg**3).sum(axis=0)
    est = T3 / (1.0 - 3 * p2 + 2 * p3)
    if G >= 4:
        e1, e2, e3 = 1.0 - Wg, p2 - Wg**2, p3 - Wg**3
        loo = (T3 - H @ centre - 2 * outer_g) / (e1**3 - 3 * e1 * e2 + 2 * e3)
        se = np.sqrt((G - 1) / G * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    else:
        se = np.full(D, np.inf)
    put("R12_R13", est, se)
    for j in range(D):
        v, s = out[j]["values"], out[j]["stderr"]
        v["R12_var"] = v["R12_sq"] - v["R12"] ** 2
        s["R12_var"] = math.hypot(s["R12_sq"], 2 * v["R12"] * s["R12"])

    for l, rho in tuple_rho.items():
        est, se = group_jackknife_ratio(H @ (W * rho[:, None]), den1)
        put(f"tuple_l{l}", est, se)

    if site_idx.size:
        Xs = Xf[:, site_idx]
        Mg = np.stack([Xs.T @ (W * H[k][:, None]).astype(np.float32) for k in range(G)])
        mg = H @ (W * m[:, None])
        Mt, mt = Mg.sum(axis=0), mg.sum(axis=0)
        unif = ((Mt - mt) ** 2).mean(axis=0)
        wk = den1
        loo = (((Mt - Mg) / (1 - wk[:, None, :]) - ((mt - mg) / (1 - wk))[:, None, :]) ** 2).mean(axis=1)
        se = np.sqrt((G - 1) / G * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0)) if G > 1 else np.full(D, np.inf)
        put("site_unif", unif, se)

    if ks_pairs is not None:
        a, b, gab = ks_pairs
        ones = np.ones_like(gab)
        for j in range(D):
            out[j]["values"]["ks_ising"] = weighted_ks(gab, W[a, j] * W[b, j], ones)
            out[j]["stderr"]["ks_ising"] = float("nan")
    return out, W, ess, log_mean_exp, m


def _triples_for(bank_spins, m, w, rng, T, groups=None):
    idx = _draw_triples(rng, w, T, groups)
    N = bank_spins.shape[1]
    dtype = np.int16 if N <= np.iinfo(np.int16).max else np.int32
    cols = []
    for a, b in ((0, 1), (0, 2), (1, 2)):
        cols.append((bank_spins[idx[:, a]] * bank_spins[idx[:, b]]).sum(axis=1, dtype=np.int32))
    trip = np.stack(cols, axis=1).astype(dtype)
    sm = np.sign(m[idx])
    signs = np.stack([sm[:, 0] * sm[:, 1], sm[:, 0] * sm[:, 2], sm[:, 1] * sm[:, 2]], axis=1).astype(np.int8)
    return trip, signs


def compute_records(bank: SampleBank, disorders, h: float, q_hat: float,
                    opts: EngineOptions = EngineOptions(), indices=None,
                    uniform_weights: bool = False) -> list:
    """Quenched records for each disorder by e^L reweighting of the bank.

    With ``uniform_weights`` the bank is taken as direct samples of the
    field model itself (one disorder), and L only enters X_n.
    """
    disorders = list(disorders)
    if not disorders:
        return []
    indices = list(range(len(disorders))) if indices is None else list(indices)
    lat = bank.lattice
    N = lat.num_sites
    if bank.size < 3:
        raise EstimatorError("bank needs at least three samples")
    if opts.l_max > 6:
        raise EstimatorError("l_max must be at most 6")
    trng = make_rng(derive_seed(opts.seed, "tuples", lat.d, lat.n))
    tuple_rho = {}
    for l in range(1, opts.l_max + 1):
        if opts.n_tuples and l <= N:
            tuple_rho[l] = tuple_product_means(bank.spins, draw_tuples(N, l, opts.n_tuples, trng))
    srng = make_rng(derive_seed(opts.seed, "sites", lat.d, lat.n))
    k = min(opts.n_site_subset, N)
    site_idx = np.sort(srng.choice(N, size=k, replace=False)) if k else np.zeros(0, np.int64)
    ks_pairs = None
    if opts.ks_pairs:
        prng = make_rng(derive_seed(opts.seed, "ks-pairs", lat.d, lat.n))
        a = prng.integers(0, bank.size, opts.ks_pairs)
        b = (a + prng.integers(1, bank.size, opts.ks_pairs)) % bank.size
        gab = (bank.spins[a] * bank.spins[b]).sum(axis=1, dtype=np.int32) / N
        ks_pairs = (a, b, gab)

    records = []
    bs = max(1, opts.batch_size)
    for start in range(0, len(disorders), bs):
        chunk = disorders[start : start + bs]
        idx_chunk = indices[start : start + bs]
        if uniform_weights:
            logw = np.zeros((bank.size, len(chunk)))
        else:
            J = np.stack([dsr.values for dsr in chunk], axis=1)
            logw = (bank.beta * h / math.sqrt(N)) * (bank.spins.astype(np.float64) @ J)
        stats, W, ess, lme, m = _quenched_batch(bank, logw, q_hat, opts, tuple_rho, site_idx, ks_pairs)
        order = m
        if bank.interaction == "antiferro":
            order = bank.spins.astype(np.float64) @ lat.parity / N
        for j, (dsr, idx) in enumerate(zip(chunk, idx_chunk)):
            # pure states of the antiferromagnet are selected by the staggered field
            xf = gauge_flip_field(dsr) if bank.interaction == "antiferro" else dsr
            rec = QuenchedRecord(
                index=int(idx), seed=int(dsr.seed),
                x_n=field_sum_Xn(xf, q_hat, bank.beta, h) if bank.beta > 0 else 0.0,
                samples=bank.size, ess=float(ess[j]), log_mean_exp_L=float(lme[j]),
                values=stats[j]["values"], stderr=stats[j]["stderr"], num_sites=N,
            )
            if uniform_weights:
                # direct samples carry no information on <e^L>_0
                rec.log_mean_exp_L = float("nan")
                rec.values["exp_L_mean"] = rec.stderr["exp_L_mean"] = float("nan")
            if opts.n_triples:
                rng = make_rng(derive_seed(opts.seed, "triples", lat.n, int(idx)))
                rec.triples, rec.sign_triples = _triples_for(bank.spins, order, W[:, j], rng, opts.n_triples,
                                                                  bank.groups)
                _triple_summaries(rec, q_hat, opts.eps_ultra)
            records.append(rec)
    return records


def support_points(q: float) -> np.ndarray:
    """The four support points of (R12, R13, R23) for two pure states."""
    return q * np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64)


def classify_triples(trip: np.ndarray, q: float) -> np.ndarray:
    """Index of the nearest support point for each overlap triple."""
    pts = support_points(q)
    d2 = ((trip[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def _triple_summaries(rec: QuenchedRecord, q: float, eps: float):
    t = rec.overlap_triples()
    T = t.shape[0]
    viol = t[:, 1] < np.minimum(t[:, 0], t[:, 2]) - eps
    cls = classify_triples(t, q)
    masses = np.bincount(cls, minlength=4) / T
    sign_cls = classify_triples(rec.sign_triples.astype(np.float64), 1.0)
    rec.values["ultra_violation"] = float(viol.mean())
    rec.stderr["ultra_violation"] = float(math.sqrt(max(viol.mean() * (1 - viol.mean()), 1.0 / T) / T))
    for k in range(4):
        rec.values[f"mass_point{k}"] = float(masses[k])
        rec.stderr[f"mass_point{k}"] = float(math.sqrt(masses[k] * (1 - masses[k]) / T))
    rec.values["factorization_agree"] = float(np.mean(cls == sign_cls))
    rec.stderr["factorization_agree"] = float("nan")
