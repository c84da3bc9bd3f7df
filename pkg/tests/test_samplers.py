import numpy as np
import pytest

from rfimlab.disorder import DisorderField, sample_disorder
from rfimlab.fk import beta_to_p, color_stream, rc_sample
from rfimlab.gibbs import ModelParams, SpinConfig, local_energy_change
from rfimlab.lattice import build_lattice
from rfimlab.samplers import (
    ChainState, SampleSchedule, SamplerError, all_states, cluster_update, exact_enumerate,
    gauge_cluster_update, iter_chain, metropolis_sweep, run_chain, sample_exact,
)
from rfimlab.stats import batch_means

from helpers import exact_one_two, family_z, one_two_point

L3 = build_lattice(2, 1)
ZERO3 = DisorderField.from_values(L3, np.zeros(9))
J3 = sample_disorder(L3, "gaussian", 20240601)


def test_schedule_validation():
    with pytest.raises(SamplerError):
        SampleSchedule(thinning=0)
    with pytest.raises(SamplerError):
        SampleSchedule(samples=-1)
    with pytest.raises(SamplerError):
        SampleSchedule(update_kind="heatbath")


def test_empty_stream():
    out = run_chain(ModelParams(0.5), ZERO3, SampleSchedule(10, 1, 0), 1)
    assert out.shape == (0, 9)


@pytest.mark.parametrize("kind", ["metropolis", "cluster", "mixed"])
def test_same_seed_same_stream(kind):
    sched = SampleSchedule(20, 3, 50, kind)
    a = run_chain(ModelParams(0.6, 1.0), J3, sched, 9)
    b = run_chain(ModelParams(0.6, 1.0), J3, sched, 9)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, run_chain(ModelParams(0.6, 1.0), J3, sched, 10))


def test_iter_chain_yields_configs():
    cfgs = list(iter_chain(ModelParams(0.3), ZERO3, SampleSchedule(5, 1, 4), 0))
    assert len(cfgs) == 4 and all(isinstance(c, SpinConfig) for c in cfgs)


@pytest.mark.parametrize("kind", ["metropolis", "cluster"])
def test_infinite_temperature_uniform(kind):
    X = run_chain(ModelParams(0.0), ZERO3, SampleSchedule(10, 1, 20000, kind), 3)
    mean = X.mean(axis=0)
    assert np.all(np.abs(mean) < 3 / np.sqrt(20000) * 1.5)


def test_metropolis_all_accepted_at_beta_zero():
    st_ = ChainState.start(ModelParams(0.0), ZERO3, 4)
    before = st_.spins.copy()
    metropolis_sweep(st_)
    assert np.array_equal(st_.spins, -before)
    assert st_.sweep_count == 1


def test_metropolis_acceptance_ratio():
    # two-site-free single spin: P(+)/P(-) = exp(-beta dH)
    lat = build_lattice(2, 0)
    dis = DisorderField.from_values(lat, [0.8])
    p = ModelParams(0.9, 1.0)
    X = run_chain(p, dis, SampleSchedule(100, 1, 200000, "metropolis"), 5)
    frac_plus = (X[:, 0] == 1).mean()
    dH = local_energy_change(p, dis, SpinConfig.all_plus(lat), 0)  # H(-) - H(+)
    ratio = np.exp(p.beta * dH)
    assert frac_plus / (1 - frac_plus) == pytest.approx(ratio, rel=0.03)


def test_cluster_rejects_antiferro():
    st_ = ChainState.start(ModelParams(0.5, 0.0, "antiferro"), ZERO3, 1)
    with pytest.raises(SamplerError):
        cluster_update(st_)
    gauge_cluster_update(st_)
    assert st_.sweep_count == 1


def test_exact_enumerate_examples():
    assert exact_enumerate(ModelParams(0.8), ZERO3, ["m"])["m"] == pytest.approx(0.0, abs=1e-15)
    assert exact_enumerate(ModelParams(0.0), ZERO3, ["R12_sq"])["R12_sq"] == pytest.approx(1 / 9, abs=1e-14)
    with pytest.raises(SamplerError):
        exact_enumerate(ModelParams(0.3), ZERO3, ["bogus"])
    with pytest.raises(SamplerError):
        all_states(build_lattice(2, 2))


# <s_0 s_(1,1)> at beta = 0.3, h = 1 for gaussian seed 7, frozen from the enumeration
GOLDEN_S0_S11 = 0.17674712785568156


def test_exact_enumerate_golden_two_point():
    dis = sample_disorder(L3, "gaussian", 7)
    e = exact_enumerate(ModelParams(0.3, 1.0), dis, ["sigma_sigma"])
    i, j = L3.index((0, 0)), L3.index((1, 1))
    assert e["sigma_sigma"][i, j] == pytest.approx(GOLDEN_S0_S11, abs=1e-12)


def test_golden_matches_plain_loop():
    import itertools
    import math
    dis = sample_disorder(L3, "gaussian", 7)
    i, j = L3.index((0, 0)), L3.index((1, 1))
    num = den = 0.0
    for s in itertools.product((-1, 1), repeat=9):
        e = -sum(s[a] * s[b] for a, b in L3.edges) - sum(dis.values[k] * s[k] for k in range(9)) / 3
        w = math.exp(-0.3 * e)
        num += w * s[i] * s[j]
        den += w
    assert num / den == pytest.approx(GOLDEN_S0_S11, abs=1e-12)


@pytest.mark.parametrize("kind", ["metropolis", "cluster", "mixed"])
@pytest.mark.parametrize("beta,h", [(0.3, 0.0), (0.6, 1.0)])
def test_matches_enumeration(kind, beta, h):
    p = ModelParams(beta, h)
    ex = exact_one_two(exact_enumerate(p, J3, ["sigma", "sigma_sigma"]))
    X = run_chain(p, J3, SampleSchedule(200, 1, 200_000, kind), 11)
    mean, se = batch_means(one_two_point(X), 100)
    z = np.abs(mean - ex) / se
    assert z.max() < family_z(len(ex))


def test_cluster_one_point_within_0005():
    p = ModelParams(0.6, 1.0)
    ex = exact_enumerate(p, J3, ["sigma"])["sigma"]
    X = run_chain(p, J3, SampleSchedule(200, 1, 1_000_000, "cluster"), 12)
    assert np.abs(X.mean(axis=0) - ex).max() < 0.005


def test_zero_field_sw_matches_fk_coloring():
    p = ModelParams(0.3)
    n = 1_000_000
    X = run_chain(p, ZERO3, SampleSchedule(100, 1, n, "cluster"), 13)
    stream = rc_sample(beta_to_p(0.3), "free", L3, SampleSchedule(100, 1, n), 14)
    Y = color_stream(stream, 15)
    a = one_two_point(X)[:, 9:].mean(axis=0)
    b = one_two_point(Y)[:, 9:].mean(axis=0)
    assert np.abs(a - b).max() < 0.005


@pytest.mark.parametrize("kind", ["metropolis", "cluster", "mixed"])
def test_stationarity_from_exact_states(kind):
    p = ModelParams(0.6, 1.0)
    enum = exact_enumerate(p, J3, ["sigma", "sigma_sigma"])
    ex = exact_one_two(enum)
    start = sample_exact(enum, 40_000, 21)
    out = np.empty_like(start)
    for k, s in enumerate(start):
        st_ = ChainState.start(p, J3, 1000 + k)
        st_.spins[:] = s
        if kind == "metropolis":
            metropolis_sweep(st_)
        elif kind == "cluster":
            cluster_update(st_)
        else:
            from rfimlab.samplers import _cluster_step
            _cluster_step(st_, gauge=False, mixed=True)
        out[k] = st_.spins
    obs = one_two_point(out)
    mean = obs.mean(axis=0)
    se = obs.std(axis=0, ddof=1) / np.sqrt(len(obs))
    assert (np.abs(mean - ex) / se).max() < family_z(len(ex))


def test_cluster_flips_global_sign_at_zero_field():
    lat = build_lattice(2, 8)
    zero = DisorderField.from_values(lat, np.zeros(lat.num_sites))
    X = run_chain(ModelParams(0.6), zero, SampleSchedule(200, 1, 20000, "cluster"), 31)
    m = X.mean(axis=1, dtype=np.float64)
    mean, se = batch_means(m, 50)
    assert abs(mean) < 3 * se
    assert np.abs(m).mean() > 0.85


def test_antiferro_overlaps_match_gauge_flipped_ferro():
    lat = build_lattice(2, 4)
    dis = sample_disorder(lat, "gaussian", 77)
    from rfimlab.disorder import gauge_flip_field
    sched = SampleSchedule(200, 1, 100_001, "cluster")
    A = run_chain(ModelParams(0.6, 1.0, "antiferro"), dis, sched, 1)
    F = run_chain(ModelParams(0.6, 1.0, "ferro"), gauge_flip_field(dis), sched, 2)
    ra = (A[:-1].astype(np.int32) * A[1:]).sum(axis=1) / lat.num_sites
    rf = (F[:-1].astype(np.int32) * F[1:]).sum(axis=1) / lat.num_sites
    from scipy.stats import ks_2samp
    assert ks_2samp(ra, rf).statistic < 0.01


def test_spool_round_trip(tmp_path):
    from rfimlab.store import ResultStore
    X = run_chain(ModelParams(0.4, 1.0), J3, SampleSchedule(5, 2, 30), 3)
    store = ResultStore(tmp_path)
    meta = {"params": {"beta": 0.4, "h": 1.0}, "disorder_seed": J3.seed, "sampler_seed": 3,
            "schedule": SampleSchedule(5, 2, 30).__dict__}
    store.write_spool("chain", X, meta)
    Y, m = store.read_spool("chain")
    assert np.array_equal(X, Y)
    assert m["sampler_seed"] == 3
    assert m["code_version"] == store.code_version
    assert m["shape"] == [30, 9]
