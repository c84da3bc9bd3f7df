import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfimlab.disorder import DisorderField, derive_seed, gauge_flip_field, sample_disorder
from rfimlab.estimators import (
    DisorderSweep, EngineOptions, EstimatorError, QuenchedRecord, SampleBank, admissible_tuples,
    compute_records, correlation_uniformity, free_energy_variance, gg_residual, magnetization_stats,
    mgf_gap, nsa_stats, pure_state_moment_test, replica_symmetry_trend, reweighted_expectation,
    reweighted_pair_expectation, rsb_stats, tuple_correlations, ultrametric_stats,
)
from rfimlab.estimators.overlap import gg_statistic_from_means, predicted_masses
from rfimlab.estimators.quenched import (
    classify_triples, draw_tuples, support_points, tuple_product_means,
)
from rfimlab.estimators.reweight import ReweightingBreakdown
from rfimlab.gibbs import ModelParams
from rfimlab.lattice import build_lattice
from rfimlab.runner import load_expectations
from rfimlab.samplers import SampleSchedule, exact_enumerate, log_z_from_zero_field, run_chain
from rfimlab.stats import (
    expected_tanh2, gauss_hermite_expectation, tanh2_law_cdf, tanh2_law_cdf_quadrature,
)

from helpers import family_z

L3 = build_lattice(2, 1)
ZERO3 = DisorderField.from_values(L3, np.zeros(9))
Q = 0.9479138373148777


def const_bank(lat, rows, symmetrize=False):
    return SampleBank.from_samples(lat, 0.6, np.asarray(rows, dtype=np.int8), symmetrize=symmetrize,
                                   n_groups=4)


def const_sweep(lat, rows, n_disorders=3, h=1.0, q=Q, opts=None):
    bank = const_bank(lat, rows)
    dis = [sample_disorder(lat, "gaussian", s) for s in range(n_disorders)]
    opts = opts or EngineOptions(n_triples=50, n_tuples=50, l_max=4, n_site_subset=4)
    recs = compute_records(bank, dis, h, q, opts, uniform_weights=True)
    return DisorderSweep(2, lat.n, 0.6, h, "gaussian", q, "explicit", records=recs)


# -- reweighting identity ------------------------------------------------------


@pytest.mark.parametrize("beta,h", [(0.3, 1.0), (0.6, 1.0), (0.6, -2.0)])
def test_reweighting_exact_at_enumeration_scale(beta, h):
    dis = sample_disorder(L3, "gaussian", 99)
    e0 = exact_enumerate(ModelParams(beta), ZERO3, [])
    eh = exact_enumerate(ModelParams(beta, h), dis, ["m", "m2", "R12", "R12_sq"])
    for name in ("m", "m2"):
        r = reweighted_expectation(e0.states, dis, beta, h, name, base_weights=e0.probs)
        assert abs(r.value - eh[name]) < 1e-12
    for name in ("R12", "R12_sq"):
        r = reweighted_pair_expectation(e0.states, dis, beta, h, name, base_weights=e0.probs)
        assert abs(r.value - eh[name]) < 1e-12
    # log Z(J) from the zero-field law
    assert log_z_from_zero_field(e0, dis, beta, h) == pytest.approx(eh.log_z, abs=1e-12)


def test_reweight_constant_observable_is_one():
    X = run_chain(ModelParams(0.4), ZERO3, SampleSchedule(10, 1, 500), 1)
    dis = sample_disorder(L3, "gaussian", 3)
    assert reweighted_expectation(X, dis, 0.4, 1.0, "one").value == pytest.approx(1.0, abs=1e-15)


def test_reweight_zero_field_is_plain_mean():
    X = run_chain(ModelParams(0.4), ZERO3, SampleSchedule(10, 1, 500), 1)
    r = reweighted_expectation(X, ZERO3, 0.4, 1.0, "m")
    assert r.value == pytest.approx(X.mean(), abs=1e-13)
    assert r.ess == pytest.approx(500)


def test_jensen_floor_mc():
    X = run_chain(ModelParams(0.6), ZERO3, SampleSchedule(100, 1, 20000), 2)
    for s in range(10):
        r = reweighted_expectation(X, sample_disorder(L3, "gaussian", s), 0.6, 1.0)
        assert r.jensen_ok


def test_ess_floor_raises():
    X = run_chain(ModelParams(0.6), ZERO3, SampleSchedule(10, 1, 50), 2)
    dis = DisorderField.from_values(L3, np.full(9, 30.0))
    with pytest.raises(ReweightingBreakdown):
        reweighted_expectation(X, dis, 0.6, 10.0, ess_floor=40)


# -- MGF gap -----------------------------------------------------------------------


def test_mgf_zero_coefficients():
    g = mgf_gap(np.zeros(25), "gaussian", 1000, 0)
    assert g.gap == 0.0


def test_mgf_gaussian_exact_identity():
    a = np.linspace(-1.5, 1.5, 81)
    g = mgf_gap(a, "gaussian", 200_000, 4)
    assert g.exact_gap == 0.0
    assert g.gap <= 3 * g.gap_se


def test_mgf_rademacher_calibrated_constant():
    C = load_expectations()["constants"]["mgf_C"]
    a = np.ones(81)
    g = mgf_gap(a, "rademacher", 10_000, 5, constant=C)
    from scipy.stats import binom
    k = np.arange(82)
    brute = float(np.sum(binom.pmf(k, 81, 0.5) * np.exp((2 * k - 81) / 9.0)))
    assert g.exact_gap == pytest.approx(abs(brute - math.exp(0.5)), abs=1e-12)
    assert g.bound == pytest.approx(81 / 729, abs=1e-15)
    assert not g.violated


def test_mgf_rejects_large_coefficients():
    with pytest.raises(EstimatorError):
        mgf_gap(np.full(9, 3.0), "gaussian", 10, 0, theta=4)


# -- concentration, ultrametricity, GG ---------------------------------------------


def test_rsb_degenerate_all_plus():
    sw = const_sweep(L3, np.ones((6, 9)))
    r = rsb_stats(sw)
    assert r["statistic"] == pytest.approx((1 - Q**2) ** 2, abs=1e-12)
    counts = r["hist_counts"]
    assert counts.sum() == 3 * 50 * 3
    assert r["hist_edges"][0] == -1 and r["hist_edges"][-1] == 1


def test_rsb_needs_two_replicas():
    sw = DisorderSweep(2, 1, 0.6, 1.0, "gaussian", Q, "explicit", records=[])
    with pytest.raises(EstimatorError):
        rsb_stats(sw)


def test_mass_near_q_half_at_zero_field():
    lat = build_lattice(2, 6)
    zero = DisorderField.from_values(lat, np.zeros(lat.num_sites))
    X = run_chain(ModelParams(0.6), zero, SampleSchedule(200, 5, 4000), 3)
    bank = SampleBank.from_samples(lat, 0.6, X, symmetrize=True)
    recs = compute_records(bank, [zero], 0.0, 0.85, EngineOptions(delta=0.2, n_triples=0, n_tuples=0,
                                                                    n_site_subset=0), uniform_weights=True)
    v = recs[0].values
    frac = v["mass_plus"] / (v["mass_plus"] + v["mass_minus"])
    assert frac == pytest.approx(0.5, abs=0.01)


def test_ultrametric_identical_replicas():
    sw = const_sweep(L3, np.ones((6, 9)))
    u = ultrametric_stats(sw, 0.0)
    assert u["violation_rate"] == 0.0
    assert np.all(u["masses"][:, 0] == 1.0)


def test_ultrametric_two_valued_triples():
    t = np.array([[1.0, -1.0, -1.0]])
    assert classify_triples(t * Q, Q)[0] == 1
    viol = t[:, 1] < np.minimum(t[:, 0], t[:, 2]) - 0.0
    assert not viol.any()


def test_support_points_and_predicted_masses():
    pts = support_points(0.5)
    assert pts.shape == (4, 3)
    assert np.all(np.prod(np.sign(pts), axis=1) == 1)
    m = predicted_masses(np.array([0.0, 0.7, -2.0]))
    assert np.allclose(m.sum(axis=1), 1.0)
    assert np.allclose(m[0], 0.25)


def test_ultrametric_requires_triples():
    sw = const_sweep(L3, np.ones((6, 9)), opts=EngineOptions(n_triples=0, n_tuples=0, n_site_subset=0))
    with pytest.raises(EstimatorError):
        ultrametric_stats(sw, 0.1)


def test_gg_identical_replica_form():
    qbar = 0.81
    assert gg_statistic_from_means(np.full(5, qbar**2), np.full(5, qbar), np.full(5, qbar**2)) == \
        pytest.approx(0.0, abs=1e-15)


def test_gg_prediction_at_zero_field():
    sw = const_sweep(L3, np.ones((6, 9)), n_disorders=3, h=0.0)
    r = gg_residual(sw, min_disorders=3, n_boot=50)
    assert r["predicted"] == pytest.approx(-Q**2, abs=1e-15)
    with pytest.raises(EstimatorError):
        gg_residual(sw, min_disorders=200)


# -- NSA, magnetization, moments --------------------------------------------------------


def test_nsa_min_disorders():
    sw = const_sweep(L3, np.ones((6, 9)), n_disorders=3)
    with pytest.raises(EstimatorError):
        nsa_stats(sw, min_disorders=200)


def test_nsa_zero_field_residual_is_r12_squared():
    sw = const_sweep(L3, np.ones((6, 9)), n_disorders=4, h=0.0)
    r = nsa_stats(sw, min_disorders=4)
    assert r["residual_second_moment"] == pytest.approx(np.mean(sw.column("R12") ** 2), abs=1e-15)


def test_nsa_zero_disorder_prediction_is_zero():
    lat = L3
    bank = const_bank(lat, np.ones((6, 9)))
    rec = compute_records(bank, [ZERO3], 1.0, Q, EngineOptions(n_triples=0, n_tuples=0, n_site_subset=0),
                          uniform_weights=True)[0]
    assert rec.x_n == 0.0


def test_magnetization_constant_all_plus():
    sw = const_sweep(L3, np.ones((6, 9)))
    m = magnetization_stats(sw)
    assert m["m2_q"] == pytest.approx((1 - Q) ** 2, abs=1e-12)
    assert m["site_unif"] == pytest.approx(0.0, abs=1e-12)


def test_magnetization_zero_field():
    sw = const_sweep(L3, np.vstack([np.ones((3, 9)), -np.ones((3, 9))]), h=0.0)
    m = magnetization_stats(sw)
    assert m["m_tanh"] == pytest.approx(np.mean(sw.column("m") ** 2), abs=1e-15)


def test_site_uniformity_requires_records():
    sw = const_sweep(L3, np.ones((6, 9)), opts=EngineOptions(n_triples=0, n_tuples=0, n_site_subset=0))
    with pytest.raises(EstimatorError):
        magnetization_stats(sw, site_uniformity=True)


def test_pure_state_bounds_and_odd_zero_field():
    sw = const_sweep(L3, np.vstack([np.ones((3, 9)), -np.ones((3, 9))]), h=0.0)
    with pytest.raises(EstimatorError):
        pure_state_moment_test(sw, 7)
    r = pure_state_moment_test(sw, 4)
    assert r["per_l"][1]["mean_residual"] == pytest.approx(0.0, abs=1e-15)
    assert r["per_l"][2]["mean_residual"] == pytest.approx(1 - Q, abs=1e-12)


def test_l2_moment_matches_pair_correlation_path():
    X = run_chain(ModelParams(0.5), ZERO3, SampleSchedule(10, 1, 3000), 8)
    tuples = draw_tuples(9, 2, 500, np.random.default_rng(1))
    a = tuple_product_means(X, tuples).mean()
    b = tuple_correlations(X, tuples).mean()
    assert abs(a - b) < 1e-12


# -- correlation uniformity ----------------------------------------------------------------


def test_correlation_uniformity_matches_enumeration():
    # window relaxed: all distinct pairs of the 3x3 lattice
    beta = 0.6
    ex = exact_enumerate(ModelParams(beta), ZERO3, ["sigma_sigma"])["sigma_sigma"]
    iu = np.triu_indices(9, 1)
    pairs = np.stack(iu, axis=1)
    X = run_chain(ModelParams(beta), ZERO3, SampleSchedule(100, 1, 400_000), 9)
    q = 0.8
    mc = np.abs(tuple_correlations(X, pairs) - q)
    exact = np.abs(ex[iu] - q)
    assert abs(mc.max() - exact.max()) < 0.005


def test_admissible_tuples_window():
    lat = build_lattice(2, 16)
    t = admissible_tuples(lat, 0.25, 4, 500, 3)
    c = lat.coords[t]
    assert np.all(np.abs(c).max(axis=2) <= 12)
    for a in range(4):
        for b in range(a + 1, 4):
            assert np.all(np.abs(c[:, a] - c[:, b]).sum(axis=1) >= 4)
    with pytest.raises(EstimatorError):
        admissible_tuples(build_lattice(2, 1), 0.25, 2, 10, 0)


def test_correlation_uniformity_runs():
    lat = build_lattice(2, 8)
    zero = DisorderField.from_values(lat, np.zeros(lat.num_sites))
    X = run_chain(ModelParams(0.6), zero, SampleSchedule(200, 2, 2000), 5)
    r = correlation_uniformity(X, lat, 0.25, Q, n_pairs=200, n_quads=200, seed=1)
    assert 0 <= r["delta"] < 1 and r["delta_se"] > 0
    with pytest.raises(EstimatorError):
        correlation_uniformity(X, lat, 1.5, Q)


# -- bounds ----------------------------------------------------------------------------------


def test_free_energy_zero_field():
    r = free_energy_variance(np.zeros(10), 0.6, 0.0, "gaussian")
    assert r["variance"] == 0.0 and r["bound"] == 0.0 and r["passed"]


def test_free_energy_variance_enumeration_scale():
    beta, h = 0.6, 1.0
    e0 = exact_enumerate(ModelParams(beta), ZERO3, [])
    F = [log_z_from_zero_field(e0, sample_disorder(L3, "gaussian", derive_seed(0, "disorder", i)), beta, h)
         - e0.log_z for i in range(1000)]
    r = free_energy_variance(np.array(F), beta, h, "gaussian")
    assert r["passed"] and r["variance"] <= beta**2 * h**2


def test_free_energy_rademacher_not_applicable():
    r = free_energy_variance(np.ones(5), 0.6, 1.0, "rademacher")
    assert r["applicable"] is False and r["passed"] is None


def test_replica_symmetry_trend_rows():
    sw = const_sweep(L3, np.ones((6, 9)), h=4.0)
    rows = replica_symmetry_trend([sw])
    assert rows[0]["bound"] == pytest.approx(2**1.5 / (0.6 * 4.0))
    assert rows[0]["statistic"] == pytest.approx(0.0, abs=1e-12)


# -- engine vs exact ----------------------------------------------------------------------------


def test_engine_matches_enumeration():
    beta, h = 0.6, 1.0
    dis = [sample_disorder(L3, "gaussian", s) for s in (3, 11)]
    bank = SampleBank.from_chain(L3, beta, SampleSchedule(100, 1, 4000), 5)
    recs = compute_records(bank, dis, h, Q, EngineOptions(n_triples=0, n_tuples=0, n_site_subset=0))
    keys = ["m", "m2", "R12", "R12_sq", "R12_R13"]
    zs = []
    for d, r in zip(dis, recs):
        ex = exact_enumerate(ModelParams(beta, h), d, keys)
        zs += [(r.values[k] - ex[k]) / r.stderr[k] for k in keys]
    assert np.max(np.abs(zs)) < family_z(len(zs))


def _brute_jackknife(g, groups, G):
    """Cross-group pair and triple means with delete-a-group jackknife errors."""
    diff = groups[:, None] != groups[None, :]
    three = diff[:, :, None] & diff[:, None, :] & diff[None, :, :]

    def est(keep):
        k2 = diff & keep[:, None] & keep[None, :]
        k3 = three & keep[:, None, None] & keep[None, :, None] & keep[None, None, :]
        pair = (g * k2).sum() / k2.sum()
        trip = np.einsum("ij,ik,ijk->", g, g, k3) / k3.sum()
        return np.array([pair, trip])

    full = est(np.ones(len(groups), bool))
    loo = np.array([est(groups != h) for h in range(G)])
    se = np.sqrt((G - 1) / G * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    return full, se


def test_cross_group_jackknife_matches_brute_force():
    lat = build_lattice(2, 1)
    rng = np.random.default_rng(4)
    spins = np.where(rng.random((30, 9)) < 0.7, 1, -1).astype(np.int8)
    bank = SampleBank.from_samples(lat, 0.6, spins, n_groups=6)
    rec = compute_records(bank, [sample_disorder(lat, "gaussian", 1)], 1.0, Q,
                          EngineOptions(n_triples=0, n_tuples=0, n_site_subset=0), uniform_weights=True)[0]
    x = spins.astype(np.float64)
    full, se = _brute_jackknife(x @ x.T / 9, bank.groups, 6)
    got = [rec.values["R12"], rec.values["R12_R13"]]
    got_se = [rec.stderr["R12"], rec.stderr["R12_R13"]]
    assert got == pytest.approx(full, rel=1e-5)
    assert got_se == pytest.approx(se, rel=1e-4)


def test_antiferro_records_match_ferro_with_flipped_field():
    lat = build_lattice(2, 2)
    ferro = SampleBank.from_chain(lat, 0.6, SampleSchedule(50, 1, 400), 9)
    anti = ferro.gauge_mapped()
    dis = [sample_disorder(lat, "gaussian", s) for s in range(4)]
    opts = EngineOptions(n_triples=50, n_tuples=0, n_site_subset=0)
    ra = compute_records(anti, dis, 1.0, Q, opts)
    rf = compute_records(ferro, [gauge_flip_field(d) for d in dis], 1.0, Q, opts)
    for a, f in zip(ra, rf):
        assert a.x_n == pytest.approx(f.x_n, rel=1e-12)
        for k in ("R12", "R12_sq", "R12_R13", "mass_plus", "rsb"):
            assert a.values[k] == pytest.approx(f.values[k], rel=1e-5, abs=1e-9)
        assert np.array_equal(a.triples, f.triples)
        assert np.array_equal(a.sign_triples, f.sign_triples)


def test_batches_do_not_change_records():
    bank = SampleBank.from_chain(L3, 0.6, SampleSchedule(50, 1, 600), 5)
    dis = [sample_disorder(L3, "gaussian", s) for s in range(5)]
    opts = EngineOptions(n_triples=20, n_tuples=20, n_site_subset=3)
    whole = compute_records(bank, dis, 1.0, Q, opts)
    part = compute_records(bank, dis[2:4], 1.0, Q, opts, indices=[2, 3])
    for a, b in zip(whole[2:4], part):
        # pair sums run in float32, so batch shape moves the last digits
        assert a.row() == pytest.approx(b.row(), rel=1e-4, abs=1e-9, nan_ok=True)
        assert np.array_equal(a.triples, b.triples)


@given(st.permutations(list(range(8))), st.integers(1, 7))
def test_merge_is_order_independent(order, cut):
    recs = [QuenchedRecord(i, i, 0.1 * i, 10, 10.0, 0.0, {"R12": 0.01 * i}, {"R12": 0.0}) for i in range(8)]
    shuffled = [recs[i] for i in order]
    a = DisorderSweep(2, 1, 0.6, 1.0, "gaussian", Q, "x", records=shuffled[:cut])
    b = DisorderSweep(2, 1, 0.6, 1.0, "gaussian", Q, "x", records=shuffled[cut:])
    ab, ba = a.merge(b), b.merge(a)
    assert [r.index for r in ab.records] == list(range(8))
    assert np.array_equal(ab.column("R12"), ba.column("R12"))


def test_merge_rejects_other_models():
    a = DisorderSweep(2, 1, 0.6, 1.0, "gaussian", Q, "x")
    with pytest.raises(EstimatorError):
        a.merge(DisorderSweep(2, 2, 0.6, 1.0, "gaussian", Q, "x"))


def test_sweep_rejects_bad_q():
    with pytest.raises(EstimatorError):
        DisorderSweep(2, 1, 0.6, 1.0, "gaussian", 0.0, "x")


# -- quadrature oracle -----------------------------------------------------------------------


def test_gauss_hermite_moments():
    assert gauss_hermite_expectation(lambda z: z**2) == pytest.approx(1.0, abs=1e-12)
    assert gauss_hermite_expectation(lambda z: z**4) == pytest.approx(3.0, abs=1e-12)
    assert gauss_hermite_expectation(np.cos) == pytest.approx(math.exp(-0.5), abs=1e-12)


def test_expected_tanh2_value():
    v = expected_tanh2(Q, 0.6, 1.0)
    rng = np.random.default_rng(0)
    mc = np.mean(np.tanh(math.sqrt(Q) * 0.6 * rng.standard_normal(2_000_000)) ** 2)
    assert v == pytest.approx(mc, abs=1e-3)
    assert expected_tanh2(Q, 0.6, 0.0) == 0.0


@given(st.floats(0.0, 0.94))
def test_tanh2_cdf_closed_form_vs_quadrature(x):
    # the quadrature CDF is a step function, so compare against the closed
    # form at both neighbouring node values
    z, _ = np.polynomial.hermite_e.hermegauss(64)
    vals = np.sort(Q * np.tanh(math.sqrt(Q) * 0.6 * z) ** 2)
    b = tanh2_law_cdf_quadrature(x, Q, 0.6, 1.0)[0]
    lo = vals[vals <= x].max(initial=0.0)
    hi = vals[vals > x].min(initial=Q)
    a_lo, a_hi = tanh2_law_cdf(np.array([lo, hi]), Q, 0.6, 1.0)
    assert a_lo - 0.02 <= b <= a_hi + 0.02
