"""Orchestration: disorder sweeps, oracle checks and q estimation."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .config import ExperimentConfig
from .disorder import DisorderField, derive_seed, sample_disorder
from .estimators import (
    DisorderSweep, EngineOptions, EstimatorError, QuenchedRecord, SampleBank, compute_records,
    correlation_uniformity, free_energy_variance, gg_residual, magnetization_stats, nsa_stats,
    pure_state_moment_test, replica_symmetry_trend, reweighted_expectation, rsb_stats,
    ultrametric_stats,
)
from .fk import beta_to_p, estimate_sqrt_q, onsager_q
from .gibbs import ModelParams
from .lattice import build_lattice
from .samplers import ENUMERATION_CAP, SampleSchedule, SamplerError, exact_enumerate, run_chain
from .stats import batch_means
from .store import ResultStore, jsonable


class RunInterrupted(RuntimeError):
    """Raised when a run stops early on request; completed records are kept."""


def load_expectations(path=None) -> dict:
    if path in (None, "default"):
        text = resources.files("rfimlab").joinpath("data/expectations.yaml").read_text()
    else:
        text = Path(path).read_text()
    return yaml.safe_load(text)


def sweep_tag(d: int, n: int, h: float, interaction: str) -> str:
    return f"d{d}_n{n}_h{format(h, '.6g')}_{interaction}"


def resolve_q(cfg: ExperimentConfig, n: int) -> tuple[float, str, float]:
    """(q_hat, provenance, stderr) for one lattice size."""
    est = cfg.estimator
    beta = cfg.model.beta
    if est.q_source == "explicit":
        return float(est.q_value), "explicit", 0.0
    if est.q_source == "onsager":
        if cfg.model.d != 2:
            raise EstimatorError("the Onsager oracle exists for d = 2 only")
        return onsager_q(beta), "onsager", 0.0
    qe = estimate_sqrt_q(beta_to_p(beta), [n], est.q_samples, d=cfg.model.d,
                         seed=derive_seed(cfg.disorder.master_seed, "q-hat", cfg.model.d, n))
    return max(qe.q_hat, 1e-12), f"fk-estimate(n={n}, samples={est.q_samples})", qe.q_stderr


def engine_options(cfg: ExperimentConfig, q_se: float = 0.0) -> EngineOptions:
    e = cfg.estimator
    return EngineOptions(
        delta=max(e.delta, 3.0 * q_se), eps_ultra=e.eps, n_triples=e.n_triples, n_tuples=e.n_tuples,
        l_max=e.l_max, n_site_subset=e.n_site_subset, ks_pairs=e.ks_pairs, batch_size=e.batch_size,
        seed=derive_seed(cfg.disorder.master_seed, "estimators"),
    )


def make_disorder(cfg: ExperimentConfig, lattice, index: int) -> DisorderField:
    seed = derive_seed(cfg.disorder.master_seed, "disorder", lattice.d, lattice.n, index)
    return sample_disorder(lattice, cfg.disorder.distribution, seed)


def schedule_of(cfg: ExperimentConfig) -> SampleSchedule:
    s = cfg.sampler
    return SampleSchedule(s.burn_in_sweeps, s.thinning, s.samples, s.update_kind, s.global_flip)


def build_bank(cfg: ExperimentConfig, lattice, store: ResultStore | None = None) -> SampleBank:
    """Zero-field bank for reweighting, reloaded from the spool when present."""
    name = f"bank_d{lattice.d}_n{lattice.n}_{cfg.model.interaction}"
    seed = derive_seed(cfg.disorder.master_seed, "bank", lattice.d, lattice.n)
    if store is not None:
        arr, meta = store.read_spool(name)
        if arr is not None and meta.get("sampler_seed") == seed:
            return SampleBank(lattice, cfg.model.beta, arr, np.asarray(meta["groups"]),
                              cfg.model.interaction, meta)
    # antiferro banks are gauge images of the ferro chain
    bank = SampleBank.from_chain(lattice, cfg.model.beta, schedule_of(cfg), seed,
                                 symmetrize=cfg.sampler.symmetrize, n_groups=cfg.sampler.groups)
    if cfg.model.interaction == "antiferro":
        bank = bank.gauge_mapped()
    if store is not None and cfg.output.spool:
        meta = {"params": {"beta": cfg.model.beta, "h": 0.0, "interaction": cfg.model.interaction,
                           "d": lattice.d, "n": lattice.n},
                "schedule": cfg.sampler.model_dump(), "sampler_seed": seed, "disorder_seed": None,
                "groups": bank.groups.tolist(), "symmetrized": cfg.sampler.symmetrize,
                "code_version": store.code_version}
        store.write_spool(name, bank.spins, meta)
    return bank


def _direct_batch(cfg_json: str, n: int, h: float, q_hat: float, opts: EngineOptions, indices):
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    lat = build_lattice(cfg.model.d, n)
    params = ModelParams(cfg.model.beta, h, cfg.model.interaction)
    out = []
    for i in indices:
        dis = make_disorder(cfg, lat, i)
        seed = derive_seed(cfg.disorder.master_seed, "chain", lat.d, n, i)
        spins = run_chain(params, dis, schedule_of(cfg), seed)
        bank = SampleBank.from_samples(lat, cfg.model.beta, spins, n_groups=cfg.sampler.groups,
                                       interaction=cfg.model.interaction)
        out += compute_records(bank, [dis], h, q_hat, opts, indices=[i], uniform_weights=True)
    return out


_WORKER_BANK = {}


def _reweight_batch(cfg_json: str, n: int, h: float, q_hat: float, opts: EngineOptions, indices):
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    bank = _WORKER_BANK[n]
    dis = [make_disorder(cfg, bank.lattice, i) for i in indices]
    return compute_records(bank, dis, h, q_hat, opts, indices=indices)


def _sweep_statistics(cfg: ExperimentConfig, sweep: DisorderSweep, bank: SampleBank | None) -> dict:
    est = cfg.estimator
    out = {}
    for name in est.statistics:
        try:
            if name == "rsb":
                r = rsb_stats(sweep)
                out[name] = {k: r[k] for k in ("statistic", "stderr", "within_window", "within_window_se",
                                                "mass_plus_residual", "q_hat", "q_provenance")}
            elif name == "nsa":
                r = nsa_stats(sweep, est.min_disorders)
                out[name] = {k: r[k] for k in ("residual_second_moment", "stderr", "ks")}
            elif name == "ultrametric":
                r = ultrametric_stats(sweep, est.eps)
                out[name] = {k: r[k] for k in ("violation_rate", "max_mass_deviation",
                                                "factorization_agreement", "eps", "triples_per_disorder")}
            elif name == "gg":
                r = gg_residual(sweep, est.min_disorders, seed=derive_seed(cfg.disorder.master_seed, "gg"))
                out[name] = r
            elif name == "magnetization":
                out[name] = magnetization_stats(sweep, site_uniformity=est.n_site_subset > 0)
            elif name == "pure_state":
                r = pure_state_moment_test(sweep, est.l_max)
                out[name] = {"per_l": {l: {k: v for k, v in d.items() if k != "residuals"}
                                       for l, d in r["per_l"].items()},
                             "mixture_fit_residual": r.get("mixture_fit_residual")}
            elif name == "free_energy":
                if cfg.sampler.mode != "reweight":
                    raise EstimatorError("free-energy variance needs reweighting mode")
                out[name] = free_energy_variance(sweep)
            elif name == "replica_symmetry":
                out[name] = replica_symmetry_trend([sweep])[0]
            elif name == "correlation_uniformity":
                if bank is None:
                    raise EstimatorError("correlation uniformity needs zero-field samples")
                out[name] = correlation_uniformity(
                    bank.spins, bank.lattice, est.corr_eps, sweep.q_hat, n_pairs=est.n_pairs,
                    n_quads=est.n_quads, seed=derive_seed(cfg.disorder.master_seed, "corr"))
        except EstimatorError as exc:
            out[name] = {"error": str(exc)}
    return out


def evaluate_checks(summary: dict, n: int, expectations: dict | None, details: dict | None = None) -> dict:
    """Threshold checks from the expectations file that apply at this n.

    ``details`` if given receives value, operator, threshold and the
    calibration flag for each check.
    """
    checks = {}
    if not expectations:
        return checks
    interaction = (summary.get("meta") or {}).get("interaction", "ferro")
    for chk in expectations.get("checks", []):
        if chk.get("n") not in (None, n) or chk.get("interaction") not in (None, interaction):
            continue
        block = summary.get(chk["statistic"])
        if not isinstance(block, dict) or "error" in block:
            continue
        value = block
        for part in chk["field"].split("."):
            if not isinstance(value, dict):
                value = None
                break
            value = value.get(int(part), value.get(part)) if part.isdigit() else value.get(part)
        if value is None:
            continue
        ok = value <= chk["value"] if chk["op"] == "<=" else value >= chk["value"]
        name = f"{chk['statistic']}.{chk['field']}@n={n}"
        checks[name] = bool(ok)
        if details is not None:
            details[name] = {"value": value, "op": chk["op"], "threshold": chk["value"], "passed": bool(ok),
                             "calibrated": True, "expectations_version": expectations.get("version")}
    return checks


@dataclass
class RunReport:
    config_hash: str
    store: ResultStore
    sweeps: dict = field(default_factory=dict)
    summaries: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    new_records: int = 0

    @property
    def failed(self) -> bool:
        return not all(self.checks.values())


def run_experiment(cfg: ExperimentConfig, *, workers: int = 1, store: ResultStore | None = None,
                   stop_after: int | None = None, expectations: dict | None = None,
                   keep_banks: bool = False) -> RunReport:
    """Run every sweep of ``cfg``, resuming from checkpoints in the store.

    Records are computed in fixed index batches, so their values do not
    depend on where a previous run stopped or on the worker count.
    """
    chash = cfg.config_hash()
    if store is None:
        store = ResultStore(Path(cfg.output.directory) / chash, chash)
    store.log("run-start", config=cfg.canonical(), workers=workers)
    if expectations is None and cfg.estimator.thresholds:
        expectations = load_expectations(cfg.estimator.thresholds)
    report = RunReport(chash, store)
    cfg_json = cfg.model_dump_json()
    appended = 0
    for n in cfg.model.n:
        lat = build_lattice(cfg.model.d, n)
        h = cfg.model.h.at(n)
        tag = sweep_tag(cfg.model.d, n, h, cfg.model.interaction)
        q_hat, prov, q_se = resolve_q(cfg, n)
        opts = engine_options(cfg, q_se)
        meta = {"d": lat.d, "n": n, "beta": cfg.model.beta, "h": h, "distribution": cfg.disorder.distribution,
                "interaction": cfg.model.interaction, "q_hat": q_hat, "q_provenance": prov,
                "delta": opts.delta, "mode": cfg.sampler.mode, "n_triples": opts.n_triples,
                "config_hash": chash}
        store.write_summary(f"{tag}_meta", meta)
        bank = build_bank(cfg, lat, store) if cfg.sampler.mode == "reweight" else None
        done = store.completed(tag)
        D = cfg.disorder.realizations
        bs = cfg.estimator.batch_size
        batches = [list(range(a, min(D, a + bs))) for a in range(0, D, bs)]
        todo = [b for b in batches if not set(b) <= done]
        if bank is not None:
            _WORKER_BANK[n] = bank
        job = _reweight_batch if bank is not None else _direct_batch

        def consume(records):
            nonlocal appended
            for rec in records:
                if rec.index in done:
                    continue
                if stop_after is not None and appended >= stop_after:
                    raise RunInterrupted(f"stopped after {appended} records")
                store.append_rows(tag, [rec.row()])
                if rec.triples is not None:
                    store.append_triples(tag, rec.index, rec.triples, rec.sign_triples)
                done.add(rec.index)
                appended += 1

        if workers > 1 and len(todo) > 1:
            import multiprocessing as mp

            with ProcessPoolExecutor(workers, mp_context=mp.get_context("fork")) as pool:
                futures = [pool.submit(job, cfg_json, n, h, q_hat, opts, b) for b in todo]
                for fut in futures:
                    consume(fut.result())
        else:
            for b in todo:
                consume(job(cfg_json, n, h, q_hat, opts, b))
        if D == 0:
            store.ensure_empty_rows(tag, ["index", "seed", "x_n"])
        sweep = load_sweep(store, tag)
        summary = {"meta": meta, "disorders": len(sweep)}
        if len(sweep):
            summary.update(_sweep_statistics(cfg, sweep, bank))
        summary["check_details"] = {}
        checks = evaluate_checks(summary, n, expectations, summary["check_details"])
        summary["checks"] = checks
        store.write_summary(tag, summary)
        report.sweeps[tag] = sweep
        report.summaries[tag] = summary
        report.checks.update({f"{tag}:{k}": v for k, v in checks.items()})
        if not keep_banks:
            _WORKER_BANK.pop(n, None)
    report.new_records = appended
    store.log("run-end", new_records=appended, failed=report.failed)
    return report


def load_sweep(store: ResultStore, tag: str) -> DisorderSweep:
    """Rebuild a sweep from stored rows, meta and triple spool."""
    meta = store.read_summary(f"{tag}_meta")
    if meta is None:
        raise EstimatorError(f"missing statistic: no sweep {tag!r} in store")
    rows = store.read_rows(tag)
    trip = store.read_triples(tag, meta.get("n_triples", 0))
    lat_sites = (2 * meta["n"] + 1) ** meta["d"]
    fixed = {"index", "seed", "x_n", "samples", "ess", "log_mean_exp_L"}
    records = {}
    for r in rows:
        values, stderr = {}, {}
        for k, v in r.items():
            if k in fixed:
                continue
            if k.endswith("_se"):
                stderr[k[:-3]] = float(v)
            else:
                values[k] = float(v)
        idx = int(r["index"])
        t, s = trip.get(idx, (None, None))
        records[idx] = QuenchedRecord(idx, int(r["seed"]), float(r["x_n"]), int(r["samples"]),
                                      float(r["ess"]), float(r["log_mean_exp_L"]), values, stderr,
                                      t, s, lat_sites)
    sweep = DisorderSweep(meta["d"], meta["n"], meta["beta"], meta["h"], meta["distribution"],
                          meta["q_hat"], meta["q_provenance"], meta["interaction"],
                          [records[i] for i in sorted(records)], {"delta": meta.get("delta")})
    return sweep


# -- oracle comparison ---------------------------------------------------------


def enumerate_check(cfg: ExperimentConfig, samples: int | None = None, n_batches: int = 100,
                    samplers=("metropolis", "cluster")) -> list[dict]:
    """|MC - exact| for one- and two-point functions, per sampler, at 3 sigma,
    plus the reweighted one-point functions from a zero-field chain."""
    d = cfg.model.d
    rows = []
    for n in cfg.model.n:
        lat = build_lattice(d, n)
        if lat.num_sites > ENUMERATION_CAP:
            raise SamplerError(f"{lat.num_sites} sites exceeds the enumeration cap of {ENUMERATION_CAP}")
        h = cfg.model.h.at(n) if n > 0 or cfg.model.h.rule == "constant" else cfg.model.h.c
        params = ModelParams(cfg.model.beta, h, cfg.model.interaction)
        dis = make_disorder(cfg, lat, 0)
        ex = exact_enumerate(params, dis, ["sigma", "sigma_sigma"])
        iu = np.triu_indices(lat.num_sites, 1)
        exact = np.concatenate([ex["sigma"], ex["sigma_sigma"][iu]])
        names = [f"s{i}" for i in range(lat.num_sites)] + [f"s{i}s{j}" for i, j in zip(*iu)]
        count = samples or cfg.sampler.samples
        for kind in samplers:
            sched = SampleSchedule(cfg.sampler.burn_in_sweeps, 1, count, kind)
            seed = derive_seed(cfg.disorder.master_seed, f"enum-check-{kind}", n)
            X = run_chain(params, dis, sched, seed).astype(np.float64)
            obs = np.concatenate([X, X[:, iu[0]] * X[:, iu[1]]], axis=1)
            mean, se = batch_means(obs, n_batches)
            for k, name in enumerate(names):
                rows.append(_check_row(n, kind, name, mean[k], se[k], exact[k]))
        # reweighting path: zero-field chain, tilted by e^L
        zero = DisorderField.from_values(lat, np.zeros(lat.num_sites))
        sched = SampleSchedule(cfg.sampler.burn_in_sweeps, 1, count, "cluster")
        X0 = run_chain(ModelParams(cfg.model.beta, 0.0, cfg.model.interaction), zero, sched,
                       derive_seed(cfg.disorder.master_seed, "enum-check-reweight", n))
        for i in range(lat.num_sites):
            f = lambda S, i=i: S[:, i].astype(np.float64)
            val = reweighted_expectation(X0, dis, cfg.model.beta, h, f).value
            # batch the ratio estimator for an error bar
            bvals = [reweighted_expectation(B, dis, cfg.model.beta, h, f).value
                     for B in np.array_split(X0, n_batches)]
            se = float(np.std(bvals, ddof=1) / math.sqrt(len(bvals)))
            rows.append(_check_row(n, "reweight", f"s{i}", val, se, ex["sigma"][i]))
    return rows


def _check_row(n, sampler, name, mc, se, exact):
    diff = abs(float(mc) - float(exact))
    se = float(se)
    ok = diff <= 3 * se if se > 0 else diff <= 1e-12
    return {"n": n, "sampler": sampler, "observable": name, "mc": float(mc), "stderr": se,
            "exact": float(exact), "abs_diff": diff, "passed": bool(ok)}


def estimate_q(cfg: ExperimentConfig, samples: int | None = None):
    return estimate_sqrt_q(beta_to_p(cfg.model.beta), cfg.model.n, samples or cfg.estimator.q_samples,
                           d=cfg.model.d, seed=derive_seed(cfg.disorder.master_seed, "q-hat"))


def analyze_store(store: ResultStore, cfg: ExperimentConfig | None = None,
                  expectations: dict | None = None) -> RunReport:
    """Recompute every sweep summary from stored rows and spools."""
    if cfg is None:
        starts = [e for e in store.ledger() if e.get("event") == "run-start"]
        if not starts:
            raise EstimatorError("missing statistic: store has no recorded run")
        cfg = ExperimentConfig.model_validate(starts[-1]["config"])
    if expectations is None and cfg.estimator.thresholds:
        expectations = load_expectations(cfg.estimator.thresholds)
    report = RunReport(cfg.config_hash(), store)
    for n in cfg.model.n:
        lat = build_lattice(cfg.model.d, n)
        tag = sweep_tag(cfg.model.d, n, cfg.model.h.at(n), cfg.model.interaction)
        if store.read_summary(f"{tag}_meta") is None:
            continue
        sweep = load_sweep(store, tag)
        bank = None
        if cfg.sampler.mode == "reweight":
            arr, meta = store.read_spool(f"bank_d{lat.d}_n{n}_{cfg.model.interaction}")
            if arr is not None:
                bank = SampleBank(lat, cfg.model.beta, arr, np.asarray(meta["groups"]),
                                  cfg.model.interaction, meta)
        summary = {"meta": store.read_summary(f"{tag}_meta"), "disorders": len(sweep)}
        if len(sweep):
            summary.update(_sweep_statistics(cfg, sweep, bank))
        summary["check_details"] = {}
        checks = evaluate_checks(summary, n, expectations, summary["check_details"])
        summary["checks"] = checks
        store.write_summary(tag, summary)
        report.sweeps[tag] = sweep
        report.summaries[tag] = summary
        report.checks.update({f"{tag}:{k}": v for k, v in checks.items()})
    store.log("analyze", tags=sorted(report.summaries), failed=report.failed)
    return report
