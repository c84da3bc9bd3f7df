"""Command line entry point: simulate, enumerate-check, estimate-q, analyze, plot-data."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .config import ExperimentConfig, load_config
from .estimators import EstimatorError
from .fk import onsager_q
from .plotdata import FIGURE_KINDS, emit_plot_data
from .runner import analyze_store, enumerate_check, estimate_q, run_experiment
from .store import ResultStore, jsonable

log = logging.getLogger("rfimlab")


def _coerce(text: str):
    return yaml.safe_load(text)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    """--seed, the shortcut flags and generic --set block.key=value overrides."""
    upd: dict = {}

    def put(block, key, value):
        upd.setdefault(block, {})[key] = value

    for item in args.set or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise SystemExit(f"--set expects block.key=value, got {item!r}")
        path, value = item.split("=", 1)
        block, key = path.split(".", 1)
        put(block, key, _coerce(value))
    if args.seed is not None:
        put("disorder", "master_seed", args.seed)
    if getattr(args, "n", None):
        put("model", "n", args.n)
    if getattr(args, "beta", None) is not None:
        put("model", "beta", args.beta)
    if getattr(args, "h", None) is not None:
        put("model", "h", args.h)
    if getattr(args, "realizations", None) is not None:
        put("disorder", "realizations", args.realizations)
    if getattr(args, "samples", None) is not None:
        put("sampler", "samples", args.samples)
    if getattr(args, "output", None):
        put("output", "directory", args.output)
    return cfg.with_updates(**upd) if upd else cfg


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return _apply_overrides(cfg, args)


def _print(obj):
    print(json.dumps(jsonable(obj), indent=2, sort_keys=True))


def cmd_simulate(args) -> int:
    cfg = _config(args)
    report = run_experiment(cfg, workers=args.workers, stop_after=args.stop_after)
    for tag, s in report.summaries.items():
        print(f"{tag}: {s['disorders']} disorders")
    for name, ok in sorted(report.checks.items()):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"results in {report.store.root}")
    return 1 if report.failed else 0


def cmd_enumerate_check(args) -> int:
    cfg = _config(args)
    rows = enumerate_check(cfg, samples=args.mc_samples)
    chash = cfg.config_hash()
    store = ResultStore(Path(cfg.output.directory) / chash, chash)
    store.log("enumerate-check", config=cfg.canonical())
    header = list(rows[0].keys()) if rows else ["n"]
    store.write_table("enumerate_check.csv", header, [[r[k] for k in header] for r in rows])
    bad = [r for r in rows if not r["passed"]]
    for r in rows:
        print(f"{'PASS' if r['passed'] else 'FAIL'} n={r['n']} {r['sampler']:10s} {r['observable']:8s} "
              f"mc={r['mc']:+.5f} exact={r['exact']:+.5f} se={r['stderr']:.5f}")
    print(f"{len(rows) - len(bad)}/{len(rows)} within 3 sigma")
    return 1 if bad else 0


def cmd_estimate_q(args) -> int:
    cfg = _config(args)
    est = estimate_q(cfg, samples=args.q_samples)
    failed = False
    for row in est.per_n:
        print(f"n={row.n}: sqrt(q)={row.value:.5f} +- {row.stderr:.5f}")
    print(f"q_hat={est.q_hat:.5f} +- {est.q_stderr:.5f} ({est.provenance})")
    if cfg.model.d == 2:
        try:
            ref = onsager_q(cfg.model.beta)
        except ValueError:
            ref = None
        if ref is not None:
            diff = abs(est.q_hat - ref)
            print(f"onsager q*={ref:.5f} |diff|={diff:.5f}")
            if args.tolerance is not None:
                failed = diff > args.tolerance
                print(f"{'FAIL' if failed else 'PASS'} tolerance {args.tolerance}")
    return 1 if failed else 0


def cmd_analyze(args) -> int:
    store = ResultStore(args.directory)
    cfg = load_config(args.config) if args.config else None
    report = analyze_store(store, cfg)
    for tag, s in report.summaries.items():
        print(f"{tag}: {s['disorders']} disorders")
        for name, block in s.items():
            if isinstance(block, dict) and "error" in block:
                print(f"  {name}: {block['error']}")
    for name, ok in sorted(report.checks.items()):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 1 if report.failed else 0


def cmd_plot_data(args) -> int:
    store = ResultStore(args.directory)
    for kind in args.kind:
        path = emit_plot_data(store, kind)
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfimlab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("config", nargs="?", help="YAML experiment config (defaults if omitted)")
        sp.add_argument("--seed", type=int, help="override disorder.master_seed")
        sp.add_argument("--set", action="append", metavar="BLOCK.KEY=VALUE",
                        help="override any config key, e.g. --set sampler.samples=2000")
        sp.add_argument("--n", type=int, nargs="+", help="override model.n")
        sp.add_argument("--beta", type=float, help="override model.beta")
        sp.add_argument("--h", type=float, help="override model.h with a constant")
        sp.add_argument("--realizations", type=int, help="override disorder.realizations")
        sp.add_argument("--samples", type=int, help="override sampler.samples")
        sp.add_argument("--output", help="override output.directory")
        return sp

    sp = with_config(sub.add_parser("simulate", help="run disorder sweeps and statistics"))
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--stop-after", type=int, help="stop after this many new records (resumable)")
    sp.set_defaults(func=cmd_simulate)

    sp = with_config(sub.add_parser("enumerate-check", help="Monte Carlo against exact enumeration"))
    sp.add_argument("--mc-samples", type=int, help="samples per sampler")
    sp.set_defaults(func=cmd_enumerate_check)

    sp = with_config(sub.add_parser("estimate-q", help="FK estimate of q per lattice size"))
    sp.add_argument("--q-samples", type=int)
    sp.add_argument("--tolerance", type=float, help="fail if |q_hat - q*| exceeds this (d=2)")
    sp.set_defaults(func=cmd_estimate_q)

    sp = sub.add_parser("analyze", help="recompute statistics from a result directory")
    sp.add_argument("directory")
    sp.add_argument("--config", help="config to analyze with (default: the recorded one)")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("plot-data", help="emit long-format plot tables")
    sp.add_argument("directory")
    sp.add_argument("--kind", nargs="+", choices=FIGURE_KINDS, default=list(FIGURE_KINDS))
    sp.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (EstimatorError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
