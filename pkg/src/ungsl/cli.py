"""Command-line entry point.

Exit codes: 0 success, 2 configuration or precondition error, 3 training
diverged, 4 a proven bound failed numerically (an implementation bug).
Machine-readable output goes to the output directory (``--out``, else
``$UNGSL_OUT``, else ``./ungsl-out``); standard output is for people.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as config_mod
from .gnn import DivergenceError
from .graph import write_edges
from .harness import experiments as ex
from .harness.records import (ExperimentRecord, RunLog, format_summary, mean_std, summarize,
                              write_series_csv, write_summary_csv)
from .harness.sbm import SbmConfig, generate_sbm
from .plugin import StageError
from .theory import OneLayerModel, check_prop1, entropy_correlation, random_instance, verify_log_sum
from .seeding import stream
from .uncertainty import pretrain_uncertainty, write_uncertainty_csv

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_BOUND = 0, 2, 3, 4
OUT_ENV = "UNGSL_OUT"


class UsageError(Exception):
    pass


def _out_dir(args):
    path = args.out or os.environ.get(OUT_ENV) or "ungsl-out"
    os.makedirs(path, exist_ok=True)
    return path


def _diverged(exc):
    while exc is not None:
        if isinstance(exc, DivergenceError):
            return True
        exc = exc.__cause__
    return False


# ---------------------------------------------------------------- train

def cmd_train(args):
    cfg = config_mod.load(args.config)
    out = _out_dir(args)
    seed = cfg.seed if args.seed is None else args.seed
    spec = cfg.spec.with_(ungsl_on=args.ungsl == "on")
    record, result, base = ex.run(spec, seed)
    prefix = os.path.join(out, f"{record.fingerprint}-s{seed}")
    if result is not None:
        structure = result.structure
        write_uncertainty_csv(prefix + ".uncertainty.csv", result.uncertainty, result.thresholds)
    else:
        structure = base.export_structure()
        write_uncertainty_csv(prefix + ".uncertainty.csv", pretrain_uncertainty(base, base.graph))
    write_edges(prefix + ".structure.edges", structure)
    record.artifacts = {"structure": prefix + ".structure.edges",
                        "uncertainty": prefix + ".uncertainty.csv"}
    RunLog(os.path.join(out, "runs.jsonl")).append(record)
    m = record.metrics
    line = f"seed {seed}  base test acc {m['base']['test_acc']:.4f}"
    if "enhanced" in m:
        line += f"  ungsl test acc {m['enhanced']['test_acc']:.4f}"
    print(line)
    print(f"record {record.fingerprint} -> {os.path.join(out, 'runs.jsonl')}")
    return EXIT_OK


# ---------------------------------------------------------------- verify

def cmd_verify(args):
    out = _out_dir(args)
    status = EXIT_OK
    if args.prop1:
        rng = stream(args.seed, "theory/prop1")
        worst, worst_eta_sum, eta_lo, eta_hi, last = np.inf, 0.0, np.inf, -np.inf, None
        for _ in range(args.instances):
            rep = check_prop1(*random_instance(rng))
            worst = min(worst, rep.min_slack)
            worst_eta_sum = max(worst_eta_sum, float(np.abs(rep.eta_sum - 1).max()))
            eta_lo, eta_hi = min(eta_lo, rep.eta_min), max(eta_hi, rep.eta_max)
            last = rep
        last.write_csv(os.path.join(out, "prop1_report.csv"))
        ok = worst >= -1e-9 and worst_eta_sum <= 1e-9 and eta_lo > 0 and eta_hi <= 1
        print(f"prop1: {args.instances} instances, min slack {worst:.3e}, "
              f"max |sum eta - 1| {worst_eta_sum:.1e}, eta in [{eta_lo:.3g}, {eta_hi:.3g}]"
              f" -> {'ok' if ok else 'VIOLATED'}")
        status = max(status, EXIT_OK if ok else EXIT_BOUND)
    if args.logsum:
        failures = verify_log_sum(args.trials, args.seed)
        print(f"log-sum: {args.trials} trials, {failures} failures")
        status = max(status, EXIT_OK if failures == 0 else EXIT_BOUND)
    if args.correlation:
        cfg = config_mod.load(args.config) if args.config else None
        sbm = SbmConfig(n=500, K=4, p_in=0.06, p_out=0.005, d=32, signal=2.0, seed=args.seed)
        if cfg is not None and isinstance(cfg.spec.dataset, SbmConfig):
            sbm = cfg.spec.dataset.__class__(**{**cfg.spec.dataset.to_dict(), "seed": args.seed})
        graph = generate_sbm(sbm)
        model = OneLayerModel(graph, seed=args.seed)
        if not args.untrained:
            model.fit()
        try:
            rep = entropy_correlation(graph, model)
        except RuntimeError as exc:
            raise UsageError(str(exc)) from exc
        rep.write_csv(os.path.join(out, "entropy_corr.csv"))
        r = "undefined (zero variance)" if rep.degenerate else f"{rep.r:.4f}"
        print(f"entropy correlation: n={graph.n}, pearson r = {r}")
    return status


# ---------------------------------------------------------------- experiment

def _csv(out, name, header, rows):
    path = os.path.join(out, name)
    write_series_csv(path, header, rows)
    print(f"wrote {path}")


def cmd_experiment(args):
    cfg = config_mod.load(args.config)
    out = _out_dir(args)
    log = RunLog(os.path.join(out, "runs.jsonl"))
    seeds = cfg.seeds if args.seeds is None else tuple(range(args.seeds))
    e = cfg.experiment
    spec = cfg.spec
    if args.prune:
        ratios = args.values or e["ratios"]
        curve = ex.prune_experiment(spec, ratios, seeds)
        _csv(out, "prune_curve.csv", ["ratio", "entropy_guided", "random"], curve.rows())
        rows = []
        for r in curve.ratios:
            for s, a, b in zip(seeds, curve.per_seed["entropy_guided"][r], curve.per_seed["random"][r]):
                rows.append([r, s, a, b])
        _csv(out, "prune_per_seed.csv", ["ratio", "seed", "entropy_guided", "random"], rows)
        log.append(ExperimentRecord("prune", {"spec": spec.to_config(), "ratios": list(curve.ratios),
                                              "seeds": list(seeds)}, seeds[0],
                                    {"entropy_guided": curve.entropy_guided, "random": curve.random}))
        for r, a, b in curve.rows():
            print(f"ratio {r:.2f}: entropy-guided {a:.4f}  random {b:.4f}")
    elif args.robustness:
        levels = args.values or e["levels"]
        table, _ = ex.robustness(spec, levels, seeds, kind=e["noise_kind"], jobs=args.jobs, log=log)
        rows = []
        for (method, level), c in table.items():
            bm, bs = mean_std(c.b)
            um, us = mean_std(c.a)
            rel = 100 * (um - bm) / bm
            rows.append([method, level, len(c.seeds), bm, bs, um, us, rel])
            print(f"{method:20s} level {level:.2f}: base {100*bm:.2f}±{100*bs:.2f}  "
                  f"ungsl {100*um:.2f}±{100*us:.2f}  rel {rel:+.2f}%")
        _csv(out, "robustness.csv", ["learner", "level", "seeds", "base_mean", "base_std",
                                     "ungsl_mean", "ungsl_std", "relative_pct"], rows)
    elif args.sweep:
        values = args.values or e["values"]
        series, _ = ex.sweep(spec, args.sweep, values, seeds, kind=e["noise_kind"], jobs=args.jobs, log=log)
        rows = ex.series_rows(series)
        _csv(out, f"sweep_{args.sweep}.csv",
             [args.sweep, "seeds", "base_mean", "base_std", "ungsl_mean", "ungsl_std"], rows)
        for v, n, bm, bs, um, us in rows:
            print(f"{args.sweep} = {v:g}: base {100*bm:.2f}±{100*bs:.2f}  ungsl {100*um:.2f}±{100*us:.2f}")
    elif args.ablation:
        if args.ablation == "fixed-epsilon":
            comp, _ = ex.ablation_fixed_epsilon(spec, seeds, e["fixed_fraction"], args.jobs, log)
        else:
            comp, _ = ex.ablation_symmetrize(spec, seeds, args.jobs, log)
        _csv(out, f"ablation_{args.ablation}.csv", ["seed", comp.label_a, comp.label_b], comp.rows())
        print(f"{comp.label_a} {100*comp.mean_a:.2f}  {comp.label_b} {100*comp.mean_b:.2f}  "
              f"delta {100*comp.delta:+.2f}")
    elif args.overhead:
        sizes = [int(s) for s in (args.values or e["sizes"])]
        rep = ex.overhead_report(spec, sizes, seed=cfg.seed, epochs=e["overhead_epochs"])
        _csv(out, "overhead_scaling.csv", ["n", "offdiag_edges", "psi_evals", "reweight_seconds"],
             rep.scaling_rows())
        _csv(out, "overhead.csv", ["n", "base_seconds", "ungsl_seconds", "relative_overhead"],
             rep.training_rows())
        for n, m, k, t in rep.scaling_rows():
            print(f"n={n:5d} m={m:8d} psi evals={k:8d} reweight {t * 1e6:9.1f}us")
        print(f"reweight time vs m: linear fit R^2 = {rep.r_squared:.4f}")
        for n, b, u, r in rep.training_rows():
            print(f"n={n:5d} {e['overhead_epochs']} epochs: base {b:.2f}s  ungsl {u:.2f}s  overhead {100 * r:+.1f}%")
    else:
        raise UsageError("no protocol selected")
    return EXIT_OK


# ---------------------------------------------------------------- report

def cmd_report(args):
    if not os.path.isfile(args.runs):
        raise UsageError(f"record file not found: {args.runs}")
    records = [r for r in RunLog(args.runs).read() if "base" in r.metrics or "enhanced" in r.metrics]
    if not records:
        raise UsageError("no run records to report")
    summaries = summarize(records)
    print(format_summary(summaries))
    path = args.csv or os.path.join(os.path.dirname(os.path.abspath(args.runs)), "report.csv")
    write_summary_csv(path, summaries)
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser():
    p = argparse.ArgumentParser(prog="ungsl", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="pretrain, estimate uncertainty, retrain with reweighting")
    t.add_argument("config")
    t.add_argument("--ungsl", choices=("on", "off"), default="on")
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify", help="numerical checks of the entropy bound")
    g = v.add_mutually_exclusive_group(required=True)
    g.add_argument("--prop1", action="store_true")
    g.add_argument("--logsum", action="store_true")
    g.add_argument("--correlation", action="store_true")
    v.add_argument("--instances", type=int, default=1000)
    v.add_argument("--trials", type=int, default=10_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--config")
    v.add_argument("--untrained", action="store_true", help="skip training (precondition check)")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("experiment", help="run one experiment protocol")
    e.add_argument("config")
    g = e.add_mutually_exclusive_group(required=True)
    g.add_argument("--prune", action="store_true")
    g.add_argument("--robustness", action="store_true")
    g.add_argument("--sweep", metavar="PARAM")
    g.add_argument("--ablation", metavar="NAME")
    g.add_argument("--overhead", action="store_true")
    e.add_argument("--values", type=_floats, help="comma list overriding the config's series")
    e.add_argument("--seeds", type=int, help="number of seeds (0..N-1)")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--out")
    e.set_defaults(func=cmd_experiment)

    r = sub.add_parser("report", help="summarize runs.jsonl")
    r.add_argument("runs")
    r.add_argument("--csv")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "experiment":
        if args.sweep is not None and args.sweep not in ex.SWEEP_PARAMS:
            print(f"error: unknown sweep parameter {args.sweep!r}", file=sys.stderr)
            return EXIT_CONFIG
        if args.ablation is not None and args.ablation not in ("fixed-epsilon", "symmetrize"):
            print(f"error: unknown ablation {args.ablation!r}", file=sys.stderr)
            return EXIT_CONFIG
        if args.jobs < 1 or (args.seeds is not None and args.seeds < 1):
            print("error: --jobs and --seeds must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
    try:
        return args.func(args)
    except (config_mod.ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, StageError) as exc:
        if _diverged(exc):
            print(f"error: training diverged: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        raise


if __name__ == "__main__":
    sys.exit(main())
