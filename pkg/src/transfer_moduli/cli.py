"""Command-line entry point ``transfer-moduli``.

Exit codes: 0 success, 1 failed audit or contract, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .conf_class import (ComplexityParams, localized_strong_set, strong_confidence_set_rootn, strong_contract,
                         weak_confidence_set, weak_contract)
from .conf_reg import regression_confidence_set, regression_strong_contract
from .discrepancies import FINITE_MEASURES, LINEAR_MEASURES, verify_modulus_bounds, wasserstein1_discrete
from .harness import ConfigError, coverage_report, load_config, parse_config, rows_to_csv, run_experiment, write_text
from .instances import FiniteInstance, InstanceError, LinearInstance, load_instance, sample
from .lowerbound import (LEARNERS, VARIANTS, FSpec, build_hard_family, check_kl_budget, check_packing,
                         minimax_simulate, verify_membership)
from .moduli import (pivotal_sharp, pivotal_value, strong_modulus, weak_modulus, weak_modulus_curve,
                     weak_modulus_linear)
from .seeding import derive_seed
from .trust_region import solve_trs

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {exc}") from None


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o).__name__)


def _emit(obj, out_dir: str | None, name: str) -> None:
    text = json.dumps(obj, indent=2, default=_json_default)
    print(text)
    if out_dir:
        p = Path(out_dir)
        p.mkdir(parents=True, exist_ok=True)
        (p / name).write_text(text + "\n")


def _out_path(args, name: str) -> Path:
    p = Path(name)
    return Path(args.out_dir) / p if args.out_dir and not p.is_absolute() else p


def _write_csv(args, name: str | None, rows: list[dict], columns) -> None:
    if name:
        write_text(_out_path(args, name), rows_to_csv(rows, columns))


def cmd_moduli(args) -> int:
    inst = load_instance(args.instance)
    if isinstance(inst, LinearInstance):
        out = {"weak": {str(e): weak_modulus_linear(inst, e) for e in args.eps}}
    else:
        out = {
            "weak": {str(e): weak_modulus(inst, e) for e in args.eps},
            "curve": weak_modulus_curve(inst).breakpoints,
            "pivotal_value": pivotal_value(inst),
            "pivotal_sharp": pivotal_sharp(inst),
        }
        if args.eps2:
            out["strong"] = {f"{e1},{e2}": strong_modulus(inst, e1, e2) for e1 in args.eps for e2 in args.eps2}
    if args.out:
        rows = []
        for e1 in args.eps:
            for e2 in (args.eps2 or [math.nan]):
                if isinstance(inst, LinearInstance):
                    rows.append({"eps1": e1, "eps2": e2, "weak": weak_modulus_linear(inst, e1), "strong": math.nan,
                                 "pivot": math.nan, "pivot_sharp": math.nan})
                else:
                    rows.append({"eps1": e1, "eps2": e2, "weak": weak_modulus(inst, e1),
                                 "strong": math.nan if math.isnan(e2) else strong_modulus(inst, e1, e2),
                                 "pivot": pivotal_value(inst), "pivot_sharp": pivotal_sharp(inst)})
        _write_csv(args, args.out, rows, ("eps1", "eps2", "weak", "strong", "pivot", "pivot_sharp"))
    _emit(out, args.out_dir, "moduli.json")
    return EXIT_OK


def cmd_discrepancy(args) -> int:
    inst = load_instance(args.instance)
    measures = None
    if args.measures != "all":
        measures = tuple(m.strip() for m in args.measures.split(",") if m.strip())
    rep = verify_modulus_bounds(inst, args.eps, measures)
    rows = [{"measure": r.measure, "value": r.measure_value, "eps": r.eps, "delta": r.delta,
             "bound": r.bound, "slack": r.slack} for r in rep.rows]
    _write_csv(args, args.out, rows, ("measure", "value", "eps", "delta", "bound", "slack"))
    _emit({"ok": rep.ok, "min_slack": rep.min_slack, "rows": rows}, args.out_dir, "discrepancy.json")
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_confidence(args) -> int:
    inst = load_instance(args.instance)
    side = args.side.upper()
    seed = args.seed if args.sub_seed is None else args.sub_seed
    cp = ComplexityParams()
    rows = []
    for t in range(args.trials):
        smp = sample(inst, side, args.n, derive_seed(seed, "confidence", t))
        if isinstance(inst, LinearInstance):
            e = regression_confidence_set(smp, inst.noise_scale, args.c_mu, args.tau)
            ok = regression_strong_contract(inst, side, e).ok
            rows.append({"trial": t, "members": json.dumps(e.to_dict()), "eps": e.eps, "contract_ok": ok})
            continue
        if args.kind == "weak":
            cs = weak_confidence_set(smp, inst, cp, args.tau)
            ok = weak_contract(inst, side, cs).ok
        elif args.kind == "rootn":
            cs = strong_confidence_set_rootn(smp, inst, cp, args.tau)
            ok = strong_contract(inst, side, cs).ok
        else:
            cs = localized_strong_set(smp, inst, cp, args.tau)
            ok = strong_contract(inst, side, cs).ok
        rows.append({"trial": t, "members": cs.bitmask(inst.k), "eps": cs.eps, "contract_ok": ok})
    _write_csv(args, args.out, rows, ("trial", "members", "eps", "contract_ok"))
    fails = sum(not r["contract_ok"] for r in rows)
    _emit({"kind": "regression" if isinstance(inst, LinearInstance) else args.kind, "trials": len(rows),
           "contract_failures": fails, "last": rows[-1]}, None, "")
    return EXIT_FAIL if args.check and fails else EXIT_OK


def cmd_transfer_sim(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        if args.out:
            cfg = dataclasses.replace(cfg, csv_path=args.out)
    else:
        if not args.instance:
            raise ConfigError("$.instance", "give --config or --instance")
        doc = {"instance": args.instance, "algorithm": args.algo, "n_p": args.np, "n_q": args.nq,
               "tau": args.tau, "trials": args.trials,
               "seed": args.seed if args.sub_seed is None else args.sub_seed}
        if args.out:
            doc["output"] = {"csv": args.out}
        cfg = parse_config(doc)
    res = run_experiment(cfg, threads=args.threads, out_dir=args.out_dir)
    _emit(res.summary, None, "")
    return EXIT_OK


def cmd_lowerbound(args) -> int:
    f = FSpec.load(args.f) if args.f else FSpec.identity()
    fam = build_hard_family(args.d, args.np, args.nq, args.beta_p, args.beta_q, f, args.c0, args.c1, args.variant)
    status = EXIT_OK
    out: dict = {"d": fam.d, "words": int(fam.codewords.shape[0]), "eps_p": fam.eps_p, "eps_q": fam.eps_q,
                 "eps": fam.eps, "kappa0": fam.kappa0, "variant": fam.variant}
    if args.check:
        pk = check_packing(fam.codewords)
        mem = verify_membership(fam)
        kl = check_kl_budget(fam)
        out.update({"packing_ok": pk.ok, "min_distance": pk.min_distance, "membership_ok": mem.ok,
                    "violations": mem.violations, "kl_worst": kl.worst, "kl_limit": kl.limit, "kl_ok": kl.ok})
        if not (pk.ok and mem.ok):
            status = EXIT_FAIL
    if args.simulate:
        res = minimax_simulate(fam, args.simulate, args.trials, args.seed, threads=args.threads)
        if res.worst > fam.eps:
            raise AssertionError("mean excess exceeds the family's largest possible excess")
        out.update({"learner": res.learner, "worst_mean_excess_q": res.worst, "worst_sigma": res.worst_sigma,
                    "scale": fam.lower_bound_scale()})
        rows = [{"sigma": i, "mean_excess_q": m} for i, m in enumerate(res.per_sigma)]
        _write_csv(args, args.out, rows, ("sigma", "mean_excess_q"))
    _emit(out, None, "")
    return status


def cmd_bench(args) -> int:
    rng = np.random.default_rng(derive_seed(args.seed, "bench"))
    timings = {}
    t = time.perf_counter()
    for _ in range(args.reps):
        a = rng.standard_normal((args.dim, args.dim))
        solve_trs(a + a.T, rng.standard_normal(args.dim), 1.0)
    timings["trust_region_ms"] = 1e3 * (time.perf_counter() - t) / args.reps
    t = time.perf_counter()
    for _ in range(args.reps):
        p, q = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
        pts = rng.standard_normal((6, 2))
        wasserstein1_discrete(p, q, np.linalg.norm(pts[:, None] - pts[None], axis=-1))
    timings["wasserstein_m6_ms"] = 1e3 * (time.perf_counter() - t) / args.reps
    inst = load_instance("T1")
    t = time.perf_counter()
    for _ in range(args.reps):
        weak_modulus_curve(inst)
    timings["t1_modulus_curve_ms"] = 1e3 * (time.perf_counter() - t) / args.reps
    _emit(timings, args.out_dir, "bench.json")
    return EXIT_OK


def cmd_report(args) -> int:
    rows = coverage_report(args.csv)
    out = [{"bound": r.bound, "trials": r.trials, "failures": r.failures, "rate": r.rate,
            "ci": [r.ci_low, r.ci_high]} for r in rows]
    _emit(out, args.out_dir, "coverage.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="transfer-moduli", description="Moduli of transfer toolkit.")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--threads", type=int, default=1, help="worker count for Monte Carlo runs")
    p.add_argument("--out-dir", default=None, help="directory for output files")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("moduli", help="weak/strong moduli and pivotal values")
    s.add_argument("--instance", required=True, help="JSON file or T1")
    s.add_argument("--eps", type=_floats, default=[0.1, 0.3, 0.5])
    s.add_argument("--eps2", type=_floats, default=None)
    s.add_argument("--out", default=None, help="CSV output")
    s.set_defaults(func=cmd_moduli)

    s = sub.add_parser("discrepancy", help="audit modulus upper bounds from relatedness measures")
    s.add_argument("--instance", required=True)
    s.add_argument("--eps", type=_floats, default=[0.05 * i for i in range(1, 21)])
    s.add_argument("--measures", default="all",
                   help=f"all or a comma list of {', '.join(FINITE_MEASURES + LINEAR_MEASURES)}")
    s.add_argument("--out", default=None, help="CSV output")
    s.set_defaults(func=cmd_discrepancy)

    s = sub.add_parser("confidence", help="build one confidence set and check its contract")
    s.add_argument("--instance", required=True)
    s.add_argument("--side", default="q", choices=("p", "q", "P", "Q"))
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--tau", type=float, default=0.05)
    s.add_argument("--kind", default="weak", choices=("weak", "rootn", "localized"))
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--seed", dest="sub_seed", type=int, default=None)
    s.add_argument("--c-mu", type=float, default=0.0)
    s.add_argument("--out", default=None, help="CSV with one row per trial")
    s.add_argument("--check", action="store_true", help="exit 1 if the contract fails")
    s.set_defaults(func=cmd_confidence)

    s = sub.add_parser("transfer-sim", help="run an experiment configuration")
    s.add_argument("--config", default=None, help="experiment JSON; overrides the flags below")
    s.add_argument("--instance", default=None)
    s.add_argument("--np", type=lambda t: [int(x) for x in t.split(",")], default=[0])
    s.add_argument("--nq", type=lambda t: [int(x) for x in t.split(",")], default=[0])
    s.add_argument("--tau", type=float, default=0.05)
    s.add_argument("--algo", default="weak", choices=("weak", "strong", "both"))
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--seed", dest="sub_seed", type=int, default=None)
    s.add_argument("--out", default=None, help="CSV of trial rows")
    s.set_defaults(func=cmd_transfer_sim)

    s = sub.add_parser("lowerbound", help="hard families: membership audit and minimax simulation")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--np", type=int, required=True)
    s.add_argument("--nq", type=int, required=True)
    s.add_argument("--beta-p", type=float, default=0.0)
    s.add_argument("--beta-q", type=float, default=0.0)
    s.add_argument("--f", default=None, help="JSON envelope {knots: [[x, y], ...], kappa}")
    s.add_argument("--c0", type=float, default=2.0 ** -9)
    s.add_argument("--c1", type=float, default=2.0 ** -9)
    s.add_argument("--variant", default="full", choices=VARIANTS)
    mode = s.add_mutually_exclusive_group(required=True)
    mode.add_argument("--check", action="store_true")
    mode.add_argument("--simulate", choices=LEARNERS)
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--out", default=None, help="CSV of per-sigma means")
    s.set_defaults(func=cmd_lowerbound)

    s = sub.add_parser("bench", help="micro-benchmarks of the numerical kernels")
    s.add_argument("--reps", type=int, default=50)
    s.add_argument("--dim", type=int, default=8)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("report", help="coverage with binomial intervals from a trial CSV")
    s.add_argument("--csv", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error at {exc.path}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except InstanceError as exc:
        print(f"instance error at {exc.path}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssertionError as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
