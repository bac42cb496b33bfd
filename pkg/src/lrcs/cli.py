"""Command-line entry point: ``lrcs run | gen | verify-init``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigurationError
from .harness import load_spec, run_experiment, verify_init
from .model import generate_ground_truth, incoherence, measure, save_instance, sigma_v_for_nsr


def _cmd_run(args):
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.solver:
        overrides["solver"] = args.solver
    if args.out:
        overrides["out"] = args.out
    if args.seed is not None:
        overrides["base_seed"] = str(args.seed)
    if args.no_timing:
        overrides["record_timing"] = "false"
    if args.threads is not None:
        overrides["threads"] = str(args.threads)
    spec = load_spec(args.config, overrides)
    result = run_experiment(spec)
    bad = sum(1 for r in result["rows"] if r["status"] != "ok")
    print(f"wrote {len(result['rows'])} runs ({bad} failed) to {spec.output_path}")
    for name, path in result["paths"].items():
        print(f"  {name}: {path}")
    return 0


def _cmd_gen(args):
    truth = generate_ground_truth(args.n, args.q, args.r, args.kappa, args.seed)
    sigma_v = args.sigma_v
    if args.nsr is not None:
        sigma_v = sigma_v_for_nsr(truth, args.nsr)
    inst = measure(truth, args.m, sigma_v, args.seed)
    save_instance(inst, args.out)
    rep = incoherence(truth)
    print(f"wrote instance n={args.n} q={args.q} r={args.r} m={args.m} sigma_v={sigma_v:.6g} "
          f"mu={rep.mu:.4f} kappa={rep.kappa:.4f} to {args.out}")
    return 0


def _cmd_verify_init(args):
    res = verify_init(n=args.n, q=args.q, r=args.r, m=args.m, sigma_v=args.sigma_v,
                      reps=args.reps, kappa=args.kappa, seed=args.seed, alpha=args.alpha,
                      c_tilde=args.c_tilde)
    print(f"reps={res.reps} alpha={res.alpha:.6g} min_k w_k(alpha)={res.min_weight:.6f}")
    print(f"relative Frobenius deviation of mean X0 from X* D(alpha): {res.rel_frob_dev:.6g}")
    print(f"max relative deviation (worst column): {res.max_col_rel_dev:.6g}")
    if args.tolerance is not None and res.rel_frob_dev > args.tolerance:
        print(f"FAIL: deviation exceeds {args.tolerance:g}")
        return 1
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="lrcs", description="Low-rank column-wise sensing experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run a seeded sweep from a config file")
    pr.add_argument("--config", required=True)
    pr.add_argument("--solver", choices=["altgdmin", "altmin"])
    pr.add_argument("--out")
    pr.add_argument("--threads", type=int)
    pr.add_argument("--seed", type=int)
    pr.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override any config key (repeatable)")
    pr.add_argument("--no-timing", action="store_true",
                    help="write zeros for wall-clock columns so reruns are byte-identical")
    pr.set_defaults(func=_cmd_run)

    pg = sub.add_parser("gen", help="write one synthetic instance to disk")
    pg.add_argument("--n", type=int, required=True)
    pg.add_argument("--q", type=int, required=True)
    pg.add_argument("--r", type=int, required=True)
    pg.add_argument("--m", type=int, required=True)
    pg.add_argument("--kappa", type=float, default=1.0)
    noise = pg.add_mutually_exclusive_group()
    noise.add_argument("--sigma-v", type=float, default=0.0)
    noise.add_argument("--nsr", type=float)
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--out", required=True)
    pg.set_defaults(func=_cmd_gen)

    pv = sub.add_parser("verify-init", help="Monte-Carlo check of E[X0 | alpha] = X* D(alpha)")
    pv.add_argument("--n", type=int, default=20)
    pv.add_argument("--q", type=int, default=10)
    pv.add_argument("--r", type=int, default=2)
    pv.add_argument("--m", type=int, default=50)
    pv.add_argument("--sigma-v", type=float, default=0.5)
    pv.add_argument("--reps", type=int, default=2000)
    pv.add_argument("--kappa", type=float, default=1.0)
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--alpha", type=float)
    pv.add_argument("--c-tilde", type=float)
    pv.add_argument("--tolerance", type=float, help="exit 1 if the deviation exceeds this")
    pv.set_defaults(func=_cmd_verify_init)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, ValueError) as exc:
        print(f"lrcs: configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"lrcs: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
