"""Command line entry point ``mclab``."""

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from . import convex, nonconvex
from .duality import certify, detect_rank
from .errors import NumericError, ParameterError
from .harness import ESTIMATORS, ExperimentConfig, PRESETS, run_sweep, run_trial
from .model import Observation


def _estimators(text):
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = set(names) - set(ESTIMATORS)
    if bad:
        raise argparse.ArgumentTypeError(f"unknown estimators: {', '.join(sorted(bad))}")
    return names


def cmd_sweep(args):
    if args.config:
        config = ExperimentConfig.from_file(args.config)
    else:
        config = ExperimentConfig(**PRESETS[args.preset])
    if args.out:
        config = replace(config, out_dir=args.out)
    result = run_sweep(config, workers=args.workers)
    for row in result.table:
        print(f"{row['estimator']:>20s} sigma={row['sigma']:.3g} rel_fro={row['rel_fro']:.3e} "
              f"rel_spec={row['rel_spec']:.3e} rel_inf={row['rel_inf']:.3e} pair_dist={row['pair_dist']:.3e} "
              f"failures={row['failures']}")
    print(f"wrote {config.out_dir}/sweep.csv")
    return 0


def cmd_trial(args):
    if args.sigma == 0 and args.lam is None:
        raise ParameterError("sigma = 0 needs --lambda")
    config = ExperimentConfig(n=args.n, r=args.r, p=args.p, sigma_grid=(args.sigma,), trials=1,
                              estimators=args.estimators, lambda_override=args.lam,
                              lambda_c=args.lambda_c, certify=not args.no_certify)
    rec = run_trial(config, args.sigma, args.seed)
    print(f"seed={rec.seed}")
    print(f"sigma={rec.sigma!r}")
    print(f"lambda={rec.lam!r}")
    for name, b in sorted(rec.errors.items()):
        print(f"{name}.rel_fro={b.rel_fro!r}")
        print(f"{name}.rel_spec={b.rel_spec!r}")
        print(f"{name}.rel_inf={b.rel_inf!r}")
        if b.factor_2inf is not None:
            print(f"{name}.factor_2inf={b.factor_2inf!r}")
    if rec.pair_dist is not None:
        print(f"pair_dist={rec.pair_dist!r}")
    if rec.certificate is not None:
        sys.stdout.write("".join(f"certificate.{line}\n" for line in rec.certificate.to_record().splitlines()))
    for name, msg in rec.failures.items():
        print(f"failure.{name}={msg}")
    return 0


def cmd_certify(args):
    obs = Observation.load(args.input)
    lam = args.lam
    Z, rep = convex.solve_convex(obs, convex.ConvexOptions(lam, tol_grad_map=args.tol, max_iters=args.max_iters,
                                                           accel=True))
    r = args.rank or detect_rank(np.linalg.svd(Z, compute_uv=False))
    pair, grep = nonconvex.gd_solve(nonconvex.spectral_init(obs, r), obs,
                                    nonconvex.GdOptions(lam, obs.p, tol_grad=args.tol_grad))
    report = certify(Z, pair, obs, lam, r=r)
    print(f"rank={r}")
    print(f"convex_iterations={rep.iterations}")
    print(f"convex_stop={rep.reason}")
    print(f"nonconvex_iterations={grep.iterations}")
    print(f"pair_gap_fro={float(np.linalg.norm(Z - pair.Z))!r}")
    sys.stdout.write(report.to_record())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="mclab", description="Noisy matrix completion laboratory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="run a noise sweep and write CSV + SVG")
    src = sw.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="key=value config file")
    src.add_argument("--preset", choices=sorted(PRESETS))
    sw.add_argument("--out", help="output directory (overrides config)")
    sw.add_argument("--workers", type=int, default=None, help="parallel trials (default: $MCLAB_WORKERS or 1)")
    sw.set_defaults(func=cmd_sweep)

    tr = sub.add_parser("trial", help="run a single seeded trial")
    tr.add_argument("--n", type=int, default=200)
    tr.add_argument("--r", type=int, default=5)
    tr.add_argument("--p", type=float, default=0.2)
    tr.add_argument("--sigma", type=float, required=True)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--estimators", type=_estimators, default=("convex", "nonconvex_spectral"))
    tr.add_argument("--lambda", dest="lam", type=float, default=None)
    tr.add_argument("--lambda-c", type=float, default=5.0)
    tr.add_argument("--no-certify", action="store_true")
    tr.set_defaults(func=cmd_trial)

    ce = sub.add_parser("certify", help="solve and certify an observation file")
    ce.add_argument("--input", required=True)
    ce.add_argument("--lambda", dest="lam", type=float, required=True)
    ce.add_argument("--rank", type=int, default=None)
    ce.add_argument("--tol", type=float, default=1e-10)
    ce.add_argument("--tol-grad", type=float, default=1e-9)
    ce.add_argument("--max-iters", type=int, default=20_000)
    ce.set_defaults(func=cmd_certify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ParameterError, NumericError, OSError) as exc:
        print(f"mclab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
