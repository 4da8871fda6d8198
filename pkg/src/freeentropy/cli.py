"""Command line entry point: ``freeentropy <command> ...``.

Exit status is 0 on success, 2 when an inequality check fails and 1 on
usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .chistar import FlowGrid, chi_star_upper
from .fisher import phi_star_lower
from .lawkit import free_product, heat_flow_law, load_law, quantile_microstate
from .ncpoly import Letter, parse_poly, words_up_to
from .rmt import (
    GaussianEnsemble,
    GueSpec,
    entropy_mc,
    fisher_mc,
    freeness_deviation_table,
    gaussian_entropy_exact,
    gaussian_fisher_exact,
    gue_batches,
    ibp_check,
    matrix_from_json,
    opnorm_stat,
    tr_n,
)

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with "violation"
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(report: dict, args) -> None:
    text = harness.report_json(report)
    if getattr(args, "out", None):
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    if not args.quiet:
        print(text)


def _stamp(report: dict, seed=None) -> dict:
    report["versions"] = harness.versions()
    if seed is not None:
        report["seed"] = seed
    return report


def _oracle_for(args):
    law = load_law(args.law)
    base = free_product({Letter("x", j): law for j in range(1, args.m + 1)})
    return heat_flow_law(base, args.flow_t) if args.flow_t > 0 else base


def cmd_phi_star(args):
    est = phi_star_lower(_oracle_for(args), args.m, degree=args.degree)
    _emit(_stamp(est.to_dict()), args)
    return EXIT_OK


def cmd_chi_star(args):
    grid = FlowGrid.gauss_legendre(args.nodes, args.umax)
    rep = chi_star_upper(_oracle_for(args), args.m, args.degree, grid)
    _emit(_stamp(rep.to_dict()), args)
    return EXIT_OK


def cmd_rmt_gue(args):
    spec = GueSpec(args.n, args.m, args.seed)
    sq, lin = [], []
    for batch in gue_batches(spec, args.samples):
        sq.append(tr_n(batch @ batch).real)
        lin.append(tr_n(batch).real)
    sq, lin = np.concatenate(sq), np.concatenate(lin)
    se = lambda v: float(v.std(axis=0, ddof=1).max() / np.sqrt(len(v))) if len(v) > 1 else 0.0
    report = {
        "n": args.n,
        "m": args.m,
        "samples": args.samples,
        "mean_tr_s2": sq.mean(axis=0).tolist(),
        "mean_tr_s2_stderr": se(sq),
        "mean_tr_s": lin.mean(axis=0).tolist(),
        "mean_tr_s_stderr": se(lin),
        "opnorm": opnorm_stat(spec, min(args.samples, args.opnorm_samples)).to_dict(),
    }
    _emit(_stamp(report, args.seed), args)
    return EXIT_OK


def _read_polys(path):
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    return [parse_poly(ln) for ln in lines if ln and not ln.startswith("#")]


def _read_center(path, n, m):
    if path is None:
        return np.zeros((m, n, n))
    return matrix_from_json(json.loads(Path(path).read_text()))


def cmd_rmt_ibp(args):
    polys = _read_polys(args.f)
    if not polys:
        raise UsageError(f"no polynomial found in {args.f}")
    center = _read_center(args.center, args.n, args.m)
    ens = GaussianEnsemble(center, args.t)
    if len(polys) == 1:
        polys = polys * ens.m
    rows = ibp_check(ens, polys, args.samples, args.seed)
    ok = all(abs(r["residual"]) <= 3 * r["residual_stderr"] + 1e-12 for r in rows)
    _emit(_stamp({"rows": rows, "within_3_stderr": ok}, args.seed), args)
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_rmt_entropy(args):
    ens = GaussianEnsemble(_read_center(args.center, args.n, args.m), args.t)
    report = {
        "n": ens.n,
        "m": ens.m,
        "t": args.t,
        "entropy_exact": gaussian_entropy_exact(ens),
        "fisher_exact": gaussian_fisher_exact(ens),
        "entropy_mc": entropy_mc(ens, args.samples, args.seed).to_dict(),
        "fisher_mc": fisher_mc(ens, args.samples, args.seed).to_dict(),
    }
    _emit(_stamp(report, args.seed), args)
    return EXIT_OK


def cmd_verify(args):
    overrides = dict(seed=args.seed, samples=args.samples, out=args.out)
    if args.config:
        cfg = harness.ExperimentConfig.load(args.config)
        for k, v in overrides.items():
            if v is not None:
                setattr(cfg, k, v)
    else:
        cfg = harness.builtin_config(args.builtin, **overrides)
    report = harness.run_inequality_experiment(cfg)
    if not args.quiet:
        print(harness.report_json(report))
    else:
        print(f"{cfg.name}: {report['verdict']} (margin {report['margin']:.3g}, tolerance {report['tolerance']:.3g})",
              file=sys.stderr)
    return EXIT_OK if report["verdict"] == "pass" else EXIT_VIOLATION


def cmd_freeness(args):
    law = load_law(args.y_law) if args.y_law else load_law({"type": "atoms", "points": [-1, 1]})
    y = {Letter("y", 1): quantile_microstate(law, args.n)}
    letters = [Letter("s", j) for j in range(1, args.m + 1)] + [Letter("y", 1)]
    words = [w for w in words_up_to(letters, args.max_len) if w]
    rows = freeness_deviation_table(args.n, args.m, y, words, args.samples, args.seed)
    ok = all(r["ok"] for r in rows)
    _emit(_stamp({"n": args.n, "m": args.m, "samples": args.samples, "rows": rows, "all_ok": ok}, args.seed), args)
    return EXIT_OK if ok else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="freeentropy", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=False):
        sp.add_argument("--out", help="write the JSON report here")
        sp.add_argument("--quiet", action="store_true", help="do not print the report")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    for name, fn, help_ in (("phi-star", cmd_phi_star, "degree-d Fisher estimate"),
                            ("chi-star", cmd_chi_star, "non-microstates entropy by flow integration")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--law", required=True, help="JSON/TOML law file (x's are free copies)")
        sp.add_argument("--m", type=int, default=1)
        sp.add_argument("--degree", type=int, default=4)
        sp.add_argument("--flow-t", type=float, default=0.0, help="smooth by a semicircular flow first")
        if name == "chi-star":
            sp.add_argument("--nodes", type=int, default=64)
            sp.add_argument("--umax", type=float, default=0.999)
        common(sp)
        sp.set_defaults(func=fn)

    rmt = sub.add_parser("rmt", help="random matrix estimators")
    rsub = rmt.add_subparsers(dest="rmt_command", required=True, parser_class=_Parser)
    sp = rsub.add_parser("gue", help="GUE sample statistics")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", type=int, default=1)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--opnorm-samples", type=int, default=50)
    common(sp, seed=True)
    sp.set_defaults(func=cmd_rmt_gue)

    sp = rsub.add_parser("ibp-check", help="matrix integration by parts residuals")
    sp.add_argument("--f", required=True, help="file with one polynomial per line (one per x_j, or one for all)")
    sp.add_argument("--n", type=int, default=20)
    sp.add_argument("--m", type=int, default=1)
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--center", help="matrix JSON file for X0 (default 0)")
    sp.add_argument("--samples", type=int, default=20000)
    common(sp, seed=True)
    sp.set_defaults(func=cmd_rmt_ibp)

    sp = rsub.add_parser("entropy", help="entropy and Fisher information of X0 + sqrt(t) S")
    sp.add_argument("--center", help="matrix JSON file for X0 (default 0)")
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--n", type=int, default=8, help="size when no center is given")
    sp.add_argument("--m", type=int, default=1, help="tuple length when no center is given")
    sp.add_argument("--samples", type=int, default=10000)
    common(sp, seed=True)
    sp.set_defaults(func=cmd_rmt_entropy)

    sp = sub.add_parser("verify-inequality", help="compare both sides of chi <= chi*")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", choices=sorted(harness.BUILTINS))
    src.add_argument("--config", help="JSON/TOML experiment config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--out")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("freeness-table", help="GUE words against the free extension oracle")
    sp.add_argument("--n", type=int, default=150)
    sp.add_argument("--m", type=int, default=2)
    sp.add_argument("--samples", type=int, default=200)
    sp.add_argument("--max-len", type=int, default=4)
    sp.add_argument("--y-law", help="law file for y1 (default: +-1 with equal weights)")
    common(sp, seed=True)
    sp.set_defaults(func=cmd_freeness)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except harness.ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def cli_main(argv=None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
