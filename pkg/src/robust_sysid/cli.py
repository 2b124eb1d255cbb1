"""Command-line interface.

Exit codes:
    0  success
    2  usage error (unknown subcommand, bad flags)
    3  configuration error (malformed config file, invalid parameter)
    4  I/O error (unreadable input, unwritable output)
    5  numerical failure (excitation deficiency, solver non-convergence)
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import textio
from .distributions import DistributionSpec, kurtosis_ratio
from .errors import ConfigurationError, ExcitationDeficiencyError, NonConvergenceError
from .estimator import estimate, lemma_diagnostics, single_ols, theorem1_bound
from .harness import ExperimentConfig, ExperimentFailed, run_delta_sweep, run_experiment
from .lti import default_system, simulate_dataset, true_markov
from .realization import ho_kalman

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4, 5

EPILOG = """exit codes: 0 success, 2 usage error, 3 configuration error,
4 I/O error, 5 numerical failure (excitation deficiency, non-convergence)"""

logger = logging.getLogger("robust_sysid")

_CONFIG_FIELDS = [f for f in fields(ExperimentConfig) if not f.name.startswith("_")]


def _flag(name):
    return "--" + name.replace("_", "-")


def _add_config_flags(parser, exclude=()):
    parser.add_argument("--config", help="flat key = value config file; flags override it")
    for f in _CONFIG_FIELDS:
        if f.name in exclude:
            continue
        parser.add_argument(
            _flag(f.name), dest=f"cfg_{f.name}", default=argparse.SUPPRESS,
            metavar=f.name.upper(), help=f"(default: {f.default})",
        )


def _config_from_args(args) -> ExperimentConfig:
    overrides = {
        key[4:]: value for key, value in vars(args).items() if key.startswith("cfg_")
    }
    if args.config:
        return ExperimentConfig.from_file(args.config, overrides)
    return ExperimentConfig.from_mapping(overrides)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(x) -> str:
    return repr(float(f"{x:.7g}"))


def cmd_simulate(args):
    cfg = _config_from_args(args)
    sys_ = cfg.build_system()
    data = simulate_dataset(
        sys_, args.N, cfg.T, cfg.spec("u"), cfg.spec("w"), cfg.spec("v"), cfg.seed,
        trial=args.trial, noiseless=cfg.noiseless,
    )
    out = _out_dir(cfg.out or ".")
    textio.write_dataset(out / "dataset.txt", data)
    textio.write_matrices(out / "system.txt", {"A": sys_.A, "B": sys_.B, "C": sys_.C, "D": sys_.D})
    textio.write_matrices(out / "markov.txt", {"G": true_markov(sys_, cfg.T)}, {"G": {"m": sys_.m}})
    print(f"wrote {data.N} rollouts (T={data.T}) to {out / 'dataset.txt'}")
    return EXIT_OK


def cmd_estimate(args):
    data = textio.read_dataset(args.dataset)
    if args.mode == "single_ols":
        g_hat = single_ols(data, on_deficient=args.deficient)
        diag = {"mode": "single_ols", "N": data.N}
    else:
        est = estimate(
            data, args.delta, strict=args.strict, input_kurtosis=args.kurtosis,
            on_deficient=args.deficient,
        )
        g_hat = est.g_hat
        diag = dict(mode="boosted", **est.diagnostics())
    if args.out:
        out = _out_dir(args.out)
        textio.write_matrices(out / "g_hat.txt", {"G_hat": g_hat}, {"G_hat": {"m": data.m}})
        textio.write_record(out / "diagnostics.txt", diag)
    else:
        sys.stdout.write(textio.dump_matrices({"G_hat": g_hat}, {"G_hat": {"m": data.m}}))
    sys.stdout.write(textio.dump_record(diag))
    return EXIT_OK


def cmd_realize(args):
    sections = textio.read_matrix_sections(args.markov)
    if not sections:
        raise ConfigurationError(f"no matrix found in {args.markov}")
    name, (g, attrs) = next(iter(sections.items()))
    m = args.m if args.m is not None else int(attrs.get("m", 0))
    if not m:
        raise ConfigurationError(f"matrix {name} has no m attribute; pass --m")
    res = ho_kalman(g, args.order, m, args.T1, args.T2)
    mats = {
        "A": res.A_hat, "B": res.B_hat, "C": res.C_hat, "D": res.D_hat,
        "hankel_singular_values": res.hankel_singular_values[None, :],
    }
    if args.out:
        textio.write_matrices(_out_dir(args.out) / "realization.txt", mats)
    else:
        sys.stdout.write(textio.dump_matrices(mats))
    return EXIT_OK


def cmd_bound(args):
    value = theorem1_bound(
        (args.n, args.m, args.p), args.T, args.sw, args.sv, args.su, args.f_norm,
        args.delta, args.N, args.c1, args.c2,
    )
    print(_fmt(value))
    return EXIT_OK


def cmd_experiment(args):
    cfg = _config_from_args(args)
    try:
        report = run_experiment(cfg)
    except ExperimentFailed as exc:
        print(f"error: {exc.cause} (partial results kept: {len(exc.report.rows)} trials)",
              file=sys.stderr)
        return EXIT_NUMERIC
    print("N,median_err,q99_err,fail_frac,bound")
    for s in report.summary:
        print(f"{s.N},{_fmt(s.median_err)},{_fmt(s.q99_err)},{_fmt(s.fail_frac)},{_fmt(s.bound)}")
    print("slope =", "undefined" if report.slope is None else _fmt(report.slope))
    return EXIT_OK


def cmd_delta_sweep(args):
    cfg = _config_from_args(args)
    report = run_delta_sweep(cfg)
    print(f"calibrated c = {_fmt(report.constant)} (pilot N={report.pilot_N}, delta=0.5)")
    print("delta,K,M,N,bound,fail_frac,passed")
    for p in report.points:
        print(f"{p.delta!r},{p.K},{p.M},{p.N},{_fmt(p.bound)},{_fmt(p.fail_frac)},{int(p.passed)}")
    return EXIT_OK


def cmd_lemma_check(args):
    u = DistributionSpec.parse(args.u_dist, args.u_scale)
    w = DistributionSpec.parse(args.w_dist, args.w_scale)
    v = DistributionSpec.parse(args.v_dist, args.v_scale)
    sys_ = default_system(args.n, args.m, args.p)
    rows = []
    for draw in range(args.draws):
        data = simulate_dataset(
            sys_, args.M, args.T, u, w, v, args.seed, trial=draw,
            noiseless=args.noiseless, record_noise=True,
        )
        sw = 0.0 if args.noiseless else args.w_scale
        sv = 0.0 if args.noiseless else args.v_scale
        rows.append(lemma_diagnostics(data, args.u_scale, sw, sv, args.q))
    target = 1.0 - args.q / 3.0
    kurt = kurtosis_ratio(u)
    print(f"input kurtosis = {'unavailable' if kurt is None else _fmt(kurt)}; target frequency = {_fmt(target)}")
    for label, attr in (("excitation", "excitation_ok"), ("process_noise", "process_ok"),
                        ("measurement_noise", "measurement_ok")):
        freq = float(np.mean([getattr(r, attr) for r in rows]))
        print(f"{label}: frequency = {_fmt(freq)} {'PASS' if freq >= target else 'FAIL'}")
    if args.out:
        out = _out_dir(args.out)
        keys = list(rows[0].as_record())
        lines = ["draw," + ",".join(keys)]
        for i, r in enumerate(rows):
            rec = r.as_record()
            lines.append(f"{i}," + ",".join(
                str(int(v)) if isinstance(v, bool) else repr(v) for v in rec.values()))
        (out / "lemma.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robust-sysid", description="Heavy-tailed LTI identification toolkit",
        epilog=EPILOG, allow_abbrev=False,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a dataset", epilog=EPILOG, allow_abbrev=False)
    _add_config_flags(p)
    p.add_argument("--N", type=int, default=100, help="number of rollouts")
    p.add_argument("--trial", type=int, default=0, help="stream index under the seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate Markov parameters", epilog=EPILOG,
                       allow_abbrev=False)
    p.add_argument("--dataset", required=True)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--mode", choices=("boosted", "single_ols"), default="boosted")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--kurtosis", type=float, default=None, help="input kurtosis ratio")
    p.add_argument("--deficient", choices=("raise", "pinv"), default="raise")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("realize", help="Ho-Kalman realization", epilog=EPILOG, allow_abbrev=False)
    p.add_argument("--markov", required=True, help="matrix file holding the Markov matrix")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--T1", type=int, default=None)
    p.add_argument("--T2", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_realize)

    p = sub.add_parser("bound", help="evaluate the high-probability error bound", epilog=EPILOG,
                       allow_abbrev=False)
    for name in ("n", "m", "p", "T", "N"):
        p.add_argument(f"--{name}", type=int, required=True)
    for name in ("f-norm", "sw", "sv", "su", "delta"):
        p.add_argument(f"--{name}", type=float, required=True)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=1.0)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("experiment", help="Monte Carlo error-decay experiment", epilog=EPILOG,
                       allow_abbrev=False)
    _add_config_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("delta-sweep", help="failure frequency versus delta", epilog=EPILOG,
                       allow_abbrev=False)
    _add_config_flags(p)
    p.set_defaults(func=cmd_delta_sweep)

    p = sub.add_parser("lemma-check", help="frequency of the per-bucket inequalities",
                       epilog=EPILOG, allow_abbrev=False)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--T", type=int, default=2)
    p.add_argument("--M", type=int, default=1536)
    p.add_argument("--q", type=float, default=0.125)
    p.add_argument("--draws", type=int, default=300)
    p.add_argument("--u-dist", default="three_point:0.125")
    p.add_argument("--u-scale", type=float, default=1.0)
    p.add_argument("--w-dist", default="gaussian")
    p.add_argument("--w-scale", type=float, default=1.0)
    p.add_argument("--v-dist", default="gaussian")
    p.add_argument("--v-scale", type=float, default=1.0)
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_lemma_check)
    return parser


def cli_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ExcitationDeficiencyError, NonConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def main():
    sys.exit(cli_dispatch())
