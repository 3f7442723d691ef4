#!/usr/bin/env python

"""
udp_certify/main.py

===============================================================================

    Copyright (C) 2024 The udp_certify authors.

    This file is part of udp_certify.

    This is free software: you can redistribute it and/or modify
    it under the terms of the GNU General Public License as published by
    the Free Software Foundation, either version 3 of the License, or
    (at your option) any later version.

    This software is distributed in the hope that it will be useful,
    but WITHOUT ANY WARRANTY; without even the implied warranty of
    MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
    GNU General Public License for more details.

    You should have received a copy of the GNU General Public License
    along with this software. If not, see <https://www.gnu.org/licenses/>.

===============================================================================

Command-line entry point.

"""

import argparse
import logging
import math
import os
import sys
import traceback
from typing import Any, Dict, List, Tuple

from cardinal_pythonlib.cmdline import cmdline_quote
from cardinal_pythonlib.enumlike import keys_descriptions_from_enum
from cardinal_pythonlib.logs import main_only_quicksetup_rootlogger
from cardinal_pythonlib.reprfunc import auto_repr
import numpy as np
from rich_argparse import (
    ArgumentDefaultsRichHelpFormatter,
    RawDescriptionRichHelpFormatter,
)

from udp_certify.bounds import (
    auto_lambda,
    ideal_benchmark,
    l1_bound,
    mult_factors,
    noise_level,
    pred_bound,
    sparsity_level_comparison,
    tuning_threshold,
)
from udp_certify.conditions import (
    assess_conditions,
    udp_from_distortion,
    UdpCertificate,
)
from udp_certify.config import ExperimentConfig
from udp_certify.constants import (
    CertifyMethod,
    DEFAULT_CERTIFY_METHOD,
    DEFAULT_CONE_RESTARTS,
    DEFAULT_DISTORTION_TOL,
    DEFAULT_ESTIMATOR,
    DEFAULT_FALSIFY_BUDGET,
    DEFAULT_KAPPA0,
    DEFAULT_MAX_ITER,
    DEFAULT_RANK_TOL,
    DEFAULT_RESTARTS,
    DEFAULT_SEARCH_ITERS,
    DEFAULT_SEED,
    DEFAULT_SOLVER_TOL,
    DEFAULT_T,
    DEFAULT_UNIVERSAL_C,
    Estimator,
    EXIT_FAILURE,
    EXIT_SUCCESS,
    EXIT_TUNING_FAILED,
    EXIT_USAGE,
    LAMBDA_AUTO,
    SEED_ENV_VAR,
    Subcommand,
    Switches,
)
from udp_certify.distortion import certify_distortion
from udp_certify.errors import InputError, UdpCertifyError
from udp_certify.harness import (
    monte_carlo_ideal,
    noise_event_frequency,
    run_experiment,
)
from udp_certify.helperfunc import (
    read_json,
    read_matrix_csv,
    read_vector_csv,
    write_json,
)
from udp_certify.linalg import decompose, DesignMatrix
from udp_certify.solvers import RegressionProblem, solve
from udp_certify.version import VERSION

log = logging.getLogger(__name__)

JsonDoc = Dict[str, Any]


# =============================================================================
# Pretty arguments
# =============================================================================


class RawDescriptionArgumentDefaultsRichHelpFormatter(
    ArgumentDefaultsRichHelpFormatter, RawDescriptionRichHelpFormatter
):
    """
    Combines the features of

    - :class:`RawDescriptionRichHelpFormatter` -- don't mangle the description
    - :class:`ArgumentDefaultsRichHelpFormatter` -- print argument defaults
    """

    pass


DESCRIPTION = f"""
Certify design matrices for sparse regression through the Universal
Distortion Property (UDP), solve the lasso and the Dantzig selector, and
evaluate and validate their oracle inequalities.

Inputs:

    Matrices are CSV files: one row per line, comma-separated decimals
    (scientific notation allowed), no header unless {Switches.HEADER} is
    given. Vectors are a single row or a single column.

    UDP certificates are JSON objects such as

        {{"S0": 2, "kappa0": 0.45, "Delta": 1.5, "provenance": "assumed"}}

    as written by "certify --to-udp".

Outputs:

    One JSON document (sorted keys) on stdout, or to --out. Log messages go
    to stderr.

Exit codes:

    {EXIT_SUCCESS}  success
    {EXIT_FAILURE}  computational failure (e.g. rank-deficient input)
    {EXIT_USAGE}  usage error
    {EXIT_TUNING_FAILED}  "bound": the tuning condition on lambda fails
"""


# =============================================================================
# CliConfig
# =============================================================================


class CliConfig:
    """
    A validated command line: the subcommand plus its arguments.
    """

    def __init__(self, subcommand: Subcommand, args: argparse.Namespace):
        self.subcommand = subcommand
        self.args = args

    def __repr__(self) -> str:
        return auto_repr(self)

    @property
    def seed(self) -> int:
        return self.args.seed

    @property
    def json_pretty(self) -> bool:
        return self.args.pretty

    @property
    def out(self) -> str:
        return self.args.out


def _default_seed() -> int:
    text = os.environ.get(SEED_ENV_VAR)
    if text is None:
        return DEFAULT_SEED
    try:
        return int(text)
    except ValueError:
        raise InputError(f"{SEED_ENV_VAR}={text!r} is not an integer")


def _parse_support(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated indices, got {text!r}"
        )


# =============================================================================
# Argument parsing
# =============================================================================


def _build_parser() -> argparse.ArgumentParser:
    # noinspection PyTypeChecker
    parser = argparse.ArgumentParser(
        prog="udp_certify",
        formatter_class=RawDescriptionArgumentDefaultsRichHelpFormatter,
        description=DESCRIPTION,
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {VERSION}"
    )

    common = argparse.ArgumentParser(add_help=False)
    common_group = common.add_argument_group("Common")
    common_group.add_argument(
        "--out", type=str, help="Write the JSON document here, not stdout"
    )
    common_group.add_argument(
        "--pretty", action="store_true", help="Indent the JSON output"
    )
    common_group.add_argument(
        "--verbose", action="store_true", help="Be verbose"
    )
    common_group.add_argument(
        Switches.SEED,
        type=int,
        default=None,
        help=f"Seed for all random draws (default: ${SEED_ENV_VAR}, "
        f"else {DEFAULT_SEED})",
    )
    common_group.add_argument(
        Switches.THREADS,
        type=int,
        default=1,
        help="Worker threads for Monte-Carlo trials (results do not depend "
        "on this)",
    )

    matrix = argparse.ArgumentParser(add_help=False)
    matrix_group = matrix.add_argument_group("Design")
    matrix_group.add_argument(
        Switches.MATRIX, type=str, required=True, help="Design matrix CSV"
    )
    matrix_group.add_argument(
        Switches.HEADER,
        action="store_true",
        help="Skip the first line of every CSV input",
    )
    matrix_group.add_argument(
        "--rank-tol",
        type=float,
        default=DEFAULT_RANK_TOL,
        help="Singular values at most this times the largest count as zero",
    )

    subparsers = parser.add_subparsers(
        dest="subcommand", required=True, metavar="subcommand"
    )

    def add_subparser(sub: Subcommand, parents) -> argparse.ArgumentParser:
        # noinspection PyTypeChecker
        return subparsers.add_parser(
            sub.name.lower(),
            parents=parents,
            help=sub.value,
            description=sub.value,
            formatter_class=RawDescriptionArgumentDefaultsRichHelpFormatter,
        )

    # -------------------------------------------------------------------------
    # certify
    # -------------------------------------------------------------------------
    cp = add_subparser(Subcommand.CERTIFY, [matrix, common])
    method_k, method_desc = keys_descriptions_from_enum(
        CertifyMethod, keys_to_lower=True
    )
    cp.add_argument(
        "--method",
        type=str,
        choices=method_k,
        default=DEFAULT_CERTIFY_METHOD.name.lower(),
        help=f"Distortion computation. -- {method_desc} --",
    )
    cp.add_argument(
        "--tol",
        type=float,
        default=DEFAULT_DISTORTION_TOL,
        help="Width of the certified bracket (exact method)",
    )
    cp.add_argument(
        "--restarts",
        type=int,
        default=DEFAULT_RESTARTS,
        help="Random restarts (search method)",
    )
    cp.add_argument(
        "--iters",
        type=int,
        default=DEFAULT_SEARCH_ITERS,
        help="Subgradient iterations per restart (search method)",
    )
    cp.add_argument(
        Switches.TO_UDP,
        action="store_true",
        help="Emit the UDP certificate derived from the distortion upper "
        "bound instead of the distortion estimate",
    )
    cp.add_argument(
        Switches.KAPPA0,
        type=float,
        default=DEFAULT_KAPPA0,
        help=f"kappa0 for {Switches.TO_UDP}",
    )

    # -------------------------------------------------------------------------
    # conditions
    # -------------------------------------------------------------------------
    cd = add_subparser(Subcommand.CONDITIONS, [matrix, common])
    cd.add_argument(
        "--rip-S", dest="rip_s", type=int, help="Order S of theta_S"
    )
    cd.add_argument(
        "--re-S",
        dest="re_s",
        type=int,
        help="S for the RE and compatibility estimates",
    )
    cd.add_argument(
        "--c0", type=float, default=1.0, help="Cone constant c0"
    )
    cd.add_argument(
        "--kappa", type=float, help="kappa for falsifying H_(S,1)(kappa)"
    )
    cd.add_argument(
        Switches.CERT, type=str, help="UDP certificate JSON to falsify"
    )
    cd.add_argument(
        "--falsify-budget",
        type=int,
        default=DEFAULT_FALSIFY_BUDGET,
        help="Random vectors tried per falsification",
    )
    cd.add_argument(
        "--restarts",
        type=int,
        default=DEFAULT_CONE_RESTARTS,
        help="Restarts per support for the cone estimates",
    )

    # -------------------------------------------------------------------------
    # solve
    # -------------------------------------------------------------------------
    sp = add_subparser(Subcommand.SOLVE, [matrix, common])
    estimator_k, estimator_desc = keys_descriptions_from_enum(
        Estimator, keys_to_lower=True
    )
    sp.add_argument(
        "--response", type=str, required=True, help="Response vector CSV"
    )
    sp.add_argument(
        "--method",
        type=str,
        choices=estimator_k,
        default=DEFAULT_ESTIMATOR.name.lower(),
        help=f"Estimator. -- {estimator_desc} --",
    )
    sp.add_argument(
        Switches.LAMBDA,
        dest="lam",
        type=float,
        required=True,
        help="Tuning parameter lambda",
    )
    sp.add_argument(
        "--tol", type=float, default=DEFAULT_SOLVER_TOL, help="Tolerance"
    )
    sp.add_argument(
        "--max-iter",
        type=int,
        default=DEFAULT_MAX_ITER,
        help="Lasso sweep limit",
    )

    # -------------------------------------------------------------------------
    # bound
    # -------------------------------------------------------------------------
    bp = add_subparser(Subcommand.BOUND, [matrix, common])
    bp.add_argument(
        "--target", type=str, required=True, help="Target vector beta* CSV"
    )
    bp.add_argument(
        Switches.CERT, type=str, required=True, help="UDP certificate JSON"
    )
    bp.add_argument(
        "--sigma", type=float, required=True, help="Noise standard deviation"
    )
    bp.add_argument(
        "--t", type=float, default=DEFAULT_T, help="Noise calibration t >= 1"
    )
    bp.add_argument(
        Switches.LAMBDA,
        dest="lam",
        type=str,
        default=LAMBDA_AUTO,
        help=f"Tuning parameter, or '{LAMBDA_AUTO}' for 1.01 times the "
        f"admissibility threshold",
    )
    bp.add_argument(
        "--estimator",
        type=str,
        choices=estimator_k,
        default=DEFAULT_ESTIMATOR.name.lower(),
        help=f"Estimator. -- {estimator_desc} --",
    )
    bp.add_argument(
        "--event-draws",
        type=int,
        default=0,
        help="Also estimate the noise event frequency from this many draws",
    )

    # -------------------------------------------------------------------------
    # ideal
    # -------------------------------------------------------------------------
    ip = add_subparser(Subcommand.IDEAL, [matrix, common])
    ip.add_argument(
        "--target", type=str, required=True, help="Target vector beta* CSV"
    )
    ip.add_argument(
        "--sigma", type=float, required=True, help="Noise standard deviation"
    )
    ip.add_argument(
        "--support",
        type=_parse_support,
        help="Comma-separated support indices (default: nonzeros of the "
        "target)",
    )
    ip.add_argument(
        "--trials",
        type=int,
        default=0,
        help="Monte-Carlo noise draws (0 for the exact quantities only)",
    )
    ip.add_argument(
        "--delta",
        type=float,
        help="Distortion, to report the multiplicative factors",
    )
    ip.add_argument(
        Switches.KAPPA0,
        type=float,
        help="kappa0, to compare the Gaussian-design sparsity level with "
        "n/(1 + log(p/n))",
    )
    ip.add_argument(
        "--universal-c",
        type=float,
        default=DEFAULT_UNIVERSAL_C,
        help="Constant C in the Gaussian distortion bound",
    )

    # -------------------------------------------------------------------------
    # experiment
    # -------------------------------------------------------------------------
    ep = add_subparser(Subcommand.EXPERIMENT, [common])
    ep.add_argument(
        "--config", type=str, required=True, help="Experiment config JSON"
    )
    ep.add_argument(
        "--dump-trials", type=str, help="Write one CSV row per trial here"
    )

    return parser


def _validate(parser: argparse.ArgumentParser, args: argparse.Namespace):
    """
    Range and path checks argparse can't express. Failures exit with code 2.
    """
    sub = Subcommand[args.subcommand]

    def need(condition: bool, message: str) -> None:
        if not condition:
            parser.error(message)

    def need_file(path: str, switch: str) -> None:
        if path is not None:
            need(os.path.isfile(path), f"{switch}: no such file: {path!r}")

    if args.seed is None:
        try:
            args.seed = _default_seed()
        except InputError as e:
            parser.error(str(e))
    need(args.seed >= 0, f"{Switches.SEED} must be >= 0")
    need(args.threads >= 1, f"{Switches.THREADS} must be >= 1")
    if sub != Subcommand.EXPERIMENT:
        need_file(args.matrix, Switches.MATRIX)
        need(args.rank_tol > 0, "--rank-tol must be > 0")

    if sub == Subcommand.CERTIFY:
        need(args.tol > 0, "--tol must be > 0")
        need(args.restarts >= 1, "--restarts must be >= 1")
        need(args.iters >= 1, "--iters must be >= 1")
        need(
            0 < args.kappa0 < 0.5,
            f"{Switches.KAPPA0} must lie in (0, 1/2)",
        )
    elif sub == Subcommand.CONDITIONS:
        need(args.rip_s is None or args.rip_s >= 1, "--rip-S must be >= 1")
        need(args.re_s is None or args.re_s >= 1, "--re-S must be >= 1")
        need(args.c0 > 0, "--c0 must be > 0")
        need(args.kappa is None or args.kappa >= 0, "--kappa must be >= 0")
        need(
            args.kappa is None or args.rip_s or args.re_s,
            "--kappa needs --rip-S or --re-S",
        )
        need(args.falsify_budget >= 1, "--falsify-budget must be >= 1")
        need(args.restarts >= 1, "--restarts must be >= 1")
        need_file(args.cert, Switches.CERT)
    elif sub == Subcommand.SOLVE:
        need_file(args.response, "--response")
        if Estimator[args.method] == Estimator.LASSO:
            need(args.lam > 0, f"{Switches.LAMBDA} must be > 0 for the lasso")
        else:
            need(args.lam >= 0, f"{Switches.LAMBDA} must be >= 0")
        need(args.tol > 0, "--tol must be > 0")
        need(args.max_iter >= 1, "--max-iter must be >= 1")
    elif sub == Subcommand.BOUND:
        need_file(args.target, "--target")
        need_file(args.cert, Switches.CERT)
        need(args.sigma >= 0, "--sigma must be >= 0")
        need(args.t >= 1, "--t must be >= 1")
        need(args.event_draws >= 0, "--event-draws must be >= 0")
        if args.lam.lower() == LAMBDA_AUTO:
            args.lam = LAMBDA_AUTO
        else:
            try:
                args.lam = float(args.lam)
            except ValueError:
                parser.error(
                    f"{Switches.LAMBDA}: expected a number or "
                    f"'{LAMBDA_AUTO}', got {args.lam!r}"
                )
            need(args.lam > 0, f"{Switches.LAMBDA} must be > 0")
    elif sub == Subcommand.IDEAL:
        need_file(args.target, "--target")
        need(args.sigma >= 0, "--sigma must be >= 0")
        need(args.trials >= 0, "--trials must be >= 0")
        need(
            args.support is None or len(args.support) > 0,
            "--support must name at least one index",
        )
        need(args.delta is None or args.delta >= 1, "--delta must be >= 1")
        need(
            args.kappa0 is None or 0 < args.kappa0 < 0.5,
            f"{Switches.KAPPA0} must lie in (0, 1/2)",
        )
        need(args.universal_c > 0, "--universal-c must be > 0")
    elif sub == Subcommand.EXPERIMENT:
        need_file(args.config, "--config")


def parse_args(argv: List[str] = None) -> CliConfig:
    """
    Parses and validates a command line (default: ``sys.argv[1:]``). Usage
    errors exit with code 2.
    """
    parser = _build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    return CliConfig(Subcommand[args.subcommand], args)


# =============================================================================
# Subcommands
# =============================================================================


def _read_design(args: argparse.Namespace) -> DesignMatrix:
    return decompose(
        read_matrix_csv(args.matrix, header=args.header),
        rank_tol=args.rank_tol,
    )


def _read_target(args: argparse.Namespace, d: DesignMatrix) -> np.ndarray:
    beta_star = read_vector_csv(args.target, header=args.header)
    if beta_star.size != d.p:
        raise InputError(
            f"{args.target}: target has length {beta_star.size}; design has "
            f"p = {d.p} columns"
        )
    return beta_star


def _read_certificate(path: str) -> UdpCertificate:
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise InputError(f"{path}: a certificate must be a JSON object")
    return UdpCertificate.from_json_dict(doc)


def cmd_certify(args: argparse.Namespace) -> Tuple[JsonDoc, int]:
    d = _read_design(args)
    if args.to_udp:
        d.require_full_row_rank()
    est = certify_distortion(
        d,
        CertifyMethod[args.method],
        tol=args.tol,
        restarts=args.restarts,
        iters=args.iters,
        seed=args.seed,
    )
    log.info(f"Distortion: {est}")
    if not args.to_udp:
        return est.as_json_dict(), EXIT_SUCCESS
    cert = udp_from_distortion(est, d.smallest_singular(), args.kappa0, d.p)
    return cert.as_json_dict(), EXIT_SUCCESS


def cmd_conditions(args: argparse.Namespace) -> Tuple[JsonDoc, int]:
    d = _read_design(args)
    cert = _read_certificate(args.cert) if args.cert else None
    report = assess_conditions(
        d,
        rip_s=args.rip_s,
        re_s=args.re_s,
        c0=args.c0,
        kappa=args.kappa,
        cert=cert,
        budget=args.falsify_budget,
        restarts=args.restarts,
        seed=args.seed,
    )
    return report.as_json_dict(), EXIT_SUCCESS


def cmd_solve(args: argparse.Namespace) -> Tuple[JsonDoc, int]:
    d = _read_design(args)
    prob = RegressionProblem(
        d, read_vector_csv(args.response, header=args.header)
    )
    result = solve(
        prob,
        Estimator[args.method],
        args.lam,
        tol=args.tol,
        max_iter=args.max_iter,
    )
    if not result.converged:
        log.error(f"Solver did not converge: {result}")
        return result.as_json_dict(), EXIT_FAILURE
    return result.as_json_dict(), EXIT_SUCCESS


def cmd_bound(args: argparse.Namespace) -> Tuple[JsonDoc, int]:
    d = _read_design(args)
    beta_star = _read_target(args, d)
    cert = _read_certificate(args.cert)
    estimator = Estimator[args.estimator]
    noise = noise_level(d, args.sigma, args.t)
    if args.lam == LAMBDA_AUTO:
        threshold = tuning_threshold(noise.lambda0, cert.kappa0, estimator)
        if math.isfinite(threshold):
            lam = auto_lambda(noise.lambda0, cert.kappa0, estimator)
            log.info(f"λ = {lam:.6g} (auto)")
        else:
            log.warning(
                f"κ₀ = {cert.kappa0} admits no λ for "
                f"{args.estimator.lower()}; reporting without bounds"
            )
            lam = math.inf
    else:
        lam = args.lam
    l1 = l1_bound(beta_star, cert, lam, noise.lambda0, estimator)
    pred = pred_bound(beta_star, cert, lam, noise.lambda0, estimator)
    doc = {
        "certificate": cert.as_json_dict(),
        "noise": noise.as_json_dict(),
        "l1": l1.as_json_dict(),
        "pred": pred.as_json_dict(),
        "event_frequency": None,
    }
    if args.event_draws > 0:
        doc["event_frequency"] = noise_event_frequency(
            d, args.sigma, args.t, args.event_draws, seed=args.seed
        )
    if l1.tuning_ok and pred.tuning_ok:
        return doc, EXIT_SUCCESS
    return doc, EXIT_TUNING_FAILED


def cmd_ideal(args: argparse.Namespace) -> Tuple[JsonDoc, int]:
    d = _read_design(args)
    beta_star = _read_target(args, d)
    support = args.support
    if support is None:
        support = [int(j) for j in beta_star.nonzero()[0]]
        if not support:
            raise InputError("Target is zero; give --support explicitly")
    bench = ideal_benchmark(d, beta_star, args.sigma, support)
    doc = {
        "benchmark": bench.as_json_dict(),
        "monte_carlo": None,
        "multiplicative_factors": None,
        "sparsity_levels": None,
    }
    if args.trials > 0:
        doc["monte_carlo"] = monte_carlo_ideal(
            d, beta_star, args.sigma, support, args.trials, seed=args.seed
        ).as_json_dict()
    if args.delta is not None:
        doc["multiplicative_factors"] = mult_factors(
            args.delta, d.smallest_singular(), d.n, d.p, c=args.universal_c
        ).as_json_dict()
    if args.kappa0 is not None:
        doc["sparsity_levels"] = sparsity_level_comparison(
            d.n, d.p, args.kappa0, c=args.universal_c
        )
    return doc, EXIT_SUCCESS


def cmd_experiment(args: argparse.Namespace) -> Tuple[JsonDoc, int]:
    doc = read_json(args.config)
    if not isinstance(doc, dict):
        raise InputError(f"{args.config}: config must be a JSON object")
    doc.setdefault("seed", args.seed)
    config = ExperimentConfig.from_json_dict(doc)
    report = run_experiment(config, threads=args.threads)
    if args.dump_trials:
        report.write_trials_csv(args.dump_trials)
    return report.as_json_dict(), EXIT_SUCCESS


COMMANDS = {
    Subcommand.CERTIFY: cmd_certify,
    Subcommand.CONDITIONS: cmd_conditions,
    Subcommand.SOLVE: cmd_solve,
    Subcommand.BOUND: cmd_bound,
    Subcommand.IDEAL: cmd_ideal,
    Subcommand.EXPERIMENT: cmd_experiment,
}


def dispatch(config: CliConfig) -> int:
    """
    Runs a subcommand and writes its JSON document. Returns the exit code.
    """
    try:
        doc, code = COMMANDS[config.subcommand](config.args)
    except UdpCertifyError as e:
        log.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILURE
    write_json(
        doc, path=config.out, pretty=config.json_pretty, stream=sys.stdout
    )
    return code


# =============================================================================
# main
# =============================================================================


def main(argv: List[str] = None) -> None:
    """
    Command-line entry point.
    """
    config = parse_args(argv)
    main_only_quicksetup_rootlogger(
        level=logging.DEBUG if config.args.verbose else logging.INFO
    )
    log.info(f"Command: {cmdline_quote(sys.argv)}")
    sys.exit(dispatch(config))


if __name__ == "__main__":
    try:
        main()
    except Exception as _top_level_exception:
        log.critical(str(_top_level_exception))
        log.critical(traceback.format_exc())
        sys.exit(EXIT_FAILURE)
