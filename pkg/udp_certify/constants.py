#!/usr/bin/env python

"""
udp_certify/constants.py

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

Constants and enums.

"""

from enum import Enum

from cardinal_pythonlib.enumlike import CaseInsensitiveEnumMeta


# =============================================================================
# Constants
# =============================================================================

DEFAULT_SEED = 1234
SEED_ENV_VAR = "UDP_CERTIFY_SEED"

EXIT_SUCCESS = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_TUNING_FAILED = 3

# Linear algebra
DEFAULT_RANK_TOL = 1e-10
KERNEL_SIGN_TOL = 1e-12  # first entry above this is made positive
SUBDESIGN_RANK_TOL = 1e-10  # sigma_min(X_S) relative to rho_1

# Distortion
DEFAULT_DISTORTION_TOL = 1e-4
MAX_EXACT_KERNEL_DIM = 3
INITIAL_GRID_CELLS = 64  # per circle (k = 2) or per cube face side^2 (k = 3)
MAX_GRID_EVALUATIONS = 5_000_000
DEFAULT_RESTARTS = 64
DEFAULT_SEARCH_ITERS = 500
SUBGRADIENT_STEP0 = 0.1
KINK_SNAP_CANDIDATES = 4

# Conditions
DEFAULT_KAPPA0 = 0.45
DEFAULT_FALSIFY_BUDGET = 100_000
FALSIFY_BATCH_SIZE = 4096
VIOLATION_SLACK = 1e-9
FLOOR_GUARD = 1e-9  # absorbs float noise just below an integer in floor()
MAX_RIP_SUPPORTS = 2_000_000
RIP_CHUNK_SIZE = 20_000
MAX_CONE_SUPPORTS = 10_000
DEFAULT_CONE_RESTARTS = 16
CONE_FISTA_ITERS = 2000
CONE_FISTA_TOL = 1e-12
CONE_ROW_CHUNK = 4096
CONE_REPAIR_MARGIN = 1e-12
CONE_ZERO_SCREEN = 0.05  # relative to the largest singular value
KERNEL_CONE_TOL = 1e-7
MAX_KERNEL_LPS = 1000
MAX_SIGN_PATTERNS = 32
RE_ANGLE_GRID = 48
RE_REFINE_POINTS = 9
RE_REFINE_ROUNDS = 4
KERNEL_PERTURBATION_SCALE = 1e-2

# Solvers
DEFAULT_SOLVER_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000
LP_TOL = 1e-9
LP_ZERO_TOL = 1e-10
DIAGNOSTIC_SLACK = 1e-7

# Bounds
DEFAULT_T = 1.0
DEFAULT_UNIVERSAL_C = 1.0
DEFAULT_LAMBDA_MARGIN = 1.01
LAMBDA_FLOOR = 1e-12

# Harness
DEFAULT_TRIALS = 200
DEFAULT_MC_TRIALS = 100_000
MC_BATCH_SIZE = 10_000
DEFAULT_AMPLITUDE = 1.0
DESIGN_STREAM = 1
TARGET_STREAM = 2
NOISE_STREAM = 3
FALSIFY_STREAM = 4
CONE_STREAM = 5
SEARCH_STREAM = 6
MC_STREAM = 7

JSON_INDENT = 2


class JsonKeys:
    """
    Keys used in several JSON documents.
    """

    DELTA = "Delta"
    KAPPA0 = "kappa0"
    PROVENANCE = "provenance"
    S0 = "S0"
    INPUTS = "inputs"


class Switches:
    """
    Some switches are referred to in many places.
    """

    CERT = "--cert"
    HEADER = "--header"
    KAPPA0 = "--kappa0"
    LAMBDA = "--lambda"
    MATRIX = "--matrix"
    SEED = "--seed"
    THREADS = "--threads"
    TO_UDP = "--to-udp"


# =============================================================================
# Enum classes
# =============================================================================


class DistortionMethod(Enum, metaclass=CaseInsensitiveEnumMeta):
    """
    How a distortion estimate was obtained.
    """

    EXACT_GRID = "Certified covering of the kernel sphere (kernel dim <= 3)"
    RANDOMIZED_WITNESS = "Lower bound from a randomized subgradient search"
    TRIVIAL = "Trivial kernel; distortion is 1 by convention"


class CertifyMethod(Enum, metaclass=CaseInsensitiveEnumMeta):
    """
    Distortion computations offered on the command line.
    """

    EXACT = "Certified bracket; requires kernel dimension <= 3"
    SEARCH = "Randomized lower bound with the trivial upper bound sqrt(p)"
    AUTO = "Exact when the kernel dimension allows, otherwise search"


class Provenance(Enum, metaclass=CaseInsensitiveEnumMeta):
    """
    Where a UDP certificate came from.
    """

    DISTORTION = "Derived from a distortion upper bound"
    RIP = "Derived from a restricted isometry constant"
    RE = "Derived from a restricted eigenvalue constant"
    COMPATIBILITY = "Derived from a compatibility constant"
    ASSUMED = "Supplied by the user"


class ConeKind(Enum, metaclass=CaseInsensitiveEnumMeta):
    """
    Cone-restricted design constants.
    """

    RE = "Restricted eigenvalue: ||X g||_2 / ||g_S||_2 over the cone"
    COMPATIBILITY = "Compatibility: sqrt(|S|) ||X g||_2 / ||g_S||_1 on cone"


class Estimator(Enum, metaclass=CaseInsensitiveEnumMeta):
    """
    Sparse regression estimators.
    """

    LASSO = "Lasso: 1/2 ||y - X b||^2 + lambda ||b||_1"
    DANTZIG = "Dantzig selector: min ||b||_1, ||X'(y - Xb)||_inf <= lambda"


class SolverStatus(Enum, metaclass=CaseInsensitiveEnumMeta):
    """
    Outcome of a solver run.
    """

    CONVERGED = "Optimality (or feasibility) residual within tolerance"
    ITERATION_LIMIT = "Stopped at the iteration limit; best iterate returned"
    INFEASIBLE = "Linear program failed or residual above tolerance"


class Theorem(Enum, metaclass=CaseInsensitiveEnumMeta):
    """
    Oracle inequalities we evaluate.
    """

    LASSO_L1 = "Lasso l1 estimation error"
    LASSO_PRED = "Lasso prediction error"
    DANTZIG_L1 = "Dantzig selector l1 estimation error"
    DANTZIG_PRED = "Dantzig selector prediction error"


class CertificateSource(Enum, metaclass=CaseInsensitiveEnumMeta):
    """
    How an experiment obtains its UDP certificate.
    """

    DISTORTION = "Distortion of the design kernel"
    RIP = "Restricted isometry constant of order 5S"
    ASSUMED = "Constants given in the configuration"


class DesignKind(Enum, metaclass=CaseInsensitiveEnumMeta):
    """
    Random designs the experiment harness can generate.
    """

    GAUSSIAN = "Independent N(0, 1) entries"
    IDENTITY = "The p×p identity (orthonormal columns; satisfies any UDP)"


class Subcommand(Enum, metaclass=CaseInsensitiveEnumMeta):
    """
    Command-line subcommands.
    """

    CERTIFY = "Bracket the distortion of the kernel; optionally derive UDP"
    CONDITIONS = "RIP, RE and compatibility constants; falsify UDP/H_S,1"
    SOLVE = "Solve the lasso or the Dantzig selector"
    BOUND = "Evaluate the l1 and prediction oracle inequalities"
    IDEAL = "Benchmarks for least squares on a known support"
    EXPERIMENT = "Monte-Carlo validation of the oracle inequalities"


DEFAULT_ESTIMATOR = Estimator.LASSO
DEFAULT_CERTIFY_METHOD = CertifyMethod.AUTO
DEFAULT_CERTIFICATE_SOURCE = CertificateSource.DISTORTION
DEFAULT_DESIGN_KIND = DesignKind.GAUSSIAN

LAMBDA_AUTO = "auto"


def enum_to_json(value: Enum) -> str:
    """
    Enum members appear in JSON documents as lower-case names.
    """
    return value.name.lower()
