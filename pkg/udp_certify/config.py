#!/usr/bin/env python

"""
udp_certify/config.py

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

Experiment configuration.

"""

import logging
import math
from typing import Any, Dict

from cardinal_pythonlib.reprfunc import auto_repr

from udp_certify.constants import (
    CertificateSource,
    DEFAULT_AMPLITUDE,
    DEFAULT_CERTIFICATE_SOURCE,
    DEFAULT_DESIGN_KIND,
    DEFAULT_DISTORTION_TOL,
    DEFAULT_ESTIMATOR,
    DEFAULT_KAPPA0,
    DEFAULT_LAMBDA_MARGIN,
    DEFAULT_MAX_ITER,
    DEFAULT_RESTARTS,
    DEFAULT_SEARCH_ITERS,
    DEFAULT_SEED,
    DEFAULT_SOLVER_TOL,
    DEFAULT_T,
    DEFAULT_TRIALS,
    DesignKind,
    enum_to_json,
    Estimator,
)
from udp_certify.errors import InputError, ParameterError

log = logging.getLogger(__name__)

_ENUM_FIELDS = {
    "certificate_source": CertificateSource,
    "design": DesignKind,
    "estimator": Estimator,
}


# =============================================================================
# Master config for experiments
# =============================================================================


class ExperimentConfig:
    """
    Master config object for :func:`udp_certify.harness.run_experiment`.
    """

    def __init__(
        self,
        n: int,
        p: int,
        s: int,
        sigma: float,
        t: float = DEFAULT_T,
        kappa0: float = DEFAULT_KAPPA0,
        lambda_rule: float = DEFAULT_LAMBDA_MARGIN,
        estimator: Estimator = DEFAULT_ESTIMATOR,
        trials: int = DEFAULT_TRIALS,
        seed: int = DEFAULT_SEED,
        design: DesignKind = DEFAULT_DESIGN_KIND,
        normalize: bool = False,
        amplitude: float = DEFAULT_AMPLITUDE,
        certificate_source: CertificateSource = DEFAULT_CERTIFICATE_SOURCE,
        assumed_s0: int = None,
        assumed_delta: float = None,
        rip_s: int = 1,
        distortion_tol: float = DEFAULT_DISTORTION_TOL,
        restarts: int = DEFAULT_RESTARTS,
        iters: int = DEFAULT_SEARCH_ITERS,
        solver_tol: float = DEFAULT_SOLVER_TOL,
        max_iter: int = DEFAULT_MAX_ITER,
    ) -> None:
        """
        Args:
            n:
                Number of observations.
            p:
                Number of covariates.
            s:
                Number of nonzero entries of the target β*.
            sigma:
                Noise standard deviation.
            t:
                Noise calibration parameter (t ≥ 1).
            kappa0:
                κ₀ for the certificate.
            lambda_rule:
                Multiplier (> 1) applied to the tuning threshold to choose λ.
            estimator:
                Lasso or Dantzig selector.
            trials:
                Number of noise draws.
            seed:
                Base seed; trial i uses seed + i.
            design:
                Kind of design to generate.
            normalize:
                Scale design columns to unit norm?
            amplitude:
                Magnitude of the nonzero target entries.
            certificate_source:
                Where the UDP certificate comes from.
            assumed_s0:
                S0, for an assumed certificate.
            assumed_delta:
                Δ, for an assumed certificate.
            rip_s:
                S, for a certificate from the RIP constant θ_{5S}.
            distortion_tol:
                Bracket width for the exact distortion computation.
            restarts:
                Restarts for the distortion search (kernel dimension > 3).
            iters:
                Iterations per restart for the distortion search.
            solver_tol:
                Solver tolerance.
            max_iter:
                Lasso sweep limit.
        """
        if n < 1 or p < 2:
            raise ParameterError(f"Need n >= 1 and p >= 2; got {n}, {p}")
        if design == DesignKind.IDENTITY and n != p:
            raise ParameterError("An identity design needs n = p")
        if not 1 <= s <= p:
            raise ParameterError(f"Need 1 <= s <= p; got s = {s}")
        if sigma < 0:
            raise ParameterError(f"sigma must be >= 0; got {sigma}")
        if t < 1:
            raise ParameterError(f"t must be >= 1; got {t}")
        if not 0 < kappa0 < 0.5:
            raise ParameterError(f"kappa0 must lie in (0, 1/2); got {kappa0}")
        if not lambda_rule > 1:
            raise ParameterError(
                f"lambda_rule must be > 1 (strict tuning); got {lambda_rule}"
            )
        if trials < 0:
            raise ParameterError(f"trials must be >= 0; got {trials}")
        if certificate_source == CertificateSource.ASSUMED and (
            assumed_s0 is None or assumed_delta is None
        ):
            raise ParameterError(
                "An assumed certificate needs assumed_s0 and assumed_delta"
            )
        if not (math.isfinite(amplitude) and amplitude > 0):
            raise ParameterError(f"amplitude must be > 0; got {amplitude}")
        self.n = n
        self.p = p
        self.s = s
        self.sigma = sigma
        self.t = t
        self.kappa0 = kappa0
        self.lambda_rule = lambda_rule
        self.estimator = estimator
        self.trials = trials
        self.seed = seed
        self.design = design
        self.normalize = normalize
        self.amplitude = amplitude
        self.certificate_source = certificate_source
        self.assumed_s0 = assumed_s0
        self.assumed_delta = assumed_delta
        self.rip_s = rip_s
        self.distortion_tol = distortion_tol
        self.restarts = restarts
        self.iters = iters
        self.solver_tol = solver_tol
        self.max_iter = max_iter

    def __str__(self) -> str:
        return str(self.as_json_dict())

    def __repr__(self) -> str:
        return auto_repr(self)

    def as_json_dict(self) -> Dict[str, Any]:
        d = dict(vars(self))
        for key in _ENUM_FIELDS:
            d[key] = enum_to_json(d[key])
        return d

    @classmethod
    def from_json_dict(cls, d: Dict[str, Any]) -> "ExperimentConfig":
        """
        Reads a config document. Enum values are given by name, in any case.
        """
        if not isinstance(d, dict):
            raise InputError("Experiment config must be a JSON object")
        kwargs = dict(d)
        for key, enum_class in _ENUM_FIELDS.items():
            if key in kwargs:
                try:
                    kwargs[key] = enum_class[kwargs[key]]
                except KeyError:
                    raise ParameterError(
                        f"Bad value {kwargs[key]!r} for {key}; choose from "
                        f"{[enum_to_json(e) for e in enum_class]}"
                    )
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ParameterError(f"Bad experiment config: {e}")
