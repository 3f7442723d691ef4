#!/usr/bin/env python

"""
udp_certify/harness.py

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

Synthetic problems and Monte-Carlo validation: every trial draws noise,
solves, evaluates the oracle inequalities and checks them on the noise event.

"""

from concurrent.futures import ThreadPoolExecutor
import logging
import math
from statistics import mean, median
from typing import Any, Dict, List, Optional, Sequence

from cardinal_pythonlib.reprfunc import auto_repr
import numpy as np

from udp_certify.bounds import (
    auto_lambda,
    ideal_benchmark,
    l1_bound,
    noise_level,
    pred_bound,
)
from udp_certify.conditions import (
    rip_constant,
    udp_from_distortion,
    udp_from_rip,
    UdpCertificate,
)
from udp_certify.config import ExperimentConfig
from udp_certify.constants import (
    CertificateSource,
    CertifyMethod,
    DEFAULT_MC_TRIALS,
    DESIGN_STREAM,
    DesignKind,
    DIAGNOSTIC_SLACK,
    enum_to_json,
    Estimator,
    LAMBDA_FLOOR,
    MC_BATCH_SIZE,
    MC_STREAM,
    NOISE_STREAM,
    Provenance,
    TARGET_STREAM,
    VIOLATION_SLACK,
)
from udp_certify.distortion import certify_distortion
from udp_certify.errors import ParameterError
from udp_certify.helperfunc import make_rng, write_dict_rows_csv
from udp_certify.linalg import decompose, DesignMatrix
from udp_certify.solvers import appendix_diagnostic, RegressionProblem, solve

log = logging.getLogger(__name__)


# =============================================================================
# Generators
# =============================================================================


def gen_gaussian_design(
    n: int, p: int, normalize: bool = False, seed: int = 0
) -> DesignMatrix:
    """
    n×p design with i.i.d. N(0, 1) entries, optionally with unit-norm
    columns.
    """
    if not 1 <= n <= p:
        raise ParameterError(f"Need 1 <= n <= p; got n = {n}, p = {p}")
    x = make_rng(seed, DESIGN_STREAM).standard_normal((n, p))
    if normalize:
        x /= np.linalg.norm(x, axis=0, keepdims=True)
    return decompose(x)


def gen_sparse_target(
    p: int, s: int, amplitude: float = 1.0, seed: int = 0
) -> np.ndarray:
    """
    ±amplitude on s uniformly chosen coordinates, zero elsewhere.
    """
    if not 1 <= s <= p:
        raise ParameterError(f"Need 1 <= s <= p; got s = {s}, p = {p}")
    if not amplitude > 0:
        raise ParameterError(f"amplitude must be > 0; got {amplitude}")
    rng = make_rng(seed, TARGET_STREAM)
    positions = rng.choice(p, size=s, replace=False)
    signs = rng.choice((-1.0, 1.0), size=s)
    beta = np.zeros(p)
    beta[positions] = signs * amplitude
    return beta


# =============================================================================
# Single trial
# =============================================================================


class TrialRecord:
    """
    Outcome of one noise draw.
    """

    CSV_FIELDS = (
        "seed",
        "noise_event_held",
        "lambda",
        "lambda0",
        "solver_status",
        "l1_error",
        "pred_error",
        "bound_l1",
        "bound_pred",
        "violated_l1",
        "violated_pred",
        "violated",
        "appendix_slack",
        "appendix_diag_ok",
    )

    def __init__(
        self,
        seed: int,
        noise_event_held: bool,
        lam: float,
        lambda0: float,
        lambda_floor_applied: bool,
        solver_status: str,
        l1_error: float,
        pred_error: float,
        bound_l1: Optional[float],
        bound_pred: Optional[float],
        appendix_slack: Optional[float],
    ) -> None:
        self.seed = seed
        self.noise_event_held = noise_event_held
        self.lam = lam
        self.lambda0 = lambda0
        self.lambda_floor_applied = lambda_floor_applied
        self.solver_status = solver_status
        self.l1_error = l1_error
        self.pred_error = pred_error
        self.bound_l1 = bound_l1
        self.bound_pred = bound_pred
        self.appendix_slack = appendix_slack
        self.violated_l1 = noise_event_held and _exceeds(l1_error, bound_l1)
        self.violated_pred = noise_event_held and _exceeds(
            pred_error, bound_pred
        )

    def __repr__(self) -> str:
        return auto_repr(self)

    @property
    def violated(self) -> bool:
        return self.violated_l1 or self.violated_pred

    @property
    def appendix_diag_ok(self) -> bool:
        """
        True unless the diagnostic applied and failed.
        """
        return self.appendix_slack is None or (
            self.appendix_slack >= -DIAGNOSTIC_SLACK
        )

    def as_json_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "noise_event_held": self.noise_event_held,
            "lambda": self.lam,
            "lambda0": self.lambda0,
            "solver_status": self.solver_status,
            "l1_error": self.l1_error,
            "pred_error": self.pred_error,
            "bound_l1": self.bound_l1,
            "bound_pred": self.bound_pred,
            "violated_l1": self.violated_l1,
            "violated_pred": self.violated_pred,
            "violated": self.violated,
            "appendix_slack": self.appendix_slack,
            "appendix_diag_ok": self.appendix_diag_ok,
        }


def _exceeds(error: float, bound: Optional[float]) -> bool:
    if bound is None:
        return False
    return error > bound + VIOLATION_SLACK * max(1.0, bound)


def _bound_value(
    fn,
    beta_star: np.ndarray,
    cert: UdpCertificate,
    lam: float,
    lambda0: float,
    estimator: Estimator,
) -> Optional[float]:
    if not cert.informative:
        return None
    return fn(beta_star, cert, lam, lambda0, estimator).bound


def run_trial(
    d: DesignMatrix,
    beta_star: np.ndarray,
    cert: UdpCertificate,
    sigma: float,
    t: float,
    lambda_rule: float,
    estimator: Estimator,
    seed: int,
    solver_tol: float = None,
    max_iter: int = None,
) -> TrialRecord:
    """
    Draws ε ~ N(0, σ²I) from the trial seed, sets λ = rule·λ₀/(1 - cκ₀)
    (c = 2 for the lasso, 4 for the Dantzig selector), solves, and checks the
    ℓ1 and prediction bounds against the realized errors.

    When σ = 0 the rule gives λ = 0, which neither estimator's bound admits;
    λ is then raised to a small floor and the record says so.
    """
    if not lambda_rule > 1:
        raise ParameterError(f"lambda_rule must be > 1; got {lambda_rule}")
    x = np.asarray(d.entries)
    noise = noise_level(d, sigma, t)
    eps = sigma * make_rng(seed, NOISE_STREAM).standard_normal(d.n)
    y = x @ beta_star + eps
    event = bool(np.abs(x.T @ eps).max() <= noise.lambda0)

    lam = auto_lambda(noise.lambda0, cert.kappa0, estimator, lambda_rule)
    floor_applied = lam < LAMBDA_FLOOR
    if floor_applied:
        log.debug(f"λ = {lam} raised to floor {LAMBDA_FLOOR}")
        lam = LAMBDA_FLOOR

    prob = RegressionProblem(d, y, true_target=beta_star, noise_sd=sigma)
    kwargs = {}  # type: Dict[str, Any]
    if solver_tol is not None:
        kwargs["tol"] = solver_tol
    if max_iter is not None:
        kwargs["max_iter"] = max_iter
    result = solve(prob, estimator, lam, **kwargs)
    h = result.estimate - beta_star

    appendix_slack = None  # type: Optional[float]
    if event and lam >= noise.lambda0:
        appendix_slack = appendix_diagnostic(
            estimator, d, result.estimate, beta_star, lam, noise.lambda0
        )
    record = TrialRecord(
        seed=seed,
        noise_event_held=event,
        lam=lam,
        lambda0=noise.lambda0,
        lambda_floor_applied=floor_applied,
        solver_status=enum_to_json(result.status),
        l1_error=float(np.abs(h).sum()),
        pred_error=float(np.linalg.norm(x @ h)),
        bound_l1=_bound_value(
            l1_bound, beta_star, cert, lam, noise.lambda0, estimator
        ),
        bound_pred=_bound_value(
            pred_bound, beta_star, cert, lam, noise.lambda0, estimator
        ),
        appendix_slack=appendix_slack,
    )
    if record.violated:
        log.error(f"Oracle inequality violated on the event: {record!r}")
    if not record.appendix_diag_ok:
        log.error(f"Elementary inequality failed: {record!r}")
    return record


# =============================================================================
# Experiments
# =============================================================================


class ExperimentReport:
    """
    Aggregate of many trials on one design and target.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        design: DesignMatrix,
        beta_star: np.ndarray,
        cert: UdpCertificate,
        prob_floor: float,
        lambda0: float,
        records: List[TrialRecord],
    ) -> None:
        self.config = config
        self.design = design
        self.beta_star = beta_star
        self.cert = cert
        self.prob_floor = prob_floor
        self.lambda0 = lambda0
        self.records = records

    def __repr__(self) -> str:
        return auto_repr(self)

    @property
    def trials(self) -> int:
        return len(self.records)

    @property
    def event_frequency(self) -> Optional[float]:
        if not self.records:
            return None
        return sum(r.noise_event_held for r in self.records) / self.trials

    @property
    def violations(self) -> int:
        return sum(r.violated for r in self.records)

    def _summary(self, attr: str) -> Dict[str, Optional[float]]:
        values = [
            getattr(r, attr)
            for r in self.records
            if getattr(r, attr) is not None
        ]
        if not values:
            return {"mean": None, "median": None}
        return {"mean": mean(values), "median": median(values)}

    def as_json_dict(self) -> Dict[str, Any]:
        s = int(np.count_nonzero(self.beta_star))
        return {
            "trials": self.trials,
            "event_frequency": self.event_frequency,
            "prob_floor": self.prob_floor,
            "lambda0": self.lambda0,
            "violations": self.violations,
            "violations_l1": sum(r.violated_l1 for r in self.records),
            "violations_pred": sum(r.violated_pred for r in self.records),
            "appendix_failures": sum(
                not r.appendix_diag_ok for r in self.records
            ),
            "solver_failures": sum(
                r.solver_status != "converged" for r in self.records
            ),
            "lambda_floor_applied": any(
                r.lambda_floor_applied for r in self.records
            ),
            "l1_error": self._summary("l1_error"),
            "pred_error": self._summary("pred_error"),
            "bound_l1": self._summary("bound_l1"),
            "bound_pred": self._summary("bound_pred"),
            "S0": self.cert.s0,
            "uninformative_certificate": not self.cert.informative,
            "target_sparsity_exceeds_S0": s > self.cert.s0,
            "certificate": self.cert.as_json_dict(),
            "design": self.design.as_json_dict(),
            "config": self.config.as_json_dict(),
        }

    def write_trials_csv(self, filename: str) -> None:
        """
        One row per trial.
        """
        write_dict_rows_csv(
            filename,
            TrialRecord.CSV_FIELDS,
            [r.as_json_dict() for r in self.records],
        )


def build_design(config: ExperimentConfig) -> DesignMatrix:
    if config.design == DesignKind.IDENTITY:
        return decompose(np.eye(config.p))
    return gen_gaussian_design(
        config.n, config.p, normalize=config.normalize, seed=config.seed
    )


def build_certificate(
    d: DesignMatrix, config: ExperimentConfig
) -> UdpCertificate:
    """
    The experiment's UDP certificate, from the configured source.
    """
    source = config.certificate_source
    if source == CertificateSource.DISTORTION:
        d.require_full_row_rank()
        est = certify_distortion(
            d,
            CertifyMethod.AUTO,
            tol=config.distortion_tol,
            restarts=config.restarts,
            iters=config.iters,
            seed=config.seed,
        )
        return udp_from_distortion(
            est, d.smallest_singular(), config.kappa0, d.p
        )
    elif source == CertificateSource.RIP:
        theta = rip_constant(d, 5 * config.rip_s)
        return udp_from_rip(theta, config.rip_s, config.kappa0)
    elif source == CertificateSource.ASSUMED:
        return UdpCertificate(
            s0=config.assumed_s0,
            kappa0=config.kappa0,
            delta=config.assumed_delta,
            provenance=Provenance.ASSUMED,
            inputs={"source": "configuration"},
        )
    else:
        raise AssertionError(f"Bug: unknown certificate source {source!r}")


def run_experiment(
    config: ExperimentConfig, threads: int = 1
) -> ExperimentReport:
    """
    Trials use seeds ``config.seed + i``. With ``threads > 1`` they run on a
    thread pool; results come back in trial order either way.
    """
    log.info(f"Running experiment: {config}")
    d = build_design(config)
    beta_star = gen_sparse_target(
        config.p, config.s, config.amplitude, seed=config.seed
    )
    cert = build_certificate(d, config)
    log.info(f"Certificate: {cert}")
    if not cert.informative:
        log.warning("Uninformative certificate: bounds will not be evaluated")
    elif config.s > cert.s0:
        log.warning(
            f"Target sparsity {config.s} exceeds S0 = {cert.s0}; bounds "
            f"will include a tail term"
        )
    noise = noise_level(d, config.sigma, config.t)

    def trial(i: int) -> TrialRecord:
        return run_trial(
            d,
            beta_star,
            cert,
            config.sigma,
            config.t,
            config.lambda_rule,
            config.estimator,
            seed=config.seed + i,
            solver_tol=config.solver_tol,
            max_iter=config.max_iter,
        )

    indices = range(config.trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            records = list(executor.map(trial, indices))
    else:
        records = [trial(i) for i in indices]
    report = ExperimentReport(
        config=config,
        design=d,
        beta_star=beta_star,
        cert=cert,
        prob_floor=noise.prob_floor,
        lambda0=noise.lambda0,
        records=records,
    )
    log.info(
        f"... {report.trials} trials, event frequency "
        f"{report.event_frequency}, {report.violations} violations"
    )
    return report


# =============================================================================
# Noise event frequency
# =============================================================================


def noise_event_frequency(
    d: DesignMatrix, sigma: float, t: float, draws: int, seed: int = 0
) -> Dict[str, Any]:
    """
    Empirical P(‖Xᵀε‖_∞ ≤ λ₀) over ``draws`` noise vectors, with its binomial
    standard error, against the closed-form floor.
    """
    if draws < 1:
        raise ParameterError(f"draws must be >= 1; got {draws}")
    noise = noise_level(d, sigma, t)
    x = np.asarray(d.entries)
    rng = make_rng(seed, NOISE_STREAM)
    held = 0
    done = 0
    while done < draws:
        m = min(MC_BATCH_SIZE, draws - done)
        eps = sigma * rng.standard_normal((m, d.n))
        held += int(np.sum(np.abs(eps @ x).max(axis=1) <= noise.lambda0))
        done += m
    freq = held / draws
    return {
        "draws": draws,
        "frequency": freq,
        "standard_error": math.sqrt(freq * (1 - freq) / draws),
        "prob_floor": noise.prob_floor,
        "sidak_probability": noise.sidak_probability,
        "lambda0": noise.lambda0,
    }


# =============================================================================
# Least squares on the true support
# =============================================================================


class IdealMonteCarloReport:
    """
    Monte-Carlo means of the squared estimation and prediction errors of
    least squares on a known support, against their exact expectations.
    """

    def __init__(
        self,
        trials: int,
        mean_sq_estimation_error: float,
        se_estimation: float,
        mean_sq_prediction_error: float,
        se_prediction: float,
        trace_term: float,
        pred_term: float,
        lower_bound: float,
    ) -> None:
        self.trials = trials
        self.mean_sq_estimation_error = mean_sq_estimation_error
        self.se_estimation = se_estimation
        self.mean_sq_prediction_error = mean_sq_prediction_error
        self.se_prediction = se_prediction
        self.trace_term = trace_term
        self.pred_term = pred_term
        self.lower_bound = lower_bound

    def __repr__(self) -> str:
        return auto_repr(self)

    @staticmethod
    def _relative(value: float, exact: float) -> Optional[float]:
        if exact == 0:
            return 0.0 if value == 0 else None
        return abs(value - exact) / exact

    @property
    def estimation_deviation(self) -> Optional[float]:
        return self._relative(self.mean_sq_estimation_error, self.trace_term)

    @property
    def prediction_deviation(self) -> Optional[float]:
        return self._relative(self.mean_sq_prediction_error, self.pred_term)

    def as_json_dict(self) -> Dict[str, Any]:
        return {
            "trials": self.trials,
            "mean_sq_estimation_error": self.mean_sq_estimation_error,
            "se_estimation": self.se_estimation,
            "mean_sq_prediction_error": self.mean_sq_prediction_error,
            "se_prediction": self.se_prediction,
            "trace_term": self.trace_term,
            "pred_term": self.pred_term,
            "lower_bound": self.lower_bound,
            "estimation_deviation": self.estimation_deviation,
            "prediction_deviation": self.prediction_deviation,
        }


def monte_carlo_ideal(
    d: DesignMatrix,
    beta_star: np.ndarray,
    sigma: float,
    support: Sequence[int],
    trials: int = DEFAULT_MC_TRIALS,
    seed: int = 0,
) -> IdealMonteCarloReport:
    """
    With y = X_Sβ*_S + ε the least-squares error on S is (X_SᵀX_S)⁻¹X_Sᵀε,
    so only the noise needs simulating.
    """
    if trials < 1:
        raise ParameterError(f"trials must be >= 1; got {trials}")
    bench = ideal_benchmark(d, beta_star, sigma, support)
    x_s = d.submatrix(bench.support)
    solver = np.linalg.solve(x_s.T @ x_s, x_s.T)  # |S|×n
    rng = make_rng(seed, MC_STREAM)
    est_sq = []  # type: List[np.ndarray]
    pred_sq = []  # type: List[np.ndarray]
    done = 0
    while done < trials:
        m = min(MC_BATCH_SIZE, trials - done)
        eps = sigma * rng.standard_normal((m, d.n))
        err = eps @ solver.T
        est_sq.append(np.sum(err**2, axis=1))
        pred_sq.append(np.sum((err @ x_s.T) ** 2, axis=1))
        done += m
    est = np.concatenate(est_sq)
    pred = np.concatenate(pred_sq)

    def se(v: np.ndarray) -> float:
        if v.size < 2:
            return 0.0
        return float(np.std(v, ddof=1) / math.sqrt(v.size))

    return IdealMonteCarloReport(
        trials=trials,
        mean_sq_estimation_error=float(est.mean()),
        se_estimation=se(est),
        mean_sq_prediction_error=float(pred.mean()),
        se_prediction=se(pred),
        trace_term=bench.trace_term,
        pred_term=bench.pred_term,
        lower_bound=bench.lower_bound,
    )
