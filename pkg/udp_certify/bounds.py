#!/usr/bin/env python

"""
udp_certify/bounds.py

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

Noise calibration, tuning-parameter admissibility, oracle inequalities for
the lasso and the Dantzig selector, multiplicative factors and the benchmark
attained by least squares on the true support.

"""

import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

from cardinal_pythonlib.reprfunc import auto_repr
import numpy as np
from scipy.stats import norm

from udp_certify.conditions import s0_from_distortion, UdpCertificate
from udp_certify.constants import (
    DEFAULT_LAMBDA_MARGIN,
    DEFAULT_UNIVERSAL_C,
    enum_to_json,
    Estimator,
    SUBDESIGN_RANK_TOL,
    Theorem,
)
from udp_certify.distortion import gaussian_distortion_bound
from udp_certify.errors import (
    InputError,
    ParameterError,
    RankError,
    UninformativeCertificateError,
)
from udp_certify.helperfunc import top_s_indices
from udp_certify.linalg import DesignMatrix

log = logging.getLogger(__name__)


# =============================================================================
# Noise calibration
# =============================================================================


class NoiseModel:
    """
    Gaussian noise N(0, σ²I) and the level λ₀ that ‖Xᵀε‖_∞ stays below with
    probability at least ``prob_floor``.
    """

    def __init__(
        self, sigma: float, t: float, col_norm_max: float, p: int
    ) -> None:
        """
        Args:
            sigma:
                Noise standard deviation σ ≥ 0.
            t:
                Calibration parameter t ≥ 1.
            col_norm_max:
                Largest column norm of X.
            p:
                Number of columns, ≥ 2.
        """
        if sigma < 0:
            raise ParameterError(f"sigma must be >= 0; got {sigma}")
        if t < 1:
            raise ParameterError(f"t must be >= 1; got {t}")
        if p < 2:
            raise ParameterError(f"Noise calibration needs p >= 2; got {p}")
        self.sigma = float(sigma)
        self.t = float(t)
        self.col_norm_max = float(col_norm_max)
        self.p = int(p)
        log_p = math.log(p)
        self.lambda0 = (1 + t) * col_norm_max * sigma * math.sqrt(log_p)
        # May be <= 0 for small p; left unclamped.
        self.prob_floor = 1 - math.sqrt(2) / (
            (1 + t) * math.sqrt(math.pi * log_p) * p ** ((1 + t) ** 2 / 2 - 1)
        )

    def __str__(self) -> str:
        return (
            f"σ={self.sigma:.6g}, t={self.t:.6g}: λ₀={self.lambda0:.6g}, "
            f"P(event) ≥ {self.prob_floor:.6g}"
        )

    def __repr__(self) -> str:
        return auto_repr(self)

    @property
    def threshold(self) -> float:
        """
        θ = (1 + t)√(log p): the event is |X_jᵀε| ≤ θ·σ·max‖X_j‖ for all j.
        """
        return (1 + self.t) * math.sqrt(math.log(self.p))

    @property
    def sidak_probability(self) -> float:
        """
        (2Φ(θ) - 1)^p, the exact event probability for orthogonal columns of
        maximal norm and, by Šidák's inequality, a lower bound in general.
        ``prob_floor`` is a closed-form lower bound on this.
        """
        return float((1 - 2 * norm.sf(self.threshold)) ** self.p)

    def as_json_dict(self) -> Dict[str, Any]:
        return {
            "sigma": self.sigma,
            "t": self.t,
            "lambda0": self.lambda0,
            "prob_floor": self.prob_floor,
            "sidak_probability": self.sidak_probability,
            "col_norm_max": self.col_norm_max,
            "p": self.p,
        }


def noise_level(d: DesignMatrix, sigma: float, t: float) -> NoiseModel:
    return NoiseModel(
        sigma=sigma, t=t, col_norm_max=d.column_norm_max(), p=d.p
    )


# =============================================================================
# Tuning
# =============================================================================


def _kappa_multiplier(estimator: Estimator) -> int:
    return 2 if estimator == Estimator.LASSO else 4


def tuning_threshold(
    lambda0: float, kappa0: float, estimator: Estimator
) -> float:
    """
    λ₀/(1 - 2κ₀) for the lasso, λ₀/(1 - 4κ₀) for the Dantzig selector;
    ``inf`` when κ₀ is too large for the estimator.
    """
    denominator = 1 - _kappa_multiplier(estimator) * kappa0
    if denominator <= 0:
        return math.inf
    return lambda0 / denominator


def tuning_ok(
    lam: float, lambda0: float, kappa0: float, estimator: Estimator
) -> bool:
    """
    Strict admissibility: κ₀ below 1/2 (lasso) or 1/4 (Dantzig) and λ above
    the threshold, with no slack.
    """
    if not 0 < kappa0 < 1 / _kappa_multiplier(estimator):
        return False
    return lam > tuning_threshold(lambda0, kappa0, estimator)


def auto_lambda(
    lambda0: float,
    kappa0: float,
    estimator: Estimator,
    margin: float = DEFAULT_LAMBDA_MARGIN,
) -> float:
    """
    ``margin`` times the tuning threshold.
    """
    threshold = tuning_threshold(lambda0, kappa0, estimator)
    if not math.isfinite(threshold):
        raise ParameterError(
            f"kappa0 = {kappa0} admits no lambda for "
            f"{enum_to_json(estimator)} (needs kappa0 < "
            f"1/{_kappa_multiplier(estimator)})"
        )
    return margin * threshold


# =============================================================================
# Oracle inequalities
# =============================================================================


class OracleBoundReport:
    """
    Right-hand side of one oracle inequality, minimized over s ≤ S0.
    """

    def __init__(
        self,
        theorem: Theorem,
        estimator: Estimator,
        lam: float,
        lambda0: float,
        tuning_ok: bool,
        threshold: float,
        prefactor: Optional[float] = None,
        per_s: List[Tuple[int, float]] = None,
        minimizing_s: Optional[int] = None,
        minimizing_subset: Optional[List[int]] = None,
    ) -> None:
        self.theorem = theorem
        self.estimator = estimator
        self.lam = lam
        self.lambda0 = lambda0
        self.tuning_ok = tuning_ok
        self.threshold = threshold
        self.prefactor = prefactor
        self.per_s = per_s or []
        self.minimizing_s = minimizing_s
        self.minimizing_subset = minimizing_subset

    def __str__(self) -> str:
        if self.bound is None:
            return f"{enum_to_json(self.theorem)}: not applicable"
        return (
            f"{enum_to_json(self.theorem)}: {self.bound:.6g} "
            f"(s = {self.minimizing_s})"
        )

    def __repr__(self) -> str:
        return auto_repr(self)

    @property
    def bound(self) -> Optional[float]:
        if not self.per_s:
            return None
        return min(v for _, v in self.per_s)

    def as_json_dict(self) -> Dict[str, Any]:
        return {
            "theorem": enum_to_json(self.theorem),
            "estimator": enum_to_json(self.estimator),
            "bound": self.bound,
            "minimizing_s": self.minimizing_s,
            "minimizing_subset": self.minimizing_subset,
            "prefactor": self.prefactor,
            "tuning_ok": self.tuning_ok,
            "threshold": (
                self.threshold if math.isfinite(self.threshold) else None
            ),
            "lambda": self.lam,
            "lambda0": self.lambda0,
            "per_s": [[s, v] for s, v in self.per_s],
        }


def top_s_tail(beta_star: np.ndarray) -> np.ndarray:
    """
    tails[s] = ‖β*_{S^c}‖₁ with S the s largest |β*_i|, for s = 0..p.
    """
    mags = np.sort(np.abs(beta_star))[::-1]
    total = mags.sum()
    return np.concatenate(([total], total - np.cumsum(mags)))


def _evaluate(
    theorem: Theorem,
    beta_star: np.ndarray,
    cert: UdpCertificate,
    lam: float,
    lambda0: float,
    estimator: Estimator,
    prefactor_fn,
    term_fn,
) -> OracleBoundReport:
    beta_star = np.asarray(beta_star, dtype=float)
    if beta_star.ndim != 1 or beta_star.size < 1:
        raise InputError("Target must be a nonempty vector")
    if not cert.informative:
        raise UninformativeCertificateError(
            "Certificate has S0 = 0; no oracle inequality applies"
        )
    threshold = tuning_threshold(lambda0, cert.kappa0, estimator)
    ok = tuning_ok(lam, lambda0, cert.kappa0, estimator)
    report = OracleBoundReport(
        theorem=theorem,
        estimator=estimator,
        lam=lam,
        lambda0=lambda0,
        tuning_ok=ok,
        threshold=threshold,
    )
    if not ok:
        log.warning(
            f"{enum_to_json(theorem)}: tuning condition fails "
            f"(λ = {lam:.6g}, threshold {threshold:.6g}, κ₀ = "
            f"{cert.kappa0:.6g}); no bound"
        )
        return report
    prefactor = prefactor_fn()
    tails = top_s_tail(beta_star)
    max_s = min(cert.s0, beta_star.size)
    report.prefactor = prefactor
    report.per_s = [
        (s, prefactor * term_fn(s, float(tails[s])))
        for s in range(1, max_s + 1)
    ]
    values = [v for _, v in report.per_s]
    best = int(np.argmin(values))  # first, i.e. smallest s, on ties
    report.minimizing_s = best + 1
    report.minimizing_subset = top_s_indices(beta_star, best + 1)
    log.debug(str(report))
    return report


def l1_bound(
    beta_star: np.ndarray,
    cert: UdpCertificate,
    lam: float,
    lambda0: float,
    estimator: Estimator,
) -> OracleBoundReport:
    """
    ℓ1 estimation error bound:

        ‖β̂ - β*‖₁ ≤ c/((1 - λ₀/λ) - cκ₀) · min_s (λΔ²s + ‖β*_{S^c}‖₁),

    with c = 2 for the lasso and 4 for the Dantzig selector.
    """
    c = _kappa_multiplier(estimator)
    theorem = (
        Theorem.LASSO_L1
        if estimator == Estimator.LASSO
        else Theorem.DANTZIG_L1
    )
    return _evaluate(
        theorem,
        beta_star,
        cert,
        lam,
        lambda0,
        estimator,
        prefactor_fn=lambda: c / ((1 - lambda0 / lam) - c * cert.kappa0),
        term_fn=lambda s, tail: lam * cert.delta**2 * s + tail,
    )


def pred_bound(
    beta_star: np.ndarray,
    cert: UdpCertificate,
    lam: float,
    lambda0: float,
    estimator: Estimator,
) -> OracleBoundReport:
    """
    Prediction error bound, the same for both estimators:

        ‖X(β̂ - β*)‖₂ ≤ min_s (4λΔ√s + ‖β*_{S^c}‖₁/(Δ√s)).

    ``lambda0`` is needed only to check the tuning hypotheses.
    """
    theorem = (
        Theorem.LASSO_PRED
        if estimator == Estimator.LASSO
        else Theorem.DANTZIG_PRED
    )
    return _evaluate(
        theorem,
        beta_star,
        cert,
        lam,
        lambda0,
        estimator,
        prefactor_fn=lambda: 1.0,
        term_fn=lambda s, tail: (
            4 * lam * cert.delta * math.sqrt(s)
            + tail / (cert.delta * math.sqrt(s))
        ),
    )


# =============================================================================
# Multiplicative factors
# =============================================================================


class MultiplicativeFactors:
    """
    The factors multiplying the benchmarks in the ℓ1 and prediction bounds,
    in terms of the distortion and, if C is given, of its Gaussian-design
    value.
    """

    def __init__(
        self,
        c_mult: float,
        c_mult_prime: float,
        c_mult_optimal: Optional[float] = None,
        c_mult_prime_optimal: Optional[float] = None,
    ) -> None:
        self.c_mult = c_mult
        self.c_mult_prime = c_mult_prime
        self.c_mult_optimal = c_mult_optimal
        self.c_mult_prime_optimal = c_mult_prime_optimal

    def __repr__(self) -> str:
        return auto_repr(self)

    def as_json_dict(self) -> Dict[str, Any]:
        return {
            "c_mult": self.c_mult,
            "c_mult_prime": self.c_mult_prime,
            "c_mult_optimal": self.c_mult_optimal,
            "c_mult_prime_optimal": self.c_mult_prime_optimal,
        }


def mult_factors(
    delta: float, rho_n: float, n: int, p: float, c: float = None
) -> MultiplicativeFactors:
    """
    C_mult = δ²√(log p)/ρ_n and C'_mult = δ√(log p)/ρ_n; with a universal
    constant C, also C·p(1 + log(p/n))√(log p)/(nρ_n) and
    C·√(p·log p·(1 + log(p/n)))/(ρ_n√n).
    """
    if not rho_n > 0:
        raise ParameterError(f"rho_n must be > 0; got {rho_n}")
    if not 2 <= n <= p:
        raise ParameterError(f"Need 2 <= n <= p; got n = {n}, p = {p}")
    if delta < 1:
        raise ParameterError(f"Distortion is at least 1; got {delta}")
    root_log_p = math.sqrt(math.log(p))
    factors = MultiplicativeFactors(
        c_mult=delta**2 * root_log_p / rho_n,
        c_mult_prime=delta * root_log_p / rho_n,
    )
    if c is not None:
        if c <= 0:
            raise ParameterError(f"Universal constant must be > 0; got {c}")
        spread = 1 + math.log(p / n)
        factors.c_mult_optimal = c * p * spread * root_log_p / (n * rho_n)
        factors.c_mult_prime_optimal = (
            c * math.sqrt(p * math.log(p) * spread) / (rho_n * math.sqrt(n))
        )
    return factors


# =============================================================================
# Sparsity level
# =============================================================================


def optimal_sparsity_level(n: int, p: int) -> float:
    """
    n/(1 + log(p/n)), the largest sparsity at which ℓ1 recovery from n
    Gaussian measurements is possible, up to a constant.
    """
    if not 1 <= n <= p:
        raise ParameterError(f"Need 1 <= n <= p; got n = {n}, p = {p}")
    return n / (1 + math.log(p / n))


def sparsity_level_comparison(
    n: int, p: int, kappa0: float, c: float = DEFAULT_UNIVERSAL_C
) -> Dict[str, Any]:
    """
    S0 from the Gaussian distortion bound against κ₀²·n/(1 + log(p/n)).
    """
    delta = gaussian_distortion_bound(n, p, c)
    s0 = s0_from_distortion(delta, kappa0, p)
    reference = kappa0**2 * optimal_sparsity_level(n, p) / c**2
    return {
        "delta": delta,
        "S0": s0,
        "reference": reference,
        "ratio": s0 / reference if reference > 0 else None,
    }


# =============================================================================
# Least squares on the true support
# =============================================================================


class IdealBenchmark:
    """
    Expected errors of least squares on a known support S, and the
    corresponding benchmark rates.
    """

    def __init__(
        self,
        support: List[int],
        trace_term: float,
        pred_term: float,
        l1_benchmark: float,
        pred_benchmark: float,
        lower_bound: float,
    ) -> None:
        """
        Args:
            support:
                S.
            trace_term:
                σ²·Tr((X_SᵀX_S)⁻¹), the expected ‖β̂_S - β*_S‖₂².
            pred_term:
                σ²|S|, the expected ‖X_S(β̂_S - β*_S)‖₂².
            l1_benchmark:
                σ|S|/ρ₁ + ‖β*_{S^c}‖₁.
            pred_benchmark:
                σ√|S| + ρ₁‖β*_{S^c}‖₁.
            lower_bound:
                σ²|S|/ρ₁², which ``trace_term`` always exceeds.
        """
        self.support = support
        self.trace_term = trace_term
        self.pred_term = pred_term
        self.l1_benchmark = l1_benchmark
        self.pred_benchmark = pred_benchmark
        self.lower_bound = lower_bound

    def __repr__(self) -> str:
        return auto_repr(self)

    def as_json_dict(self) -> Dict[str, Any]:
        return {
            "support": self.support,
            "trace_term": self.trace_term,
            "pred_term": self.pred_term,
            "l1_benchmark": self.l1_benchmark,
            "pred_benchmark": self.pred_benchmark,
            "lower_bound": self.lower_bound,
        }


def ideal_benchmark(
    d: DesignMatrix,
    beta_star: np.ndarray,
    sigma: float,
    support: Sequence[int],
) -> IdealBenchmark:
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0; got {sigma}")
    beta_star = np.asarray(beta_star, dtype=float)
    if beta_star.shape != (d.p,):
        raise InputError(
            f"Target has shape {beta_star.shape}; expected ({d.p},)"
        )
    idx = sorted(set(int(j) for j in support))
    if not idx:
        raise ParameterError("Support must be nonempty")
    x_s = d.submatrix(idx)
    sv = np.linalg.svd(x_s, compute_uv=False)
    if len(idx) > d.n or sv[-1] <= SUBDESIGN_RANK_TOL * d.largest_singular():
        raise RankError(f"X_S is rank deficient on support {idx}")
    s = len(idx)
    rho_1 = d.largest_singular()
    off = np.ones(d.p, dtype=bool)
    off[idx] = False
    tail = float(np.abs(beta_star[off]).sum())
    return IdealBenchmark(
        support=idx,
        trace_term=float(sigma**2 * np.sum(1 / sv**2)),
        pred_term=sigma**2 * s,
        l1_benchmark=sigma * s / rho_1 + tail,
        pred_benchmark=sigma * math.sqrt(s) + rho_1 * tail,
        lower_bound=sigma**2 * s / rho_1**2,
    )
