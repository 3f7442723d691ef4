#!/usr/bin/env python

"""
udp_certify/conditions.py

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

Design conditions: UDP certificates (from the distortion, from the
restricted isometry constant, from restricted eigenvalue or compatibility
constants), randomized falsification of UDP and H_{S,1} claims, exact
restricted isometry constants for small problems and upper estimates of
restricted eigenvalue and compatibility constants.

A design satisfies UDP(S0, κ₀, Δ) if for every γ ∈ R^p, every s ≤ S0 and
every support S with |S| = s,

    ‖γ_S‖₁ ≤ Δ·√s·‖Xγ‖₂ + κ₀·‖γ‖₁.

For fixed γ and s the left-hand side is largest on the s largest |γ_i|, so
falsifiers only test those supports.

"""

import itertools
import logging
import math
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

from cardinal_pythonlib.reprfunc import auto_repr
from mip import minimize, Model, OptimizationStatus, xsum
import numpy as np
from scipy.special import comb

from udp_certify.constants import (
    CONE_FISTA_ITERS,
    CONE_FISTA_TOL,
    CONE_REPAIR_MARGIN,
    CONE_ROW_CHUNK,
    CONE_STREAM,
    CONE_ZERO_SCREEN,
    ConeKind,
    DEFAULT_CONE_RESTARTS,
    DEFAULT_FALSIFY_BUDGET,
    enum_to_json,
    FALSIFY_BATCH_SIZE,
    FALSIFY_STREAM,
    FLOOR_GUARD,
    JsonKeys,
    KERNEL_CONE_TOL,
    KERNEL_PERTURBATION_SCALE,
    LP_TOL,
    MAX_CONE_SUPPORTS,
    MAX_KERNEL_LPS,
    MAX_RIP_SUPPORTS,
    MAX_SIGN_PATTERNS,
    Provenance,
    RE_ANGLE_GRID,
    RE_REFINE_POINTS,
    RE_REFINE_ROUNDS,
    RIP_CHUNK_SIZE,
    VIOLATION_SLACK,
)
from udp_certify.distortion import DistortionEstimate
from udp_certify.errors import (
    BudgetError,
    ConditionFailedError,
    InputError,
    ParameterError,
)
from udp_certify.helperfunc import as_float_list, make_rng, top_s_indices
from udp_certify.linalg import DesignMatrix

log = logging.getLogger(__name__)

RIP_THETA_LIMIT = math.sqrt(2.0) - 1


# =============================================================================
# UdpCertificate
# =============================================================================


class UdpCertificate:
    """
    A claim that a design satisfies UDP(S0, κ₀, Δ), with its provenance.
    """

    def __init__(
        self,
        s0: int,
        kappa0: float,
        delta: float,
        provenance: Provenance,
        inputs: Dict[str, Any] = None,
    ) -> None:
        """
        Args:
            s0:
                Sparsity level S0 (0 means the certificate says nothing).
            kappa0:
                κ₀ > 0. Producers that need κ₀ < 1/2 check it themselves;
                certificates from cone constants carry c₀ as given.
            delta:
                Δ > 0.
            provenance:
                Where the certificate came from.
            inputs:
                The source quantities, by name.
        """
        if s0 < 0:
            raise ParameterError(f"S0 must be >= 0; got {s0}")
        if not kappa0 > 0:
            raise ParameterError(f"kappa0 must be > 0; got {kappa0}")
        if not (delta > 0 and math.isfinite(delta)):
            raise ParameterError(f"Delta must be finite and > 0; got {delta}")
        self.s0 = int(s0)
        self.kappa0 = float(kappa0)
        self.delta = float(delta)
        self.provenance = provenance
        self.inputs = dict(inputs or {})

    def __str__(self) -> str:
        return (
            f"UDP(S0={self.s0}, κ₀={self.kappa0:.6g}, Δ={self.delta:.6g}) "
            f"[{enum_to_json(self.provenance)}]"
        )

    def __repr__(self) -> str:
        return auto_repr(self)

    @property
    def informative(self) -> bool:
        return self.s0 >= 1

    def as_json_dict(self) -> Dict[str, Any]:
        return {
            JsonKeys.S0: self.s0,
            JsonKeys.KAPPA0: self.kappa0,
            JsonKeys.DELTA: self.delta,
            JsonKeys.PROVENANCE: enum_to_json(self.provenance),
            JsonKeys.INPUTS: dict(self.inputs),
        }

    @classmethod
    def from_json_dict(cls, d: Dict[str, Any]) -> "UdpCertificate":
        try:
            return cls(
                s0=int(d[JsonKeys.S0]),
                kappa0=float(d[JsonKeys.KAPPA0]),
                delta=float(d[JsonKeys.DELTA]),
                provenance=Provenance[
                    d.get(JsonKeys.PROVENANCE, Provenance.ASSUMED.name)
                ],
                inputs=d.get(JsonKeys.INPUTS, {}),
            )
        except KeyError as e:
            raise InputError(f"UDP certificate lacks field {e}")
        except (TypeError, ValueError) as e:
            raise InputError(f"Bad UDP certificate: {e}")


# =============================================================================
# Counterexample and ConditionReport
# =============================================================================


class Counterexample:
    """
    A vector violating a UDP or H_{S,1} inequality on a given support.
    ``gamma`` is scaled to unit ℓ1 norm (both inequalities are homogeneous).
    """

    def __init__(
        self,
        gamma: np.ndarray,
        subset: List[int],
        s: int,
        lhs: float,
        rhs: float,
    ) -> None:
        self.gamma = gamma
        self.subset = subset
        self.s = s
        self.lhs = lhs
        self.rhs = rhs

    def __repr__(self) -> str:
        return auto_repr(self)

    @property
    def excess(self) -> float:
        return self.lhs - self.rhs

    def as_json_dict(self) -> Dict[str, Any]:
        return {
            "gamma": as_float_list(self.gamma),
            "subset": list(self.subset),
            "s": self.s,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "excess": self.excess,
        }


class ConditionReport:
    """
    Results of the ``conditions`` pipeline.
    """

    def __init__(
        self,
        rip_theta: Optional[float] = None,
        re_kappa_upper: Optional[float] = None,
        compat_phi_upper: Optional[float] = None,
        udp_counterexample: Optional[Counterexample] = None,
        h_counterexample: Optional[Counterexample] = None,
        parameters: Dict[str, Any] = None,
    ) -> None:
        self.rip_theta = rip_theta
        self.re_kappa_upper = re_kappa_upper
        self.compat_phi_upper = compat_phi_upper
        self.udp_counterexample = udp_counterexample
        self.h_counterexample = h_counterexample
        self.parameters = dict(parameters or {})

    def __repr__(self) -> str:
        return auto_repr(self)

    def as_json_dict(self) -> Dict[str, Any]:
        def cx(c: Optional[Counterexample]) -> Optional[Dict[str, Any]]:
            return None if c is None else c.as_json_dict()

        return {
            "rip_theta": self.rip_theta,
            "re_kappa_upper": self.re_kappa_upper,
            "compat_phi_upper": self.compat_phi_upper,
            "udp_counterexample": cx(self.udp_counterexample),
            "h_counterexample": cx(self.h_counterexample),
            "parameters": self.parameters,
        }


# =============================================================================
# Certificates
# =============================================================================


def _check_kappa0(kappa0: float) -> None:
    if not 0 < kappa0 < 0.5:
        raise ParameterError(f"kappa0 must lie in (0, 1/2); got {kappa0}")


def s0_from_distortion(delta_upper: float, kappa0: float, p: int) -> int:
    """
    ⌊(κ₀/δ)²·p⌋. A tiny guard stops values like 3.9999999999999996 from
    flooring to 3.
    """
    return int(math.floor((kappa0 / delta_upper) ** 2 * p + FLOOR_GUARD))


def udp_from_distortion(
    est: DistortionEstimate, rho_n: float, kappa0: float, p: int
) -> UdpCertificate:
    """
    UDP(⌊(κ₀/δ)²p⌋, κ₀, 2δ/ρ_n) from an upper bound δ on the kernel
    distortion and the smallest singular value ρ_n.
    """
    _check_kappa0(kappa0)
    if not rho_n > 0:
        raise ParameterError(f"rho_n must be > 0; got {rho_n}")
    if not math.isfinite(est.upper):
        raise ParameterError("Distortion upper bound is not finite")
    s0 = s0_from_distortion(est.upper, kappa0, p)
    if s0 == 0:
        log.warning(
            f"Uninformative certificate: (κ₀/δ)²p = "
            f"{(kappa0 / est.upper) ** 2 * p:.4g} < 1"
        )
    return UdpCertificate(
        s0=s0,
        kappa0=kappa0,
        delta=2 * est.upper / rho_n,
        provenance=Provenance.DISTORTION,
        inputs={"delta_upper": est.upper, "rho_n": rho_n, "p": p},
    )


def udp_from_rip(theta5s: float, s: int, kappa0: float) -> UdpCertificate:
    """
    UDP(S, κ₀, Δ) from θ_{5S} < √2 - 1, with the smallest Δ allowed:

        Δ = 1 / (√(1 - θ) + ((κ₀ - 1)/(2κ₀))·√(1 + θ)),

    valid for [1 + 2√((1 - θ)/(1 + θ))]⁻¹ < κ₀ < 1/2.
    """
    if not 0 <= theta5s < RIP_THETA_LIMIT:
        raise ParameterError(
            f"theta_5S must satisfy 0 <= theta < sqrt(2) - 1; got {theta5s}"
        )
    if s < 1:
        raise ParameterError(f"S must be >= 1; got {s}")
    lower = 1 / (1 + 2 * math.sqrt((1 - theta5s) / (1 + theta5s)))
    if not lower < kappa0 < 0.5:
        raise ParameterError(
            f"kappa0 must satisfy {lower:.6g} < kappa0 < 1/2 for "
            f"theta_5S = {theta5s}; got {kappa0}"
        )
    denominator = math.sqrt(1 - theta5s) + (
        (kappa0 - 1) / (2 * kappa0)
    ) * math.sqrt(1 + theta5s)
    assert denominator > 0, "Bug: RIP denominator not positive"
    return UdpCertificate(
        s0=s,
        kappa0=kappa0,
        delta=1 / denominator,
        provenance=Provenance.RIP,
        inputs={"theta_5S": theta5s, "S": s},
    )


def udp_from_cone(
    constant: float, s: int, c0: float, kind: ConeKind
) -> UdpCertificate:
    """
    UDP(S, c₀, 1/constant) from a restricted eigenvalue or compatibility
    constant.
    """
    if not constant > 0:
        raise ConditionFailedError(
            f"{enum_to_json(kind)} constant is {constant}; condition fails"
        )
    if not c0 > 0:
        raise ParameterError(f"c0 must be > 0; got {c0}")
    if s < 1:
        raise ParameterError(f"S must be >= 1; got {s}")
    if kind == ConeKind.RE:
        provenance = Provenance.RE
    else:
        provenance = Provenance.COMPATIBILITY
    return UdpCertificate(
        s0=s,
        kappa0=c0,
        delta=1 / constant,
        provenance=provenance,
        inputs={"constant": constant, "S": s, "c0": c0},
    )


# =============================================================================
# Interpolation inequality
# =============================================================================


def interpolation_check(
    d: DesignMatrix, delta_upper: float, gamma: np.ndarray
) -> float:
    """
    Signed residual of

        ‖γ‖₂ ≤ (δ/√p)‖γ‖₁ + (2δ/ρ_n)‖Xγ‖₂,

    i.e. right-hand side minus left-hand side; non-negative whenever
    ``delta_upper`` bounds the kernel distortion.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (d.p,):
        raise InputError(
            f"gamma has shape {gamma.shape}; expected ({d.p},)"
        )
    rho_n = d.smallest_singular()
    return float(
        (delta_upper / math.sqrt(d.p)) * np.abs(gamma).sum()
        + (2 * delta_upper / rho_n) * np.linalg.norm(d.entries @ gamma)
        - np.linalg.norm(gamma)
    )


# =============================================================================
# Falsification
# =============================================================================


def _normalize_l1(gammas: np.ndarray) -> np.ndarray:
    l1 = np.abs(gammas).sum(axis=1, keepdims=True)
    keep = l1[:, 0] > 0
    return gammas[keep] / l1[keep]


def _sample_gammas(
    d: DesignMatrix, m: int, max_support: int, rng: np.random.Generator
) -> np.ndarray:
    """
    Mixture of four families, cycling by row: Gaussian, kernel vectors,
    kernel vectors plus a small perturbation, and sparse Gaussian vectors.
    """
    p = d.p
    k = d.kernel_dim
    gauss = rng.standard_normal((m, p))
    if k > 0:
        kern = rng.standard_normal((m, k)) @ np.asarray(d.kernel_basis).T
        kern /= np.linalg.norm(kern, axis=1, keepdims=True)
    else:
        kern = rng.standard_normal((m, p))
    perturbed = kern + (
        KERNEL_PERTURBATION_SCALE / math.sqrt(p)
    ) * rng.standard_normal((m, p))
    sizes = rng.integers(1, max(1, min(max_support, p)) + 1, size=m)
    ranks = np.argsort(np.argsort(rng.random((m, p)), axis=1), axis=1)
    sparse = np.where(ranks < sizes[:, None], rng.standard_normal((m, p)), 0)
    family = np.arange(m) % 4
    return np.where(
        (family == 0)[:, None],
        gauss,
        np.where(
            (family == 1)[:, None],
            kern,
            np.where((family == 2)[:, None], perturbed, sparse),
        ),
    )


def _worst_excess(
    gammas: np.ndarray,
    x_norms: np.ndarray,
    max_s: int,
    delta_coeffs: np.ndarray,
    kappa: float,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    For ℓ1-normalized rows γ: top-s partial sums of |γ| (s = 1..max_s)
    against coefficient_s·‖Xγ‖₂ + κ. Returns per row the worst excess, its s,
    and the corresponding left- and right-hand sides.
    """
    top = -np.sort(-np.abs(gammas), axis=1)[:, :max_s]
    lhs = np.cumsum(top, axis=1)
    rhs = delta_coeffs[None, :] * x_norms[:, None] + kappa
    excess = lhs - rhs
    worst = np.argmax(excess, axis=1)
    rows = np.arange(gammas.shape[0])
    return excess[rows, worst], worst + 1, lhs[rows, worst], rhs[rows, worst]


def _falsify(
    d: DesignMatrix,
    max_s: int,
    delta_coeffs: np.ndarray,
    kappa: float,
    budget: int,
    seed: int,
    what: str,
    recheck: Callable[[np.ndarray], Counterexample],
) -> Optional[Counterexample]:
    """
    Batched search; a hit is reported only after ``recheck`` evaluates it
    on its own and confirms the excess.
    """
    rng = make_rng(seed, FALSIFY_STREAM)
    x = np.asarray(d.entries)
    done = 0
    while done < budget:
        m = min(FALSIFY_BATCH_SIZE, budget - done)
        gammas = _normalize_l1(_sample_gammas(d, m, max_s, rng))
        done += m
        if gammas.shape[0] == 0:
            continue
        x_norms = np.linalg.norm(gammas @ x.T, axis=1)
        excess = _worst_excess(
            gammas, x_norms, max_s, delta_coeffs, kappa
        )[0]
        for i in np.flatnonzero(excess > VIOLATION_SLACK):
            cx = recheck(gammas[i].copy())
            if cx.excess <= VIOLATION_SLACK:
                log.debug(f"{what} candidate failed its re-check; skipped")
                continue
            log.info(
                f"{what} counterexample after {done} samples: s = {cx.s}, "
                f"excess {cx.excess:.3g}"
            )
            return cx
    log.info(f"No {what} counterexample in {budget} samples")
    return None


def udp_violation(
    d: DesignMatrix, cert: UdpCertificate, gamma: np.ndarray
) -> Counterexample:
    """
    Evaluates a single γ against the certificate on its worst support.
    The returned object has a positive ``excess`` if γ violates UDP.
    """
    if cert.s0 < 1:
        raise ParameterError("Certificate has S0 = 0; nothing to evaluate")
    gammas = _normalize_l1(np.asarray(gamma, dtype=float).reshape(1, -1))
    if gammas.shape[0] == 0:
        raise InputError("Cannot evaluate the zero vector")
    max_s = min(cert.s0, d.p)
    coeffs = cert.delta * np.sqrt(np.arange(1, max_s + 1))
    x_norms = np.linalg.norm(gammas @ np.asarray(d.entries).T, axis=1)
    _, s_vals, lhs, rhs = _worst_excess(
        gammas, x_norms, max_s, coeffs, cert.kappa0
    )
    s = int(s_vals[0])
    return Counterexample(
        gamma=gammas[0],
        subset=top_s_indices(gammas[0], s),
        s=s,
        lhs=float(lhs[0]),
        rhs=float(rhs[0]),
    )


def h_violation(
    d: DesignMatrix, s: int, kappa: float, gamma: np.ndarray
) -> Counterexample:
    """
    Evaluates a single γ against H_{S,1}(κ) on its worst support.
    """
    gammas = _normalize_l1(np.asarray(gamma, dtype=float).reshape(1, -1))
    if gammas.shape[0] == 0:
        raise InputError("Cannot evaluate the zero vector")
    s = min(s, d.p)
    lam_hat = d.column_norm_max()
    top = np.sort(np.abs(gammas[0]))[::-1][:s].sum()
    rhs = lam_hat * s * np.linalg.norm(d.entries @ gammas[0]) + kappa
    return Counterexample(
        gamma=gammas[0],
        subset=top_s_indices(gammas[0], s),
        s=s,
        lhs=float(top),
        rhs=float(rhs),
    )


def udp_falsify(
    d: DesignMatrix,
    cert: UdpCertificate,
    budget: int = DEFAULT_FALSIFY_BUDGET,
    seed: int = 0,
) -> Optional[Counterexample]:
    """
    Searches ``budget`` random vectors for a violation of the certificate.
    Finding none is evidence, not proof.
    """
    if budget < 1:
        raise ParameterError(f"budget must be >= 1; got {budget}")
    if cert.s0 < 1:
        log.warning("Certificate has S0 = 0; UDP falsification is vacuous")
        return None
    max_s = min(cert.s0, d.p)
    coeffs = cert.delta * np.sqrt(np.arange(1, max_s + 1))
    log.info(f"Falsifying {cert} with {budget} samples")
    return _falsify(
        d,
        max_s,
        coeffs,
        cert.kappa0,
        budget,
        seed,
        "UDP",
        lambda gamma: udp_violation(d, cert, gamma),
    )


def h_falsify(
    d: DesignMatrix,
    s: int,
    kappa: float,
    budget: int = DEFAULT_FALSIFY_BUDGET,
    seed: int = 0,
) -> Optional[Counterexample]:
    """
    Searches for a violation of H_{S,1}(κ):

        ‖γ_S‖₁ ≤ λ̂·S·‖Xγ‖₂ + κ‖γ‖₁  for |S| ≤ S,

    with λ̂ the largest column norm. Only the right-hand side's factor S is
    fixed, so the worst support has exactly S elements.
    """
    if budget < 1:
        raise ParameterError(f"budget must be >= 1; got {budget}")
    if not 0 < kappa < 0.5:
        raise ParameterError(f"kappa must lie in (0, 1/2); got {kappa}")
    if s < 1:
        raise ParameterError(f"S must be >= 1; got {s}")
    max_s = min(s, d.p)
    coeffs = np.full(max_s, d.column_norm_max() * s)
    log.info(f"Falsifying H_(S={s},1)(κ={kappa}) with {budget} samples")
    return _falsify(
        d,
        max_s,
        coeffs,
        kappa,
        budget,
        seed,
        "H_(S,1)",
        lambda gamma: h_violation(d, s, kappa, gamma),
    )


# =============================================================================
# Restricted isometry constant
# =============================================================================


def _chunks(it: Iterator[Tuple[int, ...]], size: int) -> Iterator[np.ndarray]:
    while True:
        block = list(itertools.islice(it, size))
        if not block:
            return
        yield np.array(block, dtype=int)


def rip_constant(d: DesignMatrix, s: int) -> float:
    """
    θ_S = max over supports T, |T| ≤ S, of
    max(λ_max(X_TᵀX_T) - 1, 1 - λ_min(X_TᵀX_T)).

    Eigenvalues of a principal submatrix interlace those of the full matrix,
    so supports of size exactly S suffice.
    """
    p = d.p
    if not 1 <= s <= p:
        raise ParameterError(f"Need 1 <= S <= p = {p}; got S = {s}")
    n_supports = int(comb(p, s, exact=True))
    if n_supports > MAX_RIP_SUPPORTS:
        raise BudgetError(
            f"RIP enumeration needs {n_supports} supports of size {s}; "
            f"limit is {MAX_RIP_SUPPORTS}"
        )
    log.info(f"Computing θ_{s} over {n_supports} supports")
    gram = np.asarray(d.entries).T @ np.asarray(d.entries)
    theta = -math.inf
    for block in _chunks(itertools.combinations(range(p), s), RIP_CHUNK_SIZE):
        sub = gram[block[:, :, None], block[:, None, :]]
        eig = np.linalg.eigvalsh(sub)
        theta = max(
            theta,
            float(np.max(np.maximum(eig[:, -1] - 1, 1 - eig[:, 0]))),
        )
    return theta


# =============================================================================
# Cone-restricted constants
# =============================================================================
#
# For a support T and signs σ on T write γ_T = σ∘a with a ≥ 0. Fixing
# Σa = ‖γ_T‖₁ = 1 turns the compatibility problem into
#
#     min ‖Xγ‖₂  over a in the unit simplex, ‖γ_{T^c}‖₁ ≤ c₀,
#
# which is convex. For the restricted eigenvalue the direction u of γ_T
# (‖u‖₂ = 1) is fixed instead; the remaining problem over γ_{T^c} in the ℓ1
# ball of radius c₀‖u‖₁ is convex, and u is searched over a refined grid.
# Every row solved is a feasible cone point, so each value is a valid upper
# bound on the constant.


def _enumerate_supports(
    p: int, s: int, rng: np.random.Generator
) -> List[Tuple[int, ...]]:
    total = sum(int(comb(p, t, exact=True)) for t in range(1, s + 1))
    if total <= MAX_CONE_SUPPORTS:
        return [
            support
            for t in range(1, s + 1)
            for support in itertools.combinations(range(p), t)
        ]
    log.info(
        f"{total} supports exceed {MAX_CONE_SUPPORTS}; sampling "
        f"{MAX_CONE_SUPPORTS}"
    )
    sizes = rng.integers(1, s + 1, size=MAX_CONE_SUPPORTS)
    return [
        tuple(sorted(int(j) for j in rng.choice(p, size=t, replace=False)))
        for t in sizes
    ]


def _complements(on_idx: np.ndarray, p: int) -> np.ndarray:
    ns, t = on_idx.shape
    mask = np.ones((ns, p), dtype=bool)
    mask[np.arange(ns)[:, None], on_idx] = False
    return np.nonzero(mask)[1].reshape(ns, p - t)


def _sign_patterns(
    t: int, restarts: int, rng: np.random.Generator
) -> np.ndarray:
    """
    Sign patterns on a support of size t with a leading +1 (γ and -γ give
    the same ratios). All of them when there are few enough, else a sample.
    """
    if 2 ** (t - 1) <= MAX_SIGN_PATTERNS:
        tail = np.array(
            list(itertools.product((1.0, -1.0), repeat=t - 1)), dtype=float
        ).reshape(2 ** (t - 1), t - 1)
    else:
        tail = rng.choice(
            (1.0, -1.0), size=(max(restarts, MAX_SIGN_PATTERNS), t - 1)
        )
    return np.hstack([np.ones((tail.shape[0], 1)), tail])


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """
    Euclidean projection of each row onto {a ≥ 0, Σa = 1}.
    """
    m, k = v.shape
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    positive = u * np.arange(1, k + 1) > css
    rho = k - 1 - np.argmax(positive[:, ::-1], axis=1)
    theta = css[np.arange(m), rho] / (rho + 1)
    return np.maximum(v - theta[:, None], 0.0)


def _project_l1_ball(v: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """
    Euclidean projection of each row onto the ℓ1 ball of its own radius
    (radius > 0).
    """
    a = np.abs(v)
    out = v.copy()
    outside = a.sum(axis=1) > radius
    if np.any(outside):
        r = radius[outside][:, None]
        out[outside] = (
            np.sign(v[outside]) * r * _project_simplex(a[outside] / r)
        )
    return out


def _scatter(
    on: np.ndarray,
    off: np.ndarray,
    on_idx: np.ndarray,
    off_idx: np.ndarray,
    p: int,
) -> np.ndarray:
    out = np.empty((on.shape[0], p))
    np.put_along_axis(out, on_idx, on, axis=1)
    np.put_along_axis(out, off_idx, off, axis=1)
    return out


class _ConeSlices:
    """
    One convex slice of the cone {‖γ_{T^c}‖₁ ≤ c₀‖γ_T‖₁} per row: either
    γ_T = σ∘a with a in the unit simplex (``signs`` given) or γ_T = u fixed
    (``directions`` given).
    """

    def __init__(
        self,
        on_idx: np.ndarray,
        off_idx: np.ndarray,
        c0: float,
        signs: np.ndarray = None,
        directions: np.ndarray = None,
    ) -> None:
        self.on_idx = on_idx
        self.off_idx = off_idx
        self.c0 = c0
        self.signs = signs
        self.directions = directions
        mass = 1.0 if signs is not None else np.abs(directions).sum(axis=1)
        self.radius = (
            c0 * (1 - CONE_REPAIR_MARGIN) * np.ones(len(on_idx)) * mass
        )

    def __len__(self) -> int:
        return len(self.on_idx)

    def chunk(self, sl: slice) -> "_ConeSlices":
        return _ConeSlices(
            self.on_idx[sl],
            self.off_idx[sl],
            self.c0,
            signs=None if self.signs is None else self.signs[sl],
            directions=(
                None if self.directions is None else self.directions[sl]
            ),
        )

    def start(self, p: int) -> np.ndarray:
        if self.signs is not None:
            on = self.signs / self.on_idx.shape[1]
        else:
            on = self.directions
        return _scatter(
            on, np.zeros(self.off_idx.shape), self.on_idx, self.off_idx, p
        )

    def project(self, gammas: np.ndarray) -> np.ndarray:
        if self.signs is not None:
            on = np.take_along_axis(gammas, self.on_idx, axis=1)
            on = self.signs * _project_simplex(self.signs * on)
        else:
            on = self.directions
        off = _project_l1_ball(
            np.take_along_axis(gammas, self.off_idx, axis=1), self.radius
        )
        return _scatter(on, off, self.on_idx, self.off_idx, gammas.shape[1])


def _projected_fista(
    x: np.ndarray, step: float, slices: _ConeSlices
) -> np.ndarray:
    """
    Minimizes ½‖Xγ‖₂² over each row's slice by accelerated projected
    gradient, restarting the momentum of a row whenever it points uphill.
    Returns the final iterates, all feasible.
    """
    z = slices.start(x.shape[1])
    y = z.copy()
    t = np.ones(len(slices))
    for _ in range(CONE_FISTA_ITERS):
        z_new = slices.project(y - step * ((y @ x.T) @ x))
        diff = z_new - z
        uphill = np.einsum("ij,ij->i", y - z_new, diff) > 0
        t_new = (1 + np.sqrt(1 + 4 * t**2)) / 2
        momentum = np.where(uphill, 0.0, (t - 1) / t_new)
        t = np.where(uphill, 1.0, t_new)
        y = z_new + momentum[:, None] * diff
        z = z_new
        if np.max(np.abs(diff)) <= CONE_FISTA_TOL:
            break
    return z


def _minimize_slices(
    x: np.ndarray, step: float, slices: _ConeSlices
) -> np.ndarray:
    out = np.empty((len(slices), x.shape[1]))
    for lo in range(0, len(slices), CONE_ROW_CHUNK):
        sl = slice(lo, lo + CONE_ROW_CHUNK)
        out[sl] = _projected_fista(x, step, slices.chunk(sl))
    return out


def _cone_values(
    x: np.ndarray, gammas: np.ndarray, on_idx: np.ndarray, kind: ConeKind
) -> np.ndarray:
    num = np.linalg.norm(gammas @ x.T, axis=1)
    on = np.take_along_axis(gammas, on_idx, axis=1)
    if kind == ConeKind.RE:
        den = np.linalg.norm(on, axis=1)
    else:
        den = np.abs(on).sum(axis=1) / math.sqrt(on_idx.shape[1])
    return num / np.maximum(den, 1e-300)


def _kernel_in_cone(
    x: np.ndarray,
    support: np.ndarray,
    off: np.ndarray,
    signs: np.ndarray,
    c0: float,
) -> Optional[np.ndarray]:
    """
    Minimizes ‖γ_{T^c}‖₁ over Xγ = 0, γ_T = σ∘a, a ≥ 0, Σa = 1 (an LP).
    Returns the minimizer if it lies in the cone, else ``None``.
    """
    n = x.shape[0]
    t = len(support)
    q = len(off)
    m = Model("Kernel vector in cone")
    m.verbose = 0
    m.threads = 1
    m.infeas_tol = LP_TOL
    m.opt_tol = LP_TOL
    a = [m.add_var(f"a[{i}]", lb=0.0) for i in range(t)]
    plus = [m.add_var(f"off_plus[{j}]", lb=0.0) for j in range(q)]
    minus = [m.add_var(f"off_minus[{j}]", lb=0.0) for j in range(q)]
    if q:
        m.objective = minimize(xsum(plus[j] + minus[j] for j in range(q)))
    else:
        m.objective = minimize(xsum(a))
    m += xsum(a) == 1, "unit_mass"
    for r in range(n):
        m += (
            xsum(float(x[r, support[i]] * signs[i]) * a[i] for i in range(t))
            + xsum(
                float(x[r, off[j]]) * (plus[j] - minus[j]) for j in range(q)
            )
            == 0
        ), f"kernel[{r}]"
    status = m.optimize()
    if status != OptimizationStatus.OPTIMAL:
        return None
    gamma = np.zeros(x.shape[1])
    gamma[support] = signs * np.array([v.x for v in a])
    gamma[off] = np.array([plus[j].x - minus[j].x for j in range(q)])
    on_l1 = np.abs(gamma[support]).sum()
    if np.abs(gamma[off]).sum() > c0 * on_l1 * (1 + KERNEL_CONE_TOL):
        return None
    if np.linalg.norm(x @ gamma) > KERNEL_CONE_TOL * np.linalg.norm(gamma):
        return None
    return gamma


def _find_kernel_in_cone(
    x: np.ndarray,
    on_idx: np.ndarray,
    off_idx: np.ndarray,
    signs: np.ndarray,
    compat: np.ndarray,
    screen: float,
    c0: float,
) -> Optional[np.ndarray]:
    """
    Runs the kernel LP on the slices whose compatibility value is small,
    smallest first.
    """
    candidates = np.flatnonzero(compat <= screen)
    order = candidates[np.argsort(compat[candidates], kind="stable")]
    for i in order[:MAX_KERNEL_LPS]:
        gamma = _kernel_in_cone(x, on_idx[i], off_idx[i], signs[i], c0)
        if gamma is not None:
            return gamma
    return None


def _initial_directions(
    t: int, restarts: int, patterns: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    if t == 2:
        angles = np.pi * np.arange(RE_ANGLE_GRID) / RE_ANGLE_GRID
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    z = rng.standard_normal((restarts, t))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return np.vstack([z, patterns / math.sqrt(t)])


def _refine_directions(
    best_u: np.ndarray, h: float, rng: np.random.Generator
) -> np.ndarray:
    """
    Directions near each support's current best: a grid of rotations for
    |T| = 2, random tangent steps otherwise.
    """
    ns, t = best_u.shape
    if t == 2:
        tangent = np.stack([-best_u[:, 1], best_u[:, 0]], axis=1)
        steps = np.linspace(-1.0, 1.0, RE_REFINE_POINTS)
        cand = best_u[:, None, :] + (
            h * steps[None, :, None] * tangent[:, None, :]
        )
    else:
        noise = rng.standard_normal((ns, RE_REFINE_POINTS, t))
        noise -= (
            np.sum(noise * best_u[:, None, :], axis=2, keepdims=True)
            * best_u[:, None, :]
        )
        norms = np.linalg.norm(noise, axis=2, keepdims=True)
        noise /= np.maximum(norms, 1e-300)
        cand = best_u[:, None, :] + h * noise
    return cand / np.linalg.norm(cand, axis=2, keepdims=True)


def _re_pass(
    x: np.ndarray,
    step: float,
    on_sup: np.ndarray,
    off_sup: np.ndarray,
    c0: float,
    dirs: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solves every (support, direction) slice; returns each support's best
    value and direction.
    """
    ns, m, t = dirs.shape
    values = np.empty(ns)
    best_u = np.empty((ns, t))
    block = max(1, CONE_ROW_CHUNK // m)
    for lo in range(0, ns, block):
        sup = np.arange(lo, min(lo + block, ns))
        rows = np.repeat(sup, m)
        slices = _ConeSlices(
            on_sup[rows],
            off_sup[rows],
            c0,
            directions=dirs[sup].reshape(-1, t),
        )
        gammas = _minimize_slices(x, step, slices)
        vals = _cone_values(x, gammas, on_sup[rows], ConeKind.RE)
        vals = vals.reshape(len(sup), m)
        k = np.argmin(vals, axis=1)
        values[sup] = vals[np.arange(len(sup)), k]
        best_u[sup] = dirs[sup, k]
    return values, best_u


def _re_estimate(
    x: np.ndarray,
    step: float,
    on_sup: np.ndarray,
    off_sup: np.ndarray,
    c0: float,
    seed_dirs: np.ndarray,
    patterns: np.ndarray,
    restarts: int,
    rng: np.random.Generator,
) -> float:
    ns, t = on_sup.shape
    if t == 1:
        values, _ = _re_pass(
            x, step, on_sup, off_sup, c0, np.ones((ns, 1, 1))
        )
        return float(values.min())
    shared = _initial_directions(t, restarts, patterns, rng)
    # Per support: the smallest eigenvector of X_TᵀX_T
    x_t = np.transpose(x[:, on_sup], (1, 0, 2))
    _, vecs = np.linalg.eigh(np.transpose(x_t, (0, 2, 1)) @ x_t)
    dirs = np.concatenate(
        [
            np.broadcast_to(shared, (ns,) + shared.shape),
            vecs[:, :, :1].transpose(0, 2, 1),
            seed_dirs[:, None, :],
        ],
        axis=1,
    )
    values, best_u = _re_pass(x, step, on_sup, off_sup, c0, dirs)
    h = math.pi / RE_ANGLE_GRID if t == 2 else 0.5
    for _ in range(RE_REFINE_ROUNDS):
        cand = _refine_directions(best_u, h, rng)
        new_values, new_u = _re_pass(x, step, on_sup, off_sup, c0, cand)
        better = new_values < values
        values = np.where(better, new_values, values)
        best_u[better] = new_u[better]
        h /= (RE_REFINE_POINTS - 1) / 2 if t == 2 else 2
    return float(values.min())


def cone_constant_estimate(
    d: DesignMatrix,
    s: int,
    c0: float,
    kind: ConeKind,
    restarts: int = DEFAULT_CONE_RESTARTS,
    seed: int = 0,
) -> float:
    """
    Upper estimate of the restricted eigenvalue constant

        κ(S, c₀) = min ‖Xγ‖₂ / ‖γ_T‖₂

    or of the compatibility constant

        φ(S, c₀) = min √|T|·‖Xγ‖₂ / ‖γ_T‖₁,

    minima over supports |T| ≤ S and the cone ‖γ_{T^c}‖₁ ≤ c₀‖γ_T‖₁.

    The compatibility value of each (support, sign pattern) slice is solved
    as a convex problem; the restricted eigenvalue adds a search over the
    direction of γ_T. A kernel vector inside the cone, found by LP, makes
    both constants exactly 0. ``restarts`` sets the number of random
    directions (and sampled sign patterns) for supports of size 3 or more.
    """
    p = d.p
    if not 1 <= s <= p:
        raise ParameterError(f"Need 1 <= S <= p = {p}; got S = {s}")
    if not c0 > 0:
        raise ParameterError(f"c0 must be > 0; got {c0}")
    if restarts < 1:
        raise ParameterError(f"restarts must be >= 1; got {restarts}")
    rng = make_rng(seed, CONE_STREAM)
    supports = _enumerate_supports(p, s, rng)
    x = np.asarray(d.entries)
    rho1 = d.largest_singular()
    step = 1.0 / rho1**2
    log.info(
        f"Estimating {enum_to_json(kind)} constant (S = {s}, c0 = {c0}) "
        f"over {len(supports)} supports"
    )
    best = math.inf
    for t in sorted({len(support) for support in supports}):
        on_sup = np.array(
            [support for support in supports if len(support) == t], dtype=int
        )
        off_sup = _complements(on_sup, p)
        ns = len(on_sup)
        patterns = _sign_patterns(t, restarts, rng)
        rows = np.repeat(np.arange(ns), len(patterns))
        signs = np.tile(patterns, (ns, 1))
        gammas = _minimize_slices(
            x, step, _ConeSlices(on_sup[rows], off_sup[rows], c0, signs=signs)
        )
        compat = _cone_values(x, gammas, on_sup[rows], ConeKind.COMPATIBILITY)
        if d.kernel_dim > 0:
            witness = _find_kernel_in_cone(
                x,
                on_sup[rows],
                off_sup[rows],
                signs,
                compat,
                CONE_ZERO_SCREEN * rho1,
                c0,
            )
            if witness is not None:
                log.info("... kernel vector inside the cone; constant is 0")
                return 0.0
        if kind == ConeKind.COMPATIBILITY:
            best = min(best, float(compat.min()))
            continue
        re_values = _cone_values(x, gammas, on_sup[rows], ConeKind.RE)
        best = min(best, float(re_values.min()))
        # Best compatibility slice of each support seeds its direction search
        per_support = compat.reshape(ns, len(patterns))
        k = np.argmin(per_support, axis=1)
        seed_on = np.take_along_axis(
            gammas.reshape(ns, len(patterns), p)[np.arange(ns), k],
            on_sup,
            axis=1,
        )
        seed_on /= np.linalg.norm(seed_on, axis=1, keepdims=True)
        best = min(
            best,
            _re_estimate(
                x,
                step,
                on_sup,
                off_sup,
                c0,
                seed_on,
                patterns,
                restarts,
                rng,
            ),
        )
    log.info(f"... estimate {best:.6g}")
    return best


# =============================================================================
# Pipeline
# =============================================================================


def assess_conditions(
    d: DesignMatrix,
    rip_s: int = None,
    re_s: int = None,
    c0: float = 1.0,
    kappa: float = None,
    cert: UdpCertificate = None,
    budget: int = DEFAULT_FALSIFY_BUDGET,
    restarts: int = DEFAULT_CONE_RESTARTS,
    seed: int = 0,
) -> ConditionReport:
    """
    Runs whichever checks are requested.

    Args:
        d:
            The design.
        rip_s:
            Order S for θ_S, or ``None`` to skip.
        re_s:
            S for the RE and compatibility estimates, or ``None`` to skip.
        c0:
            Cone constant for those estimates.
        kappa:
            κ for H_{S,1}(κ) falsification (uses ``re_s``, else ``rip_s``,
            as S), or ``None`` to skip.
        cert:
            Certificate to falsify, or ``None``.
        budget:
            Samples per falsification.
        restarts:
            Restarts per support for the cone estimates.
        seed:
            Seed for all randomized parts.
    """
    report = ConditionReport(
        parameters={
            "rip_S": rip_s,
            "re_S": re_s,
            "c0": c0,
            "kappa": kappa,
            "budget": budget,
            "seed": seed,
            "certificate": None if cert is None else cert.as_json_dict(),
        }
    )
    if rip_s is not None:
        report.rip_theta = rip_constant(d, rip_s)
    if re_s is not None:
        report.re_kappa_upper = cone_constant_estimate(
            d, re_s, c0, ConeKind.RE, restarts=restarts, seed=seed
        )
        report.compat_phi_upper = cone_constant_estimate(
            d, re_s, c0, ConeKind.COMPATIBILITY, restarts=restarts, seed=seed
        )
    if cert is not None:
        report.udp_counterexample = udp_falsify(d, cert, budget, seed)
    if kappa is not None:
        h_s = re_s if re_s is not None else rip_s
        if h_s is None:
            raise ParameterError("H_(S,1) check needs an S (re_S or rip_S)")
        report.h_counterexample = h_falsify(d, h_s, kappa, budget, seed)
    return report
