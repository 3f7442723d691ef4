#!/usr/bin/env python

"""
udp_certify/tests/conditions_tests.py

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

Tests UDP certificates, falsifiers and design constants.

"""

import itertools
import math
from typing import Any, Dict, Tuple
import unittest

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from udp_certify.conditions import (
    _falsify,
    assess_conditions,
    cone_constant_estimate,
    Counterexample,
    h_falsify,
    h_violation,
    interpolation_check,
    rip_constant,
    s0_from_distortion,
    udp_falsify,
    udp_from_cone,
    udp_from_distortion,
    udp_from_rip,
    udp_violation,
    UdpCertificate,
)
from udp_certify.constants import ConeKind, DistortionMethod, Provenance
from udp_certify.distortion import distortion_exact, DistortionEstimate
from udp_certify.errors import (
    ConditionFailedError,
    InputError,
    ParameterError,
)
from udp_certify.linalg import decompose


def estimate_with_upper(upper: float) -> DistortionEstimate:
    return DistortionEstimate(
        lower=1.0,
        upper=upper,
        method=DistortionMethod.RANDOMIZED_WITNESS,
        witness=None,
    )


def assumed(s0: int, kappa0: float, delta: float) -> UdpCertificate:
    return UdpCertificate(s0, kappa0, delta, Provenance.ASSUMED)


def normalized_gaussian(n: int, p: int, seed: int = 0) -> np.ndarray:
    x = np.random.default_rng(seed).standard_normal((n, p))
    return x / np.linalg.norm(x, axis=0)


ONE_ROW = np.array([[1.0, 1.0]])


# -----------------------------------------------------------------------------
# Reference cone constants by exhaustive search, for small designs
# -----------------------------------------------------------------------------

ORACLE_ANGLES = 120


def _split_l1(q: int, radius: float) -> Dict[str, Any]:
    # w = w⁺ - w⁻ with w± >= 0 and Σw⁺ + Σw⁻ <= radius
    return {
        "type": "ineq",
        "fun": lambda z: radius - z[-2 * q :].sum(),
        "jac": lambda z: np.concatenate(
            [np.zeros(len(z) - 2 * q), -np.ones(2 * q)]
        ),
    }


def _feasible_split(z: np.ndarray, radius: float) -> np.ndarray:
    z = np.clip(z, 0.0, None)
    return z * min(1.0, radius / max(z.sum(), 1e-300))


def ball_min(
    b: np.ndarray, a: np.ndarray, radius: float, z0: np.ndarray
) -> Tuple[float, np.ndarray]:
    """
    min ‖b + Aw‖₂ over ‖w‖₁ ≤ radius, evaluated at a feasible point.
    """
    q = a.shape[1]

    def f(z: np.ndarray) -> Tuple[float, np.ndarray]:
        r = b + a @ (z[:q] - z[q:])
        g = 2 * (a.T @ r)
        return float(r @ r), np.concatenate([g, -g])

    res = minimize(
        f,
        _feasible_split(z0, radius),
        jac=True,
        method="SLSQP",
        bounds=[(0.0, None)] * (2 * q),
        constraints=[_split_l1(q, radius)],
        options={"ftol": 1e-15, "maxiter": 1000},
    )
    z = _feasible_split(res.x, radius)
    return float(np.linalg.norm(b + a @ (z[:q] - z[q:]))), z


def compat_slice_min(
    x: np.ndarray, support: Tuple[int, ...], signs: np.ndarray, c0: float
) -> float:
    """
    min √t·‖Xγ‖₂ over γ_T = σ∘a, a in the unit simplex, ‖γ_{T^c}‖₁ ≤ c₀.
    """
    t = len(support)
    off = [j for j in range(x.shape[1]) if j not in support]
    xt = x[:, list(support)] * signs
    a = x[:, off]
    q = len(off)

    def f(v: np.ndarray) -> Tuple[float, np.ndarray]:
        r = xt @ v[:t] + a @ (v[t : t + q] - v[t + q :])
        g = 2 * (a.T @ r)
        return float(r @ r), np.concatenate([2 * (xt.T @ r), g, -g])

    res = minimize(
        f,
        np.concatenate([np.full(t, 1.0 / t), np.zeros(2 * q)]),
        jac=True,
        method="SLSQP",
        bounds=[(0.0, None)] * (t + 2 * q),
        constraints=[
            {
                "type": "eq",
                "fun": lambda v: v[:t].sum() - 1.0,
                "jac": lambda v: np.concatenate(
                    [np.ones(t), np.zeros(2 * q)]
                ),
            },
            _split_l1(q, c0),
        ],
        options={"ftol": 1e-15, "maxiter": 1000},
    )
    on = np.clip(res.x[:t], 0.0, None)
    on /= on.sum()
    z = _feasible_split(res.x[t:], c0)
    r = xt @ on + a @ (z[:q] - z[q:])
    return math.sqrt(t) * float(np.linalg.norm(r))


def re_pair_min(x: np.ndarray, support: Tuple[int, ...], c0: float) -> float:
    """
    min ‖Xγ‖₂ over unit γ_T, |T| = 2, on a fine angle grid followed by a
    bounded line search around the best angle.
    """
    off = [j for j in range(x.shape[1]) if j not in support]
    xt = x[:, list(support)]
    a = x[:, off]
    z = np.zeros(2 * len(off))

    def g(theta: float) -> float:
        nonlocal z
        u = np.array([math.cos(theta), math.sin(theta)])
        value, z = ball_min(xt @ u, a, c0 * np.abs(u).sum(), z)
        return value

    step = math.pi / ORACLE_ANGLES
    thetas = step * np.arange(ORACLE_ANGLES)
    values = np.array([g(theta) for theta in thetas])
    k = int(np.argmin(values))
    res = minimize_scalar(
        g,
        bounds=(thetas[k] - step, thetas[k] + step),
        method="bounded",
        options={"xatol": 1e-9},
    )
    return min(float(values[k]), g(res.x))


def oracle_cone_constants(
    x: np.ndarray, s: int, c0: float
) -> Dict[ConeKind, float]:
    """
    Compatibility constant over every support and sign pattern; restricted
    eigenvalue for supports of size at most 2.
    """
    assert s <= 2
    p = x.shape[1]
    phi = {}
    for t in range(1, s + 1):
        for support in itertools.combinations(range(p), t):
            phi[support] = min(
                compat_slice_min(x, support, np.array((1.0,) + tail), c0)
                for tail in itertools.product((1.0, -1.0), repeat=t - 1)
            )
    re = min(v for support, v in phi.items() if len(support) == 1)
    # κ_T ≥ φ_T/√2 on pairs, so pairs are visited by φ_T and cut off early
    pairs = sorted((k for k in phi if len(k) == 2), key=phi.get)
    for support in pairs:
        if phi[support] / math.sqrt(2) > re:
            break
        re = min(re, re_pair_min(x, support, c0))
    return {ConeKind.COMPATIBILITY: min(phi.values()), ConeKind.RE: re}


# =============================================================================
# Certificates
# =============================================================================


class CertificateTests(unittest.TestCase):
    def test_from_distortion(self) -> None:
        c = udp_from_distortion(estimate_with_upper(2.0), 0.5, 1 / 3, 144)
        self.assertEqual(c.s0, 4)
        self.assertAlmostEqual(c.delta, 8.0, places=12)
        self.assertEqual(c.provenance, Provenance.DISTORTION)
        c = udp_from_distortion(estimate_with_upper(1.0), 1.0, 0.49, 100)
        self.assertEqual(c.s0, 24)
        self.assertAlmostEqual(c.delta, 2.0, places=12)

    def test_worst_case_distortion_is_uninformative(self) -> None:
        for p in (4, 100, 10000):
            est = estimate_with_upper(math.sqrt(p))
            c = udp_from_distortion(est, 1.0, 0.45, p)
            self.assertEqual(c.s0, 0)
            self.assertFalse(c.informative)
        self.assertEqual(s0_from_distortion(math.sqrt(20), 0.49, 20), 0)

    def test_from_distortion_errors(self) -> None:
        est = estimate_with_upper(1.5)
        with self.assertRaises(ParameterError):
            udp_from_distortion(est, 1.0, 0.5, 10)
        with self.assertRaises(ParameterError):
            udp_from_distortion(est, 0.0, 0.25, 10)

    def test_from_rip(self) -> None:
        c = udp_from_rip(0.0, 3, 0.4)
        self.assertEqual(c.s0, 3)
        self.assertAlmostEqual(c.delta, 4.0, places=12)
        self.assertEqual(c.provenance, Provenance.RIP)
        c = udp_from_rip(0.2, 2, 0.45)
        expected = 1 / (
            math.sqrt(0.8) + ((0.45 - 1) / 0.9) * math.sqrt(1.2)
        )
        self.assertAlmostEqual(c.delta, expected, places=12)

    def test_from_rip_rejections(self) -> None:
        with self.assertRaises(ParameterError):
            udp_from_rip(0.0, 3, 1 / 3)
        with self.assertRaises(ParameterError):
            udp_from_rip(0.0, 3, 0.5)
        with self.assertRaises(ParameterError):
            udp_from_rip(0.42, 3, 0.45)
        with self.assertRaises(ParameterError):
            udp_from_rip(0.1, 0, 0.45)

    def test_from_cone(self) -> None:
        c = udp_from_cone(1.0, 3, 0.3, ConeKind.RE)
        self.assertEqual((c.s0, c.kappa0, c.delta), (3, 0.3, 1.0))
        self.assertEqual(c.provenance, Provenance.RE)
        c = udp_from_cone(0.5, 2, 0.2, ConeKind.COMPATIBILITY)
        self.assertAlmostEqual(c.delta, 2.0)
        self.assertEqual(c.provenance, Provenance.COMPATIBILITY)
        with self.assertRaises(ConditionFailedError):
            udp_from_cone(0.0, 2, 0.2, ConeKind.RE)

    def test_json(self) -> None:
        c = udp_from_rip(0.0, 3, 0.4)
        again = UdpCertificate.from_json_dict(c.as_json_dict())
        self.assertEqual(again.s0, 3)
        self.assertEqual(again.provenance, Provenance.RIP)
        bare = UdpCertificate.from_json_dict(
            {"S0": 2, "kappa0": 0.25, "Delta": 3.0}
        )
        self.assertEqual(bare.provenance, Provenance.ASSUMED)
        with self.assertRaises(InputError):
            UdpCertificate.from_json_dict({"S0": 2, "kappa0": 0.25})
        with self.assertRaises(ParameterError):
            assumed(1, 0.25, -1.0)


# =============================================================================
# Interpolation inequality
# =============================================================================


class InterpolationTests(unittest.TestCase):
    def test_kernel_witness_is_tight(self) -> None:
        d = decompose(np.array([[1.0, 0.0]]))
        r = interpolation_check(d, math.sqrt(2), np.array([0.0, 1.0]))
        self.assertAlmostEqual(r, 0.0, places=12)

    def test_zero(self) -> None:
        d = decompose(np.array([[1.0, 0.0]]))
        self.assertEqual(interpolation_check(d, 1.5, np.zeros(2)), 0.0)

    def test_random_vectors(self) -> None:
        x = np.random.default_rng(4).standard_normal((8, 10))
        d = decompose(x)
        est = distortion_exact(d, tol=1e-4)
        rng = np.random.default_rng(5)
        for gamma in rng.standard_normal((2000, 10)):
            self.assertGreaterEqual(
                interpolation_check(d, est.upper, gamma), -1e-9
            )

    def test_random_designs(self) -> None:
        rng = np.random.default_rng(6)
        for i in range(20):
            x = np.random.default_rng(100 + i).standard_normal((8, 10))
            d = decompose(x)
            est = distortion_exact(d, tol=1e-4)
            gammas = rng.standard_normal((10000, 10))
            residuals = [
                interpolation_check(d, est.upper, gamma) for gamma in gammas
            ]
            self.assertGreaterEqual(min(residuals), -1e-9, f"design {i}")
            # The witness is a kernel vector attaining the lower end
            self.assertAlmostEqual(
                interpolation_check(d, est.lower, est.witness),
                0.0,
                delta=1e-6,
            )

    def test_shape(self) -> None:
        d = decompose(np.eye(3))
        with self.assertRaises(InputError):
            interpolation_check(d, 1.0, np.ones(4))


# =============================================================================
# Falsification
# =============================================================================


class FalsifyTests(unittest.TestCase):
    def test_identity_holds(self) -> None:
        d = decompose(np.eye(6))
        self.assertIsNone(udp_falsify(d, assumed(6, 0.4, 1.0), budget=5000))

    def test_overclaim_found(self) -> None:
        d = decompose(ONE_ROW)
        cx = udp_falsify(d, assumed(1, 0.1, 0.1), budget=100, seed=3)
        self.assertIsNotNone(cx)
        self.assertGreater(cx.excess, 0)
        self.assertEqual(cx.s, 1)
        # Re-checking the returned vector reproduces the violation
        again = udp_violation(d, assumed(1, 0.1, 0.1), cx.gamma)
        self.assertAlmostEqual(again.excess, cx.excess, places=12)

    def test_violation_of_kernel_vector(self) -> None:
        d = decompose(ONE_ROW)
        cx = udp_violation(d, assumed(1, 0.1, 0.1), np.array([1.0, -1.0]))
        self.assertAlmostEqual(cx.lhs, 0.5, places=12)
        self.assertAlmostEqual(cx.rhs, 0.1, places=12)
        with self.assertRaises(InputError):
            udp_violation(d, assumed(1, 0.1, 0.1), np.zeros(2))

    def test_distortion_certificate_holds(self) -> None:
        x = np.random.default_rng(0).standard_normal((18, 20))
        d = decompose(x)
        est = distortion_exact(d, tol=1e-4)
        cert = udp_from_distortion(est, d.smallest_singular(), 0.45, d.p)
        self.assertIsNone(udp_falsify(d, cert, budget=20000, seed=1))

    def test_distortion_certificates_on_random_designs(self) -> None:
        for i in range(20):
            x = np.random.default_rng(100 + i).standard_normal((8, 10))
            d = decompose(x)
            est = distortion_exact(d, tol=1e-4)
            for kappa0 in (0.3, 0.45):
                cert = udp_from_distortion(
                    est, d.smallest_singular(), kappa0, d.p
                )
                self.assertIsNone(
                    udp_falsify(d, cert, budget=100000, seed=i),
                    f"design {i}, κ₀ = {kappa0}",
                )

    def test_cone_certificates_hold(self) -> None:
        d = decompose(np.eye(6))
        for kind in (ConeKind.RE, ConeKind.COMPATIBILITY):
            constant = cone_constant_estimate(d, 2, 0.4, kind)
            cert = udp_from_cone(constant, 2, 0.4, kind)
            self.assertAlmostEqual(cert.delta, 1.0, delta=2e-3)
            self.assertIsNone(udp_falsify(d, cert, budget=100000, seed=4))

    def test_unconfirmed_candidates_are_dropped(self) -> None:
        d = decompose(ONE_ROW)
        calls = []

        def reject(gamma: np.ndarray) -> Counterexample:
            calls.append(gamma)
            return Counterexample(gamma, [0], 1, lhs=0.5, rhs=0.5)

        cx = _falsify(
            d, 1, np.array([0.1]), 0.1, 100, 3, "UDP", recheck=reject
        )
        self.assertIsNone(cx)
        self.assertGreater(len(calls), 0)

    def test_reported_counterexample_is_rechecked(self) -> None:
        d = decompose(ONE_ROW)
        cert = assumed(1, 0.1, 0.1)
        calls = []

        def recheck(gamma: np.ndarray) -> Counterexample:
            calls.append(gamma)
            return udp_violation(d, cert, gamma)

        cx = _falsify(
            d, 1, np.array([0.1]), 0.1, 100, 3, "UDP", recheck=recheck
        )
        self.assertIsNotNone(cx)
        self.assertEqual(len(calls), 1)
        np.testing.assert_array_equal(cx.gamma, calls[0])
        self.assertGreater(cx.excess, 0)

    def test_rip_certificate_holds(self) -> None:
        d = decompose(np.eye(5))
        theta = rip_constant(d, 5)
        cert = udp_from_rip(theta, 1, 0.45)
        self.assertIsNone(udp_falsify(d, cert, budget=5000, seed=2))

    def test_h_condition(self) -> None:
        self.assertIsNone(
            h_falsify(decompose(np.eye(5)), 2, 0.4, budget=5000)
        )
        d = decompose(ONE_ROW)
        cx = h_falsify(d, 1, 0.1, budget=100, seed=3)
        self.assertIsNotNone(cx)
        self.assertGreater(cx.excess, 0)
        direct = h_violation(d, 1, 0.1, np.array([1.0, -1.0]))
        self.assertAlmostEqual(direct.excess, 0.4, places=12)

    def test_h_weaker_than_udp(self) -> None:
        d = decompose(np.eye(4))
        cert = assumed(2, 0.4, 1.0)
        self.assertGreaterEqual(d.column_norm_max() * math.sqrt(2), 1.0)
        self.assertIsNone(udp_falsify(d, cert, budget=4000))
        self.assertIsNone(h_falsify(d, 2, 0.4, budget=4000))

    def test_bad_parameters(self) -> None:
        d = decompose(np.eye(3))
        with self.assertRaises(ParameterError):
            udp_falsify(d, assumed(1, 0.4, 1.0), budget=0)
        with self.assertRaises(ParameterError):
            h_falsify(d, 1, 0.6)
        with self.assertRaises(ParameterError):
            h_falsify(d, 0, 0.4)
        self.assertIsNone(udp_falsify(d, assumed(0, 0.4, 1.0), budget=10))


# =============================================================================
# Restricted isometry and cone constants
# =============================================================================


class RipTests(unittest.TestCase):
    def test_identity(self) -> None:
        d = decompose(np.eye(5))
        for s in (1, 3, 5):
            self.assertAlmostEqual(rip_constant(d, s), 0.0, places=12)

    def test_diagonal(self) -> None:
        d = decompose(np.diag([1.0, 2.0]))
        self.assertAlmostEqual(rip_constant(d, 1), 3.0, places=12)

    def test_pairs_oracle(self) -> None:
        x = normalized_gaussian(10, 14, seed=6)
        gram = x.T @ x
        expected = 0.0
        for i, j in itertools.combinations(range(14), 2):
            eig = np.linalg.eigvalsh(gram[np.ix_([i, j], [i, j])])
            expected = max(expected, eig[-1] - 1, 1 - eig[0])
        self.assertAlmostEqual(
            rip_constant(decompose(x), 2), expected, places=10
        )

    def test_order_range(self) -> None:
        d = decompose(np.eye(3))
        with self.assertRaises(ParameterError):
            rip_constant(d, 0)
        with self.assertRaises(ParameterError):
            rip_constant(d, 4)


class ConeTests(unittest.TestCase):
    def test_identity(self) -> None:
        d = decompose(np.eye(4))
        for kind in (ConeKind.RE, ConeKind.COMPATIBILITY):
            est = cone_constant_estimate(d, 2, 0.5, kind, restarts=32)
            self.assertLessEqual(est, 1 + 1e-9)
            self.assertGreaterEqual(est, 1 - 1e-3)

    def test_kernel_in_cone(self) -> None:
        d = decompose(ONE_ROW)
        est = cone_constant_estimate(d, 1, 1.0, ConeKind.RE)
        self.assertLess(est, 1e-9)

    def test_kernel_vector_gives_exact_zero(self) -> None:
        # ker X is spanned by (1, -1/2, -1/2), inside the cone for c₀ = 1.5
        d = decompose(np.array([[1.0, 2.0, 0.0], [1.0, 0.0, 2.0]]))
        for kind in (ConeKind.RE, ConeKind.COMPATIBILITY):
            self.assertEqual(cone_constant_estimate(d, 1, 1.5, kind), 0.0)

    def test_kernel_outside_cone(self) -> None:
        # Same kernel, but c₀ = 0.5 keeps it out: the constant is positive
        d = decompose(np.array([[1.0, 2.0, 0.0], [1.0, 0.0, 2.0]]))
        est = cone_constant_estimate(d, 1, 0.5, ConeKind.COMPATIBILITY)
        self.assertGreater(est, 0.1)

    def test_matches_exhaustive_search(self) -> None:
        for seed in (0, 1):
            x = normalized_gaussian(10, 14, seed=seed)
            d = decompose(x)
            oracle = oracle_cone_constants(x, 2, 1.0)
            for kind in (ConeKind.RE, ConeKind.COMPATIBILITY):
                est = cone_constant_estimate(d, 2, 1.0, kind)
                msg = f"seed {seed}, {kind}: {est} vs {oracle[kind]}"
                self.assertLessEqual(est, 1.05 * oracle[kind] + 1e-6, msg)
                self.assertGreaterEqual(
                    est, 0.95 * oracle[kind] - 1e-6, msg
                )

    def test_upper_estimate(self) -> None:
        # Any feasible point gives an upper bound; the estimate must not
        # exceed the value at a sparse direction.
        x = normalized_gaussian(10, 14, seed=8)
        d = decompose(x)
        est = cone_constant_estimate(d, 2, 1.0, ConeKind.RE, restarts=8)
        self.assertLessEqual(est, 1.0 + 1e-12)
        self.assertGreater(est, 0.0)

    def test_bad_parameters(self) -> None:
        d = decompose(np.eye(3))
        with self.assertRaises(ParameterError):
            cone_constant_estimate(d, 0, 1.0, ConeKind.RE)
        with self.assertRaises(ParameterError):
            cone_constant_estimate(d, 1, 0.0, ConeKind.RE)


class AssessTests(unittest.TestCase):
    def test_identity(self) -> None:
        d = decompose(np.eye(4))
        report = assess_conditions(
            d,
            rip_s=2,
            re_s=1,
            c0=0.5,
            kappa=0.4,
            cert=assumed(4, 0.4, 1.0),
            budget=2000,
        )
        self.assertAlmostEqual(report.rip_theta, 0.0, places=12)
        self.assertAlmostEqual(report.re_kappa_upper, 1.0, places=9)
        self.assertAlmostEqual(report.compat_phi_upper, 1.0, places=9)
        self.assertIsNone(report.udp_counterexample)
        self.assertIsNone(report.h_counterexample)
        doc = report.as_json_dict()
        self.assertEqual(doc["parameters"]["certificate"]["S0"], 4)

    def test_h_needs_order(self) -> None:
        with self.assertRaises(ParameterError):
            assess_conditions(decompose(np.eye(3)), kappa=0.4)
