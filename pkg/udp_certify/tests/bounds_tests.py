#!/usr/bin/env python

"""
udp_certify/tests/bounds_tests.py

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

Tests noise calibration, oracle bounds and benchmarks.

"""

import itertools
import math
import unittest

import numpy as np

from udp_certify.bounds import (
    auto_lambda,
    ideal_benchmark,
    l1_bound,
    mult_factors,
    noise_level,
    NoiseModel,
    optimal_sparsity_level,
    pred_bound,
    sparsity_level_comparison,
    top_s_tail,
    tuning_ok,
    tuning_threshold,
)
from udp_certify.conditions import UdpCertificate
from udp_certify.constants import Estimator, Provenance, Theorem
from udp_certify.errors import (
    ParameterError,
    RankError,
    UninformativeCertificateError,
)
from udp_certify.linalg import decompose

LASSO = Estimator.LASSO
DANTZIG = Estimator.DANTZIG


def cert(s0: int, kappa0: float, delta: float) -> UdpCertificate:
    return UdpCertificate(s0, kappa0, delta, Provenance.ASSUMED)


def spike(p: int = 10) -> np.ndarray:
    b = np.zeros(p)
    b[0] = 5.0
    return b


def geometric(p: int = 10) -> np.ndarray:
    signs = np.where(np.arange(p) % 2 == 0, 1.0, -1.0)
    return signs * 3.0 * 0.5 ** np.arange(p)


def exhaustive(beta_star, s0, term) -> float:
    """
    Minimum of term(s, tail) over every subset S with 1 <= |S| <= s0.
    """
    p = beta_star.size
    best = math.inf
    for s in range(1, s0 + 1):
        for subset in itertools.combinations(range(p), s):
            off = np.ones(p, dtype=bool)
            off[list(subset)] = False
            best = min(best, term(s, float(np.abs(beta_star[off]).sum())))
    return best


# =============================================================================
# Noise
# =============================================================================


class NoiseTests(unittest.TestCase):
    def test_closed_forms(self) -> None:
        m = NoiseModel(sigma=1.0, t=1.0, col_norm_max=1.0, p=100)
        self.assertAlmostEqual(m.lambda0, 4.29193, places=5)
        self.assertAlmostEqual(m.prob_floor, 0.998141, places=6)
        self.assertLessEqual(m.prob_floor, m.sidak_probability)

    def test_noiseless(self) -> None:
        a = NoiseModel(sigma=0.0, t=1.0, col_norm_max=1.0, p=100)
        b = NoiseModel(sigma=3.0, t=1.0, col_norm_max=1.0, p=100)
        self.assertEqual(a.lambda0, 0.0)
        self.assertEqual(a.prob_floor, b.prob_floor)

    def test_column_scale(self) -> None:
        a = NoiseModel(sigma=1.0, t=1.5, col_norm_max=1.0, p=50)
        b = NoiseModel(sigma=1.0, t=1.5, col_norm_max=2.0, p=50)
        self.assertAlmostEqual(b.lambda0, 2 * a.lambda0, places=12)
        self.assertEqual(a.prob_floor, b.prob_floor)

    def test_from_design(self) -> None:
        m = noise_level(decompose(2 * np.eye(4)), 0.5, 1.0)
        self.assertEqual(m.col_norm_max, 2.0)
        self.assertEqual(m.p, 4)

    def test_errors(self) -> None:
        with self.assertRaises(ParameterError):
            NoiseModel(sigma=1.0, t=1.0, col_norm_max=1.0, p=1)
        with self.assertRaises(ParameterError):
            NoiseModel(sigma=-1.0, t=1.0, col_norm_max=1.0, p=10)
        with self.assertRaises(ParameterError):
            NoiseModel(sigma=1.0, t=0.5, col_norm_max=1.0, p=10)


# =============================================================================
# Tuning
# =============================================================================


class TuningTests(unittest.TestCase):
    def test_thresholds(self) -> None:
        self.assertAlmostEqual(tuning_threshold(1.0, 0.25, LASSO), 2.0)
        self.assertAlmostEqual(tuning_threshold(1.0, 0.125, DANTZIG), 2.0)
        self.assertEqual(tuning_threshold(1.0, 0.3, DANTZIG), math.inf)

    def test_strict(self) -> None:
        self.assertFalse(tuning_ok(2.0, 1.0, 0.25, LASSO))
        self.assertTrue(tuning_ok(2.0001, 1.0, 0.25, LASSO))
        self.assertFalse(tuning_ok(100.0, 1.0, 0.25, DANTZIG))

    def test_auto(self) -> None:
        lam = auto_lambda(1.0, 0.25, LASSO)
        self.assertTrue(tuning_ok(lam, 1.0, 0.25, LASSO))
        self.assertAlmostEqual(lam, 2.02)
        with self.assertRaises(ParameterError):
            auto_lambda(1.0, 0.25, DANTZIG)


# =============================================================================
# Oracle bounds
# =============================================================================


class OracleBoundTests(unittest.TestCase):
    def test_lasso_l1(self) -> None:
        r = l1_bound(spike(), cert(3, 1 / 3, 1.0), 6.0, 1.0, LASSO)
        self.assertEqual(r.theorem, Theorem.LASSO_L1)
        self.assertAlmostEqual(r.prefactor, 12.0, places=9)
        self.assertAlmostEqual(r.bound, 72.0, places=9)
        self.assertEqual(r.minimizing_s, 1)
        self.assertEqual(r.minimizing_subset, [0])

    def test_dantzig_l1(self) -> None:
        r = l1_bound(spike(), cert(3, 1 / 5, 1.0), 6.0, 1.0, DANTZIG)
        self.assertEqual(r.theorem, Theorem.DANTZIG_L1)
        self.assertAlmostEqual(r.prefactor, 120.0, places=7)
        self.assertAlmostEqual(r.bound, 720.0, places=6)

    def test_pred(self) -> None:
        for estimator, kappa0 in ((LASSO, 1 / 3), (DANTZIG, 1 / 5)):
            r = pred_bound(spike(), cert(3, kappa0, 1.0), 6.0, 1.0, estimator)
            self.assertAlmostEqual(r.bound, 24.0, places=12)

    def test_pred_large_delta(self) -> None:
        b = geometric()
        previous = 0.0
        for delta in (10.0, 100.0, 1000.0):
            r = pred_bound(b, cert(1, 0.25, delta), 3.0, 1.0, LASSO)
            self.assertGreater(r.bound, previous)
            self.assertAlmostEqual(r.bound / (4 * 3.0 * delta), 1.0, places=1)
            previous = r.bound

    def test_exhaustive_subsets(self) -> None:
        b = geometric()
        c = cert(4, 0.2, 0.7)
        lam, lam0 = 0.6, 0.1
        r = l1_bound(b, c, lam, lam0, LASSO)
        expected = r.prefactor * exhaustive(
            b, 4, lambda s, tail: lam * c.delta**2 * s + tail
        )
        self.assertAlmostEqual(r.bound, expected, places=12)
        self.assertEqual(len(r.per_s), 4)
        r = pred_bound(b, c, lam, lam0, DANTZIG)
        expected = exhaustive(
            b,
            4,
            lambda s, tail: 4 * lam * c.delta * math.sqrt(s)
            + tail / (c.delta * math.sqrt(s)),
        )
        self.assertAlmostEqual(r.bound, expected, places=12)

    def test_tuning_failure(self) -> None:
        r = l1_bound(spike(), cert(3, 0.4, 1.0), 1.5, 1.0, LASSO)
        self.assertFalse(r.tuning_ok)
        self.assertIsNone(r.bound)
        self.assertIsNone(r.as_json_dict()["bound"])
        r = l1_bound(spike(), cert(3, 0.3, 1.0), 100.0, 1.0, DANTZIG)
        self.assertFalse(r.tuning_ok)
        self.assertIsNone(r.as_json_dict()["threshold"])

    def test_uninformative(self) -> None:
        with self.assertRaises(UninformativeCertificateError):
            l1_bound(spike(), cert(0, 0.25, 1.0), 6.0, 1.0, LASSO)

    def test_tails(self) -> None:
        tails = top_s_tail(np.array([1.0, -4.0, 2.0]))
        np.testing.assert_allclose(tails, [7.0, 3.0, 1.0, 0.0])


# =============================================================================
# Multiplicative factors and sparsity levels
# =============================================================================


class FactorTests(unittest.TestCase):
    def test_unit(self) -> None:
        f = mult_factors(1.0, 1.0, 2, math.e)
        self.assertAlmostEqual(f.c_mult, 1.0, places=12)
        self.assertAlmostEqual(f.c_mult_prime, 1.0, places=12)

    def test_values(self) -> None:
        f = mult_factors(2.0, 0.5, 50, 100)
        self.assertAlmostEqual(f.c_mult, 17.168, places=3)
        self.assertAlmostEqual(f.c_mult_prime, 8.584, places=3)
        self.assertAlmostEqual(f.c_mult / f.c_mult_prime, 2.0, places=12)
        self.assertIsNone(f.c_mult_optimal)

    def test_optimal_forms(self) -> None:
        f = mult_factors(2.0, 1.0, 10, 10, c=1.0)
        root = math.sqrt(math.log(10))
        self.assertAlmostEqual(f.c_mult_optimal, root, places=12)
        self.assertAlmostEqual(f.c_mult_prime_optimal, root, places=12)

    def test_errors(self) -> None:
        with self.assertRaises(ParameterError):
            mult_factors(2.0, 0.0, 10, 20)
        with self.assertRaises(ParameterError):
            mult_factors(2.0, 1.0, 1, 20)
        with self.assertRaises(ParameterError):
            mult_factors(0.5, 1.0, 10, 20)
        with self.assertRaises(ParameterError):
            mult_factors(2.0, 1.0, 10, 20, c=0.0)

    def test_sparsity_levels(self) -> None:
        self.assertAlmostEqual(optimal_sparsity_level(8, 8), 8.0)
        doc = sparsity_level_comparison(100, 100, 0.45, c=1.0)
        self.assertAlmostEqual(doc["delta"], 1.0)
        self.assertEqual(doc["S0"], 20)
        self.assertAlmostEqual(doc["reference"], 0.45**2 * 100)
        with self.assertRaises(ParameterError):
            optimal_sparsity_level(0, 8)


# =============================================================================
# Least squares on the true support
# =============================================================================


class IdealTests(unittest.TestCase):
    def test_identity(self) -> None:
        d = decompose(np.eye(6))
        b = ideal_benchmark(d, spike(6), 0.5, [0, 3])
        self.assertAlmostEqual(b.trace_term, 2 * 0.25, places=12)
        self.assertAlmostEqual(b.pred_term, 2 * 0.25, places=12)
        self.assertAlmostEqual(b.l1_benchmark, 2 * 0.5, places=12)
        self.assertAlmostEqual(b.pred_benchmark, 0.5 * math.sqrt(2))
        self.assertEqual(b.support, [0, 3])

    def test_noiseless(self) -> None:
        d = decompose(np.eye(6))
        b = ideal_benchmark(d, geometric(6), 0.0, [0, 1])
        self.assertEqual(b.trace_term, 0.0)
        self.assertEqual(b.pred_term, 0.0)
        tail = float(np.abs(geometric(6)[2:]).sum())
        self.assertAlmostEqual(b.l1_benchmark, tail, places=12)

    def test_trace_exceeds_lower_bound(self) -> None:
        x = np.random.default_rng(0).standard_normal((20, 30))
        b = ideal_benchmark(decompose(x), spike(30), 1.0, [0, 5, 9])
        self.assertGreaterEqual(b.trace_term, b.lower_bound)
        x_s = x[:, [0, 5, 9]]
        self.assertAlmostEqual(
            b.trace_term, np.trace(np.linalg.inv(x_s.T @ x_s)), places=10
        )

    def test_rank_deficient(self) -> None:
        d = decompose(np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
        with self.assertRaises(RankError):
            ideal_benchmark(d, np.zeros(3), 1.0, [0, 1])
        with self.assertRaises(ParameterError):
            ideal_benchmark(d, np.zeros(3), 1.0, [])
