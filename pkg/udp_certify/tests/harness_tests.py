#!/usr/bin/env python

"""
udp_certify/tests/harness_tests.py

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

Tests the synthetic-problem generators and the Monte-Carlo harness.

"""

import csv
import itertools
import math
import os
import tempfile
from typing import Any, Dict
import unittest

import numpy as np
from scipy.stats import chisquare

from udp_certify.conditions import UdpCertificate
from udp_certify.config import ExperimentConfig
from udp_certify.constants import Estimator, LAMBDA_FLOOR, Provenance
from udp_certify.errors import ParameterError
from udp_certify.harness import (
    gen_gaussian_design,
    gen_sparse_target,
    monte_carlo_ideal,
    noise_event_frequency,
    run_experiment,
    run_trial,
    TrialRecord,
)
from udp_certify.helperfunc import json_text
from udp_certify.linalg import decompose


def identity_config(**overrides) -> ExperimentConfig:
    kwargs = dict(
        n=20,
        p=20,
        s=1,
        sigma=0.01,
        kappa0=0.45,
        trials=100,
        seed=11,
        design="identity",
        certificate_source="assumed",
        assumed_s0=5,
        assumed_delta=1.0,
    )
    kwargs.update(overrides)
    return ExperimentConfig.from_json_dict(kwargs)


# =============================================================================
# Generators
# =============================================================================


class GeneratorTests(unittest.TestCase):
    def test_square_design(self) -> None:
        d = gen_gaussian_design(2, 2, seed=3)
        self.assertEqual(d.rank, 2)

    def test_normalized_design(self) -> None:
        d = gen_gaussian_design(6, 9, normalize=True, seed=1)
        self.assertAlmostEqual(d.column_norm_max(), 1.0, places=12)
        np.testing.assert_allclose(d.column_norms, np.ones(9), atol=1e-12)

    def test_design_deterministic(self) -> None:
        a = gen_gaussian_design(5, 8, seed=4)
        b = gen_gaussian_design(5, 8, seed=4)
        c = gen_gaussian_design(5, 8, seed=5)
        np.testing.assert_array_equal(a.entries, b.entries)
        self.assertFalse(np.array_equal(a.entries, c.entries))

    def test_design_errors(self) -> None:
        with self.assertRaises(ParameterError):
            gen_gaussian_design(0, 4)
        with self.assertRaises(ParameterError):
            gen_gaussian_design(5, 4)

    def test_target(self) -> None:
        b = gen_sparse_target(6, 6, amplitude=2.5, seed=0)
        np.testing.assert_array_equal(np.abs(b), np.full(6, 2.5))
        for seed in range(20):
            b = gen_sparse_target(30, 4, amplitude=1.5, seed=seed)
            self.assertEqual(np.count_nonzero(b), 4)
            self.assertAlmostEqual(np.abs(b).sum(), 6.0, places=12)

    def test_target_support_uniform(self) -> None:
        subsets = list(itertools.combinations(range(5), 2))
        counts = dict.fromkeys(subsets, 0)
        for seed in range(10000):
            b = gen_sparse_target(5, 2, seed=seed)
            counts[tuple(int(i) for i in np.flatnonzero(b))] += 1
        _, pvalue = chisquare(list(counts.values()))
        self.assertGreater(pvalue, 0.001)

    def test_target_errors(self) -> None:
        with self.assertRaises(ParameterError):
            gen_sparse_target(5, 0)
        with self.assertRaises(ParameterError):
            gen_sparse_target(5, 6)
        with self.assertRaises(ParameterError):
            gen_sparse_target(5, 2, amplitude=0.0)


# =============================================================================
# Trials
# =============================================================================


class TrialTests(unittest.TestCase):
    def test_noiseless(self) -> None:
        d = decompose(np.eye(5))
        beta_star = np.array([5.0, 0, 0, 0, 0])
        cert = UdpCertificate(5, 0.2, 1.0, Provenance.ASSUMED)
        r = run_trial(d, beta_star, cert, 0.0, 1.0, 1.01, Estimator.LASSO, 0)
        self.assertTrue(r.noise_event_held)
        self.assertTrue(r.lambda_floor_applied)
        self.assertEqual(r.lam, LAMBDA_FLOOR)
        self.assertEqual(r.solver_status, "converged")
        self.assertLessEqual(r.l1_error, 1e-10)
        self.assertFalse(r.violated)
        self.assertTrue(r.appendix_diag_ok)

    def test_uninformative_certificate(self) -> None:
        d = decompose(np.eye(5))
        beta_star = np.array([5.0, 0, 0, 0, 0])
        cert = UdpCertificate(0, 0.2, 1.0, Provenance.ASSUMED)
        r = run_trial(d, beta_star, cert, 0.1, 1.0, 1.5, Estimator.LASSO, 3)
        self.assertIsNone(r.bound_l1)
        self.assertIsNone(r.bound_pred)
        self.assertFalse(r.violated)

    def test_bad_rule(self) -> None:
        d = decompose(np.eye(3))
        cert = UdpCertificate(3, 0.2, 1.0, Provenance.ASSUMED)
        with self.assertRaises(ParameterError):
            run_trial(d, np.ones(3), cert, 0.1, 1.0, 1.0, Estimator.LASSO, 0)

    def test_record_fields(self) -> None:
        d = decompose(np.eye(4))
        cert = UdpCertificate(2, 0.2, 1.0, Provenance.ASSUMED)
        beta_star = np.array([1.0, 0, 0, 0])
        r = run_trial(
            d, beta_star, cert, 0.1, 1.0, 2.0, Estimator.DANTZIG, seed=5
        )
        doc = r.as_json_dict()
        self.assertEqual(sorted(doc), sorted(TrialRecord.CSV_FIELDS))
        self.assertEqual(doc["seed"], 5)


# =============================================================================
# Experiments
# =============================================================================


class ExperimentTests(unittest.TestCase):
    def test_identity_lasso_no_violations(self) -> None:
        report = run_experiment(identity_config())
        self.assertEqual(report.trials, 100)
        self.assertEqual(report.violations, 0)
        doc = report.as_json_dict()
        self.assertEqual(doc["appendix_failures"], 0)
        self.assertEqual(doc["solver_failures"], 0)
        self.assertFalse(doc["uninformative_certificate"])

    def test_identity_dantzig_no_violations(self) -> None:
        report = run_experiment(
            identity_config(estimator="dantzig", kappa0=0.2, trials=30)
        )
        self.assertEqual(report.violations, 0)
        self.assertEqual(report.as_json_dict()["appendix_failures"], 0)

    def test_zero_trials(self) -> None:
        report = run_experiment(identity_config(trials=0))
        self.assertEqual(report.violations, 0)
        self.assertIsNone(report.event_frequency)
        doc = report.as_json_dict()
        self.assertEqual(doc["trials"], 0)
        self.assertIsNone(doc["l1_error"]["mean"])

    def test_deterministic(self) -> None:
        config = identity_config(trials=10)
        a = json_text(run_experiment(config).as_json_dict())
        b = json_text(run_experiment(config).as_json_dict())
        self.assertEqual(a, b)

    def test_threads_do_not_change_results(self) -> None:
        config = identity_config(trials=12)
        a = json_text(run_experiment(config).as_json_dict())
        b = json_text(run_experiment(config, threads=4).as_json_dict())
        self.assertEqual(a, b)

    def assert_bounds_hold(self, doc: Dict[str, Any]) -> None:
        self.assertEqual(doc["violations"], 0)
        self.assertEqual(doc["violations_l1"], 0)
        self.assertEqual(doc["violations_pred"], 0)
        self.assertEqual(doc["appendix_failures"], 0)
        self.assertEqual(doc["solver_failures"], 0)

    def test_distortion_certificate(self) -> None:
        config = ExperimentConfig.from_json_dict(
            dict(
                n=18,
                p=20,
                s=1,
                sigma=0.05,
                kappa0=0.45,
                amplitude=5.0,
                trials=200,
                seed=7,
            )
        )
        report = run_experiment(config)
        doc = report.as_json_dict()
        self.assertGreaterEqual(doc["S0"], 1)
        self.assertFalse(doc["uninformative_certificate"])
        self.assertEqual(doc["trials"], 200)
        self.assert_bounds_hold(doc)
        self.assertIsNotNone(doc["bound_l1"]["mean"])
        self.assertIsNotNone(doc["bound_pred"]["mean"])
        self.assertEqual(doc["certificate"]["provenance"], "distortion")
        self.assertEqual(doc["config"]["seed"], 7)

    def test_dantzig_distortion_certificate(self) -> None:
        # S0 = ⌊(κ₀/δ)²p⌋ with δ ≥ 1: κ₀ = 0.2 needs p large enough
        config = ExperimentConfig.from_json_dict(
            dict(
                n=98,
                p=100,
                normalize=True,
                s=1,
                sigma=0.05,
                kappa0=0.2,
                estimator="dantzig",
                amplitude=5.0,
                trials=200,
                seed=7,
            )
        )
        doc = run_experiment(config).as_json_dict()
        self.assertGreaterEqual(doc["S0"], 1)
        self.assert_bounds_hold(doc)
        self.assertIsNotNone(doc["bound_l1"]["mean"])

    def test_dantzig_small_design_is_uninformative(self) -> None:
        # On p = 20, (0.2/δ)²·20 < 1 for every δ ≥ 1
        config = ExperimentConfig.from_json_dict(
            dict(
                n=18,
                p=20,
                s=1,
                sigma=0.05,
                kappa0=0.2,
                estimator="dantzig",
                amplitude=5.0,
                trials=50,
                seed=7,
            )
        )
        doc = run_experiment(config).as_json_dict()
        self.assertEqual(doc["S0"], 0)
        self.assertTrue(doc["uninformative_certificate"])
        self.assert_bounds_hold(doc)
        self.assertIsNone(doc["bound_l1"]["mean"])

    def test_trials_csv(self) -> None:
        report = run_experiment(identity_config(trials=3))
        with tempfile.TemporaryDirectory() as tmp:
            filename = os.path.join(tmp, "trials.csv")
            report.write_trials_csv(filename)
            with open(filename, newline="") as f:
                rows = list(csv.DictReader(f))
        self.assertEqual(len(rows), 3)
        self.assertEqual([int(r["seed"]) for r in rows], [11, 12, 13])


# =============================================================================
# Noise event and least squares on the support
# =============================================================================


class MonteCarloTests(unittest.TestCase):
    def test_event_frequency(self) -> None:
        d = gen_gaussian_design(30, 50, normalize=True, seed=2)
        result = noise_event_frequency(d, 1.0, 1.0, draws=10000, seed=2)
        floor = result["prob_floor"]
        self.assertGreaterEqual(
            result["frequency"],
            floor - 3 * math.sqrt(floor * (1 - floor) / 10000),
        )
        self.assertEqual(result["draws"], 10000)

    def test_event_frequency_errors(self) -> None:
        with self.assertRaises(ParameterError):
            noise_event_frequency(decompose(np.eye(3)), 1.0, 1.0, draws=0)

    def test_ideal_identity(self) -> None:
        d = decompose(np.eye(6))
        r = monte_carlo_ideal(d, np.zeros(6), 1.0, [1, 4], trials=100000)
        self.assertLess(r.estimation_deviation, 0.02)
        self.assertLess(r.prediction_deviation, 0.02)
        self.assertGreaterEqual(
            r.mean_sq_estimation_error, r.lower_bound - 3 * r.se_estimation
        )

    def test_ideal_noiseless(self) -> None:
        d = decompose(np.eye(4))
        r = monte_carlo_ideal(d, np.ones(4), 0.0, [0, 1], trials=100)
        self.assertEqual(r.mean_sq_estimation_error, 0.0)
        self.assertEqual(r.mean_sq_prediction_error, 0.0)
        self.assertEqual(r.estimation_deviation, 0.0)

    def test_ideal_gaussian(self) -> None:
        x = np.random.default_rng(9).standard_normal((20, 30))
        r = monte_carlo_ideal(
            decompose(x), np.zeros(30), 1.0, [2, 7, 19], trials=100000
        )
        self.assertLess(r.estimation_deviation, 0.02)
        self.assertGreaterEqual(
            r.mean_sq_estimation_error, r.lower_bound - 3 * r.se_estimation
        )

    def test_ideal_errors(self) -> None:
        with self.assertRaises(ParameterError):
            monte_carlo_ideal(decompose(np.eye(3)), np.zeros(3), 1.0, [0], 0)
