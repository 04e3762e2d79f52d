# -*- coding: utf-8 -*-
import math
import os
import tempfile
from unittest import TestCase

import numpy as np

from .api import (
    ApproximationTooCoarseError,
    PathDomainError,
    PathEvaluationError,
    PathSpec,
    accumulate_functionals,
    check_usual_conditions,
    compute_T,
    corollary_rates,
    derivative_mismatch,
    eval_path,
    heuristic_rates,
    predict_rates,
    sandwich_tubes,
    shift_path,
)
from .catalog import (
    CATALOG,
    UnknownPathError,
    dyadic_energy_exact,
    list_paths,
    parse_path_key,
)
from .constants import CRITICAL_UNDETERMINED, EXTINCTION, SUPERCRITICAL

ZERO_PATH_RATE = 1.0 - math.pi ** 2 / 32.0

SMOOTH_KEYS = (
    'zero',
    'linear:lambda=0.5',
    'power:beta=0.5,eps=1',
    'log:a=1',
    'critical:c=1,beta=0.5',
    'criticallog:c=1',
    'sinlog:lambda=1',
)


class EvalPathTests(TestCase):
    def test_linear(self):
        self.assertEqual((1.0, 0.5, 0.0), eval_path(parse_path_key('linear:lambda=0.5'), 2.0))

    def test_origin(self):
        for key in CATALOG:
            spec = parse_path_key(key)
            self.assertAlmostEqual(0.0, eval_path(spec, 0.0)[0], places=12, msg=key)

    def test_sin_log_derivatives_at_origin(self):
        position, slope, curvature = eval_path(parse_path_key('sinlog:lambda=1'), 0.0)
        self.assertAlmostEqual(0.0, position)
        self.assertAlmostEqual(1.0, slope)
        self.assertAlmostEqual(1.0, curvature)

    def test_negative_time(self):
        with self.assertRaises(PathDomainError):
            eval_path(parse_path_key('zero'), -0.1)

    def test_derivatives_consistent(self):
        grid = np.linspace(0.05, 50.0, 101)
        for key in SMOOTH_KEYS + ('sinfreq:delta=0.1', 'smallsin:delta=0.1'):
            slope_mismatch, curvature_mismatch = derivative_mismatch(parse_path_key(key), grid)
            self.assertLess(slope_mismatch, 1e-5, msg=key)
            self.assertLess(curvature_mismatch, 1e-5, msg=key)

    def test_dyadic_smooth_derivatives_away_from_ramp_edges(self):
        spec = parse_path_key('dyadicsmooth:window=0.01')
        # ramp at t=16 spans [15.96, 16.04]; sample inside it and on flat stretches
        grid = np.array([3.0, 5.5, 10.0, 15.99, 16.0, 16.01, 20.0])
        slope_mismatch, curvature_mismatch = derivative_mismatch(spec, grid, h=1e-4)
        self.assertLess(slope_mismatch, 1e-5)
        self.assertLess(curvature_mismatch, 1e-5)


class CatalogTests(TestCase):
    def test_parse_parameters(self):
        spec = parse_path_key('power:beta=0.5,eps=2')
        self.assertEqual(0.5, spec.params['beta'])
        self.assertEqual(2.0, spec.params['eps'])
        self.assertEqual('power:beta=0.5,eps=2', spec.name)

    def test_unknown_key(self):
        with self.assertRaises(UnknownPathError):
            parse_path_key('spiral')

    def test_unknown_parameter(self):
        with self.assertRaises(UnknownPathError):
            parse_path_key('linear:slope=2')

    def test_list_paths(self):
        listing = {key: expected for key, _params, _desc, expected in list_paths()}
        self.assertTrue(listing['linear'])
        self.assertFalse(listing['sinfreq'])
        self.assertFalse(listing['dyadic'])

    def test_dyadic_interval_counting(self):
        for k in range(6, 10):
            odd = 2.0 ** (2 * k + 1)
            even = 2.0 ** (2 * k + 2)
            self.assertAlmostEqual(1.0 / 6, dyadic_energy_exact(odd) / (2 * odd), delta=1e-3)
            self.assertAlmostEqual(1.0 / 3, dyadic_energy_exact(even) / (2 * even), delta=1e-3)

    def test_dyadic_slopes(self):
        spec = parse_path_key('dyadic')
        self.assertEqual(0.0, eval_path(spec, 1.5)[1])
        self.assertEqual(1.0, eval_path(spec, 3.0)[1])
        self.assertEqual(0.0, eval_path(spec, 5.0)[1])
        self.assertEqual(1.0, eval_path(spec, 9.0)[1])
        self.assertEqual(2.0, eval_path(spec, 4.0)[0])


class FunctionalsTests(TestCase):
    def test_linear_energy(self):
        functionals = accumulate_functionals(parse_path_key('linear:lambda=0.5'), 100.0, 1000)
        np.testing.assert_allclose(functionals.A, 0.25 * functionals.t_grid, atol=1e-10)
        self.assertAlmostEqual(0.25, functionals.S_sup, places=10)
        self.assertAlmostEqual(0.25, functionals.S_inf, places=10)
        np.testing.assert_array_equal(np.zeros_like(functionals.B), functionals.B)

    def test_monotone_and_ordered(self):
        for key in SMOOTH_KEYS + ('dyadic', 'dyadicsmooth'):
            functionals = accumulate_functionals(parse_path_key(key), 200.0, 4000)
            self.assertEqual(0.0, functionals.A[0])
            self.assertEqual(0.0, functionals.B[0])
            self.assertTrue(np.all(np.diff(functionals.A) >= 0), msg=key)
            self.assertTrue(np.all(np.diff(functionals.B) >= 0), msg=key)
            self.assertLessEqual(functionals.S_inf, functionals.S_sup)

    def test_simpson_convergence(self):
        for key in SMOOTH_KEYS:
            spec = parse_path_key(key)
            coarse = accumulate_functionals(spec, 100.0, 20000).A[-1]
            fine = accumulate_functionals(spec, 100.0, 40000).A[-1]
            self.assertLessEqual(abs(fine - coarse), 1e-6 * max(1.0, abs(fine)), msg=key)

    def test_power_energy_vanishes(self):
        spec = parse_path_key('power:beta=0.5,eps=1')
        short = accumulate_functionals(spec, 1e2, 20000).S_sup
        long = accumulate_functionals(spec, 1e5, 200000).S_sup
        self.assertLess(long, short)
        self.assertLess(long, 1e-3)

    def test_golden_ratio(self):
        functionals = accumulate_functionals(parse_path_key('sinlog:lambda=1'), 1e6, 200000)
        self.assertTrue(0.713 <= functionals.S_sup / 2 <= 0.733)
        self.assertTrue(0.266 <= functionals.S_inf / 2 <= 0.286)
        self.assertAlmostEqual((math.sqrt(5) + 1) / (2 * math.sqrt(5)), functionals.S_sup / 2,
                               delta=1e-2)
        self.assertAlmostEqual((math.sqrt(5) - 1) / (2 * math.sqrt(5)), functionals.S_inf / 2,
                               delta=1e-2)

    def test_dyadic_running_energy(self):
        horizon = 2.0 ** 20
        exact = accumulate_functionals(parse_path_key('dyadic'), horizon, 2 ** 20)
        smooth = accumulate_functionals(parse_path_key('dyadicsmooth'), horizon, 2 ** 20)
        for k in range(6, 10):
            for t, target in ((2.0 ** (2 * k + 1), 1.0 / 6), (2.0 ** (2 * k + 2), 1.0 / 3)):
                self.assertAlmostEqual(target, exact.energy_at(t) / (2 * t), delta=1e-3)
                if k > 6:
                    # the earliest ramps are narrower than the grid spacing
                    self.assertAlmostEqual(dyadic_energy_exact(t) / (2 * t),
                                           smooth.energy_at(t) / (2 * t), delta=1e-3)

    def test_non_finite_derivative(self):
        spec = PathSpec(name='blowup', f=lambda t: np.log(np.abs(1.0 - np.asarray(t))),
                        df=lambda t: -1.0 / (1.0 - np.asarray(t)),
                        d2f=lambda t: -1.0 / (1.0 - np.asarray(t)) ** 2)
        with self.assertRaises(PathEvaluationError) as context:
            accumulate_functionals(spec, 2.0, 10)
        self.assertEqual(1.0, context.exception.t)

    def test_too_few_steps(self):
        with self.assertRaises(PathDomainError):
            accumulate_functionals(parse_path_key('zero'), 1.0, 5)

    def test_csv_export(self):
        functionals = accumulate_functionals(parse_path_key('linear:lambda=1'), 10.0, 10)
        with tempfile.TemporaryDirectory() as directory:
            file_path = os.path.join(directory, 'functionals.csv')
            functionals.write_csv(file_path)
            with open(file_path) as csv_file:
                lines = csv_file.read().splitlines()
        self.assertEqual('t,A,B,A/t,B/t', lines[0])
        self.assertEqual(12, len(lines))


class PredictRatesTests(TestCase):
    def test_zero_path(self):
        prediction = predict_rates(parse_path_key('zero'), 1.0, math.pi / 2, 100.0)
        self.assertAlmostEqual(0.5, prediction.rate_limsup)
        self.assertAlmostEqual(0.5, prediction.rate_liminf)
        self.assertEqual(SUPERCRITICAL, prediction.regime)

    def test_linear_extinction(self):
        # λ²/2 + π²/8L² = 0.5 + 0.308 > r
        prediction = predict_rates(parse_path_key('linear:lambda=1'), 0.7, 2.0, 100.0)
        self.assertEqual(EXTINCTION, prediction.regime)
        self.assertLess(prediction.S_tilde, 0)

    def test_linear_exact(self):
        prediction = predict_rates(parse_path_key('linear:lambda=0.5'), 1.0, 2.0, 100.0)
        self.assertAlmostEqual(ZERO_PATH_RATE - 0.125, prediction.rate_limsup, delta=1e-10)
        self.assertAlmostEqual(ZERO_PATH_RATE - 0.125, prediction.rate_liminf, delta=1e-10)

    def test_critical_boundary(self):
        prediction = predict_rates(parse_path_key('zero'), math.pi ** 2 / 32, 2.0, 10.0)
        self.assertEqual(CRITICAL_UNDETERMINED, prediction.regime)

    def test_dyadic(self):
        prediction = predict_rates(parse_path_key('dyadic'), 1.0, 2.0, 2.0 ** 16, 2 ** 16)
        self.assertAlmostEqual(ZERO_PATH_RATE - 1.0 / 3, prediction.rate_liminf, delta=2e-3)
        self.assertAlmostEqual(ZERO_PATH_RATE - 1.0 / 6, prediction.rate_limsup, delta=2e-3)
        self.assertGreaterEqual(prediction.rate_limsup, prediction.rate_liminf)

    def test_monotone_in_L(self):
        spec = parse_path_key('sinlog:lambda=0.5')
        previous = None
        for L in (1.0, 1.5, 2.0, 4.0):
            prediction = predict_rates(spec, 1.0, L, 1000.0)
            if previous:
                self.assertGreaterEqual(prediction.rate_limsup, previous.rate_limsup)
                self.assertGreaterEqual(prediction.rate_liminf, previous.rate_liminf)
            previous = prediction

    def test_invalid_inputs(self):
        with self.assertRaises(PathDomainError):
            predict_rates(parse_path_key('zero'), 0.0, 1.0, 10.0)
        with self.assertRaises(PathDomainError):
            predict_rates(parse_path_key('zero'), 1.0, -1.0, 10.0)


class ThresholdTimeTests(TestCase):
    def test_zero_path(self):
        spec = parse_path_key('zero')
        self.assertEqual(0.0, compute_T(spec, 1.0, 2.0, 0.0, 100.0))
        self.assertEqual(0.0, compute_T(spec, 1.0, 2.0, 0.5, 100.0))

    def test_linear_matches_brute_force(self):
        # ∫(S̃)ds - 2L·λ >= p·S̃·s  <=>  s >= 2Lλ / ((1-p)S̃)
        s_tilde = ZERO_PATH_RATE - 0.125
        expected = 2.0 * 2.0 * 0.5 / (0.1 * s_tilde)
        value = compute_T(parse_path_key('linear:lambda=0.5'), 1.0, 2.0, 0.9, 200.0, 20000)
        self.assertAlmostEqual(expected, value, delta=0.02)

    def test_not_attained(self):
        self.assertIsNone(compute_T(parse_path_key('linear:lambda=0.5'), 1.0, 2.0, 0.9, 20.0))

    def test_invalid_fraction(self):
        with self.assertRaises(PathDomainError):
            compute_T(parse_path_key('zero'), 1.0, 2.0, 1.0, 10.0)

    def test_requires_supercritical(self):
        with self.assertRaises(PathDomainError):
            compute_T(parse_path_key('zero'), 0.2, 2.0, 0.5, 10.0)


class ShiftPathTests(TestCase):
    def test_linear_shift_invariant(self):
        spec = parse_path_key('linear:lambda=0.5')
        shifted = shift_path(spec, 7.3)
        grid = np.linspace(0, 10, 11)
        np.testing.assert_allclose(spec.f(grid), shifted.f(grid), atol=1e-12)
        np.testing.assert_allclose(spec.df(grid), shifted.df(grid))

    def test_identity_shift(self):
        spec = parse_path_key('sinlog:lambda=1')
        self.assertIs(spec, shift_path(spec, 0.0))

    def test_dyadic_shift(self):
        shifted = shift_path(parse_path_key('dyadic'), 2.5)
        self.assertEqual(0.0, eval_path(shifted, 0.0)[0])
        self.assertEqual(1.0, eval_path(shifted, 0.0)[1])
        self.assertEqual(0.0, eval_path(shifted, 2.0)[1])

    def test_negative_shift(self):
        with self.assertRaises(PathDomainError):
            shift_path(parse_path_key('zero'), -1.0)


class UsualConditionsTests(TestCase):
    def test_catalog_paths(self):
        for key in CATALOG:
            spec = parse_path_key(key)
            if not spec.usual_conditions_expected:
                continue
            report = check_usual_conditions(spec, 1e4, n_steps=200000)
            self.assertTrue(report.plausible, msg='%s: %s' % (key, report.curvature_ratios))
            self.assertEqual(0.0, report.f0_abs)

    def test_linear(self):
        report = check_usual_conditions(parse_path_key('linear:lambda=2'), 100.0)
        self.assertEqual((0.0, 0.0, 0.0, 0.0), report.curvature_ratios)
        self.assertEqual('condition (3) plausible', report.verdict)

    def test_counterexamples_fail(self):
        for key in ('sinfreq:delta=0.01', 'smallsin:delta=0.1'):
            report = check_usual_conditions(parse_path_key(key), 100.0, n_steps=200000)
            self.assertFalse(report.plausible, msg=key)
            self.assertEqual('condition (3) fails', report.verdict)


class SandwichTests(TestCase):
    def test_identical(self):
        spec = parse_path_key('sinlog:lambda=1')
        self.assertEqual((2.0, 2.0), sandwich_tubes(spec, spec, 2.0, 100.0))

    def test_small_sin(self):
        upper, lower = sandwich_tubes(parse_path_key('zero'), parse_path_key('smallsin:delta=0.1'),
                                      2.0, 100.0, 200000)
        self.assertAlmostEqual(2.1, upper, places=5)
        self.assertAlmostEqual(1.9, lower, places=5)

    def test_power_shift(self):
        exact = parse_path_key('power:beta=0.5,eps=0.0001')
        shifted = parse_path_key('power:beta=0.5,eps=1')
        t_grid = np.linspace(0, 50, 50001)
        distance = np.max(np.abs(exact.f(t_grid) - shifted.f(t_grid)))
        upper, lower = sandwich_tubes(exact, shifted, 2.0, 50.0, 50000)
        self.assertAlmostEqual(2.0 + distance, upper)
        self.assertAlmostEqual(2.0 - distance, lower)

    def test_too_coarse(self):
        with self.assertRaises(ApproximationTooCoarseError):
            sandwich_tubes(parse_path_key('zero'), parse_path_key('sinfreq:delta=0.1'), 0.5, 10.0)

    def test_corollary_rates(self):
        exact = parse_path_key('power:beta=0.5,eps=0.0001')
        approximants = [parse_path_key('power:beta=0.5,eps=%g' % eps) for eps in (1, 0.1, 0.01)]
        prediction = corollary_rates(exact, approximants, 1.0, 2.0, 1000.0, 100000)

        finer = [accumulate_functionals(fn, 1000.0, 100000) for fn in approximants[1:]]
        self.assertAlmostEqual(max(item.S_sup for item in finer), prediction.S_bar)
        self.assertAlmostEqual(min(item.S_inf for item in finer), prediction.S_under)
        self.assertLess(prediction.S_bar, 1e-2)
        self.assertGreaterEqual(prediction.rate_limsup, prediction.rate_liminf)
        self.assertEqual(SUPERCRITICAL, prediction.regime)
        self.assertEqual(3, len(prediction.tubes))
        for upper, lower in prediction.tubes:
            self.assertAlmostEqual(4.0, upper + lower)
            self.assertLess(lower, 2.0)

    def test_heuristic_rates(self):
        rates = heuristic_rates(parse_path_key('sinfreq:delta=0.01'), 1.0, 3.0)
        self.assertAlmostEqual(1.0 - math.pi ** 2 / 32, rates['narrowed_tube_rate'])
        self.assertEqual({}, heuristic_rates(parse_path_key('zero'), 1.0, 2.0))
