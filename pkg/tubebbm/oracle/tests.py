# -*- coding: utf-8 -*-
import math
import os
import tempfile
from unittest import TestCase

import numpy as np

from ..paths.api import PathSpec
from ..paths.catalog import parse_path_key
from .pde import (
    PDEGrid,
    PecletError,
    asymptotic_log_slope,
    constant_tube_exact,
    expected_count_curve,
    solve_survival,
)

ZERO = parse_path_key('zero')
LINEAR = parse_path_key('linear:lambda=0.5')
ZERO_PATH_RATE = 1.0 - math.pi ** 2 / 32.0


def _negated(spec):
    return PathSpec(name='-%s' % spec.name, f=lambda t: -spec.f(t), df=lambda t: -spec.df(t),
                    d2f=lambda t: -spec.d2f(t))


def _steepening_path(rate):
    """f(t) = rate·t²/2, whose slope grows without bound"""
    return PathSpec(name='steepening', f=lambda t: 0.5 * rate * np.asarray(t) ** 2,
                    df=lambda t: rate * np.asarray(t, dtype=float),
                    d2f=lambda t: rate + 0.0 * np.asarray(t, dtype=float))


class PDEGridTests(TestCase):
    def test_spacing(self):
        grid = PDEGrid()
        self.assertAlmostEqual(4.0 / 401.0, grid.dy(2.0))
        nodes = grid.nodes(2.0)
        self.assertEqual(400, nodes.size)
        self.assertAlmostEqual(-2.0 + 4.0 / 401.0, nodes[0])
        self.assertAlmostEqual(2.0 - 4.0 / 401.0, nodes[-1])
        self.assertAlmostEqual(1e-3, grid.warm_start_time())
        self.assertAlmostEqual(1e-4, PDEGrid(dt_pde=1e-5).warm_start_time())

    def test_validation(self):
        for kwargs in [dict(ny=2), dict(dt_pde=0.0), dict(theta=1.5)]:
            with self.assertRaises(ValueError, msg=str(kwargs)):
                PDEGrid(**kwargs)

    def test_peclet_guard(self):
        PDEGrid.for_path(LINEAR, 2.0, 10.0)
        with self.assertRaises(PecletError):
            PDEGrid.for_path(parse_path_key('linear:lambda=200'), 2.0, 10.0)

    def test_peclet_mid_run(self):
        # |f'(t)|·dy first exceeds 1 once t > 1/(rate·dy)
        rate = 50.0
        dy = PDEGrid().dy(2.0)
        with self.assertRaises(PecletError) as context:
            solve_survival(_steepening_path(rate), 2.0, 5.0)
        self.assertAlmostEqual(1.0 / (rate * dy), context.exception.t, delta=2e-3)


class ConstantTubeExactTests(TestCase):
    def test_initial(self):
        self.assertEqual(1.0, constant_tube_exact(2.0, 0.0))
        self.assertEqual(0.0, constant_tube_exact(2.0, 0.0, y0=2.0))

    def test_boundary(self):
        self.assertEqual(0.0, constant_tube_exact(2.0, 1.0, y0=-2.5))
        self.assertLess(constant_tube_exact(2.0, 1.0, y0=2.0 - 1e-9), 1e-8)

    def test_short_time(self):
        # the walls are ~45 standard deviations away
        self.assertAlmostEqual(1.0, constant_tube_exact(2.0, 1e-3), places=12)

    def test_leading_term(self):
        for L, y0 in [(1.0, 0.0), (2.0, 0.5), (4.0, -1.0)]:
            t = 40.0 * L ** 2
            ratio = constant_tube_exact(L, t, y0) / math.exp(-math.pi ** 2 * t / (8.0 * L ** 2))
            self.assertAlmostEqual(4.0 / math.pi * math.cos(math.pi * y0 / (2.0 * L)), ratio,
                                   places=10)

    def test_array(self):
        values = constant_tube_exact(2.0, np.array([0.0, 1.0, 5.0]))
        self.assertEqual((3,), values.shape)
        self.assertTrue(np.all(np.diff(values) < 0))


class SolveSurvivalTests(TestCase):
    def test_matches_exact(self):
        for L in [1.0, 2.0, 4.0]:
            solution = solve_survival(ZERO, L, 30.0)
            checked = solution.t_grid >= 0.5
            exact = constant_tube_exact(L, solution.t_grid[checked])
            self.assertLessEqual(np.max(np.abs(solution.survival[checked] - exact)), 1e-5,
                                 msg='L=%g' % L)

    def test_decay_rate(self):
        solution = solve_survival(ZERO, 2.0, 30.0)
        self.assertAlmostEqual(-math.pi ** 2 / 32.0, asymptotic_log_slope(solution, (10.0, 30.0)),
                               delta=1e-4)
        self.assertEqual(1.0, solution.survival[0])
        self.assertTrue(np.all(np.diff(solution.survival) <= 1e-12))
        self.assertEqual(400, solution.mass_profile.size)

    def test_reflection_symmetry(self):
        forward = solve_survival(LINEAR, 2.0, 5.0)
        reflected = solve_survival(_negated(LINEAR), 2.0, 5.0)
        np.testing.assert_allclose(forward.survival, reflected.survival, rtol=1e-10, atol=1e-14)
        np.testing.assert_allclose(forward.mass_profile, reflected.mass_profile[::-1],
                                   rtol=1e-8, atol=1e-12)

    def test_unconfined_conserves_mass(self):
        solution = solve_survival(ZERO, 20.0, 5.0)
        self.assertGreaterEqual(solution.survival[-1], 1.0 - 1e-6)
        self.assertLessEqual(solution.survival[-1], 1.0 + 1e-9)

    def test_grid_convergence(self):
        coarse = solve_survival(LINEAR, 2.0, 5.0)
        fine = solve_survival(LINEAR, 2.0, 5.0, PDEGrid(ny=801, dt_pde=5e-4))
        self.assertLess(abs(fine.survival[-1] - coarse.survival[-1]) / fine.survival[-1], 2e-5)

    def test_survival_at(self):
        solution = solve_survival(ZERO, 2.0, 5.0)
        self.assertEqual(1.0, solution.survival_at(0.0))
        self.assertAlmostEqual(constant_tube_exact(2.0, 3.0), solution.survival_at(3.0),
                               delta=1e-5)


class ExpectedCountCurveTests(TestCase):
    def test_zero_path(self):
        curve = expected_count_curve(ZERO, 1.0, 2.0, 30.0)
        self.assertEqual(1.0, curve.expected_count[0])
        self.assertAlmostEqual(ZERO_PATH_RATE, asymptotic_log_slope(curve, (20.0, 30.0)),
                               delta=1e-3)
        self.assertAlmostEqual(ZERO_PATH_RATE, curve.at(25.0)[2], delta=1e-3)

    def test_linear_path(self):
        curve = expected_count_curve(LINEAR, 1.0, 2.0, 30.0)
        self.assertAlmostEqual(ZERO_PATH_RATE - 0.125, asymptotic_log_slope(curve, (20.0, 30.0)),
                               delta=1e-3)

    def test_extinction_regime(self):
        curve = expected_count_curve(ZERO, 0.2, 2.0, 30.0)
        self.assertAlmostEqual(0.2 - math.pi ** 2 / 32.0,
                               asymptotic_log_slope(curve, (20.0, 30.0)), delta=1e-3)

    def test_dyadic_rate_follows_slope(self):
        curve = expected_count_curve(parse_path_key('dyadicsmooth'), 1.0, 2.0, 62.0)
        # f' = 0 on [16, 32) and f' = 1 on [32, 64)
        self.assertAlmostEqual(ZERO_PATH_RATE, curve.at(30.0)[2], delta=5e-3)
        self.assertAlmostEqual(ZERO_PATH_RATE - 0.5, curve.at(60.0)[2], delta=5e-3)

    def test_export(self):
        curve = expected_count_curve(ZERO, 1.0, 2.0, 2.0)
        with tempfile.TemporaryDirectory() as directory:
            file_path = os.path.join(directory, 'curve.csv')
            curve.write_csv(file_path, stride=100)
            with open(file_path) as csv_file:
                lines = csv_file.read().splitlines()
        self.assertTrue(lines[0].startswith('# r=1.0 L=2.0 ny=400'))
        self.assertEqual('t,p,expected_count,log_slope', lines[1])
        self.assertEqual('2', lines[-1].split(',')[0])
