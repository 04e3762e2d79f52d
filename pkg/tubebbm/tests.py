# -*- coding: utf-8 -*-
import json
import math
import os
import shutil
import tempfile
from unittest import TestCase

import numpy as np

from .utils import (
    binomial_ci_halfwidth,
    binomial_interval,
    canonical_json,
    combined_standard_error,
    config_hash,
    mean_and_standard_error,
    write_csv,
    write_json,
)


class HashingTests(TestCase):
    def test_key_order_does_not_matter(self):
        first = {'r': 1.0, 'L': 2.0, 'window': (20.0, 30.0)}
        second = {'window': [20.0, 30.0], 'L': 2.0, 'r': 1.0}
        self.assertEqual(canonical_json(first), canonical_json(second))
        self.assertEqual(config_hash(first), config_hash(second))
        self.assertEqual(64, len(config_hash(first)))

    def test_numpy_values(self):
        self.assertEqual(canonical_json({'n': 3, 'x': [0.5, 1.5]}),
                         canonical_json({'n': np.int64(3), 'x': np.array([0.5, 1.5])}))

    def test_non_finite_values(self):
        self.assertEqual('{"rate":"-inf","se":"nan"}',
                         canonical_json({'se': math.nan, 'rate': -math.inf}))

    def test_different_configs_differ(self):
        self.assertNotEqual(config_hash({'seed': 1}), config_hash({'seed': 2}))


class OutputTests(TestCase):
    def setUp(self):
        self.directory = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.directory)

    def test_write_csv_precision(self):
        file_path = os.path.join(self.directory, 'series.csv')
        write_csv(file_path, ('t', 'count'), [(0.5, 3), (np.float64(1.0) / 3.0, 4)])
        with open(file_path) as csv_file:
            lines = csv_file.read().splitlines()
        self.assertEqual(['t,count', '0.5,3', '0.333333333333,4'], lines)

    def test_write_json(self):
        file_path = os.path.join(self.directory, 'report.json')
        write_json(file_path, {'value': np.float64(0.25), 'se': math.nan})
        with open(file_path) as json_file:
            self.assertEqual({'value': 0.25, 'se': 'nan'}, json.load(json_file))


class StatisticsTests(TestCase):
    def test_mean_and_standard_error(self):
        mean, error = mean_and_standard_error([1.0, 2.0, 3.0, math.nan])
        self.assertAlmostEqual(2.0, mean)
        self.assertAlmostEqual(1.0 / math.sqrt(3.0), error)

    def test_too_few_values(self):
        mean, error = mean_and_standard_error([4.0])
        self.assertEqual(4.0, mean)
        self.assertTrue(math.isnan(error))
        self.assertTrue(all(math.isnan(value) for value in mean_and_standard_error([])))

    def test_binomial_ci_halfwidth(self):
        self.assertAlmostEqual(0.09617, binomial_ci_halfwidth(50, 100), delta=1e-4)
        # no successes still leaves a positive upper bound
        halfwidth = binomial_ci_halfwidth(0, 100)
        self.assertGreater(halfwidth, 0.0)
        self.assertAlmostEqual(0.0370, halfwidth, delta=1e-4)

    def test_binomial_interval(self):
        low, high = binomial_interval(0, 100)
        self.assertAlmostEqual(0.0, low)
        self.assertAlmostEqual(0.0370, high, delta=1e-4)
        low, high = binomial_interval(50, 100)
        self.assertLess(low, 0.5)
        self.assertGreater(high, 0.5)
        self.assertAlmostEqual(0.5 - low, high - 0.5, delta=1e-9)

    def test_combined_standard_error(self):
        self.assertAlmostEqual(5.0, combined_standard_error(3.0, 4.0))
