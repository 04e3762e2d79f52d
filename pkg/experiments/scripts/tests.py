# -*- coding: utf-8 -*-
import filecmp
import json
import math
import os
import shutil
import tempfile
from unittest import TestCase

from tubebbm.utils import config_hash
from .harness import (
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    EXIT_TARGET_FAILURE,
    FUNCTIONALS,
    MANIFEST_FILE,
    MC_P,
    MC_Q,
    PDE,
    PLOT_SCRIPT_FILE,
    REPORT_FILE,
    SERIES_FILE,
    SPINE,
    ExperimentConfig,
    ExperimentConfigError,
    Target,
    config_from_manifest,
    load_configs,
    recheck_report,
    run_experiment,
    run_suite,
)
from .run_experiments import main

ZERO_PATH_RATE = 1.0 - math.pi ** 2 / 32.0

LINEAR_FUNCTIONALS_SECTION = """
[experiment:%(name)s]
path = linear:lambda=0.5
engine = FUNCTIONALS
horizon = 100
target_half_S_sup = %(expected)s, 1e-6
"""


def _functionals_config(**overrides):
    values = dict(name='linear_functionals', path_key='linear:lambda=0.5', engine=FUNCTIONALS,
                  horizon=100.0, targets=(Target('half_S_sup', 0.125, tolerance=1e-6),))
    values.update(overrides)
    return ExperimentConfig(**values)


def _mc_config(**overrides):
    values = dict(name='zero_mc', path_key='zero', engine=MC_P, horizon=1.0, dt=0.01,
                  replications=20, seed=11)
    values.update(overrides)
    return ExperimentConfig(**values)


class _TempDirTestCase(TestCase):
    def setUp(self):
        self.output_root = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.output_root)

    def write_config(self, file_name, text):
        file_path = os.path.join(self.output_root, file_name)
        with open(file_path, 'w') as config_file:
            config_file.write(text)
        return file_path

    def read_report(self, report):
        with open(os.path.join(report.output_dir, REPORT_FILE)) as report_file:
            return json.load(report_file)


class TargetTests(TestCase):
    def test_parse_tolerance(self):
        target = Target.parse('log_slope', '0.6916, 1e-3')
        self.assertEqual(0.6916, target.expected)
        self.assertEqual(1e-3, target.tolerance)
        self.assertIsNone(target.n_se)

    def test_parse_standard_errors(self):
        target = Target.parse('mean_Z', '1, 3se')
        self.assertEqual(1.0, target.expected)
        self.assertEqual(3.0, target.n_se)
        self.assertIsNone(target.tolerance)

    def test_parse_errors(self):
        for text in ['0.5', '0.5, 1e-3, 2', 'half, 1e-3', '0.5, threese']:
            with self.assertRaises(ExperimentConfigError, msg=text):
                Target.parse('log_slope', text)

    def test_evaluate(self):
        measured = {'mean_Z': {'value': 1.05, 'se': 0.02}}
        self.assertTrue(Target('mean_Z', 1.0, n_se=3.0).evaluate(measured)['passed'])
        self.assertFalse(Target('mean_Z', 1.0, n_se=2.0).evaluate(measured)['passed'])
        self.assertTrue(Target('mean_Z', 1.0, tolerance=0.1).evaluate(measured)['passed'])

    def test_unmeasured_quantity_fails(self):
        result = Target('growth_rate', 0.5, tolerance=1.0).evaluate({})
        self.assertFalse(result['passed'])
        self.assertEqual('not measured', result['reason'])

    def test_standard_error_target_needs_an_error(self):
        result = Target('log_slope', 0.5, n_se=3.0).evaluate({'log_slope': {'value': 0.5,
                                                                             'se': None}})
        self.assertFalse(result['passed'])


class ExperimentConfigTests(_TempDirTestCase):
    def test_from_section(self):
        config = ExperimentConfig.from_section('zero_pde', {
            'path': 'zero', 'engine': 'pde', 'r': '1', 'L': '2', 'horizon': '30',
            'window': '20, 30', 'target_log_slope': '0.6916, 1e-3'})
        self.assertEqual(PDE, config.engine)
        self.assertEqual(2.0, config.L)
        self.assertEqual((20.0, 30.0), config.window)
        self.assertEqual('log_slope', config.targets[0].quantity)
        self.assertIsNone(config.replications)

    def test_engine_specific_fields(self):
        with self.assertRaises(ExperimentConfigError):
            _functionals_config(replications=10)
        with self.assertRaises(ExperimentConfigError):
            _mc_config(replications=None)
        with self.assertRaises(ExperimentConfigError):
            _mc_config(dt=None)

    def test_invalid_fields(self):
        with self.assertRaises(ExperimentConfigError):
            _functionals_config(engine='QUADRATURE')
        with self.assertRaises(ExperimentConfigError):
            _functionals_config(path_key='spiral')
        with self.assertRaises(ExperimentConfigError):
            _functionals_config(window=(50.0, 200.0))
        with self.assertRaises(ExperimentConfigError):
            # the PDE engine doesn't measure this
            _functionals_config(engine=PDE, targets=(Target('mean_Z', 1.0, n_se=3.0),))

    def test_unknown_and_missing_keys(self):
        with self.assertRaises(ExperimentConfigError):
            ExperimentConfig.from_section('x', {'path': 'zero', 'engine': 'PDE',
                                                'horizon': '1', 'colour': 'blue'})
        with self.assertRaises(ExperimentConfigError):
            ExperimentConfig.from_section('x', {'path': 'zero', 'engine': 'PDE'})

    def test_dict_round_trip_keeps_hash(self):
        config = _mc_config(window=(0.5, 1.0),
                            targets=(Target('mean_Z', 1.0, n_se=3.0),))
        echo = json.loads(json.dumps(config.as_dict()))
        rebuilt = ExperimentConfig.from_dict(echo)
        self.assertEqual(config, rebuilt)
        self.assertEqual(config.config_hash, config_hash(echo))

    def test_invalid_simulation_parameters(self):
        with self.assertRaises(ExperimentConfigError):
            _mc_config(dt=0.5).sim_config()

    def test_load_configs_follows_includes(self):
        self.write_config('inner.cfg', LINEAR_FUNCTIONALS_SECTION % {'name': 'inner',
                                                                    'expected': 0.125})
        suite_file = self.write_config('outer.cfg', '[suite]\ninclude = inner.cfg\n' + (
            LINEAR_FUNCTIONALS_SECTION % {'name': 'outer', 'expected': 0.125}))
        names = [config.name for config in load_configs(suite_file)]
        self.assertEqual(['inner', 'outer'], names)

    def test_load_configs_errors(self):
        missing = os.path.join(self.output_root, 'missing.cfg')
        with self.assertRaisesRegex(ExperimentConfigError, 'missing.cfg'):
            load_configs(missing)

        broken_include = self.write_config('broken.cfg', '[suite]\ninclude = nowhere.cfg\n')
        with self.assertRaisesRegex(ExperimentConfigError, 'nowhere.cfg'):
            load_configs(broken_include)

        duplicated = self.write_config('duplicated.cfg', '[suite]\ninclude = duplicated.cfg\n')
        with self.assertRaises(ExperimentConfigError):
            load_configs(duplicated)

        unknown_section = self.write_config('unknown.cfg', '[defaults]\nr = 1\n')
        with self.assertRaises(ExperimentConfigError):
            load_configs(unknown_section)

    def test_shipped_suite_parses(self):
        suites_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'suites')
        configs = load_configs(os.path.join(suites_dir, 'growth_rates_suite.cfg'))
        engines = set(config.engine for config in configs)
        self.assertEqual({PDE, MC_P, MC_Q, FUNCTIONALS, SPINE}, engines)
        for config in configs:
            self.assertTrue(config.targets, msg=config.name)
        path_keys = set(config.path_key.split(':')[0] for config in configs)
        for key in ('zero', 'linear', 'critical', 'criticallog', 'sinlog', 'dyadic'):
            self.assertIn(key, path_keys)

        quantities = set(target.quantity for config in configs for target in config.targets)
        for quantity in ('mean_sum_cos', 'survival_identity_gap', 'equilibrium_p_value',
                         'max_exact_error', 'survival_ci_upper'):
            self.assertIn(quantity, quantities)

        dyadic_horizons = set(config.horizon for config in configs
                              if config.path_key == 'dyadic')
        self.assertEqual(set(2.0 ** j for j in range(13, 21)), dyadic_horizons)


class RunExperimentTests(_TempDirTestCase):
    def test_functionals_experiment(self):
        report = run_experiment(_functionals_config(), self.output_root)
        self.assertTrue(report.passed)
        self.assertAlmostEqual(0.125, report.measured['half_S_sup']['value'], places=8)
        self.assertAlmostEqual(ZERO_PATH_RATE - 0.125, report.predicted['rate_limsup'], places=8)
        self.assertIn('T_half', report.predicted)
        for file_name in (REPORT_FILE, SERIES_FILE, MANIFEST_FILE, PLOT_SCRIPT_FILE):
            self.assertTrue(os.path.isfile(os.path.join(report.output_dir, file_name)),
                            msg=file_name)
        with open(os.path.join(report.output_dir, SERIES_FILE)) as series:
            self.assertEqual('t,A,B,A/t,B/t', series.readline().strip())

    def test_report_is_self_contained(self):
        config = _functionals_config(targets=(Target('half_S_sup', 0.125, tolerance=1e-6),
                                              Target('half_S_inf', 0.3, tolerance=1e-3)))
        report = run_experiment(config, self.output_root)
        self.assertFalse(report.passed)
        self.assertEqual(['half_S_inf'], report.failed_targets)

        stored = self.read_report(report)
        self.assertEqual(stored['config_hash'], config_hash(stored['config']))
        self.assertTrue(recheck_report(stored))

        stored['measured']['half_S_inf']['value'] = 0.3
        self.assertFalse(recheck_report(stored))

    def test_pde_experiment(self):
        config = ExperimentConfig(name='zero_pde', path_key='zero', engine=PDE, horizon=5.0,
                                  window=(4.0, 5.0), ny=100, dt_pde=1e-2,
                                  targets=(Target('log_slope', ZERO_PATH_RATE, tolerance=5e-3),))
        report = run_experiment(config, self.output_root)
        self.assertTrue(report.passed, msg=report.targets)
        self.assertGreater(report.measured['survival']['value'], 0.0)
        self.assertLess(report.measured['survival']['value'], 1.0)
        with open(os.path.join(report.output_dir, SERIES_FILE)) as series:
            self.assertTrue(series.readline().startswith('# r=1'))
        # a coarse grid, still close to the eigenfunction series
        self.assertLess(report.measured['max_exact_error']['value'], 1e-2)

    def test_mc_series_is_reproducible(self):
        first = run_experiment(_mc_config(), os.path.join(self.output_root, 'first'))
        second = run_experiment(_mc_config(), os.path.join(self.output_root, 'second'))
        first_series = os.path.join(first.output_dir, SERIES_FILE)
        self.assertTrue(filecmp.cmp(first_series, os.path.join(second.output_dir, SERIES_FILE),
                                    shallow=False))
        self.assertEqual(first.config_hash, second.config_hash)
        self.assertIn('survival_probability', first.measured)
        self.assertEqual(0, first.events['bound_violations'])

        rerun_dir = os.path.join(self.output_root, 'rerun')
        rerun_config = config_from_manifest(os.path.join(first.output_dir, MANIFEST_FILE),
                                            rerun_dir)
        rerun = run_experiment(rerun_config)
        self.assertEqual(rerun_dir, rerun.output_dir)
        self.assertTrue(filecmp.cmp(first_series, os.path.join(rerun_dir, SERIES_FILE),
                                    shallow=False))

    def test_changed_measure_experiment(self):
        config = _mc_config(name='zero_q', engine=MC_Q, horizon=0.5, replications=10)
        report = run_experiment(config, self.output_root)
        self.assertIsNone(report.failure)
        ratio = report.measured['mean_inverse_Z']['value']
        self.assertGreater(ratio, 0.0)
        self.assertGreaterEqual(report.measured['mean_count']['value'], 1.0)
        self.assertIn('clamp_events', report.events)
        self.assertEqual(0, report.events['bound_violations'])
        for quantity in ('survival_frequency', 'survival_identity_gap', 'measure_change_gap'):
            self.assertIn(quantity, report.measured)
        self.assertIsNotNone(report.measured['survival_identity_gap']['se'])

    def test_many_to_one_quantities(self):
        config = _mc_config(name='free_mc', L=math.inf, replications=200, seed=9,
                            targets=(Target('mean_sum_cos', math.exp(0.5), n_se=4.0),))
        report = run_experiment(config, self.output_root)
        self.assertIsNone(report.failure)
        # the step-wise branching probability biases counts down by about r·dt·t
        measured = report.measured['mean_sum_cos']
        self.assertLessEqual(abs(measured['value'] - math.exp(0.5)), 4.0 * measured['se'] + 0.03)
        self.assertEqual(1.0, report.measured['survival_probability']['value'])
        self.assertGreater(report.measured['survival_probability']['ci_halfwidth'], 0.0)

        rerun_config = config_from_manifest(os.path.join(report.output_dir, MANIFEST_FILE))
        self.assertEqual(math.inf, rerun_config.L)
        self.assertEqual(config.config_hash, rerun_config.config_hash)

    def test_extinct_survival_interval(self):
        config = _mc_config(name='extinct_mc', r=0.2, L=0.5, dt=0.0025, horizon=5.0,
                            replications=50,
                            targets=(Target('survival_ci_upper', 0.0, tolerance=0.1),))
        report = run_experiment(config, self.output_root)
        self.assertEqual(0.0, report.measured['survival_probability']['value'])
        upper = report.measured['survival_ci_upper']['value']
        self.assertGreater(upper, 0.0)
        self.assertTrue(report.passed, msg=report.targets)

    def test_spine_experiment(self):
        config = ExperimentConfig(name='zero_spine', path_key='zero', engine=SPINE, horizon=12.0,
                                  dt=0.01, replications=100, seed=5, burn_in=2.0,
                                  sample_spacing=1.0,
                                  targets=(Target('spine_exits', 0.0, tolerance=0.0),
                                           Target('fission_count_mean', 24.0, n_se=4.0)))
        report = run_experiment(config, self.output_root)
        self.assertIsNone(report.failure)
        self.assertTrue(report.passed, msg=report.targets)
        self.assertEqual(1100, report.measured['equilibrium_p_value']['n_samples'])
        self.assertIn('clamp_events', report.events)
        with open(os.path.join(report.output_dir, SERIES_FILE)) as series:
            self.assertEqual('t,mean_displacement', series.readline().strip())

    def test_engine_failure_is_reported(self):
        # the exact dyadic path has no second derivative at its switches
        config = _mc_config(name='dyadic_mc', path_key='dyadic',
                            targets=(Target('mean_Z', 1.0, n_se=3.0),))
        report = run_experiment(config, self.output_root)
        self.assertIsNotNone(report.failure)
        self.assertFalse(report.passed)
        self.assertFalse(self.read_report(report)['passed'])

    def test_plot_script_reads_the_series(self):
        report = run_experiment(_functionals_config(), self.output_root)
        with open(os.path.join(report.output_dir, PLOT_SCRIPT_FILE)) as script:
            source = script.read()
        self.assertIn('series.csv', source)
        self.assertIn("matplotlib.use(\"Agg\")", source)
        self.assertIn("('A/t', False)", source)


class RunSuiteTests(_TempDirTestCase):
    def test_empty_suite(self):
        suite_file = self.write_config('empty.cfg', '# nothing to run yet\n')
        summary = run_suite(suite_file, self.output_root, max_workers=1)
        self.assertEqual([], summary.reports)
        self.assertEqual(EXIT_OK, summary.exit_code)

    def test_missing_suite_names_the_file(self):
        with self.assertRaisesRegex(ExperimentConfigError, 'no_such_suite.cfg'):
            run_suite(os.path.join(self.output_root, 'no_such_suite.cfg'), self.output_root)

    def test_failing_target_is_named(self):
        suite_file = self.write_config('suite.cfg', (
            LINEAR_FUNCTIONALS_SECTION % {'name': 'right', 'expected': 0.125}
            + LINEAR_FUNCTIONALS_SECTION % {'name': 'wrong', 'expected': 0.3}))
        summary = run_suite(suite_file, os.path.join(self.output_root, 'out'), max_workers=2)
        self.assertEqual(EXIT_TARGET_FAILURE, summary.exit_code)
        self.assertEqual([('wrong', 'half_S_sup')], summary.failures())
        self.assertEqual(['right', 'wrong'], [report.name for report in summary.reports])

        with open(os.path.join(self.output_root, 'out', 'summary.json')) as summary_file:
            aggregate = json.load(summary_file)
        self.assertFalse(aggregate['passed'])
        self.assertEqual(['half_S_sup'], aggregate['experiments'][1]['failed_targets'])


class CommandLineTests(_TempDirTestCase):
    def test_list_paths(self):
        self.assertEqual(EXIT_OK, main(['list-paths']))

    def test_predict(self):
        self.assertEqual(EXIT_OK, main(['predict', 'linear:lambda=0.5', '--r', '1', '--L', '2',
                                        '--horizon', '100']))
        self.assertEqual(EXIT_CONFIG_ERROR, main(['predict', 'spiral', '--r', '1', '--L', '2',
                                                  '--horizon', '100']))

    def test_usage_errors(self):
        self.assertEqual(EXIT_CONFIG_ERROR, main(['predict', 'zero']))
        self.assertEqual(EXIT_CONFIG_ERROR, main(['run', os.path.join(self.output_root,
                                                                      'missing.cfg')]))

    def test_run_exit_codes(self):
        passing = self.write_config('passing.cfg', LINEAR_FUNCTIONALS_SECTION % {
            'name': 'passing', 'expected': 0.125})
        failing = self.write_config('failing.cfg', LINEAR_FUNCTIONALS_SECTION % {
            'name': 'failing', 'expected': 0.3})
        self.assertEqual(EXIT_OK, main(['-o', self.output_root, 'run', passing]))
        self.assertEqual(EXIT_TARGET_FAILURE, main(['-o', self.output_root, 'suite', failing,
                                                    '-w', '1']))

    def test_rerun(self):
        report = run_experiment(_functionals_config(), self.output_root)
        manifest = os.path.join(report.output_dir, MANIFEST_FILE)
        rerun_dir = os.path.join(self.output_root, 'rerun')
        self.assertEqual(EXIT_OK, main(['rerun', manifest, '-output_dir', rerun_dir]))
        self.assertTrue(os.path.isfile(os.path.join(rerun_dir, REPORT_FILE)))
