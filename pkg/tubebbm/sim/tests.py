# -*- coding: utf-8 -*-
import csv
import json
import math
import os
import tempfile
from unittest import TestCase

import numpy as np

from ..oracle.pde import solve_survival
from ..paths.api import PathDomainError, compute_T, predict_rates
from ..paths.catalog import parse_path_key
from . import rng
from .bbm import (
    BridgeInputError,
    ConfigError,
    EstimationError,
    Particle,
    Population,
    SimConfig,
    TubeInvariantError,
    bridge_kill_prob,
    checkpoint_means,
    compute_Z,
    coupled_counts,
    estimate_growth_rate,
    simulate,
    simulate_ensemble,
    survival_frequency,
    survival_probability,
    write_ensemble_csv,
    write_manifest,
)
from .constants import STOP_AT_CAP, UNIFORM_THIN
from .spine import (
    InsufficientDataError,
    ZetaSeries,
    companion_seed,
    decay_bound_check,
    equilibrium_cdf,
    equilibrium_check,
    equilibrium_density,
    equilibrium_samples,
    equilibrium_variance,
    fission_count_check,
    survival_identity_check,
    mean_inverse_z,
    measure_change_check,
    simulate_spine,
    simulate_spine_ensemble,
    simulate_under_Q,
    simulate_under_Q_ensemble,
    spine_decomposition_series,
    spine_drift,
    summarize_spines,
    terminal_z_quantile,
    write_spine_csv,
)

# Monte Carlo checks use fixed seeds and a slightly wider band than the 3 s.e. used for
# acceptance runs, since they run with far fewer replications
N_SE = 4.0

ZERO = parse_path_key('zero')
LINEAR = parse_path_key('linear:lambda=0.5')


def _config(**overrides):
    values = dict(r=1.0, L=2.0, dt=0.01, horizon=2.0, seed=7)
    values.update(overrides)
    return SimConfig(**values)


def _read_csv(file_path):
    with open(file_path, newline='') as csv_file:
        return list(csv.reader(csv_file))


class SimConfigTests(TestCase):
    def test_dt_caps(self):
        self.assertAlmostEqual(0.04, SimConfig.max_dt(1.0, 2.0))
        self.assertAlmostEqual(0.01, SimConfig.max_dt(1.0, 1.0))
        self.assertAlmostEqual(0.1, SimConfig.max_dt(1.0, math.inf))
        self.assertAlmostEqual(0.02, SimConfig.max_dt(5.0, 4.0))

    def test_rejects_coarse_dt(self):
        with self.assertRaises(ConfigError):
            _config(dt=0.05)
        with self.assertRaises(ConfigError):
            _config(L=1.0, dt=0.02)
        # the tube cap doesn't apply without a tube
        self.assertFalse(_config(L=math.inf, dt=0.05).tube_enabled)

    def test_rejects_invalid_values(self):
        for overrides in [dict(r=0.0), dict(L=-1.0), dict(dt=0.0), dict(horizon=0.0),
                          dict(n_max=0), dict(thinning='DROP_ALL'), dict(horizon=0.05)]:
            with self.assertRaises(ConfigError, msg=str(overrides)):
                _config(**overrides)

    def test_checkpoint_steps(self):
        config = _config(horizon=2.0, checkpoint_interval=0.5)
        np.testing.assert_array_equal([0, 50, 100, 150, 200], config.checkpoint_steps())

        # the final step is always a checkpoint
        config = _config(horizon=1.2, checkpoint_interval=0.5)
        np.testing.assert_array_equal([0, 50, 100, 120], config.checkpoint_steps())

    def test_replace(self):
        config = _config()
        self.assertEqual(3.0, config.replace(horizon=3.0).horizon)
        self.assertEqual(2.0, config.horizon)
        self.assertEqual(7, config.as_dict()['seed'])


class RngTests(TestCase):
    def test_uniforms_in_open_interval(self):
        streams = rng.stream_key(rng.replication_key(1, 0), np.arange(10000, dtype=np.uint64))
        u = rng.uniforms(streams, 0, 1)
        self.assertTrue(np.all(u > 0.0))
        self.assertTrue(np.all(u < 1.0))
        self.assertAlmostEqual(0.5, float(np.mean(u)), delta=0.02)

    def test_draws_are_pure_functions_of_their_address(self):
        streams = rng.stream_key(rng.replication_key(3, 2), np.arange(1, 6, dtype=np.uint64))
        np.testing.assert_array_equal(rng.normals(streams, 4, 1), rng.normals(streams, 4, 1))
        np.testing.assert_array_equal(rng.normals(streams[2:], 4, 1),
                                      rng.normals(streams, 4, 1)[2:])
        self.assertFalse(np.any(rng.uniforms(streams, 4, 1) == rng.uniforms(streams, 4, 2)))

    def test_children_get_distinct_ids(self):
        parent = rng.as_key(1)
        first = rng.child_id(parent, 1)
        second = rng.child_id(parent, 2)
        self.assertNotEqual(int(first), int(second))
        self.assertNotEqual(int(first), 1)

    def test_normals_are_standard(self):
        streams = rng.stream_key(rng.replication_key(11, 0), np.arange(100000, dtype=np.uint64))
        z = rng.normals(streams, 0, 1)
        self.assertAlmostEqual(0.0, float(np.mean(z)), delta=0.015)
        self.assertAlmostEqual(1.0, float(np.var(z)), delta=0.02)


class BridgeKillProbTests(TestCase):
    def test_value(self):
        expected = 1.0 - (1.0 - math.exp(-2.0)) ** 2
        self.assertAlmostEqual(expected, bridge_kill_prob(0.0, 0.0, 1.0, 1.0))

    def test_symmetry(self):
        self.assertAlmostEqual(bridge_kill_prob(0.3, -0.2, 0.01, 1.0),
                               bridge_kill_prob(-0.3, 0.2, 0.01, 1.0))
        self.assertAlmostEqual(bridge_kill_prob(0.3, -0.2, 0.01, 1.0),
                               bridge_kill_prob(-0.2, 0.3, 0.01, 1.0))

    def test_limits(self):
        self.assertLess(bridge_kill_prob(0.0, 0.0, 1e-3, 2.0), 1e-12)
        self.assertGreater(bridge_kill_prob(0.999, 0.999, 1e-3, 1.0), 0.99)

    def test_decreases_with_width(self):
        values = bridge_kill_prob(np.array([0.5, 0.5]), np.array([0.8, 0.8]), 0.01, 1.0)
        self.assertEqual((2,), values.shape)
        self.assertGreater(bridge_kill_prob(0.5, 0.8, 0.01, 1.0),
                           bridge_kill_prob(0.5, 0.8, 0.01, 1.5))

    def test_endpoint_outside(self):
        with self.assertRaises(BridgeInputError):
            bridge_kill_prob(1.0, 0.0, 0.01, 1.0)
        with self.assertRaises(BridgeInputError):
            bridge_kill_prob(0.0, -1.2, 0.01, 1.0)


class ComputeZTests(TestCase):
    def test_root(self):
        self.assertAlmostEqual(1.0, compute_Z(Population.root(), 0.0, ZERO, _config()))
        self.assertAlmostEqual(math.cos(math.pi / 8.0),
                               compute_Z(Population.root(0.5), 0.0, ZERO, _config()))

    def test_empty(self):
        empty = Population.from_particles([], t=1.0)
        self.assertEqual(0, len(empty))
        self.assertEqual(0.0, compute_Z(empty, 1.0, ZERO, _config()))

    def test_outside_tube(self):
        population = Population.from_particles(
            [Particle(id=1, parent=None, birth_time=0.0, x=2.5, ibp_accum=0.0)], t=1.0)
        with self.assertRaises(TubeInvariantError):
            compute_Z(population, 1.0, ZERO, _config())

    def test_weights_and_girsanov_terms(self):
        # a single particle on a linear path: Z = e^{(π²/32 - r)t} cos(π(x - λt)/4) e^{λx - λ²t/2}
        t, x = 2.0, 1.2
        population = Population.from_particles(
            [Particle(id=5, parent=1, birth_time=0.5, x=x, ibp_accum=0.0, weight=2.0)], t=t)
        expected = 2.0 * math.exp((math.pi ** 2 / 32.0 - 1.0) * t
                                  + 0.5 * x - 0.125 * t) * math.cos(math.pi * (x - 1.0) / 4.0)
        self.assertAlmostEqual(expected, compute_Z(population, t, LINEAR, _config()), places=6)

    def test_particles_round_trip(self):
        particle = Particle(id=9, parent=3, birth_time=0.25, x=-0.4, ibp_accum=0.1, weight=4.0)
        population = Population.from_particles([particle], t=1.0)
        self.assertEqual([particle], list(population.particles()))
        self.assertIsNone(next(Population.root().particles()).parent)


class SimulateTests(TestCase):
    def test_initial_checkpoint(self):
        stats = simulate(_config(), ZERO)
        self.assertEqual(0.0, stats.checkpoints[0])
        self.assertEqual(1.0, stats.counts[0])
        self.assertAlmostEqual(1.0, stats.z_values[0])
        self.assertAlmostEqual(2.0, stats.checkpoints[-1])

    def test_deterministic(self):
        first = simulate(_config(horizon=3.0), LINEAR)
        second = simulate(_config(horizon=3.0), LINEAR)
        np.testing.assert_array_equal(first.counts, second.counts)
        np.testing.assert_array_equal(first.z_values, second.z_values)
        self.assertEqual(first.total_births, second.total_births)

    def test_single_matches_ensemble(self):
        single = simulate(_config(), LINEAR)
        ensemble = simulate_ensemble(_config(), LINEAR, 1)[0]
        np.testing.assert_array_equal(single.counts, ensemble.counts)
        self.assertEqual(single.seed_used, ensemble.seed_used)

    def test_batching_doesnt_change_replications(self):
        small = simulate_ensemble(_config(), LINEAR, 3)
        large = simulate_ensemble(_config(), LINEAR, 6)
        for index in range(3):
            np.testing.assert_array_equal(small[index].counts, large[index].counts)
            np.testing.assert_array_equal(small[index].z_values, large[index].z_values)

    def test_seeds_differ(self):
        first = simulate_ensemble(_config(horizon=3.0, seed=1), LINEAR, 20)
        second = simulate_ensemble(_config(horizon=3.0, seed=2), LINEAR, 20)
        self.assertNotEqual([stats.total_births for stats in first],
                            [stats.total_births for stats in second])

    def test_final_population_matches_z(self):
        stats = simulate(_config(horizon=2.0), ZERO)
        population = stats.final_population
        self.assertEqual(stats.counts[-1], len(population))
        if len(population):
            self.assertTrue(np.all(np.abs(population.x) < 2.0))
            self.assertAlmostEqual(stats.z_values[-1],
                                   compute_Z(population, 2.0, ZERO, _config()), places=9)

    def test_martingale_mean(self):
        for path in [ZERO, LINEAR]:
            stats = simulate_ensemble(_config(horizon=2.0, seed=3), path, 400)
            _checkpoints, means, errors = checkpoint_means(stats, 'z_values')
            self.assertLessEqual(abs(means[-1] - 1.0), N_SE * errors[-1], msg=path.name)

    def test_expected_count_without_tube(self):
        stats = simulate_ensemble(_config(L=math.inf, horizon=1.0, seed=5), ZERO, 400)
        _checkpoints, means, errors = checkpoint_means(stats, 'counts')
        self.assertLessEqual(abs(means[-1] - math.e), N_SE * errors[-1] + 0.03)

    def test_many_to_one(self):
        functionals = {'one': np.ones_like, 'square': np.square, 'cos': np.cos}
        stats = simulate_ensemble(_config(L=math.inf, horizon=1.0, seed=9), ZERO, 400,
                                  functionals=functionals)
        # E[Σ g(X_u(1))] = e·E[g(B_1)]: e for g ≡ 1 and g(x) = x², e·e^{-1/2} for g = cos
        targets = {'one': math.e, 'square': math.e, 'cos': math.exp(0.5)}
        for name in functionals:
            _checkpoints, means, errors = checkpoint_means(stats, name)
            self.assertLessEqual(abs(means[-1] - targets[name]), N_SE * errors[-1] + 0.03,
                                 msg=name)

    def test_no_bound_violations(self):
        for stats in simulate_ensemble(_config(horizon=3.0, seed=4), LINEAR, 50):
            self.assertEqual(0, stats.bound_violations)
        strict = _config(horizon=3.0, seed=4, strict_bound=True)
        self.assertEqual(20, len(simulate_ensemble(strict, LINEAR, 20)))

    def test_extinction(self):
        config = _config(r=0.2, L=0.5, dt=0.0025, horizon=5.0)
        results = simulate_ensemble(config, ZERO, 50)
        for stats in results:
            self.assertFalse(stats.survived)
            self.assertLessEqual(stats.extinction_time, 5.0)
            self.assertEqual(0.0, stats.counts[-1])
            self.assertEqual(0.0, stats.z_values[-1])
            self.assertEqual(0, stats.survivors_so_far()[-1])
        with self.assertRaises(EstimationError):
            estimate_growth_rate(results)

    def test_coupled_counts_monotone_in_width(self):
        coupled = coupled_counts(_config(horizon=3.0), LINEAR, [1.0, 1.5, 2.0], reps=5)
        self.assertEqual((3, 5, coupled.checkpoints.size), coupled.counts.shape)
        self.assertTrue(coupled.is_monotone())

    def test_stop_at_cap(self):
        config = _config(L=math.inf, horizon=10.0, n_max=20, thinning=STOP_AT_CAP)
        stats = simulate(config, ZERO)
        self.assertTrue(stats.truncated)
        self.assertTrue(stats.survived)
        index = stats.index_of(10.0)
        self.assertTrue(math.isnan(stats.counts[index]))
        self.assertTrue(np.all(stats.stored_counts[np.isfinite(stats.stored_counts)] <= 20))
        self.assertLess(stats.truncation_time, 10.0)

    def test_uniform_thinning(self):
        config = _config(L=math.inf, horizon=10.0, n_max=20, thinning=UNIFORM_THIN)
        stats = simulate(config, ZERO)
        self.assertFalse(stats.truncated)
        self.assertGreater(stats.thinning_events, 0)
        self.assertTrue(np.all(stats.stored_counts <= 20))
        self.assertTrue(np.all(stats.counts >= stats.stored_counts))
        self.assertGreater(stats.counts[-1], 20)

    def test_growth_rate_without_tube(self):
        stats = simulate_ensemble(_config(L=math.inf, horizon=4.0, seed=2), ZERO, 50)
        estimate = estimate_growth_rate(stats, window=(2.0, 4.0))
        self.assertEqual(50, estimate.n_survivors)
        self.assertEqual(0, estimate.n_excluded)
        self.assertAlmostEqual(1.0, estimate.rate, delta=0.1)
        self.assertAlmostEqual(estimate.rate, estimate.unconditional_rate)
        with self.assertRaises(EstimationError):
            estimate_growth_rate(stats, window=(2.1, 2.2))

    def test_survival_probability(self):
        with self.assertRaises(ConfigError):
            survival_probability(_config(), ZERO, 1.0, 10)
        self.assertEqual((1.0, 0.0), survival_probability(_config(), ZERO, 0.0, 100))

        estimate, halfwidth = survival_probability(_config(r=0.2, L=0.5, dt=0.0025), ZERO, 5.0,
                                                   100)
        self.assertEqual(0.0, estimate)
        # the Wilson interval keeps its width when nothing survives
        self.assertAlmostEqual(0.0370, halfwidth, delta=1e-4)

    def test_survival_probability_at_short_times(self):
        # 0.05 is shorter than MIN_SIM_STEPS steps of dt=0.01
        estimate, halfwidth = survival_probability(_config(), ZERO, 0.05, 100)
        self.assertEqual(1.0, estimate)
        self.assertGreater(halfwidth, 0.0)
        self.assertEqual(1.0, survival_probability(_config(), ZERO, 1e-4, 100)[0])

    def test_survival_frequency(self):
        results = simulate_ensemble(_config(horizon=3.0, seed=4), LINEAR, 100)
        estimate, halfwidth = survival_frequency(results)
        survivors = sum(1 for stats in results if stats.survived)
        self.assertEqual(survivors / 100.0, estimate)
        self.assertGreater(halfwidth, 0.0)
        self.assertEqual((estimate, halfwidth), survival_probability(_config(seed=4), LINEAR, 3.0,
                                                                     100))

    def test_exports(self):
        config = _config()
        stats = simulate_ensemble(config, LINEAR, 4)
        with tempfile.TemporaryDirectory() as directory:
            trajectory = os.path.join(directory, 'trajectory.csv')
            stats[0].write_csv(trajectory)
            rows = _read_csv(trajectory)
            self.assertEqual(['t', 'count', 'weighted_count', 'Z', 'survivors_so_far'], rows[0])
            self.assertEqual(len(stats[0].checkpoints) + 1, len(rows))

            ensemble = os.path.join(directory, 'ensemble.csv')
            write_ensemble_csv(stats, ensemble)
            rows = _read_csv(ensemble)
            self.assertEqual('4', rows[1][-1])

            manifest_path = os.path.join(directory, 'manifest.json')
            write_manifest(stats, config, LINEAR, manifest_path)
            with open(manifest_path) as manifest_file:
                manifest = json.load(manifest_file)
            self.assertEqual(4, manifest['replications'])
            self.assertEqual(64, len(manifest['config_hash']))
            self.assertEqual([], manifest['truncations'])

    def test_non_smooth_path_rejected(self):
        with self.assertRaises(ConfigError):
            simulate(_config(), parse_path_key('dyadic'))


class OracleAgreementTests(TestCase):
    def test_survival_intervals_cover_the_pde(self):
        # at r=1e-4 a branching event before t=5 has probability below 1e-3, so the tube
        # population is a single Brownian particle, whose survival the PDE solves for
        keys = ('zero', 'linear:lambda=0.5', 'sinlog:lambda=1', 'criticallog:c=1')
        times = (1.0, 2.0, 3.0, 4.0, 5.0)
        covered, missed = 0, []
        for path_index, key in enumerate(keys):
            path = parse_path_key(key)
            solution = solve_survival(path, 2.0, max(times))
            for time_index, t in enumerate(times):
                expected = float(solution.survival_at(t))
                config = _config(r=1e-4, seed=100 + len(times) * path_index + time_index)
                estimate, halfwidth = survival_probability(config, path, t, 2000)
                if abs(estimate - expected) <= halfwidth:
                    covered += 1
                else:
                    missed.append((key, t, estimate, halfwidth, expected))
        self.assertGreaterEqual(covered, 18, msg=missed)


class SpineDriftTests(TestCase):
    def test_on_path(self):
        self.assertAlmostEqual(0.5, spine_drift(2.0, 1.0, LINEAR, 2.0))

    def test_value(self):
        self.assertAlmostEqual(-math.pi / 4.0, spine_drift(0.0, 1.0, ZERO, 2.0))

    def test_antisymmetric(self):
        for y in [0.1, 0.7, 1.9]:
            self.assertAlmostEqual(-spine_drift(1.0, y, ZERO, 2.0),
                                   spine_drift(1.0, -y, ZERO, 2.0))

    def test_outside_tube(self):
        with self.assertRaises(PathDomainError):
            spine_drift(0.0, 2.0, ZERO, 2.0)
        with self.assertRaises(PathDomainError):
            spine_drift(2.0, -1.5, LINEAR, 2.0)


class EquilibriumTests(TestCase):
    def test_target_law(self):
        self.assertAlmostEqual(0.5228, equilibrium_variance(2.0), places=4)
        self.assertAlmostEqual(0.5, float(equilibrium_density(0.0, 2.0)))
        self.assertAlmostEqual(0.0, float(equilibrium_density(2.0, 2.0)))
        self.assertAlmostEqual(0.0, float(equilibrium_density(-2.0, 2.0)))
        self.assertAlmostEqual(0.0, float(equilibrium_cdf(-2.0, 2.0)))
        self.assertAlmostEqual(0.5, float(equilibrium_cdf(0.0, 2.0)))
        self.assertAlmostEqual(1.0, float(equilibrium_cdf(2.0, 2.0)))

    def test_exact_samples_pass(self):
        generator = np.random.default_rng(42)
        candidates = generator.uniform(-2.0, 2.0, 40000)
        accepted = candidates[generator.uniform(size=candidates.size)
                              < np.cos(math.pi * candidates / 4.0) ** 2]
        report = equilibrium_check(accepted, 2.0)
        self.assertGreater(report.p_value, 0.001)
        self.assertAlmostEqual(report.target_variance, report.variance, delta=0.03)

    def test_uniform_samples_fail(self):
        samples = np.linspace(-1.99, 1.99, 20000)
        self.assertLess(equilibrium_check(samples, 2.0).p_value, 1e-6)

    def test_insufficient_data(self):
        with self.assertRaises(InsufficientDataError):
            equilibrium_check(np.zeros(999), 2.0)


class SpineTests(TestCase):
    def test_single_spine(self):
        state, series = simulate_spine(_config(), LINEAR, horizon=5.0)
        self.assertEqual(state.generation, len(state.fissions))
        self.assertAlmostEqual(5.0, state.t)
        self.assertAlmostEqual(1.0, series.zeta[0])
        self.assertAlmostEqual(1.0, series.spine_decomp[0])
        self.assertTrue(np.all(series.zeta > 0))

    def test_containment(self):
        for state, series in simulate_spine_ensemble(_config(horizon=20.0), LINEAR, 50):
            self.assertLess(state.max_displacement(), 2.0)
            self.assertTrue(np.all(series.zeta > 0))

    def test_fission_counts_are_poisson(self):
        spines = simulate_spine_ensemble(_config(horizon=5.0, seed=21), ZERO, 400)
        report = fission_count_check([state for state, _series in spines], 1.0, 5.0, n_se=N_SE)
        self.assertEqual(10.0, report.expected)
        self.assertTrue(report.mean_ok, report)
        self.assertTrue(report.variance_ok, report)

    def test_batched_summary_matches_ensemble(self):
        config = _config(horizon=12.0, seed=8)
        states = [state for state, _series in simulate_spine_ensemble(config, LINEAR, 7)]
        summary = summarize_spines(config, LINEAR, 7, burn_in=10.0, spacing=0.5, batch_size=3)
        self.assertEqual([state.generation for state in states], list(summary.fission_counts))
        np.testing.assert_allclose([state.max_displacement() for state in states],
                                   summary.max_displacements)
        np.testing.assert_allclose(equilibrium_samples(states, 10.0, 0.5), summary.samples)
        np.testing.assert_allclose(np.mean([state.displacement for state in states], axis=0),
                                   summary.mean_displacement, atol=1e-12)
        self.assertEqual(0, summary.exits(2.0))

    def test_companion_seed(self):
        self.assertNotEqual(5, companion_seed(5))
        self.assertEqual(companion_seed(5), companion_seed(5))
        self.assertNotEqual(companion_seed(5), companion_seed(6))

    def test_equilibrium(self):
        spines = simulate_spine_ensemble(_config(horizon=30.0, seed=8), LINEAR, 400)
        # widely spaced samples are close to independent
        samples = equilibrium_samples([state for state, _series in spines], burn_in=10.0,
                                      spacing=5.0)
        self.assertEqual(400 * 5, samples.size)
        report = equilibrium_check(samples, 2.0)
        self.assertGreater(report.p_value, 0.001)
        self.assertLessEqual(abs(report.mean), N_SE * report.mean_se)
        self.assertAlmostEqual(report.target_variance, report.variance, delta=0.08)

    def test_decomposition_of_constant_zeta(self):
        t_grid = np.linspace(0.0, 3.0, 3001)
        series = ZetaSeries(t_grid=t_grid, zeta=np.ones_like(t_grid), spine_decomp=None)
        values = spine_decomposition_series(series, 1.0)
        expected = 2.0 * (1.0 - np.exp(-t_grid)) + np.exp(-t_grid)
        np.testing.assert_allclose(expected, values, atol=1e-6)

    def test_decay_bound(self):
        config = _config(horizon=20.0)
        prediction = predict_rates(ZERO, 1.0, 2.0, 20.0)
        T_p = compute_T(ZERO, 1.0, 2.0, 0.5, 20.0)
        self.assertEqual(0.0, T_p)
        for _state, series in simulate_spine_ensemble(config, ZERO, 20):
            report = decay_bound_check(series, 1.0, prediction.S_tilde, T_p, p=0.5)
            self.assertTrue(report.passed, report)
            self.assertEqual(series.t_grid.size, report.n_checked)
        with self.assertRaises(PathDomainError):
            decay_bound_check(series, 1.0, prediction.S_tilde, None)

    def test_export(self):
        state, series = simulate_spine(_config(), ZERO)
        with tempfile.TemporaryDirectory() as directory:
            spine_file = os.path.join(directory, 'spine.csv')
            write_spine_csv(state, series, spine_file)
            rows = _read_csv(spine_file)
            self.assertEqual(['t', 'xi', 'displacement', 'zeta', 'decomposition'], rows[0])
            self.assertEqual(state.t_grid.size + 1, len(rows))

            fission_file = os.path.join(directory, 'fissions.csv')
            state.write_fissions_csv(fission_file)
            self.assertEqual(state.generation + 1, len(_read_csv(fission_file)))


class ChangedMeasureTests(TestCase):
    def test_spine_keeps_the_system_alive(self):
        stats = simulate_under_Q(_config(r=0.2, L=0.5, dt=0.0025), ZERO, horizon=3.0)
        self.assertTrue(stats.survived)
        self.assertTrue(np.all(stats.counts >= 1))
        self.assertTrue(np.all(stats.z_values > 0))

    def test_subtrees_follow_fissions(self):
        results = simulate_under_Q_ensemble(_config(horizon=2.0, seed=6), ZERO, 20)
        for stats in results:
            if stats.spine_generation == 0:
                self.assertEqual(1.0, stats.counts[-1])
        self.assertGreater(sum(stats.spine_generation for stats in results), 0)

    def test_inverse_z_decreases(self):
        results = simulate_under_Q_ensemble(_config(horizon=2.0, seed=12), ZERO, 200)
        _checkpoints, means, errors = mean_inverse_z(results)
        self.assertAlmostEqual(1.0, means[0])
        self.assertEqual(5, means.size)
        for index in range(means.size - 1):
            self.assertLessEqual(means[index + 1], means[index] + N_SE * errors[index + 1],
                                 msg='checkpoint %d' % (index + 1))
        self.assertTrue(math.isfinite(terminal_z_quantile(results)))

    def test_survival_identity(self):
        report = survival_identity_check(_config(seed=13), ZERO, 1.0, 400, 400, n_se=N_SE)
        self.assertGreater(report.p_estimate, 0.5)
        self.assertTrue(report.passed, report)

    def test_measure_change(self):
        report = measure_change_check(_config(seed=14), ZERO, 1.0, 400, 400, n_se=N_SE)
        self.assertTrue(report.passed, report)
