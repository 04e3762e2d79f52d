# -*- coding: utf-8 -*-
"""
Experiment orchestration. An experiment pairs a path from the catalog with tube parameters and one
of four engines:

    MC_P         forward Monte Carlo of the tube-killed branching system
    MC_Q         Monte Carlo under the spine (changed) measure
    PDE          the moving-frame survival PDE, giving E|N̂(t)| = e^{rt}p(t)
    FUNCTIONALS  quadrature of the path functionals behind the rate predictions
    SPINE        the spine alone under the changed measure, checked against its known law

Each run writes report.json, series.csv, manifest.json and plot_series.py to its output directory.
Configs are INI files: either one [experiment:<name>] section per experiment, or a [suite] section
whose `include` entry lists other config files.
"""
import configparser
import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field

import arrow
import numpy as np

from tubebbm.oracle.pde import (
    PDEGrid,
    asymptotic_log_slope,
    constant_tube_exact,
    expected_count_curve,
)
from tubebbm.paths.api import (
    accumulate_functionals,
    compute_T,
    heuristic_rates,
    predict_rates,
)
from tubebbm.paths.catalog import UnknownPathError, dyadic_energy_exact, parse_path_key
from tubebbm.paths.constants import (
    DEFAULT_N_STEPS,
    DYADIC_KEY,
    DYADIC_SMOOTH_KEY,
    TAIL_WINDOW_FRACTION,
    ZERO_KEY,
)
from tubebbm.sim.bbm import (
    EstimationError,
    SimConfig,
    checkpoint_means,
    estimate_growth_rate,
    simulate_ensemble,
    survival_frequency,
    write_ensemble_csv,
)
from tubebbm.sim.constants import EQUILIBRIUM_BURN_IN, EQUILIBRIUM_SAMPLE_SPACING, STOP_AT_CAP
from tubebbm.sim.spine import (
    companion_seed,
    compare_measure_change,
    compare_survival,
    equilibrium_check,
    fission_count_report,
    simulate_under_Q_ensemble,
    summarize_spines,
    terminal_z_quantile,
)
from tubebbm.utils import (
    binomial_interval,
    config_hash,
    mean_and_standard_error,
    write_csv,
    write_json,
)
from utils import TerminalFormats, colorize, to_human_relevant_delta
from . import settings

logger = logging.getLogger(__name__)


class LogIndentAdapter(logging.LoggerAdapter):
    """
    A simple adapter that allows us to set the indent level for log output to help improve
    readability.
    """

    def __init__(self, logger, extra):
        super(LogIndentAdapter, self).__init__(logger, extra)
        self.indent_level = 0

    def process(self, msg, kwargs):
        return '{i}{m}'.format(i='...' * self.indent_level, m=msg), kwargs


logger = LogIndentAdapter(logger, {})

MC_P = 'MC_P'
MC_Q = 'MC_Q'
PDE = 'PDE'
FUNCTIONALS = 'FUNCTIONALS'
SPINE = 'SPINE'
ENGINES = (MC_P, MC_Q, PDE, FUNCTIONALS, SPINE)
MC_ENGINES = (MC_P, MC_Q, SPINE)

# quantities each engine can measure, and so the ones targets may name
ENGINE_QUANTITIES = {
    MC_P: ('growth_rate', 'unconditional_growth_rate', 'survival_probability',
           'survival_ci_upper', 'mean_Z', 'mean_count', 'mean_sum_square', 'mean_sum_cos'),
    MC_Q: ('mean_inverse_Z', 'mean_count', 'mean_spine_generation', 'z_quantile_99',
           'survival_frequency', 'survival_identity_gap', 'measure_change_gap'),
    PDE: ('log_slope', 'final_log_slope', 'survival', 'expected_count', 'max_exact_error'),
    FUNCTIONALS: ('half_S_sup', 'half_S_inf', 'half_energy_ratio', 'exact_half_energy_ratio',
                  'curvature_ratio', 'S_tilde'),
    SPINE: ('spine_exits', 'fission_count_mean', 'fission_count_variance',
            'equilibrium_p_value', 'displacement_mean', 'displacement_variance'),
}

QUANTITY_LABELS = {
    'growth_rate': 'slope of log mean count over replications alive at the end of the window; '
                   'compare with the almost-sure rate on non-extinction',
    'unconditional_growth_rate': 'slope of log mean count over all replications, extinct ones '
                                 'included; compare with the PDE slope of e^{rt}p(t)',
    'survival_probability': 'fraction of replications with a non-empty tube population at the '
                            'horizon, with the half-width of its 95% Wilson interval',
    'survival_ci_upper': 'upper end of the 95% Wilson interval for the survival probability',
    'mean_Z': 'mean of the additive martingale Z at the horizon',
    'mean_sum_square': 'mean of the sum of X_u(t)² over the population at the horizon',
    'mean_sum_cos': 'mean of the sum of cos(X_u(t)) over the population at the horizon',
    'mean_inverse_Z': 'mean of Z(0)/Z(horizon) under the spine measure, which equals the '
                      'survival probability under the original measure',
    'survival_frequency': 'survival frequency of a companion ensemble under the original '
                          'measure',
    'survival_identity_gap': 'survival_frequency minus mean_inverse_Z, with their combined '
                             'standard error',
    'measure_change_gap': 'E_P[min(|N(t)|, 5) Z(t)] minus E_Q[min(|N(t)|, 5)], with their '
                          'combined standard error',
    'log_slope': 'least-squares slope of log(e^{rt}p(t)) over the window',
    'max_exact_error': 'largest deviation of p(t) from the eigenfunction series for a constant '
                       'tube, over t >= 0.5',
    'half_S_sup': 'max of A(t)/2t over the tail window',
    'half_S_inf': 'min of A(t)/2t over the tail window',
    'spine_exits': 'number of spines that reached the tube boundary',
    'fission_count_mean': 'mean number of fissions along a spine; Poisson(2r·horizon)',
    'fission_count_variance': 'variance of the number of fissions along a spine',
    'equilibrium_p_value': 'χ² p-value of the spine displacement against (1/L)cos²(πx/2L)',
    'displacement_variance': 'sample variance of the spine displacement, against '
                             'L²(1/3 - 2/π²)',
}

# max_exact_error ignores the first half time unit, where the warm start dominates
EXACT_CHECK_START = 0.5

# functionals summed over the population by the MC_P engine, for the many-to-one identity
MANY_TO_ONE_FUNCTIONALS = {'sum_square': np.square, 'sum_cos': np.cos}

CONFIG_SECTION_PREFIX = 'experiment:'
SUITE_SECTION = 'suite'
TARGET_PREFIX = 'target_'
STANDARD_ERROR_SUFFIX = 'se'

REPORT_FILE = 'report.json'
SERIES_FILE = 'series.csv'
MANIFEST_FILE = 'manifest.json'
PLOT_SCRIPT_FILE = 'plot_series.py'

EXIT_OK = 0
EXIT_TARGET_FAILURE = 1
EXIT_CONFIG_ERROR = 2

OUTPUT_SEPARATOR = '*' * 75


class ExperimentConfigError(ValueError):
    """Raised for experiment and suite configs that can't be run as written."""


###################################################################################################
# Comparison targets
###################################################################################################
@dataclass(frozen=True)
class Target:
    """
    An expected value for a measured quantity. Exactly one of `tolerance` (absolute) and `n_se`
    (standard errors of the measurement) is set.
    """

    quantity: str
    expected: float
    tolerance: float = None
    n_se: float = None

    @classmethod
    def parse(cls, quantity, text):
        """
        Parses 'value, tolerance' or 'value, <n>se' (e.g. '1.0, 3se').
        """
        parts = [part.strip() for part in text.split(',')]
        if len(parts) != 2:
            raise ExperimentConfigError(
                'Target for "%s" must read "value, tolerance" or "value, <n>se" (got "%s")'
                % (quantity, text))
        try:
            expected = float(parts[0])
            if parts[1].endswith(STANDARD_ERROR_SUFFIX):
                return cls(quantity, expected, n_se=float(parts[1][:-len(STANDARD_ERROR_SUFFIX)]))
            return cls(quantity, expected, tolerance=float(parts[1]))
        except ValueError:
            raise ExperimentConfigError('Unreadable target for "%s": "%s"' % (quantity, text))

    def allowed_deviation(self, standard_error):
        if self.tolerance is not None:
            return self.tolerance
        if standard_error is None or not math.isfinite(standard_error):
            return None
        return self.n_se * standard_error

    def evaluate(self, measured):
        """
        :param measured: {quantity: {'value': ..., 'se': ...}}
        :return: a dict recording the comparison, including its 'passed' verdict
        """
        result = {
            'quantity': self.quantity,
            'expected': self.expected,
            'tolerance': self.tolerance,
            'n_se': self.n_se,
            'measured': None,
            'se': None,
            'passed': False,
        }
        measurement = measured.get(self.quantity)
        if measurement is None or measurement['value'] is None:
            result['reason'] = 'not measured'
            return result
        value = measurement['value']
        result['measured'] = value
        result['se'] = measurement.get('se')
        allowed = self.allowed_deviation(result['se'])
        if allowed is None:
            result['reason'] = 'no standard error available'
            return result
        result['passed'] = bool(math.isfinite(value) and abs(value - self.expected) <= allowed)
        return result

    def as_dict(self):
        return dataclasses.asdict(self)


###################################################################################################
# Experiment configuration
###################################################################################################
def _parse_window(text):
    if text is None or isinstance(text, (tuple, list)):
        return tuple(text) if text else None
    try:
        bounds = tuple(float(part) for part in str(text).split(','))
    except ValueError:
        raise ExperimentConfigError('Unreadable window "%s"' % text)
    if len(bounds) != 2 or not bounds[0] < bounds[1]:
        raise ExperimentConfigError('A window must read "t_lo, t_hi" with t_lo < t_hi (got "%s")'
                                    % text)
    return bounds


def _as_bool(text):
    value = str(text).strip().lower()
    if value in ('1', 'true', 'yes', 'on'):
        return True
    if value in ('0', 'false', 'no', 'off'):
        return False
    raise ExperimentConfigError('Expected a boolean (got "%s")' % text)


# config key -> (ExperimentConfig field, converter)
_CONFIG_KEYS = {
    'path': ('path_key', str),
    'engine': ('engine', lambda text: str(text).strip().upper()),
    'r': ('r', float),
    'L': ('L', float),
    'horizon': ('horizon', float),
    'dt': ('dt', float),
    'replications': ('replications', int),
    'seed': ('seed', int),
    'output_dir': ('output_dir', str),
    'window': ('window', _parse_window),
    'n_max': ('n_max', int),
    'thinning': ('thinning', str),
    'bridge_correction': ('bridge_correction', _as_bool),
    'checkpoint_interval': ('checkpoint_interval', float),
    'ny': ('ny', int),
    'dt_pde': ('dt_pde', float),
    'theta': ('theta', float),
    'n_steps': ('n_steps', int),
    'tail_fraction': ('tail_fraction', float),
    'burn_in': ('burn_in', float),
    'sample_spacing': ('sample_spacing', float),
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    path_key: str
    engine: str
    horizon: float
    r: float = 1.0
    L: float = 2.0
    dt: float = None
    replications: int = None
    seed: int = 0
    output_dir: str = None
    window: tuple = None
    n_max: int = None
    thinning: str = STOP_AT_CAP
    bridge_correction: bool = True
    checkpoint_interval: float = 0.5
    ny: int = None
    dt_pde: float = None
    theta: float = None
    n_steps: int = DEFAULT_N_STEPS
    tail_fraction: float = TAIL_WINDOW_FRACTION
    burn_in: float = EQUILIBRIUM_BURN_IN
    sample_spacing: float = EQUILIBRIUM_SAMPLE_SPACING
    targets: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ExperimentConfigError('Experiment "%s": unknown engine "%s" (expected one of %s)'
                                        % (self.name, self.engine, ', '.join(ENGINES)))
        try:
            parse_path_key(self.path_key)
        except UnknownPathError as error:
            raise ExperimentConfigError('Experiment "%s": %s' % (self.name, error))
        if not self.horizon > 0:
            raise ExperimentConfigError('Experiment "%s": horizon must be > 0' % self.name)
        if self.engine in MC_ENGINES:
            if not self.replications or self.replications < 1:
                raise ExperimentConfigError('Experiment "%s": the %s engine requires '
                                            'replications >= 1' % (self.name, self.engine))
            if self.dt is None:
                raise ExperimentConfigError('Experiment "%s": the %s engine requires dt'
                                            % (self.name, self.engine))
        elif self.replications is not None:
            raise ExperimentConfigError('Experiment "%s": replications only apply to the Monte '
                                        'Carlo engines' % self.name)
        if self.window is not None and not 0 <= self.window[0] < self.window[1] <= self.horizon:
            raise ExperimentConfigError('Experiment "%s": window %s must lie within [0, %g]'
                                        % (self.name, self.window, self.horizon))
        known = ENGINE_QUANTITIES[self.engine]
        for target in self.targets:
            if target.quantity not in known:
                raise ExperimentConfigError(
                    'Experiment "%s": the %s engine doesn\'t measure "%s" (it measures %s)'
                    % (self.name, self.engine, target.quantity, ', '.join(known)))

    @classmethod
    def from_section(cls, name, section, base_dir=None):
        """
        Builds a config from the key/value pairs of one INI section. Keys named target_<quantity>
        become comparison targets.
        """
        values = {'name': name}
        targets = []
        for key, text in section.items():
            if key.startswith(TARGET_PREFIX):
                targets.append(Target.parse(key[len(TARGET_PREFIX):], text))
                continue
            if key not in _CONFIG_KEYS:
                raise ExperimentConfigError('Experiment "%s": unknown key "%s"' % (name, key))
            attribute, convert = _CONFIG_KEYS[key]
            try:
                values[attribute] = convert(text)
            except ValueError:
                raise ExperimentConfigError('Experiment "%s": unreadable value for %s: "%s"'
                                            % (name, key, text))
        for required in ('path_key', 'engine', 'horizon'):
            if required not in values:
                raise ExperimentConfigError('Experiment "%s" is missing "%s"'
                                            % (name, required.replace('_key', '')))
        if values.get('output_dir') and base_dir and not os.path.isabs(values['output_dir']):
            values['output_dir'] = os.path.join(base_dir, values['output_dir'])
        values['targets'] = tuple(targets)
        return cls(**values)

    @classmethod
    def from_dict(cls, values):
        """Rebuilds a config from its as_dict() echo (e.g. from a manifest)."""
        values = dict(values)
        values['targets'] = tuple(Target(**target) for target in values.get('targets', ()))
        if values.get('window') is not None:
            values['window'] = tuple(values['window'])
        # JSON echoes store inf (an unconfined tube) as a string
        for attribute, convert in _CONFIG_KEYS.values():
            if convert is float and isinstance(values.get(attribute), str):
                values[attribute] = float(values[attribute])
        return cls(**values)

    def as_dict(self):
        values = dataclasses.asdict(self)
        values['targets'] = [target.as_dict() for target in self.targets]
        if self.window is not None:
            values['window'] = list(self.window)
        return values

    @property
    def config_hash(self):
        return config_hash(self.as_dict())

    def sim_config(self):
        try:
            return SimConfig(
                r=self.r, L=self.L, dt=self.dt, horizon=self.horizon,
                n_max=self.n_max or settings.N_MAX, seed=self.seed,
                bridge_correction=self.bridge_correction, thinning=self.thinning,
                checkpoint_interval=self.checkpoint_interval,
            )
        except ValueError as error:
            raise ExperimentConfigError('Experiment "%s": %s' % (self.name, error))

    def pde_grid(self):
        try:
            return PDEGrid(ny=self.ny or settings.PDE_NY, dt_pde=self.dt_pde or settings.PDE_DT,
                           theta=settings.PDE_THETA if self.theta is None else self.theta)
        except ValueError as error:
            raise ExperimentConfigError('Experiment "%s": %s' % (self.name, error))

    def resolve_output_dir(self, output_root=None):
        if self.output_dir:
            return self.output_dir
        return os.path.join(output_root or settings.OUTPUT_ROOT, self.name)

    def default_window(self):
        return self.window or (self.horizon / 2.0, self.horizon)


def load_configs(config_file, _seen=None):
    """
    Reads every experiment config in an INI file, following [suite] includes (relative to the
    including file).
    :raises ExperimentConfigError: naming the file if it doesn't exist or can't be parsed
    """
    config_file = os.path.abspath(config_file)
    seen = _seen if _seen is not None else set()
    if config_file in seen:
        raise ExperimentConfigError('Suite include cycle through %s' % config_file)
    seen.add(config_file)
    if not os.path.isfile(config_file):
        raise ExperimentConfigError('Config file not found: %s' % config_file)

    # keys are case-sensitive (L vs l)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(config_file)
    except configparser.Error as error:
        raise ExperimentConfigError('Unable to parse %s: %s' % (config_file, error))

    base_dir = os.path.dirname(config_file)
    configs = []
    for section in parser.sections():
        if section == SUITE_SECTION:
            includes = parser.get(section, 'include', fallback='')
            for include in [item.strip() for item in includes.split(',') if item.strip()]:
                configs.extend(load_configs(os.path.join(base_dir, include), seen))
        elif section.startswith(CONFIG_SECTION_PREFIX):
            name = section[len(CONFIG_SECTION_PREFIX):].strip()
            configs.append(ExperimentConfig.from_section(name, parser[section], base_dir))
        else:
            raise ExperimentConfigError('Unrecognized section [%s] in %s' % (section, config_file))

    names = [config.name for config in configs]
    duplicates = sorted(set(name for name in names if names.count(name) > 1))
    if duplicates:
        raise ExperimentConfigError('Duplicate experiment names in %s: %s'
                                    % (config_file, ', '.join(duplicates)))
    return configs


###################################################################################################
# Engines. Each returns (measured quantities, series header, series rows, event counts)
###################################################################################################
def _measurement(value, se=None, **extra):
    # non-finite values count as unmeasured; JSON can't hold them
    if value is not None:
        value = float(value) if math.isfinite(value) else None
    if se is not None:
        se = float(se) if math.isfinite(se) else None
    measurement = {'value': value, 'se': se}
    measurement.update(extra)
    return measurement


def _ensemble_events(*ensembles):
    events = {'truncations': 0, 'thinning_events': 0, 'clamp_events': 0, 'bound_violations': 0}
    for ensemble in ensembles:
        events['truncations'] += sum(1 for stats in ensemble if stats.truncated)
        events['thinning_events'] += sum(stats.thinning_events for stats in ensemble)
        events['clamp_events'] += sum(stats.clamp_events for stats in ensemble)
        events['bound_violations'] += sum(stats.bound_violations for stats in ensemble)
    return events


def _run_mc_p(config, path, series_file):
    ensemble = simulate_ensemble(config.sim_config(), path, config.replications,
                                 functionals=MANY_TO_ONE_FUNCTIONALS)
    write_ensemble_csv(ensemble, series_file)

    measured = {}
    try:
        estimate = estimate_growth_rate(ensemble, config.default_window())
        measured['growth_rate'] = _measurement(estimate.rate, estimate.std_error)
        measured['unconditional_growth_rate'] = _measurement(estimate.unconditional_rate)
    except EstimationError as error:
        logger.warning('%s: no growth-rate estimate (%s)', config.name, error)

    survival, halfwidth = survival_frequency(ensemble)
    survivors = sum(1 for stats in ensemble if stats.survived)
    measured['survival_probability'] = _measurement(survival, ci_halfwidth=halfwidth)
    measured['survival_ci_upper'] = _measurement(binomial_interval(survivors, len(ensemble))[1])
    for quantity, name in (('mean_Z', 'z_values'), ('mean_count', 'counts'),
                           ('mean_sum_square', 'sum_square'), ('mean_sum_cos', 'sum_cos')):
        _checkpoints, means, errors = checkpoint_means(ensemble, name)
        measured[quantity] = _measurement(means[-1], errors[-1])
    return measured, _ensemble_events(ensemble)


def _run_mc_q(config, path, series_file):
    sim_config = config.sim_config()
    ensemble = simulate_under_Q_ensemble(sim_config, path, config.replications)
    write_ensemble_csv(ensemble, series_file)

    ratios = [stats.z_values[0] / stats.z_values[-1] for stats in ensemble]
    generations = [stats.spine_generation for stats in ensemble]
    _checkpoints, count_means, count_errors = checkpoint_means(ensemble, 'counts')
    measured = {
        'mean_inverse_Z': _measurement(*mean_and_standard_error(ratios)),
        'mean_count': _measurement(count_means[-1], count_errors[-1]),
        'mean_spine_generation': _measurement(*mean_and_standard_error(generations)),
        'z_quantile_99': _measurement(terminal_z_quantile(ensemble, 0.99)),
    }

    # an independent ensemble under the original measure, for the identities linking the two
    under_p = simulate_ensemble(sim_config.replace(seed=companion_seed(config.seed)), path,
                                config.replications)
    identity = compare_survival(under_p, ensemble)
    change = compare_measure_change(under_p, ensemble)
    measured['survival_frequency'] = _measurement(identity.p_estimate, identity.p_se)
    measured['survival_identity_gap'] = _measurement(identity.difference, identity.combined_se)
    measured['measure_change_gap'] = _measurement(change.difference, change.combined_se)
    return measured, _ensemble_events(ensemble, under_p)


def _series_stride(n_rows):
    return max(1, int(math.ceil(n_rows / float(settings.MAX_SERIES_ROWS))))


def _run_pde(config, path, series_file):
    curve = expected_count_curve(path, config.r, config.L, config.horizon, config.pde_grid())
    curve.write_csv(series_file, stride=_series_stride(curve.t_grid.size))
    survival, expected, slope = curve.at(config.horizon)
    measured = {
        'log_slope': _measurement(asymptotic_log_slope(curve, config.default_window())),
        'final_log_slope': _measurement(slope),
        'survival': _measurement(survival),
        'expected_count': _measurement(expected),
    }
    checked = curve.t_grid >= EXACT_CHECK_START
    if path.params.get('key') == ZERO_KEY and np.any(checked):
        exact = constant_tube_exact(config.L, curve.t_grid[checked])
        measured['max_exact_error'] = _measurement(
            np.max(np.abs(curve.survival[checked] - exact)))
    return measured, {}


def _run_functionals(config, path, series_file):
    functionals = accumulate_functionals(path, config.horizon, config.n_steps)
    t_grid = functionals.t_grid
    energy_ratio = functionals.energy_ratio()
    curvature_ratio = functionals.curvature_ratio()

    stride = _series_stride(t_grid.size)
    rows = list(range(0, t_grid.size, stride))
    if rows[-1] != t_grid.size - 1:
        rows.append(t_grid.size - 1)
    write_csv(series_file, ('t', 'A', 'B', 'A/t', 'B/t'),
              ((t_grid[i], functionals.A[i], functionals.B[i], energy_ratio[i],
                curvature_ratio[i]) for i in rows))

    tail = t_grid >= config.tail_fraction * config.horizon
    tail &= t_grid > 0
    prediction = predict_rates(path, config.r, config.L, config.horizon, functionals=functionals)
    measured = {
        'half_S_sup': _measurement(np.max(energy_ratio[tail]) / 2.0),
        'half_S_inf': _measurement(np.min(energy_ratio[tail]) / 2.0),
        'half_energy_ratio': _measurement(functionals.A[-1] / (2.0 * config.horizon)),
        'curvature_ratio': _measurement(functionals.B[-1] / config.horizon),
        'S_tilde': _measurement(prediction.S_tilde),
    }
    if path.params.get('key') in (DYADIC_KEY, DYADIC_SMOOTH_KEY):
        exact = float(dyadic_energy_exact(config.horizon)) / (2.0 * config.horizon)
        measured['exact_half_energy_ratio'] = _measurement(exact)
    return measured, {}


def _run_spine(config, path, series_file):
    summary = summarize_spines(config.sim_config(), path, config.replications,
                               burn_in=config.burn_in, spacing=config.sample_spacing)
    stride = _series_stride(summary.t_grid.size)
    write_csv(series_file, ('t', 'mean_displacement'),
              zip(summary.t_grid[::stride], summary.mean_displacement[::stride]))

    fissions = fission_count_report(summary.fission_counts, config.r, config.horizon)
    measured = {
        'spine_exits': _measurement(summary.exits(config.L)),
        'fission_count_mean': _measurement(fissions.mean, fissions.mean_se),
        'fission_count_variance': _measurement(fissions.variance, fissions.variance_se),
    }
    equilibrium = equilibrium_check(summary.samples, config.L)
    measured['equilibrium_p_value'] = _measurement(equilibrium.p_value,
                                                   n_samples=equilibrium.n_samples)
    measured['displacement_mean'] = _measurement(equilibrium.mean, equilibrium.mean_se)
    measured['displacement_variance'] = _measurement(equilibrium.variance)
    return measured, {'clamp_events': summary.clamp_events}


ENGINE_RUNNERS = {
    MC_P: _run_mc_p,
    MC_Q: _run_mc_q,
    PDE: _run_pde,
    FUNCTIONALS: _run_functionals,
    SPINE: _run_spine,
}

# columns of series.csv plotted by each engine's plot script, with log-scale flags
PLOT_COLUMNS = {
    MC_P: (('weighted_count', True), ('Z', False)),
    MC_Q: (('weighted_count', True), ('Z', False)),
    PDE: (('expected_count', True), ('log_slope', False)),
    FUNCTIONALS: (('A/t', False), ('B/t', False)),
    SPINE: (('mean_displacement', False),),
}


###################################################################################################
# Reports
###################################################################################################
@dataclass
class ExperimentReport:
    name: str
    engine: str
    config: dict
    config_hash: str
    predicted: dict
    measured: dict
    labels: dict
    targets: list
    events: dict
    wall_clock_seconds: float
    code_version: str
    created: str
    output_dir: str
    failure: dict = None

    @property
    def passed(self):
        return self.failure is None and all(target['passed'] for target in self.targets)

    @property
    def failed_targets(self):
        return [target['quantity'] for target in self.targets if not target['passed']]

    def as_dict(self):
        values = dataclasses.asdict(self)
        values['passed'] = self.passed
        return values


def recheck_report(report):
    """
    Re-derives the verdicts of a report (as loaded from report.json) from the numbers it stores.
    :return: True if the stored config hash and every stored verdict are reproduced
    """
    if config_hash(report['config']) != report['config_hash']:
        return False
    for stored in report['targets']:
        target = Target(stored['quantity'], stored['expected'], tolerance=stored['tolerance'],
                        n_se=stored['n_se'])
        if target.evaluate(report['measured'])['passed'] != stored['passed']:
            return False
    passed = report['failure'] is None and all(item['passed'] for item in report['targets'])
    return passed == report['passed']


def _predictions(config, path):
    """Rate predictions from the path functionals; a path they can't handle yields an 'error'."""
    try:
        prediction = predict_rates(path, config.r, config.L, config.horizon, config.n_steps)
        predicted = prediction.as_dict()
        if prediction.S_tilde > 0:
            predicted['T_half'] = compute_T(path, config.r, config.L, 0.5, config.horizon,
                                            config.n_steps)
    except ValueError as error:
        return {'error': str(error)}
    predicted['heuristics'] = heuristic_rates(path, config.r, config.L)
    return predicted


PLOT_SCRIPT_TEMPLATE = '''"""
Plots %(title)s from series.csv in this directory. Generated by the experiment harness; reads
nothing but the CSV.
"""
import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

HERE = os.path.dirname(os.path.abspath(__file__))
COLUMNS = %(columns)r


def read_series(file_path):
    with open(file_path, newline="") as csv_file:
        rows = [row for row in csv.reader(csv_file) if row and not row[0].startswith("#")]
    header, values = rows[0], rows[1:]
    return {name: [float(row[i]) for row in values] for i, name in enumerate(header)}


def main():
    series = read_series(os.path.join(HERE, "series.csv"))
    figure, axes = plt.subplots(len(COLUMNS), 1, sharex=True, squeeze=False,
                                figsize=(7, 3 * len(COLUMNS)))
    for axis, (column, log_scale) in zip(axes[:, 0], COLUMNS):
        axis.plot(series["t"], series[column])
        if log_scale:
            axis.set_yscale("log")
        axis.set_ylabel(column)
    axes[-1, 0].set_xlabel("t")
    figure.suptitle(%(title)r)
    figure.tight_layout()
    figure.savefig(os.path.join(HERE, "series.png"))


if __name__ == "__main__":
    main()
'''


def write_plot_script(file_path, config):
    title = '%s: %s (%s, r=%g, L=%g)' % (config.name, config.path_key, config.engine, config.r,
                                         config.L)
    with open(file_path, 'w') as script:
        script.write(PLOT_SCRIPT_TEMPLATE % {'title': title,
                                             'columns': PLOT_COLUMNS[config.engine]})


def run_experiment(config, output_root=None):
    """
    Runs one experiment and writes its outputs. Engine failures don't raise: they're recorded in
    the report's failure section.
    :return: the ExperimentReport
    """
    start = arrow.utcnow()
    output_dir = config.resolve_output_dir(output_root)
    if not os.path.isdir(output_dir):
        os.makedirs(output_dir)
    series_file = os.path.join(output_dir, SERIES_FILE)
    logger.info('Running %s (%s engine, path %s)', config.name, config.engine, config.path_key)

    path = parse_path_key(config.path_key)
    measured, events, failure = {}, {}, None
    logger.indent_level += 1
    try:
        measured, events = ENGINE_RUNNERS[config.engine](config, path, series_file)
    except Exception as error:
        logger.exception('Experiment %s failed', config.name)
        failure = {'type': type(error).__name__, 'message': str(error)}
    finally:
        logger.indent_level -= 1

    targets = [target.evaluate(measured) for target in config.targets]
    end = arrow.utcnow()
    config_values = config.as_dict()
    report = ExperimentReport(
        name=config.name,
        engine=config.engine,
        config=config_values,
        config_hash=config_hash(config_values),
        predicted=_predictions(config, path),
        measured=measured,
        labels={key: QUANTITY_LABELS[key] for key in measured if key in QUANTITY_LABELS},
        targets=targets,
        events=events,
        wall_clock_seconds=(end - start).total_seconds(),
        code_version=settings.CODE_VERSION,
        created=end.isoformat(),
        output_dir=output_dir,
        failure=failure,
    )

    write_json(os.path.join(output_dir, REPORT_FILE), report.as_dict())
    write_json(os.path.join(output_dir, MANIFEST_FILE), {
        'config': config_values,
        'config_hash': report.config_hash,
        'seed': config.seed,
        'code_version': settings.CODE_VERSION,
        'created': report.created,
        'events': events,
    })
    write_plot_script(os.path.join(output_dir, PLOT_SCRIPT_FILE), config)

    if failure:
        logger.warning('%s failed: %s', config.name, failure['message'])
    elif not report.passed:
        logger.warning('%s missed target(s): %s', config.name,
                       ', '.join(report.failed_targets))
    else:
        logger.info('%s passed in %s', config.name,
                    to_human_relevant_delta(report.wall_clock_seconds))
    return report


def config_from_manifest(manifest_file, output_dir=None):
    """
    Rebuilds the config recorded in an experiment's manifest, optionally redirecting its output.
    """
    if not os.path.isfile(manifest_file):
        raise ExperimentConfigError('Manifest not found: %s' % manifest_file)
    with open(manifest_file) as manifest:
        values = json.load(manifest)['config']
    config = ExperimentConfig.from_dict(values)
    if output_dir:
        config = dataclasses.replace(config, output_dir=output_dir)
    return config


###################################################################################################
# Suites
###################################################################################################
@dataclass
class SuiteSummary:
    suite_file: str
    reports: list
    wall_clock_seconds: float = 0.0

    @property
    def passed(self):
        return all(report.passed for report in self.reports)

    @property
    def exit_code(self):
        return EXIT_OK if self.passed else EXIT_TARGET_FAILURE

    def failures(self):
        """:return: [(experiment name, failed target quantities or the failure message)]"""
        failed = []
        for report in self.reports:
            if report.failure:
                failed.append((report.name, report.failure['message']))
            elif report.failed_targets:
                failed.append((report.name, ', '.join(report.failed_targets)))
        return failed

    def as_dict(self):
        return {
            'suite_file': self.suite_file,
            'passed': self.passed,
            'wall_clock_seconds': self.wall_clock_seconds,
            'experiments': [
                {'name': report.name, 'engine': report.engine, 'passed': report.passed,
                 'failed_targets': report.failed_targets, 'output_dir': report.output_dir,
                 'config_hash': report.config_hash}
                for report in self.reports
            ],
        }

    def print_summary(self):
        print(OUTPUT_SEPARATOR)
        print('Suite summary: %s' % self.suite_file)
        print(OUTPUT_SEPARATOR)
        for report in self.reports:
            if report.passed:
                verdict = colorize('PASS', TerminalFormats.OKGREEN)
            else:
                verdict = colorize('FAIL', TerminalFormats.FAIL)
            print('%(verdict)s  %(name)-32s %(engine)-12s %(time)s' % {
                'verdict': verdict, 'name': report.name, 'engine': report.engine,
                'time': to_human_relevant_delta(report.wall_clock_seconds)})
        for name, reason in self.failures():
            print('\t%s: %s' % (name, reason))
        print('%d experiment(s), %d failed, in %s' % (
            len(self.reports), len(self.failures()),
            to_human_relevant_delta(self.wall_clock_seconds)))
        print(OUTPUT_SEPARATOR)


def run_suite(suite_file, output_root=None, max_workers=None):
    """
    Runs every experiment of a suite, in parallel worker processes, and writes summary.json to
    the output root.
    :raises ExperimentConfigError: if the suite file or anything it includes is missing or invalid
    """
    start = arrow.utcnow()
    configs = load_configs(suite_file)
    output_root = output_root or settings.OUTPUT_ROOT
    max_workers = max_workers if max_workers is not None else settings.MAX_WORKERS
    logger.info('Running %d experiment(s) from %s', len(configs), suite_file)

    reports = {}
    if len(configs) <= 1 or max_workers == 1:
        for config in configs:
            reports[config.name] = run_experiment(config, output_root)
    else:
        with ProcessPoolExecutor(max_workers=max_workers) as executor:
            futures = {executor.submit(run_experiment, config, output_root): config
                       for config in configs}
            for future in as_completed(futures):
                config = futures[future]
                reports[config.name] = future.result()

    summary = SuiteSummary(
        suite_file=os.path.abspath(suite_file),
        reports=[reports[config.name] for config in configs],
        wall_clock_seconds=(arrow.utcnow() - start).total_seconds(),
    )
    if configs:
        if not os.path.isdir(output_root):
            os.makedirs(output_root)
        write_json(os.path.join(output_root, 'summary.json'), summary.as_dict())
    return summary
