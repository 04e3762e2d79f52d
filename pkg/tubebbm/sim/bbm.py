# -*- coding: utf-8 -*-
"""
Forward simulation of dyadic branching Brownian motion in which particles are killed as soon as
they leave the tube {x : |x - f(t)| < L}. Replications are stepped together as flat numpy arrays
(one entry per live particle), with randomness drawn from counter-based streams so that results
are reproducible and coupled across tube widths.

Alongside the tube-surviving population N̂(t) each particle carries the running trapezoid value of
∫₀ᵗ f''(s)X_u(s) ds along its ancestral line, which turns the stochastic integral in the additive
martingale Z(t) into the pathwise expression f'(t)X_u(t) - ∫₀ᵗ f''(s)X_u(s) ds.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import linregress

from ..paths.api import accumulate_functionals, eval_path, tube_decay_rate
from ..paths.constants import DEFAULT_N_STEPS
from ..utils import (
    binomial_ci_halfwidth,
    config_hash,
    mean_and_standard_error,
    timestamp,
    write_csv,
    write_json,
)
from . import rng
from .constants import (
    CHANNEL_BRANCH,
    CHANNEL_BRIDGE,
    CHANNEL_MOVE,
    CHANNEL_THIN,
    DEFAULT_CHECKPOINT_INTERVAL,
    DEFAULT_N_MAX,
    FIRST_CHILD_SLOT,
    MAX_BRANCH_RATE_STEP,
    MAX_THIN_ROUNDS,
    MAX_TUBE_STEP_FRACTION,
    MIN_SIM_STEPS,
    ROOT_PARTICLE_ID,
    SECOND_CHILD_SLOT,
    STOP_AT_CAP,
    SURVIVED_TO_HORIZON,
    THINNING_POLICIES,
    UNIFORM_THIN,
)

logger = logging.getLogger(__name__)

TRAJECTORY_CSV_HEADER = ('t', 'count', 'weighted_count', 'Z', 'survivors_so_far')
_CHECKPOINT_SLACK = 1e-9


class ConfigError(ValueError):
    """Raised for simulation parameters that fail validation."""


class TubeInvariantError(RuntimeError):
    """Raised when a particle that should be inside the tube isn't."""


class BoundViolationError(TubeInvariantError):
    """
    Raised under SimConfig.strict_bound when a particle's Girsanov exponent exceeds the pathwise
    bound 2L·B(t) + 2L|f'(0)| (plus discretization tolerance).
    """


class BridgeInputError(ValueError):
    """Raised when a bridge endpoint already lies outside the tube."""


class EstimationError(ValueError):
    """Raised when an ensemble has too few usable replications for an estimate."""


@dataclass(frozen=True)
class SimConfig:
    """
    Parameters of a simulation run. Validated at construction: dt may not exceed
    min(0.1/r, L²/100). L = math.inf disables the tube.
    """

    r: float
    L: float
    dt: float
    horizon: float
    n_max: int = DEFAULT_N_MAX
    seed: int = 0
    bridge_correction: bool = True
    thinning: str = STOP_AT_CAP
    checkpoint_interval: float = DEFAULT_CHECKPOINT_INTERVAL
    strict_bound: bool = False

    def __post_init__(self):
        if not self.r > 0:
            raise ConfigError('Branching rate r must be > 0 (got %s)' % self.r)
        if not self.L > 0:
            raise ConfigError('Tube half-width L must be > 0 (got %s)' % self.L)
        if not self.dt > 0:
            raise ConfigError('Time step dt must be > 0 (got %s)' % self.dt)
        if not self.horizon > 0:
            raise ConfigError('horizon must be > 0 (got %s)' % self.horizon)
        max_dt = self.max_dt(self.r, self.L)
        if self.dt > max_dt * (1.0 + 1e-12):
            raise ConfigError(
                'dt=%g is too coarse for r=%g, L=%g: it may not exceed min(0.1/r, L²/100)=%g'
                % (self.dt, self.r, self.L, max_dt)
            )
        if self.thinning not in THINNING_POLICIES:
            raise ConfigError(
                'Unknown thinning policy "%s" (expected one of %s)'
                % (self.thinning, ', '.join(THINNING_POLICIES))
            )
        if self.n_max < 1:
            raise ConfigError('n_max must be >= 1 (got %s)' % self.n_max)
        if not self.checkpoint_interval > 0:
            raise ConfigError(
                'checkpoint_interval must be > 0 (got %s)' % self.checkpoint_interval
            )
        if self.n_steps < MIN_SIM_STEPS:
            raise ConfigError(
                'horizon=%g spans only %d steps of dt=%g (at least %d are required)'
                % (self.horizon, self.n_steps, self.dt, MIN_SIM_STEPS)
            )

    @staticmethod
    def max_dt(r, L):
        limit = MAX_BRANCH_RATE_STEP / r
        if math.isfinite(L):
            limit = min(limit, MAX_TUBE_STEP_FRACTION * L ** 2)
        return limit

    @property
    def tube_enabled(self):
        return math.isfinite(self.L)

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))

    @property
    def final_time(self):
        """The horizon, rounded to a whole number of steps"""
        return self.n_steps * self.dt

    def checkpoint_steps(self):
        """
        :return: increasing step indices of the checkpoints: every checkpoint_interval from 0,
            plus the final step
        """
        n_checkpoints = int(math.floor(self.final_time / self.checkpoint_interval
                                       + _CHECKPOINT_SLACK))
        times = self.checkpoint_interval * np.arange(n_checkpoints + 1)
        steps = np.unique(np.clip(np.rint(times / self.dt).astype(np.int64), 0, self.n_steps))
        if steps[-1] != self.n_steps:
            steps = np.append(steps, self.n_steps)
        return steps

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def as_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Particle:
    id: int
    parent: object
    birth_time: float
    x: float
    ibp_accum: float
    alive: bool = True
    weight: float = 1.0


@dataclass(frozen=True, eq=False)
class Population:
    """
    A snapshot of the live, tube-surviving particles of one replication at time t.
    Dead particles are dropped from storage.
    """

    t: float
    ids: np.ndarray
    parents: np.ndarray
    birth_times: np.ndarray
    x: np.ndarray
    ibp: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return int(self.x.size)

    @classmethod
    def root(cls, x0=0.0):
        return cls.from_particles([Particle(id=ROOT_PARTICLE_ID, parent=None, birth_time=0.0,
                                            x=x0, ibp_accum=0.0)], t=0.0)

    @classmethod
    def from_particles(cls, particles, t):
        particles = [particle for particle in particles if particle.alive]
        return cls(
            t=t,
            ids=np.array([particle.id for particle in particles], dtype=np.uint64),
            parents=np.array([particle.parent or 0 for particle in particles], dtype=np.uint64),
            birth_times=np.array([particle.birth_time for particle in particles], dtype=float),
            x=np.array([particle.x for particle in particles], dtype=float),
            ibp=np.array([particle.ibp_accum for particle in particles], dtype=float),
            weights=np.array([particle.weight for particle in particles], dtype=float),
        )

    def particles(self):
        for index in range(len(self)):
            parent = int(self.parents[index])
            yield Particle(
                id=int(self.ids[index]),
                parent=parent if parent else None,
                birth_time=float(self.birth_times[index]),
                x=float(self.x[index]),
                ibp_accum=float(self.ibp[index]),
                weight=float(self.weights[index]),
            )


@dataclass(frozen=True, eq=False)
class TrajectoryStats:
    """
    Checkpoint series for one replication. `counts` holds the weighted count (equal to |N̂(t)|
    unless thinning occurred) and `stored_counts` the number of particles actually simulated.
    Checkpoints after a STOP_AT_CAP truncation hold nan.
    """

    checkpoints: np.ndarray
    counts: np.ndarray
    stored_counts: np.ndarray
    z_values: np.ndarray
    extinction_time: object
    total_births: int
    seed_used: int
    truncated: bool = False
    truncation_time: object = None
    thinning_events: int = 0
    bound_violations: int = 0
    max_bound_excess: float = -math.inf
    functional_sums: dict = field(default_factory=dict)
    clamp_events: int = 0
    spine_generation: int = 0
    final_population: object = None

    @property
    def survived(self):
        return self.extinction_time is None

    def survived_to(self, t):
        return self.extinction_time is None or self.extinction_time > t

    def truncated_by(self, t):
        return self.truncated and self.truncation_time <= t

    def index_of(self, t):
        index = int(np.argmin(np.abs(self.checkpoints - t)))
        if abs(self.checkpoints[index] - t) > 1e-6 * max(1.0, abs(t)):
            raise KeyError('No checkpoint at t=%g' % t)
        return index

    def count_at(self, t):
        return float(self.counts[self.index_of(t)])

    def z_at(self, t):
        return float(self.z_values[self.index_of(t)])

    def survivors_so_far(self):
        alive = (self.counts > 0) | np.isnan(self.counts)
        return alive.astype(int)

    def rows(self):
        return zip(self.checkpoints, self.stored_counts, self.counts, self.z_values,
                   self.survivors_so_far())

    def write_csv(self, file_path):
        write_csv(file_path, TRAJECTORY_CSV_HEADER, self.rows())

    def summary(self):
        return {
            'seed': self.seed_used,
            'extinction_time': (SURVIVED_TO_HORIZON if self.survived else self.extinction_time),
            'total_births': self.total_births,
            'truncated': self.truncated,
            'truncation_time': self.truncation_time,
            'thinning_events': self.thinning_events,
            'bound_violations': self.bound_violations,
            'clamp_events': self.clamp_events,
        }


@dataclass(frozen=True)
class GrowthRateEstimate:
    """
    Growth-rate estimates over a checkpoint window. `rate` is the least-squares slope of
    log(mean count) over replications alive at the end of the window (comparable to the
    almost-sure rate on non-extinction); `unconditional_rate` includes extinct replications
    (comparable to the expected count e^{rt}p(t)).
    """

    rate: float
    std_error: float
    per_replication_mean: float
    per_replication_std: float
    unconditional_rate: float
    n_survivors: int
    n_extinct: int
    n_excluded: int
    window: tuple

    def as_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class CoupledCounts:
    checkpoints: np.ndarray
    L_values: tuple
    # shape (len(L_values), replications, len(checkpoints))
    counts: np.ndarray

    def is_monotone(self):
        """True if narrower tubes never hold more particles, at every checkpoint"""
        order = np.argsort(self.L_values)
        ordered = self.counts[order]
        finite = np.all(np.isfinite(ordered), axis=0)
        return bool(np.all(np.diff(ordered, axis=0)[:, finite] >= 0))


def bridge_kill_prob(y0, y1, dt, L):
    """
    Probability that a Brownian bridge from y0 to y1 over a step dt touches either boundary ±L,
    treating the two boundaries independently. Works on scalars or arrays.
    :raises BridgeInputError: if either endpoint is outside (-L, L); such particles must be killed
        outright
    """
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    if np.any(np.abs(y0) >= L) or np.any(np.abs(y1) >= L):
        raise BridgeInputError('Bridge endpoints must lie strictly inside (-%g, %g)' % (L, L))
    probability = _bridge_kill_prob(y0, y1, dt, L)
    if probability.ndim == 0:
        return float(probability)
    return probability


def _bridge_kill_prob(y0, y1, dt, L):
    upper = np.exp(-2.0 * (L - y0) * (L - y1) / dt)
    lower = np.exp(-2.0 * (L + y0) * (L + y1) / dt)
    return np.clip(1.0 - (1.0 - upper) * (1.0 - lower), 0.0, 1.0)


def _z_terms(x, ibp, f_t, df_t, energy, t, r, L):
    """Per-particle terms of Z(t), before multiplication by the particle weights"""
    exponent = (tube_decay_rate(L) - r) * t + df_t * x - ibp - 0.5 * energy
    terms = np.exp(exponent)
    if math.isfinite(L):
        terms *= np.cos(math.pi / (2.0 * L) * (x - f_t))
    return terms


def _energy_at(path, t, path_functionals=None):
    if path_functionals is not None:
        return float(path_functionals.energy_at(t))
    if t <= 0:
        return 0.0
    return float(accumulate_functionals(path, t, DEFAULT_N_STEPS).A[-1])


def compute_Z(population, t, path, config, path_functionals=None):
    """
    Evaluates the additive martingale
        Z(t) = Σ_u w_u e^{(π²/8L² - r)t} cos(π(X_u(t) - f(t))/2L) e^{∫f'dX_u - ½∫f'²}
    over a population, with ∫f'dX_u = f'(t)X_u(t) - ibp_u.

    :param path_functionals: optional PathFunctionals covering t, used for ∫₀ᵗ f'²
    :raises TubeInvariantError: if any particle lies outside the tube at t
    """
    if not len(population):
        return 0.0
    f_t, df_t, _curvature = eval_path(path, t)
    if config.tube_enabled:
        outside = np.abs(population.x - f_t) >= config.L
        if np.any(outside):
            raise TubeInvariantError(
                '%d particle(s) outside the tube of half-width %g around %s at t=%g'
                % (int(np.count_nonzero(outside)), config.L, path, t)
            )
    energy = _energy_at(path, t, path_functionals)
    terms = _z_terms(population.x, population.ibp, f_t, df_t, energy, t, config.r, config.L)
    return float(np.sum(population.weights * terms))


class _BranchingRun(object):
    """
    Steps the tube-killed populations of several replications together on the shared step grid.
    Particles of every replication live in one set of flat arrays, tagged by replication index;
    every per-replication reduction goes through np.bincount so that replications never mix.
    """

    def __init__(self, config, path, rep_keys, functionals=None, path_functionals=None,
                 track_extinction=True, with_roots=True):
        if not path.twice_differentiable:
            raise ConfigError(
                'Path %s has jumps in f\', so Z(t) can\'t be evaluated pathwise. Simulate a smooth '
                'approximation instead' % path
            )
        self.config = config
        self.path = path
        self.rep_keys = np.asarray(rep_keys, dtype=np.uint64).reshape(-1)
        self.n_reps = int(self.rep_keys.size)
        self.functionals = dict(functionals or {})
        self.track_extinction = track_extinction

        if path_functionals is None:
            path_functionals = accumulate_functionals(path, config.final_time, config.n_steps)
        self.path_functionals = path_functionals
        self.t_grid = path_functionals.t_grid
        self.energy = path_functionals.A
        self.curvature = path_functionals.B
        ones = np.ones_like(self.t_grid)
        self.f = np.asarray(path.f(self.t_grid), dtype=float) * ones
        self.df = np.asarray(path.df(self.t_grid), dtype=float) * ones
        self.d2f = np.asarray(path.d2f(self.t_grid), dtype=float) * ones
        self._max_curvature = float(np.max(np.abs(self.d2f)))
        self._branch_probability = -math.expm1(-config.r * config.dt)
        self.checkpoint_steps = config.checkpoint_steps()
        n_checkpoints = self.checkpoint_steps.size

        # one root particle per replication, at the tube centre
        n_roots = self.n_reps if with_roots else 0
        self.rep = np.arange(n_roots, dtype=np.int64)
        self.ids = np.full(n_roots, ROOT_PARTICLE_ID, dtype=np.uint64)
        self.parents = np.zeros(n_roots, dtype=np.uint64)
        self.births = np.zeros(n_roots)
        self.x = np.zeros(n_roots)
        self.ibp = np.zeros(n_roots)
        self.weights = np.ones(n_roots)
        self.streams = rng.stream_key(self.rep_keys[self.rep], self.ids)

        shape = (self.n_reps, n_checkpoints)
        self.counts = np.full(shape, np.nan)
        self.stored_counts = np.full(shape, np.nan)
        self.z_values = np.full(shape, np.nan)
        self.functional_sums = {name: np.full(shape, np.nan) for name in self.functionals}
        self.extinction_time = np.full(self.n_reps, np.nan)
        self.truncation_time = np.full(self.n_reps, np.nan)
        self.frozen = np.zeros(self.n_reps, dtype=bool)
        self.total_births = np.zeros(self.n_reps, dtype=np.int64)
        self.thinning_events = np.zeros(self.n_reps, dtype=np.int64)
        self.bound_violations = np.zeros(self.n_reps, dtype=np.int64)
        self.max_bound_excess = np.full(self.n_reps, -np.inf)

    @property
    def size(self):
        return int(self.x.size)

    def _bincount(self, weights=None):
        return np.bincount(self.rep, weights=weights, minlength=self.n_reps)

    def _select(self, keep):
        self.rep = self.rep[keep]
        self.ids = self.ids[keep]
        self.parents = self.parents[keep]
        self.births = self.births[keep]
        self.x = self.x[keep]
        self.ibp = self.ibp[keep]
        self.weights = self.weights[keep]
        self.streams = self.streams[keep]

    def add_particles(self, reps, ids, x, ibp, birth_time):
        """Appends particles (e.g. immigrants shed by a spine) to the live population."""
        reps = np.asarray(reps, dtype=np.int64)
        ids = np.asarray(ids, dtype=np.uint64)
        self.rep = np.concatenate([self.rep, reps])
        self.ids = np.concatenate([self.ids, ids])
        self.parents = np.concatenate([self.parents, np.zeros(reps.size, dtype=np.uint64)])
        self.births = np.concatenate([self.births, np.full(reps.size, float(birth_time))])
        self.x = np.concatenate([self.x, np.asarray(x, dtype=float)])
        self.ibp = np.concatenate([self.ibp, np.asarray(ibp, dtype=float)])
        self.weights = np.concatenate([self.weights, np.ones(reps.size)])
        self.streams = np.concatenate([self.streams, rng.stream_key(self.rep_keys[reps], ids)])

    def step(self, k):
        """Advances every live particle from t_grid[k] to t_grid[k + 1]."""
        if not self.size:
            return
        config = self.config
        dt = self.t_grid[k + 1] - self.t_grid[k]

        x_new = self.x + math.sqrt(dt) * rng.normals(self.streams, k, CHANNEL_MOVE)
        keep = np.ones(self.size, dtype=bool)
        if config.tube_enabled:
            y0 = self.x - self.f[k]
            y1 = x_new - self.f[k + 1]
            keep = np.abs(y1) < config.L
            if config.bridge_correction:
                inside = np.flatnonzero(keep)
                kill_probability = _bridge_kill_prob(y0[inside], y1[inside], dt, config.L)
                u = rng.uniforms(self.streams[inside], k, CHANNEL_BRIDGE)
                keep[inside[u < kill_probability]] = False

        self.ibp = self.ibp + 0.5 * dt * (self.d2f[k] * self.x + self.d2f[k + 1] * x_new)
        self.x = x_new
        self._select(keep)

        branching = rng.uniforms(self.streams, k, CHANNEL_BRANCH) < self._branch_probability
        if np.any(branching):
            self._branch(branching, self.t_grid[k + 1])

        self._enforce_cap(k)

        if self.track_extinction:
            empty = (self._bincount() == 0) & np.isnan(self.extinction_time) & ~self.frozen
            self.extinction_time[empty] = self.t_grid[k + 1]

    def _branch(self, branching, t):
        """Replaces each branching particle by two children at its position, in place."""
        self.total_births += self._bincount(branching.astype(float)).astype(np.int64)
        copies = 1 + branching.astype(np.int64)
        source = np.repeat(np.arange(self.size), copies)
        second = np.zeros(source.size, dtype=bool)
        second[1:] = source[1:] == source[:-1]
        born = np.repeat(branching, copies)
        first = born & ~second

        parent_ids = self.ids[source]
        ids = parent_ids.copy()
        ids[first] = rng.child_id(parent_ids[first], FIRST_CHILD_SLOT)
        ids[second] = rng.child_id(parent_ids[second], SECOND_CHILD_SLOT)
        parents = self.parents[source]
        parents[born] = parent_ids[born]
        births = self.births[source]
        births[born] = t

        self.rep = self.rep[source]
        self.ids = ids
        self.parents = parents
        self.births = births
        self.x = self.x[source]
        self.ibp = self.ibp[source]
        self.weights = self.weights[source]
        streams = self.streams[source]
        streams[born] = rng.stream_key(self.rep_keys[self.rep[born]], ids[born])
        self.streams = streams

    def _enforce_cap(self, k):
        config = self.config
        t = self.t_grid[k + 1]
        over = self._bincount() > config.n_max
        if not np.any(over):
            return

        if config.thinning == STOP_AT_CAP:
            for rep in np.flatnonzero(over):
                logger.warning('Replication %d (seed %d) reached the population cap n_max=%d at '
                               't=%g; truncating', rep, int(self.rep_keys[rep]), config.n_max, t)
            self.frozen |= over
            self.truncation_time[over] = t
            self._select(~over[self.rep])
            return

        for attempt in range(MAX_THIN_ROUNDS):
            in_over = over[self.rep]
            affected = np.flatnonzero(in_over)
            u = rng.uniforms(self.streams[affected], k, CHANNEL_THIN + attempt)
            keep = np.ones(self.size, dtype=bool)
            keep[affected[u >= 0.5]] = False
            self.weights[affected] *= 2.0
            self.thinning_events[over] += 1
            for rep in np.flatnonzero(over):
                logger.warning('Replication %d reached the population cap n_max=%d at t=%g; '
                               'thinning uniformly and doubling weights', rep, config.n_max, t)
            self._select(keep)
            over = self._bincount() > config.n_max
            if not np.any(over):
                return
        raise RuntimeError('Thinning failed to bring the population under n_max=%d after %d '
                           'rounds' % (config.n_max, MAX_THIN_ROUNDS))

    def record(self, checkpoint, k, extra_counts=None, extra_z=None):
        """
        Stores checkpoint values for every replication not truncated at the cap.
        :param extra_counts: optional per-replication counts of particles tracked outside the
            arrays (the spine, under the changed measure)
        :param extra_z: their per-replication contribution to Z
        """
        config = self.config
        t = self.t_grid[k]
        weighted = self._bincount(self.weights)
        stored = self._bincount().astype(float)
        terms = _z_terms(self.x, self.ibp, self.f[k], self.df[k], self.energy[k], t, config.r,
                         config.L)
        z = self._bincount(self.weights * terms)
        if extra_counts is not None:
            weighted = weighted + extra_counts
            stored = stored + extra_counts
        if extra_z is not None:
            z = z + extra_z

        live = ~self.frozen
        self.counts[live, checkpoint] = weighted[live]
        self.stored_counts[live, checkpoint] = stored[live]
        self.z_values[live, checkpoint] = z[live]
        for name, functional in self.functionals.items():
            values = np.asarray(functional(self.x), dtype=float) * np.ones_like(self.x)
            sums = self._bincount(self.weights * values)
            self.functional_sums[name][live, checkpoint] = sums[live]

        if config.tube_enabled and self.size:
            self._check_bound(k)

    def _check_bound(self, k):
        config = self.config
        dt = config.dt
        curvature = self.curvature[k]
        tolerance = 10.0 * (dt + self._max_curvature * dt) * (1.0 + curvature)
        allowance = 2.0 * config.L * (curvature + abs(self.df[0])) + tolerance
        exponent = self.df[k] * self.x - self.ibp - self.energy[k]
        excess = np.abs(exponent) - allowance
        np.maximum.at(self.max_bound_excess, self.rep, excess)

        violating = excess > 0
        if not np.any(violating):
            return
        self.bound_violations += self._bincount(violating.astype(float)).astype(np.int64)
        message = ('%d particle(s) exceed the pathwise Girsanov bound at t=%g (max excess %g)'
                   % (int(np.count_nonzero(violating)), self.t_grid[k], float(np.max(excess))))
        if config.strict_bound:
            raise BoundViolationError(message)
        logger.warning(message)

    def fill_empty(self, first_checkpoint):
        """Records zeros at the remaining checkpoints once every population has died out."""
        live = np.flatnonzero(~self.frozen)
        columns = slice(first_checkpoint, None)
        for series in [self.counts, self.stored_counts, self.z_values]:
            series[live, columns] = 0.0
        for series in self.functional_sums.values():
            series[live, columns] = 0.0

    def population(self, rep):
        mine = self.rep == rep
        return Population(
            t=float(self.t_grid[-1]),
            ids=self.ids[mine].copy(),
            parents=self.parents[mine].copy(),
            birth_times=self.births[mine].copy(),
            x=self.x[mine].copy(),
            ibp=self.ibp[mine].copy(),
            weights=self.weights[mine].copy(),
        )

    def results(self, keep_populations=False, clamp_events=None, spine_generation=None):
        checkpoints = self.t_grid[self.checkpoint_steps]
        results = []
        for rep in range(self.n_reps):
            extinction = self.extinction_time[rep]
            truncation = self.truncation_time[rep]
            results.append(TrajectoryStats(
                checkpoints=checkpoints.copy(),
                counts=self.counts[rep].copy(),
                stored_counts=self.stored_counts[rep].copy(),
                z_values=self.z_values[rep].copy(),
                extinction_time=None if np.isnan(extinction) else float(extinction),
                total_births=int(self.total_births[rep]),
                seed_used=int(self.rep_keys[rep]),
                truncated=bool(self.frozen[rep]),
                truncation_time=None if np.isnan(truncation) else float(truncation),
                thinning_events=int(self.thinning_events[rep]),
                bound_violations=int(self.bound_violations[rep]),
                max_bound_excess=float(self.max_bound_excess[rep]),
                functional_sums={name: series[rep].copy()
                                 for name, series in self.functional_sums.items()},
                clamp_events=int(clamp_events[rep]) if clamp_events is not None else 0,
                spine_generation=(int(spine_generation[rep])
                                  if spine_generation is not None else 0),
                final_population=(self.population(rep)
                                  if keep_populations and not self.frozen[rep] else None),
            ))
        return results


def replication_keys(seed, reps):
    return rng.replication_key(seed, np.arange(reps, dtype=np.uint64))


def simulate_ensemble(config, path, reps, functionals=None, keep_populations=False,
                      path_functionals=None):
    """
    Simulates `reps` independent replications under P, stepped together. Replication i draws its
    randomness from the key mix(seed, i), so results depend only on (config, path, i).

    :param functionals: optional mapping of name -> g; each checkpoint then also records
        Σ_u w_u g(X_u(t)) per replication (TrajectoryStats.functional_sums)
    :param keep_populations: attach the final Population to each TrajectoryStats
    :return: a list of TrajectoryStats, one per replication
    """
    if reps < 1:
        raise ConfigError('At least one replication is required (got %d)' % reps)
    run = _BranchingRun(config, path, replication_keys(config.seed, reps), functionals,
                        path_functionals)
    checkpoint_steps = run.checkpoint_steps
    checkpoint = 0
    for k in range(config.n_steps + 1):
        if checkpoint < checkpoint_steps.size and k == checkpoint_steps[checkpoint]:
            run.record(checkpoint, k)
            checkpoint += 1
        if k == config.n_steps:
            break
        if not run.size:
            run.fill_empty(checkpoint)
            break
        run.step(k)

    results = run.results(keep_populations=keep_populations)
    truncated = sum(1 for stats in results if stats.truncated)
    logger.debug('Simulated %d replication(s) of %s to t=%g (%d truncated)', reps, path,
                 config.final_time, truncated)
    return results


def simulate(config, path):
    """
    Simulates a single replication under P, starting from one particle at x=0.
    :return: TrajectoryStats; identical inputs give bit-identical results
    """
    return simulate_ensemble(config, path, 1, keep_populations=True)[0]


def coupled_counts(config, path, L_values, reps=1):
    """
    Runs identical randomness under several tube half-widths. Particle identities and draws don't
    depend on L, so a particle alive in a narrow tube is alive, at the same position, in every
    wider one (as long as no run reaches the population cap).
    """
    L_values = tuple(float(L) for L in L_values)
    runs = [simulate_ensemble(config.replace(L=L), path, reps) for L in L_values]
    counts = np.array([[stats.counts for stats in run] for run in runs])
    return CoupledCounts(checkpoints=runs[0][0].checkpoints, L_values=L_values, counts=counts)


def survival_frequency(stats_ensemble):
    """
    :return: (fraction of replications with a non-empty tube population at their horizon, 95%
        binomial confidence half-width). Replications truncated at the population cap count as
        survivors.
    """
    stats_ensemble = list(stats_ensemble)
    survivors = sum(1 for stats in stats_ensemble if stats.survived)
    return (survivors / float(len(stats_ensemble)),
            binomial_ci_halfwidth(survivors, len(stats_ensemble)))


def survival_probability(config, path, t, reps):
    """
    Estimates P(N̂(t) is non-empty), with the 95% binomial confidence half-width. Times shorter
    than MIN_SIM_STEPS steps of config.dt are simulated with a proportionally finer step.
    """
    if reps < 100:
        raise ConfigError('survival_probability requires at least 100 replications (got %d)'
                          % reps)
    if t < 0:
        raise ConfigError('t must be >= 0 (got %s)' % t)
    if t == 0:
        return 1.0, 0.0
    dt = min(config.dt, t / MIN_SIM_STEPS)
    return survival_frequency(simulate_ensemble(config.replace(horizon=t, dt=dt), path, reps))


def checkpoint_means(stats_ensemble, quantity='z_values'):
    """
    :param quantity: a TrajectoryStats attribute name, a functional name, or a callable mapping
        TrajectoryStats to a checkpoint series
    :return: (checkpoints, means, standard errors), ignoring nan entries
    """
    stats_ensemble = list(stats_ensemble)
    if callable(quantity):
        extract = quantity
    elif quantity in stats_ensemble[0].functional_sums:
        def extract(stats):
            return stats.functional_sums[quantity]
    else:
        def extract(stats):
            return getattr(stats, quantity)

    values = np.array([extract(stats) for stats in stats_ensemble], dtype=float)
    means = np.empty(values.shape[1])
    errors = np.empty(values.shape[1])
    for column in range(values.shape[1]):
        means[column], errors[column] = mean_and_standard_error(values[:, column])
    return stats_ensemble[0].checkpoints, means, errors


def estimate_growth_rate(stats_ensemble, window=None):
    """
    Estimates the exponential growth rate of |N̂(t)| over a checkpoint window, by default
    (t_hi/2, t_hi) with t_hi the last checkpoint.

    Replications extinct by the end of the window are excluded from the survivor estimates, and
    replications truncated at the population cap within the window are excluded altogether; both
    are counted in the result.
    :raises EstimationError: if fewer than 2 replications survive, or the window holds fewer than
        2 checkpoints
    """
    stats_ensemble = list(stats_ensemble)
    if not stats_ensemble:
        raise EstimationError('Empty ensemble')
    checkpoints = stats_ensemble[0].checkpoints
    if window is None:
        window = (checkpoints[-1] / 2.0, checkpoints[-1])
    t_lo, t_hi = window
    slack = 1e-9 * max(1.0, t_hi)
    selected = (checkpoints >= t_lo - slack) & (checkpoints <= t_hi + slack)
    if np.count_nonzero(selected) < 2:
        raise EstimationError('Window (%g, %g) contains fewer than 2 checkpoints' % window)
    times = checkpoints[selected]
    t_end = times[-1]

    usable = [stats for stats in stats_ensemble if not stats.truncated_by(t_end)]
    excluded = len(stats_ensemble) - len(usable)
    if excluded:
        logger.warning('%d replication(s) truncated at the population cap were excluded from '
                       'growth-rate estimation', excluded)
    survivors = [stats for stats in usable if stats.counts[selected][-1] > 0]
    if len(survivors) < 2:
        raise EstimationError('Only %d replication(s) survived to t=%g; at least 2 are required'
                              % (len(survivors), t_end))

    survivor_counts = np.array([stats.counts[selected] for stats in survivors])
    rate = linregress(times, np.log(np.mean(survivor_counts, axis=0))).slope
    slopes = [linregress(times, np.log(counts)).slope for counts in survivor_counts]
    slope_mean, slope_error = mean_and_standard_error(slopes)

    all_counts = np.array([stats.counts[selected] for stats in usable])
    unconditional = linregress(times, np.log(np.mean(all_counts, axis=0))).slope

    return GrowthRateEstimate(
        rate=float(rate),
        std_error=slope_error,
        per_replication_mean=slope_mean,
        per_replication_std=float(np.std(slopes, ddof=1)),
        unconditional_rate=float(unconditional),
        n_survivors=len(survivors),
        n_extinct=len(usable) - len(survivors),
        n_excluded=excluded,
        window=(float(t_lo), float(t_hi)),
    )


def write_ensemble_csv(stats_ensemble, file_path):
    """
    Writes ensemble checkpoint means as CSV (t, count, weighted_count, Z, survivors_so_far), where
    survivors_so_far is the number of replications with a non-empty N̂(t).
    """
    stats_ensemble = list(stats_ensemble)
    checkpoints, stored, _errors = checkpoint_means(stats_ensemble, 'stored_counts')
    _checkpoints, weighted, _errors = checkpoint_means(stats_ensemble, 'counts')
    _checkpoints, z, _errors = checkpoint_means(stats_ensemble, 'z_values')
    survivors = np.sum([stats.survivors_so_far() for stats in stats_ensemble], axis=0)
    write_csv(file_path, TRAJECTORY_CSV_HEADER, zip(checkpoints, stored, weighted, z, survivors))


def write_manifest(stats_ensemble, config, path, file_path, extra=None):
    """
    Writes a JSON sidecar recording the configuration hash, seeds, and every truncation and
    thinning event of an ensemble.
    """
    stats_ensemble = list(stats_ensemble)
    config_values = config.as_dict()
    manifest = {
        'config': config_values,
        'config_hash': config_hash(config_values),
        'path': path.name,
        'seed': config.seed,
        'replications': len(stats_ensemble),
        'created': timestamp(),
        'truncations': [
            {'replication': index, 'seed': stats.seed_used, 'time': stats.truncation_time}
            for index, stats in enumerate(stats_ensemble) if stats.truncated
        ],
        'thinning': [
            {'replication': index, 'seed': stats.seed_used, 'events': stats.thinning_events}
            for index, stats in enumerate(stats_ensemble) if stats.thinning_events
        ],
        'bound_violations': sum(stats.bound_violations for stats in stats_ensemble),
    }
    if extra:
        manifest.update(extra)
    write_json(file_path, manifest)
    return manifest
