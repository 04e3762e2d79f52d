# -*- coding: utf-8 -*-
"""
Simulation under the changed measure Q̃ obtained by weighting with the additive martingale Z.
Under Q̃ a distinguished line of descent (the spine) moves as a Brownian motion with drift
    f'(t) - (π/2L) tan(π(x - f(t))/2L),
never leaves the tube, and splits at the accelerated rate 2r. At each split one child carries on
as the spine while the other starts an independent subtree with the original (tube-killed) law.

Along with the spine itself, this module evaluates the single-particle martingale ζ(t), the spine
decomposition of E_Q[Z(t) | spine], and the checks that compare P- and Q̃-ensembles.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.stats import chisquare

from ..paths.api import PathDomainError, accumulate_functionals, eval_path, tube_decay_rate
from ..utils import (
    combined_standard_error,
    mean_and_standard_error,
    write_csv,
)
from . import rng
from .bbm import (
    ConfigError,
    _BranchingRun,
    _z_terms,
    checkpoint_means,
    replication_keys,
    simulate_ensemble,
)
from .constants import (
    CHANNEL_FISSION,
    CHANNEL_SPINE_MOVE,
    CHANNEL_SUBSTEP,
    DEFAULT_N_STANDARD_ERRORS,
    EQUILIBRIUM_BINS,
    EQUILIBRIUM_BURN_IN,
    EQUILIBRIUM_SAMPLE_SPACING,
    FIRST_CHILD_SLOT,
    MAX_SUBSTEP_HALVINGS,
    MIN_EQUILIBRIUM_SAMPLES,
    ROOT_PARTICLE_ID,
    SECOND_CHILD_SLOT,
    SPINE_BATCH_SIZE,
    SPINE_BOUNDARY_FRACTION,
    SUBSTEP_LEVEL_SHIFT,
)

logger = logging.getLogger(__name__)

SPINE_CSV_HEADER = ('t', 'xi', 'displacement', 'zeta', 'decomposition')
FISSION_CSV_HEADER = ('time', 'position', 'subtree_id')


class SubstepFloorError(RuntimeError):
    """
    Raised when an Euler step of the spine still leaves the tube after the smallest allowed
    substep, and clamping is disabled.
    """


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpineState:
    """
    The trace of one simulated spine on the step grid. `girsanov` holds ∫₀ᵗ f'dξ, evaluated as
    f'(t)ξ(t) - ∫₀ᵗ f''(s)ξ(s) ds with the integral (`ibp`) accumulated by the trapezoid rule.
    `fissions` lists (time, position, subtree id) for each split along the spine.
    """

    t_grid: np.ndarray
    xi: np.ndarray
    f: np.ndarray
    ibp: np.ndarray
    girsanov: np.ndarray
    fissions: tuple
    clamp_events: int
    seed_used: int

    @property
    def t(self):
        return float(self.t_grid[-1])

    @property
    def generation(self):
        return len(self.fissions)

    @property
    def displacement(self):
        return self.xi - self.f

    def max_displacement(self):
        return float(np.max(np.abs(self.displacement)))

    def write_fissions_csv(self, file_path):
        write_csv(file_path, FISSION_CSV_HEADER, self.fissions)


@dataclass(frozen=True, eq=False)
class ZetaSeries:
    t_grid: np.ndarray
    zeta: np.ndarray
    spine_decomp: np.ndarray


@dataclass(frozen=True)
class EquilibriumReport:
    chi2: float
    p_value: float
    variance: float
    target_variance: float
    mean: float
    mean_se: float
    n_samples: int


@dataclass(frozen=True)
class FissionCountReport:
    expected: float
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    n_replications: int
    n_se: float

    @property
    def mean_ok(self):
        return abs(self.mean - self.expected) <= self.n_se * self.mean_se

    @property
    def variance_ok(self):
        return abs(self.variance - self.expected) <= self.n_se * self.variance_se

    @property
    def passed(self):
        return self.mean_ok and self.variance_ok


@dataclass(frozen=True)
class DecayBoundReport:
    """
    e^{-rt}ζ(t) against e^{-pS̃t} for grid times t >= T(p), along with the supremum of the spine
    decomposition over the same times and the finite bound it must respect.
    """

    T_p: float
    p: float
    n_checked: int
    max_log_excess: float
    decomposition_sup: float
    decomposition_bound: float
    tolerance: float

    @property
    def passed(self):
        return (self.max_log_excess <= self.tolerance
                and self.decomposition_sup <= self.decomposition_bound)


@dataclass(frozen=True)
class ComparisonReport:
    """Two Monte Carlo estimates of the same quantity, one under P and one under Q̃."""

    p_estimate: float
    p_se: float
    q_estimate: float
    q_se: float
    n_se: float = DEFAULT_N_STANDARD_ERRORS

    @property
    def combined_se(self):
        return combined_standard_error(self.p_se, self.q_se)

    @property
    def difference(self):
        return self.p_estimate - self.q_estimate

    @property
    def passed(self):
        return abs(self.difference) <= self.n_se * self.combined_se


###################################################################################################
# Equilibrium law μ(dx) = (1/L) cos²(πx/2L) dx of the spine's displacement from f
###################################################################################################
def equilibrium_density(x, L):
    x = np.asarray(x, dtype=float)
    density = np.cos(math.pi * x / (2.0 * L)) ** 2 / L
    return np.where(np.abs(x) < L, density, 0.0)


def equilibrium_cdf(x, L):
    x = np.clip(np.asarray(x, dtype=float), -L, L)
    return (x + L) / (2.0 * L) + np.sin(math.pi * x / L) / (2.0 * math.pi)


def equilibrium_variance(L):
    return L ** 2 * (1.0 / 3.0 - 2.0 / math.pi ** 2)


###################################################################################################
# The spine process
###################################################################################################
def _tangent_drift(slope, displacement, L):
    if not math.isfinite(L):
        return slope + 0.0 * displacement
    scale = math.pi / (2.0 * L)
    return slope - scale * np.tan(scale * displacement)


def spine_drift(t, x, path, L):
    """
    The drift f'(t) - (π/2L) tan(π(x - f(t))/2L) of the spine at (t, x).
    :raises PathDomainError: if x is not strictly inside the tube at t
    """
    f_t, df_t, _curvature = eval_path(path, t)
    displacement = x - f_t
    if math.isfinite(L) and abs(displacement) >= L:
        raise PathDomainError(
            'The spine drift is singular outside the tube: |x - f(t)| = %g >= L = %g at t=%g'
            % (abs(displacement), L, t)
        )
    return float(_tangent_drift(df_t, displacement, L))


class _SpineRun(object):
    """
    Advances one spine per replication across the shared step grid. An Euler step that would
    land beyond L(1 - 1e-6) from f is retried as two half steps, recursively, down to dt/1024;
    past that floor the displacement is clamped (or SubstepFloorError raised).
    """

    def __init__(self, config, path, rep_keys, path_functionals=None, keep_trace=True,
                 clamp=True):
        self.config = config
        self.path = path
        self.L = config.L
        self.rep_keys = np.asarray(rep_keys, dtype=np.uint64).reshape(-1)
        self.n_reps = int(self.rep_keys.size)
        self.clamp = clamp

        if path_functionals is None:
            path_functionals = accumulate_functionals(path, config.final_time, config.n_steps)
        self.path_functionals = path_functionals
        self.t_grid = path_functionals.t_grid
        ones = np.ones_like(self.t_grid)
        self.f = np.asarray(path.f(self.t_grid), dtype=float) * ones
        self.df = np.asarray(path.df(self.t_grid), dtype=float) * ones
        self.d2f = np.asarray(path.d2f(self.t_grid), dtype=float) * ones
        self._fission_probability = -math.expm1(-2.0 * config.r * config.dt)
        self._limit = self.L * SPINE_BOUNDARY_FRACTION

        self.ids = np.full(self.n_reps, ROOT_PARTICLE_ID, dtype=np.uint64)
        self.streams = rng.stream_key(self.rep_keys, self.ids)
        self.x = np.zeros(self.n_reps)
        self.ibp = np.zeros(self.n_reps)
        self.clamp_events = np.zeros(self.n_reps, dtype=np.int64)
        self.fissions = [[] for _ in range(self.n_reps)]

        self.keep_trace = keep_trace
        if keep_trace:
            self.xi_trace = np.zeros((self.n_reps, self.t_grid.size))
            self.ibp_trace = np.zeros((self.n_reps, self.t_grid.size))

    @property
    def generation(self):
        return np.array([len(fissions) for fissions in self.fissions], dtype=np.int64)

    def _path_at(self, t):
        return float(self.path.f(t)), float(self.path.df(t)), float(self.path.d2f(t))

    def _advance(self, index, x, t, h, k, level, position, start, end):
        """
        One Euler step of length h for the spines `index`, starting at x.
        :param start: (f, f', f'') at t
        :param end: (f, f', f'') at t + h
        :return: (new positions, trapezoid increments of ∫f''ξ, clamp counts)
        """
        if level == 0:
            channel = CHANNEL_SPINE_MOVE
        else:
            channel = CHANNEL_SUBSTEP + (level << SUBSTEP_LEVEL_SHIFT) + position
        z = rng.normals(self.streams[index], k, channel)
        f_t, df_t, d2f_t = start
        f_end, _slope, d2f_end = end

        x_new = x + _tangent_drift(df_t, x - f_t, self.L) * h + math.sqrt(h) * z
        increments = 0.5 * h * (d2f_t * x + d2f_end * x_new)
        clamps = np.zeros(index.size, dtype=np.int64)
        if not math.isfinite(self.L):
            return x_new, increments, clamps

        outside = np.flatnonzero(~(np.abs(x_new - f_end) < self._limit))
        if not outside.size:
            return x_new, increments, clamps

        if level < MAX_SUBSTEP_HALVINGS:
            half = 0.5 * h
            middle = self._path_at(t + half)
            x_mid, first, first_clamps = self._advance(
                index[outside], x[outside], t, half, k, level + 1, 2 * position, start, middle)
            x_end, second, second_clamps = self._advance(
                index[outside], x_mid, t + half, half, k, level + 1, 2 * position + 1, middle,
                end)
            x_new[outside] = x_end
            increments[outside] = first + second
            clamps[outside] = first_clamps + second_clamps
            return x_new, increments, clamps

        if not self.clamp:
            raise SubstepFloorError(
                'Spine step at t=%g left the tube even with substep %g; dt=%g is too coarse'
                % (t, h, self.config.dt)
            )
        logger.warning('Clamping %d spine(s) to the tube boundary at t=%g after reaching the '
                       'smallest substep %g', outside.size, t, h)
        x_new[outside] = f_end + np.clip(x_new[outside] - f_end, -self._limit, self._limit)
        increments[outside] = 0.5 * h * (d2f_t * x[outside] + d2f_end * x_new[outside])
        clamps[outside] += 1
        return x_new, increments, clamps

    def step(self, k):
        """
        Moves every spine from t_grid[k] to t_grid[k + 1], then applies fissions.
        :return: (replication indices, subtree root ids, positions) of the particles shed by the
            spines that split during the step
        """
        t = self.t_grid[k]
        h = self.t_grid[k + 1] - t
        start = (self.f[k], self.df[k], self.d2f[k])
        end = (self.f[k + 1], self.df[k + 1], self.d2f[k + 1])
        everyone = np.arange(self.n_reps)
        x_new, increments, clamps = self._advance(everyone, self.x, t, h, k, 0, 0, start, end)
        self.x = x_new
        self.ibp = self.ibp + increments
        self.clamp_events += clamps

        splitting = np.flatnonzero(
            rng.uniforms(self.streams, k, CHANNEL_FISSION) < self._fission_probability)
        immigrant_ids = rng.child_id(self.ids[splitting], SECOND_CHILD_SLOT)
        if splitting.size:
            t_next = float(self.t_grid[k + 1])
            for rep, subtree_id in zip(splitting, immigrant_ids):
                self.fissions[rep].append((t_next, float(self.x[rep]), int(subtree_id)))
            self.ids[splitting] = rng.child_id(self.ids[splitting], FIRST_CHILD_SLOT)
            self.streams[splitting] = rng.stream_key(self.rep_keys[splitting],
                                                     self.ids[splitting])

        if self.keep_trace:
            self.xi_trace[:, k + 1] = self.x
            self.ibp_trace[:, k + 1] = self.ibp
        return splitting, immigrant_ids, self.x[splitting].copy()

    def z_terms(self, k):
        """Each spine's own term e^{-rt}ζ(t) of Z at t_grid[k]"""
        return _z_terms(self.x, self.ibp, self.f[k], self.df[k], self.path_functionals.A[k],
                        self.t_grid[k], self.config.r, self.L)

    def states(self):
        results = []
        for rep in range(self.n_reps):
            xi = self.xi_trace[rep].copy()
            ibp = self.ibp_trace[rep].copy()
            results.append(SpineState(
                t_grid=self.t_grid,
                xi=xi,
                f=self.f,
                ibp=ibp,
                girsanov=self.df * xi - ibp,
                fissions=tuple(self.fissions[rep]),
                clamp_events=int(self.clamp_events[rep]),
                seed_used=int(self.rep_keys[rep]),
            ))
        return results


def zeta_series(state, config, path_functionals):
    """
    Evaluates ζ(t) = e^{π²t/8L²} cos(π(ξ - f)/2L) e^{∫f'dξ - ½∫f'²} along a spine trace, together
    with its spine decomposition.
    """
    t_grid = state.t_grid
    log_zeta = (tube_decay_rate(config.L) * t_grid + state.girsanov
                - 0.5 * path_functionals.A)
    zeta = np.exp(log_zeta)
    if config.tube_enabled:
        zeta *= np.cos(math.pi / (2.0 * config.L) * state.displacement)
    partial = ZetaSeries(t_grid=t_grid, zeta=zeta, spine_decomp=None)
    return ZetaSeries(t_grid=t_grid, zeta=zeta,
                      spine_decomp=spine_decomposition_series(partial, config.r))


def spine_decomposition_series(zeta, r):
    """
    :return: ∫₀ᵗ 2re^{-rs}ζ(s) ds + e^{-rt}ζ(t) at every grid time, with the integral taken by
        the trapezoid rule
    """
    discount = np.exp(-r * zeta.t_grid)
    births = cumulative_trapezoid(2.0 * r * discount * zeta.zeta, x=zeta.t_grid, initial=0.0)
    return births + discount * zeta.zeta


def simulate_spine_ensemble(config, path, reps, horizon=None, clamp=True):
    """
    Simulates `reps` independent spines, replication i using the key mix(seed, i).
    :return: a list of (SpineState, ZetaSeries) pairs
    """
    if reps < 1:
        raise ConfigError('At least one replication is required (got %d)' % reps)
    if horizon is not None:
        config = config.replace(horizon=horizon)
    path_functionals = accumulate_functionals(path, config.final_time, config.n_steps)
    run = _SpineRun(config, path, replication_keys(config.seed, reps), path_functionals,
                    clamp=clamp)
    for k in range(config.n_steps):
        run.step(k)

    clamped = int(np.sum(run.clamp_events))
    if clamped:
        logger.warning('%d spine clamping event(s) across %d replication(s); dt=%g is too '
                       'coarse for L=%g', clamped, reps, config.dt, config.L)
    return [(state, zeta_series(state, config, path_functionals)) for state in run.states()]


def simulate_spine(config, path, horizon=None):
    """
    Simulates a single spine from x=0.
    :return: (SpineState, ZetaSeries)
    """
    return simulate_spine_ensemble(config, path, 1, horizon=horizon)[0]


def write_spine_csv(state, series, file_path):
    write_csv(file_path, SPINE_CSV_HEADER,
              zip(state.t_grid, state.xi, state.displacement, series.zeta, series.spine_decomp))


@dataclass(frozen=True, eq=False)
class SpineEnsembleSummary:
    """What the checks on the spine law need from a large spine ensemble, without the traces."""

    t_grid: np.ndarray
    fission_counts: np.ndarray
    max_displacements: np.ndarray
    samples: np.ndarray
    mean_displacement: np.ndarray
    clamp_events: int

    def exits(self, L):
        return int(np.count_nonzero(self.max_displacements >= L))


def summarize_spines(config, path, reps, burn_in=EQUILIBRIUM_BURN_IN,
                     spacing=EQUILIBRIUM_SAMPLE_SPACING, batch_size=SPINE_BATCH_SIZE):
    """
    Simulates `reps` spines, `batch_size` at a time, keeping fission counts, the largest
    displacement of each spine, the equilibrium samples equilibrium_samples() would collect, and
    the mean displacement at every grid time. Replication i uses the key mix(seed, i), as in
    simulate_spine_ensemble, so batching never changes a replication.
    """
    if reps < 1:
        raise ConfigError('At least one replication is required (got %d)' % reps)
    keys = replication_keys(config.seed, reps)
    path_functionals = accumulate_functionals(path, config.final_time, config.n_steps)
    t_grid = path_functionals.t_grid
    first, stride = _sample_slice(t_grid, burn_in, spacing)

    fission_counts, extremes, samples = [], [], []
    displacement_total = np.zeros(t_grid.size)
    clamped = 0
    for start in range(0, reps, batch_size):
        run = _SpineRun(config, path, keys[start:start + batch_size], path_functionals)
        for k in range(config.n_steps):
            run.step(k)
        displacement = run.xi_trace - run.f
        fission_counts.append(run.generation)
        extremes.append(np.max(np.abs(displacement), axis=1))
        samples.append(displacement[:, first::stride].ravel())
        displacement_total += displacement.sum(axis=0)
        clamped += int(np.sum(run.clamp_events))

    if clamped:
        logger.warning('%d spine clamping event(s) across %d replication(s); dt=%g is too '
                       'coarse for L=%g', clamped, reps, config.dt, config.L)
    return SpineEnsembleSummary(
        t_grid=t_grid,
        fission_counts=np.concatenate(fission_counts),
        max_displacements=np.concatenate(extremes),
        samples=np.concatenate(samples),
        mean_displacement=displacement_total / reps,
        clamp_events=clamped,
    )


###################################################################################################
# Checks on the spine law
###################################################################################################
def _sample_slice(t_grid, burn_in, spacing):
    dt = t_grid[1] - t_grid[0]
    return int(math.ceil(burn_in / dt - 1e-9)), max(1, int(round(spacing / dt)))


def equilibrium_samples(states, burn_in=EQUILIBRIUM_BURN_IN, spacing=EQUILIBRIUM_SAMPLE_SPACING):
    """
    Collects spine displacements ξ - f at the grid times burn_in, burn_in + spacing, ...
    from each trace.
    """
    samples = []
    for state in states:
        first, stride = _sample_slice(state.t_grid, burn_in, spacing)
        samples.append(state.displacement[first::stride])
    if not samples:
        return np.empty(0)
    return np.concatenate(samples)


def equilibrium_check(samples, L, bins=EQUILIBRIUM_BINS):
    """
    Compares spine displacement samples with the equilibrium law μ(dx) = (1/L)cos²(πx/2L)dx by a
    χ² test on equal-width bins over (-L, L), and reports the sample variance next to the target
    L²(1/3 - 2/π²).
    :raises InsufficientDataError: for fewer than 1000 samples
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size < MIN_EQUILIBRIUM_SAMPLES:
        raise InsufficientDataError(
            'The equilibrium check requires at least %d samples (got %d)'
            % (MIN_EQUILIBRIUM_SAMPLES, samples.size)
        )
    edges = np.linspace(-L, L, bins + 1)
    observed, _edges = np.histogram(samples, bins=edges)
    expected = observed.sum() * np.diff(equilibrium_cdf(edges, L))
    expected *= observed.sum() / expected.sum()
    statistic, p_value = chisquare(observed, expected)
    mean, mean_se = mean_and_standard_error(samples)
    return EquilibriumReport(
        chi2=float(statistic),
        p_value=float(p_value),
        variance=float(np.var(samples, ddof=1)),
        target_variance=equilibrium_variance(L),
        mean=mean,
        mean_se=mean_se,
        n_samples=int(samples.size),
    )


def fission_count_check(states, r, horizon, n_se=DEFAULT_N_STANDARD_ERRORS):
    """
    Compares the fission counts along the spines with the Poisson(2r·horizon) law: both the mean
    and the variance should lie within n_se standard errors of 2r·horizon.
    """
    return fission_count_report([state.generation for state in states], r, horizon, n_se)


def fission_count_report(counts, r, horizon, n_se=DEFAULT_N_STANDARD_ERRORS):
    counts = np.asarray(counts, dtype=float)
    if counts.size < 2:
        raise InsufficientDataError('At least 2 spines are required')
    mean, mean_se = mean_and_standard_error(counts)
    centred = counts - mean
    variance = float(np.var(counts, ddof=1))
    fourth_moment = float(np.mean(centred ** 4))
    variance_se = math.sqrt(max(fourth_moment - variance ** 2, 0.0) / counts.size)
    return FissionCountReport(
        expected=2.0 * r * horizon,
        mean=mean,
        mean_se=mean_se,
        variance=variance,
        variance_se=variance_se,
        n_replications=int(counts.size),
        n_se=n_se,
    )


def decay_bound_check(series, r, s_tilde, T_p, p=0.5, tolerance=1e-2):
    """
    Checks that log(e^{-rt}ζ(t)) <= -p·S̃·t + tolerance at every grid time t >= T(p), and that
    the spine decomposition over those times stays below
        ∫₀^{T(p)} 2re^{-rs}ζ(s) ds + e^{tolerance} (2r e^{-pS̃T(p)}/(pS̃) + 1).

    :param T_p: the threshold time from compute_T
    """
    if T_p is None:
        raise PathDomainError('T(p) isn\'t attained within the horizon; nothing to check')
    if not s_tilde > 0 or not 0 < p < 1:
        raise PathDomainError('The decay bound needs S̃ > 0 and 0 < p < 1 (got S̃=%g, p=%g)'
                              % (s_tilde, p))
    t_grid = series.t_grid
    past = t_grid >= T_p - 1e-9
    rate = p * s_tilde
    discounted = np.exp(-r * t_grid) * series.zeta
    with np.errstate(divide='ignore'):
        excess = np.log(discounted[past]) + rate * t_grid[past]
    early_births = cumulative_trapezoid(2.0 * r * discounted, x=t_grid, initial=0.0)
    first_past = int(np.argmax(past)) if np.any(past) else t_grid.size - 1
    bound = (early_births[first_past]
             + math.exp(tolerance) * (2.0 * r * math.exp(-rate * T_p) / rate + 1.0))
    if not np.any(past):
        logger.warning('T(p)=%g lies beyond the simulated horizon %g', T_p, t_grid[-1])
    return DecayBoundReport(
        T_p=float(T_p),
        p=p,
        n_checked=int(np.count_nonzero(past)),
        max_log_excess=float(np.max(excess)) if excess.size else -math.inf,
        decomposition_sup=(float(np.max(series.spine_decomp[past])) if excess.size
                           else -math.inf),
        decomposition_bound=float(bound),
        tolerance=tolerance,
    )


###################################################################################################
# The whole tree under Q̃
###################################################################################################
def simulate_under_Q_ensemble(config, path, reps, horizon=None):
    """
    Simulates `reps` replications of the branching system under Q̃: a spine per replication, plus
    the tube-killed subtrees it sheds, stepped on the same grid as simulate_ensemble. Counts and
    Z(t) at each checkpoint cover the spine and every surviving subtree particle.
    :return: a list of TrajectoryStats (never extinct, since the spine survives)
    """
    if reps < 1:
        raise ConfigError('At least one replication is required (got %d)' % reps)
    if horizon is not None:
        config = config.replace(horizon=horizon)
    keys = replication_keys(config.seed, reps)
    path_functionals = accumulate_functionals(path, config.final_time, config.n_steps)
    subtrees = _BranchingRun(config, path, keys, path_functionals=path_functionals,
                             track_extinction=False, with_roots=False)
    spines = _SpineRun(config, path, keys, path_functionals, keep_trace=False)
    spine_counts = np.ones(reps)

    checkpoint_steps = subtrees.checkpoint_steps
    checkpoint = 0
    for k in range(config.n_steps + 1):
        if checkpoint < checkpoint_steps.size and k == checkpoint_steps[checkpoint]:
            subtrees.record(checkpoint, k, extra_counts=spine_counts,
                            extra_z=spines.z_terms(k))
            checkpoint += 1
        if k == config.n_steps:
            break
        subtrees.step(k)
        shed_reps, shed_ids, shed_x = spines.step(k)
        live = ~subtrees.frozen[shed_reps]
        if np.any(live):
            subtrees.add_particles(shed_reps[live], shed_ids[live], shed_x[live],
                                   spines.ibp[shed_reps[live]], spines.t_grid[k + 1])

    return subtrees.results(clamp_events=spines.clamp_events,
                            spine_generation=spines.generation)


def simulate_under_Q(config, path, horizon=None):
    return simulate_under_Q_ensemble(config, path, 1, horizon=horizon)[0]


def mean_inverse_z(stats_ensemble):
    """
    :return: (checkpoints, means, standard errors) of 1/Z(t); under Q̃ this is a positive
        supermartingale
    """
    return checkpoint_means(stats_ensemble, lambda stats: 1.0 / stats.z_values)


def terminal_z_quantile(stats_ensemble, q=0.99):
    values = np.array([stats.z_values[-1] for stats in stats_ensemble], dtype=float)
    return float(np.quantile(values[np.isfinite(values)], q))


def compare_survival(under_p, under_q, n_se=DEFAULT_N_STANDARD_ERRORS):
    """
    Compares P(Z(t) > 0), estimated as the survival frequency of a P-ensemble, with
    E_Q[Z(0)/Z(t)] estimated from a Q̃-ensemble run to the same horizon. The two agree exactly for
    every t.
    """
    survival = sum(1 for stats in under_p if stats.survived) / float(len(under_p))
    survival_se = math.sqrt(survival * (1.0 - survival) / len(under_p))
    ratios = [stats.z_values[0] / stats.z_values[-1] for stats in under_q]
    ratio_mean, ratio_se = mean_and_standard_error(ratios)
    return ComparisonReport(p_estimate=survival, p_se=survival_se, q_estimate=ratio_mean,
                            q_se=ratio_se, n_se=n_se)


def compare_measure_change(under_p, under_q, cap=5, n_se=DEFAULT_N_STANDARD_ERRORS):
    """
    Compares E_P[h·Z(t)/Z(0)] with E_Q[h] for the bounded functional h = min(|N̂(t)|, cap).
    """
    weighted = [min(stats.counts[-1], cap) * stats.z_values[-1] / stats.z_values[0]
                for stats in under_p]
    p_mean, p_se = mean_and_standard_error(weighted)
    capped = [min(stats.counts[-1], cap) for stats in under_q]
    q_mean, q_se = mean_and_standard_error(capped)
    return ComparisonReport(p_estimate=p_mean, p_se=p_se, q_estimate=q_mean, q_se=q_se,
                            n_se=n_se)


def survival_identity_check(config, path, t, reps_p, reps_q, n_se=DEFAULT_N_STANDARD_ERRORS):
    """
    Runs independent P- and Q̃-ensembles to time t and compares them with compare_survival.
    """
    config = config.replace(horizon=t)
    under_p = simulate_ensemble(config, path, reps_p)
    under_q = simulate_under_Q_ensemble(config.replace(seed=companion_seed(config.seed)), path,
                                        reps_q)
    return compare_survival(under_p, under_q, n_se)


def measure_change_check(config, path, t, reps_p, reps_q, cap=5,
                         n_se=DEFAULT_N_STANDARD_ERRORS):
    """
    Runs independent P- and Q̃-ensembles to time t and compares them with compare_measure_change.
    """
    config = config.replace(horizon=t)
    under_p = simulate_ensemble(config, path, reps_p)
    under_q = simulate_under_Q_ensemble(config.replace(seed=companion_seed(config.seed)), path,
                                        reps_q)
    return compare_measure_change(under_p, under_q, cap, n_se)


def companion_seed(seed):
    """A seed whose streams are independent of those of `seed`, for the second of two ensembles"""
    return int(rng.mix(rng.as_key(seed), rng.as_key(0x51)))
