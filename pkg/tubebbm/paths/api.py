# -*- coding: utf-8 -*-
"""
Contains the representation of the paths f followed by the tube, along with the deterministic
path functionals that drive the growth-rate predictions: the energy A(t) = ∫f'², the curvature
B(t) = ∫|f''|, the tail-window bounds S_sup / S_inf of A(t)/t, the threshold time T(p), and the
uniform-approximation ("sandwich") machinery used for paths that are not twice differentiable.

All functions here are pure functions over immutable PathSpec instances, so they're safe to call
from multiple threads or processes.
"""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .constants import (
    CRITICAL_UNDETERMINED,
    DEFAULT_N_STEPS,
    EXTINCTION,
    MIN_N_STEPS,
    SIN_FREQ_KEY,
    SMALL_SIN_KEY,
    SUPERCRITICAL,
    TAIL_WINDOW_FRACTION,
    USUAL_CONDITION_TOLERANCE,
)

logger = logging.getLogger(__name__)

_FD_STEP = 1e-3
_FD_SAMPLES = 257
_USUAL_CONDITION_FRACTIONS = (0.125, 0.25, 0.5, 1.0)


class PathDomainError(ValueError):
    """Raised when a path operation is called outside of its domain (e.g. t < 0)."""


class PathEvaluationError(ValueError):
    """Raised when a path evaluator returns non-finite values on a quadrature grid."""

    def __init__(self, path_name, t, quantity="f'"):
        self.path_name = path_name
        self.t = t
        super(PathEvaluationError, self).__init__(
            'Non-finite %(quantity)s for path %(name)s at t=%(t)g'
            % {'quantity': quantity, 'name': path_name, 't': t}
        )


class ApproximationTooCoarseError(ValueError):
    """Raised when an approximating path is too far from f to sandwich the tube."""


@dataclass(frozen=True, eq=False)
class PathSpec:
    """
    A path f: [0, inf) -> R with analytic first and second derivatives. The evaluators accept
    scalars or numpy arrays of times and must return values of the same shape.
    """

    name: str
    f: object
    df: object
    d2f: object
    params: dict = field(default_factory=dict)
    usual_conditions_expected: bool = True
    # false when f' has jumps, so that f'' misses their point masses
    twice_differentiable: bool = True

    def __str__(self):
        return self.name


@dataclass(frozen=True, eq=False)
class PathFunctionals:
    t_grid: np.ndarray
    A: np.ndarray
    B: np.ndarray
    S_sup: float
    S_inf: float
    tail_start: float

    @property
    def horizon(self):
        return float(self.t_grid[-1])

    @property
    def grid_spacing(self):
        return float(self.t_grid[1] - self.t_grid[0])

    def energy_ratio(self):
        """A(t)/t, with the t=0 entry set to nan"""
        return _running_ratio(self.t_grid, self.A)

    def curvature_ratio(self):
        return _running_ratio(self.t_grid, self.B)

    def energy_at(self, t):
        """Linear interpolation of A at the requested time(s)."""
        return np.interp(t, self.t_grid, self.A)

    def curvature_at(self, t):
        return np.interp(t, self.t_grid, self.B)

    def write_csv(self, file_path):
        """
        Writes the functionals as CSV columns (t, A, B, A/t, B/t).
        :param file_path: destination path; overwritten if it exists
        """
        a_ratio = self.energy_ratio()
        b_ratio = self.curvature_ratio()
        with open(file_path, 'w', newline='') as csv_file:
            writer = csv.writer(csv_file)
            writer.writerow(['t', 'A', 'B', 'A/t', 'B/t'])
            for row in zip(self.t_grid, self.A, self.B, a_ratio, b_ratio):
                writer.writerow(['%.12g' % value for value in row])


@dataclass(frozen=True)
class RatePrediction:
    r: float
    L: float
    S_tilde: float
    rate_limsup: float
    rate_liminf: float
    regime: str
    S_sup: float
    S_inf: float
    horizon: float
    tail_start: float

    def as_dict(self):
        return {
            'r': self.r,
            'L': self.L,
            'S_tilde': self.S_tilde,
            'rate_limsup': self.rate_limsup,
            'rate_liminf': self.rate_liminf,
            'regime': self.regime,
            'S_sup': self.S_sup,
            'S_inf': self.S_inf,
            'horizon': self.horizon,
            'tail_window': [self.tail_start, self.horizon],
        }


@dataclass(frozen=True)
class UsualConditionsReport:
    path_name: str
    f0_abs: float
    slope_mismatch: float
    curvature_mismatch: float
    ratio_times: tuple
    curvature_ratios: tuple
    tolerance: float
    plausible: bool

    @property
    def verdict(self):
        if self.plausible:
            return 'condition (3) plausible'
        return 'condition (3) fails'


@dataclass(frozen=True)
class CorollaryPrediction:
    """Rate prediction for a path known only through uniformly converging approximants."""

    S_bar: float
    S_under: float
    S_tilde: float
    rate_limsup: float
    rate_liminf: float
    regime: str
    tubes: tuple


def tube_decay_rate(L):
    """
    The exponential cost pi^2 / 8L^2 of confining a Brownian motion to (-L, L). Returns 0 for an
    infinite tube.
    """
    if math.isinf(L):
        return 0.0
    return math.pi ** 2 / (8.0 * L ** 2)


def _running_ratio(t_grid, values):
    ratio = np.full_like(values, np.nan, dtype=float)
    positive = t_grid > 0
    ratio[positive] = values[positive] / t_grid[positive]
    return ratio


def _classify(s_tilde):
    if s_tilde < 0:
        return EXTINCTION
    if s_tilde > 0:
        return SUPERCRITICAL
    return CRITICAL_UNDETERMINED


def _check_finite(spec, t_grid, values, quantity):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise PathEvaluationError(spec.name, float(t_grid[bad[0]]), quantity)


def eval_path(spec, t):
    """
    Evaluates a path and its first two derivatives at a single time.
    :return: (f(t), f'(t), f''(t))
    :raises PathDomainError: if t < 0
    """
    if t < 0:
        raise PathDomainError('Paths are only defined for t >= 0 (got t=%g)' % t)
    return float(spec.f(t)), float(spec.df(t)), float(spec.d2f(t))


def accumulate_functionals(spec, horizon, n_steps=DEFAULT_N_STEPS):
    """
    Computes A(t) = ∫₀ᵗ f'(s)² ds and B(t) = ∫₀ᵗ |f''(s)| ds by composite Simpson quadrature on a
    uniform grid, along with the supremum / infimum of A(t)/t over the tail window
    [horizon * TAIL_WINDOW_FRACTION, horizon].

    :param spec: the path
    :param horizon: final time (> 0)
    :param n_steps: number of uniform quadrature intervals (>= MIN_N_STEPS)
    :raises PathEvaluationError: if f' or f'' is non-finite anywhere on the grid
    """
    if horizon <= 0:
        raise PathDomainError('horizon must be > 0 (got %g)' % horizon)
    if n_steps < MIN_N_STEPS:
        raise PathDomainError('n_steps must be >= %d (got %d)' % (MIN_N_STEPS, n_steps))

    t_grid = np.linspace(0.0, horizon, int(n_steps) + 1)
    slopes = np.asarray(spec.df(t_grid), dtype=float) * np.ones_like(t_grid)
    curvatures = np.asarray(spec.d2f(t_grid), dtype=float) * np.ones_like(t_grid)
    _check_finite(spec, t_grid, slopes, "f'")
    _check_finite(spec, t_grid, curvatures, "f''")

    A = cumulative_simpson(slopes ** 2, x=t_grid, initial=0.0)
    B = cumulative_simpson(np.abs(curvatures), x=t_grid, initial=0.0)

    # Simpson weights can dip below zero across jumps of the integrand; the exact integrals of
    # nonnegative functions are nondecreasing
    A = np.maximum.accumulate(A)
    B = np.maximum.accumulate(B)

    tail_start = horizon * TAIL_WINDOW_FRACTION
    tail = t_grid >= tail_start
    ratio = A[tail] / t_grid[tail]

    return PathFunctionals(
        t_grid=t_grid,
        A=A,
        B=B,
        S_sup=float(np.max(ratio)),
        S_inf=float(np.min(ratio)),
        tail_start=tail_start,
    )


def predict_rates(spec, r, L, horizon, n_steps=DEFAULT_N_STEPS, functionals=None):
    """
    Predicts the almost-sure limsup / liminf of (1/t) log|N̂(t)| on non-extinction, along with
    the criticality parameter S̃ = r - π²/8L² - S/2 that separates extinction from survival.

    :param functionals: optional precomputed PathFunctionals for (spec, horizon); computed here
        if not provided
    """
    if r <= 0:
        raise PathDomainError('Branching rate r must be > 0 (got %g)' % r)
    if L <= 0:
        raise PathDomainError('Tube half-width L must be > 0 (got %g)' % L)

    if functionals is None:
        functionals = accumulate_functionals(spec, horizon, n_steps)

    cost = tube_decay_rate(L)
    s_sup = functionals.S_sup
    s_inf = functionals.S_inf
    s_tilde = r - cost - s_sup / 2.0 if math.isfinite(s_sup) else -math.inf

    return RatePrediction(
        r=r,
        L=L,
        S_tilde=s_tilde,
        rate_limsup=r - cost - s_inf / 2.0,
        rate_liminf=r - cost - s_sup / 2.0,
        regime=_classify(s_tilde),
        S_sup=s_sup,
        S_inf=s_inf,
        horizon=functionals.horizon,
        tail_start=functionals.tail_start,
    )


def compute_T(spec, r, L, p, horizon, n_steps=DEFAULT_N_STEPS):
    """
    Computes the threshold time T(p): the smallest grid time t such that
        ∫₀ˢ (r - π²/8L² - f'(u)²/2 - 2L|f''(u)|) du - 2L|f'(0)| >= p·S̃·s
    for every grid time s in [t, horizon]. Past T(p), e^{-rt}ζ(t) is dominated by e^{-pS̃t} along
    any path that stays in the tube.

    :return: the grid time, or None if the inequality doesn't hold at the horizon itself
    :raises PathDomainError: if p is outside [0, 1) or S̃ <= 0
    """
    if not 0 <= p < 1:
        raise PathDomainError('p must lie in [0, 1) (got %g)' % p)

    functionals = accumulate_functionals(spec, horizon, n_steps)
    prediction = predict_rates(spec, r, L, horizon, functionals=functionals)
    s_tilde = prediction.S_tilde
    if not s_tilde > 0:
        raise PathDomainError(
            'T(p) is only finite when S̃ > 0 (S̃=%g for %s, r=%g, L=%g)' % (s_tilde, spec, r, L)
        )

    t_grid = functionals.t_grid
    slopes = np.asarray(spec.df(t_grid), dtype=float) * np.ones_like(t_grid)
    curvatures = np.asarray(spec.d2f(t_grid), dtype=float) * np.ones_like(t_grid)
    integrand = r - tube_decay_rate(L) - 0.5 * slopes ** 2 - 2.0 * L * np.abs(curvatures)
    lhs = cumulative_simpson(integrand, x=t_grid, initial=0.0)
    lhs -= 2.0 * L * abs(float(spec.df(0.0)))
    rhs = p * s_tilde * t_grid

    slack = 1e-12 * np.maximum(1.0, np.abs(rhs))
    failing = np.flatnonzero(lhs < rhs - slack)
    logger.debug('T(%g) for %s resolved on a grid with spacing %g', p, spec,
                 functionals.grid_spacing)
    if failing.size == 0:
        return float(t_grid[0])
    if failing[-1] == t_grid.size - 1:
        return None
    return float(t_grid[failing[-1] + 1])


def shift_path(spec, t0):
    """
    Builds the shifted path g(s) = f(s + t0) - f(t0), so that g(0) = 0 by construction.
    """
    if t0 < 0:
        raise PathDomainError('Shift must be >= 0 (got %g)' % t0)
    if t0 == 0:
        return spec

    offset = float(spec.f(t0))

    def g(s):
        return spec.f(np.asarray(s, dtype=float) + t0) - offset

    def dg(s):
        return spec.df(np.asarray(s, dtype=float) + t0)

    def d2g(s):
        return spec.d2f(np.asarray(s, dtype=float) + t0)

    params = dict(spec.params)
    params['shift'] = params.get('shift', 0.0) + t0
    return PathSpec(
        name='%s@%g' % (spec.name, t0),
        f=g,
        df=dg,
        d2f=d2g,
        params=params,
        usual_conditions_expected=spec.usual_conditions_expected,
        twice_differentiable=spec.twice_differentiable,
    )


def _central_difference(func, t_grid, h):
    # fourth-order central difference
    return (
        -func(t_grid + 2 * h) + 8 * func(t_grid + h) - 8 * func(t_grid - h) + func(t_grid - 2 * h)
    ) / (12.0 * h)


def derivative_mismatch(spec, t_grid, h=_FD_STEP):
    """
    Computes the maximum relative mismatch between finite differences of f and f', and of f' and
    f'', over the provided times (which must all be >= 2h).
    :return: (slope mismatch, curvature mismatch)
    """
    t_grid = np.asarray(t_grid, dtype=float)
    slopes = np.asarray(spec.df(t_grid), dtype=float) * np.ones_like(t_grid)
    curvatures = np.asarray(spec.d2f(t_grid), dtype=float) * np.ones_like(t_grid)
    fd_slopes = _central_difference(spec.f, t_grid, h)
    fd_curvatures = _central_difference(spec.df, t_grid, h)
    slope_mismatch = np.max(np.abs(fd_slopes - slopes) / np.maximum(1.0, np.abs(slopes)))
    curvature_mismatch = np.max(
        np.abs(fd_curvatures - curvatures) / np.maximum(1.0, np.abs(curvatures))
    )
    return float(slope_mismatch), float(curvature_mismatch)


def check_usual_conditions(spec, horizon, tolerance=USUAL_CONDITION_TOLERANCE,
                           n_steps=DEFAULT_N_STEPS):
    """
    Reports diagnostics for the usual conditions: |f(0)|, finite-difference consistency of the
    derivative evaluators, and the sequence B(t)/t at t in {H/8, H/4, H/2, H}. Condition (3) is
    judged plausible iff that sequence is nonincreasing and ends below the tolerance.
    Paths that fail return a failing verdict, never an error.
    """
    if horizon <= 0:
        raise PathDomainError('horizon must be > 0 (got %g)' % horizon)

    functionals = accumulate_functionals(spec, horizon, n_steps)
    ratio_times = tuple(horizon * fraction for fraction in _USUAL_CONDITION_FRACTIONS)
    ratios = tuple(float(functionals.curvature_at(t) / t) for t in ratio_times)

    nonincreasing = all(
        later <= earlier + 1e-12 for earlier, later in zip(ratios[:-1], ratios[1:])
    )
    plausible = nonincreasing and ratios[-1] < tolerance

    fd_grid = np.linspace(2 * _FD_STEP + 1e-3, horizon, _FD_SAMPLES)
    slope_mismatch, curvature_mismatch = derivative_mismatch(spec, fd_grid)

    report = UsualConditionsReport(
        path_name=spec.name,
        f0_abs=abs(float(spec.f(0.0))),
        slope_mismatch=slope_mismatch,
        curvature_mismatch=curvature_mismatch,
        ratio_times=ratio_times,
        curvature_ratios=ratios,
        tolerance=tolerance,
        plausible=plausible,
    )
    if not plausible and spec.usual_conditions_expected:
        logger.warning('Path %s was expected to satisfy the usual conditions, but B(t)/t = %s',
                       spec, ratios)
    return report


def uniform_distance(f_spec, fn_spec, horizon, n_steps=DEFAULT_N_STEPS):
    t_grid = np.linspace(0.0, horizon, int(n_steps) + 1)
    return float(np.max(np.abs(f_spec.f(t_grid) - fn_spec.f(t_grid))))


def sandwich_tubes(f_spec, fn_spec, L, horizon, n_steps=DEFAULT_N_STEPS):
    """
    Computes the tube half-widths L ± ||f - f_n||∞ around the approximant f_n whose tubes
    respectively contain and are contained in the L-tube around f.

    :return: (L_upper, L_lower)
    :raises ApproximationTooCoarseError: if L <= ||f - f_n||∞
    """
    distance = uniform_distance(f_spec, fn_spec, horizon, n_steps)
    if L <= distance:
        raise ApproximationTooCoarseError(
            'Approximation too coarse: ||%s - %s|| = %g on [0, %g] is not below L=%g'
            % (f_spec, fn_spec, distance, horizon, L)
        )
    return L + distance, L - distance


def corollary_rates(f_spec, approximants, r, L, horizon, n_steps=DEFAULT_N_STEPS):
    """
    Extends the rate prediction to a path f that is known through a sequence of approximants
    f_n converging uniformly to it, each satisfying the usual conditions. The upper and lower
    energies are taken over the second half of the sequence (ordered from coarsest to finest).

    :return: a CorollaryPrediction, including the sandwich tubes for each approximant
    """
    if not approximants:
        raise PathDomainError('At least one approximant is required')
    for fn in approximants:
        if not fn.usual_conditions_expected:
            logger.warning('Approximant %s doesn\'t satisfy the usual conditions; the corollary '
                           'rates for %s may not hold', fn, f_spec)

    tubes = tuple(sandwich_tubes(f_spec, fn, L, horizon, n_steps) for fn in approximants)
    functionals = [accumulate_functionals(fn, horizon, n_steps) for fn in approximants]
    tail = functionals[len(functionals) // 2:]
    s_bar = max(item.S_sup for item in tail)
    s_under = min(item.S_inf for item in tail)

    cost = tube_decay_rate(L)
    s_tilde = r - cost - s_bar / 2.0
    return CorollaryPrediction(
        S_bar=s_bar,
        S_under=s_under,
        S_tilde=s_tilde,
        rate_limsup=r - cost - s_under / 2.0,
        rate_liminf=r - cost - s_bar / 2.0,
        regime=_classify(s_tilde),
        tubes=tubes,
    )


def heuristic_rates(spec, r, L):
    """
    Heuristic (not proven) growth rates for the oscillating counterexample paths, which violate
    usual condition (3). These are reported alongside diagnostics only, never used as targets.

    :return: a dict of named heuristic rates; empty for other paths
    """
    key = spec.params.get('key')
    if key == SIN_FREQ_KEY and L > 1:
        # fast oscillations of unit amplitude effectively narrow the tube by 1
        return {'narrowed_tube_rate': r - tube_decay_rate(L - 1.0)}
    if key == SMALL_SIN_KEY:
        return {
            'limit_path_rate': r - tube_decay_rate(L),
            'naive_formula_rate': r - tube_decay_rate(L) - 0.25,
        }
    return {}
