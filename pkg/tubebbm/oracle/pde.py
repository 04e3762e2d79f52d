# -*- coding: utf-8 -*-
"""
Deterministic survival curves for a single Brownian particle in the tube, used as the precision
oracle for the Monte Carlo engines. In the moving frame y = x - f(t) the tube becomes the fixed
interval (-L, L) and the sub-probability density u(t, y) of a surviving particle solves
    ∂u/∂t = ½ ∂²u/∂y² + f'(t) ∂u/∂y,    u(t, ±L) = 0.
The survival probability p(t) = ∫u dy then gives the expected tube-surviving population
E|N̂(t)| = e^{rt} p(t).
"""
import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.stats import linregress

logger = logging.getLogger(__name__)

DEFAULT_NY = 400
DEFAULT_DT_PDE = 1e-3
DEFAULT_THETA = 0.5

# max|f'|·dy may not exceed this (cell Péclet number max|f'|·dy / (1/2) <= 2)
MAX_DRIFT_SPACING = 1.0
# the delta initial condition is replaced by the free Gaussian at min(WARM_START_TIME,
# WARM_START_STEPS * dt_pde)
WARM_START_TIME = 1e-3
WARM_START_STEPS = 10
SERIES_TOLERANCE = 1e-14
MAX_SERIES_TERMS = 100000
_PECLET_SAMPLES = 4097

CURVE_CSV_HEADER = ('t', 'p', 'expected_count', 'log_slope')


class PecletError(ValueError):
    """
    Raised when the drift f'(t) is too large for central differences on the grid. Carries the
    first offending time.
    """

    def __init__(self, t, slope, dy):
        self.t = t
        self.slope = slope
        self.dy = dy
        super(PecletError, self).__init__(
            'Drift |f\'(t)|=%g at t=%g is too large for spacing dy=%g (|f\'|·dy must be <= %g); '
            'refine the grid by increasing ny' % (abs(slope), t, dy, MAX_DRIFT_SPACING)
        )


@dataclass(frozen=True)
class PDEGrid:
    """
    Discretization parameters for solve_survival: ny interior points on (-L, L) and a θ-scheme
    in time (θ=0.5 is Crank-Nicolson, θ=1 backward Euler).
    """

    ny: int = DEFAULT_NY
    dt_pde: float = DEFAULT_DT_PDE
    theta: float = DEFAULT_THETA

    def __post_init__(self):
        if self.ny < 3:
            raise ValueError('ny must be >= 3 (got %s)' % self.ny)
        if not self.dt_pde > 0:
            raise ValueError('dt_pde must be > 0 (got %s)' % self.dt_pde)
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError('theta must lie in [0, 1] (got %s)' % self.theta)

    @classmethod
    def for_path(cls, path, L, horizon, **kwargs):
        """Builds a grid, failing up front if the path's slope breaks the Péclet bound."""
        grid = cls(**kwargs)
        grid.check_peclet(path, L, horizon)
        return grid

    def dy(self, L):
        return 2.0 * L / (self.ny + 1)

    def nodes(self, L):
        """the interior nodes -L + j·dy, j = 1..ny"""
        return -L + self.dy(L) * np.arange(1, self.ny + 1)

    def warm_start_time(self):
        return min(WARM_START_TIME, WARM_START_STEPS * self.dt_pde)

    def check_peclet(self, path, L, horizon):
        """
        :raises PecletError: at the first sampled time in [0, horizon] where |f'|·dy is too large
        """
        t_grid = np.linspace(0.0, horizon, _PECLET_SAMPLES)
        slopes = np.asarray(path.df(t_grid), dtype=float) * np.ones_like(t_grid)
        _raise_for_peclet(t_grid, slopes, self.dy(L))

    def as_dict(self):
        return {'ny': self.ny, 'dt_pde': self.dt_pde, 'theta': self.theta}


def _raise_for_peclet(t_grid, slopes, dy):
    bad = np.flatnonzero(np.abs(slopes) * dy > MAX_DRIFT_SPACING)
    if bad.size:
        raise PecletError(float(t_grid[bad[0]]), float(slopes[bad[0]]), dy)


@dataclass(frozen=True, eq=False)
class PDESolution:
    """
    p(t) on the solver's time grid. The first entry is t=0 (p=1), the second the warm-start time.
    `mass_profile` is the density u on `y_grid` at the final time.
    """

    t_grid: np.ndarray
    survival: np.ndarray
    mass_profile: np.ndarray
    y_grid: np.ndarray
    L: float
    grid: PDEGrid

    @property
    def horizon(self):
        return float(self.t_grid[-1])

    def survival_at(self, t):
        return np.interp(t, self.t_grid, self.survival)

    def expected_count(self, r):
        """E|N̂(t)| = e^{rt} p(t) on the time grid"""
        return np.exp(r * self.t_grid) * self.survival


@dataclass(frozen=True, eq=False)
class ExpectedCountCurve:
    t_grid: np.ndarray
    survival: np.ndarray
    expected_count: np.ndarray
    # d/dt log(e^{rt}p(t)), the instantaneous expected growth rate
    log_slope: np.ndarray
    r: float
    L: float
    grid: PDEGrid

    def at(self, t):
        """:return: (p, e^{rt}p, log-slope) interpolated at t"""
        return (float(np.interp(t, self.t_grid, self.survival)),
                float(np.interp(t, self.t_grid, self.expected_count)),
                float(np.interp(t, self.t_grid, self.log_slope)))

    def write_csv(self, file_path, stride=1):
        """
        Writes the curve as CSV (t, p, expected_count, log_slope), preceded by a '#' comment line
        recording r, L and the grid parameters.
        """
        with open(file_path, 'w', newline='') as csv_file:
            csv_file.write('# r=%r L=%r ny=%d dt_pde=%r theta=%r\n'
                           % (self.r, self.L, self.grid.ny, self.grid.dt_pde, self.grid.theta))
            writer = csv.writer(csv_file)
            writer.writerow(CURVE_CSV_HEADER)
            rows = zip(self.t_grid, self.survival, self.expected_count, self.log_slope)
            for index, row in enumerate(rows):
                if index % stride and index != self.t_grid.size - 1:
                    continue
                writer.writerow(['%.12g' % value for value in row])


def _operator_bands(slope, dy):
    """
    Bands (upper, diagonal, lower) of the central-difference operator ½∂²/∂y² + f'∂/∂y.
    """
    diffusion = 0.5 / dy ** 2
    advection = slope / (2.0 * dy)
    return diffusion + advection, -2.0 * diffusion, diffusion - advection


def _apply(bands, u):
    upper, diagonal, lower = bands
    result = diagonal * u
    result[:-1] += upper * u[1:]
    result[1:] += lower * u[:-1]
    return result


def solve_survival(path, L, horizon, grid=None):
    """
    Solves for the survival probability of one Brownian particle started at x=0 in the tube of
    half-width L around the path.

    The delta initial condition is replaced by the exact free Gaussian density at the warm-start
    time t₀ (killing before t₀ is negligible), and p is reported as 1 up to t₀. The θ-scheme then
    advances with a step of at most grid.dt_pde, evaluating f' analytically at each step.

    :raises PecletError: at the first step time where |f'(t)|·dy exceeds the Péclet bound
    """
    grid = grid or PDEGrid()
    if not L > 0:
        raise ValueError('L must be > 0 (got %s)' % L)
    t0 = grid.warm_start_time()
    if not horizon > t0:
        raise ValueError('horizon must exceed the warm-start time %g (got %s)' % (t0, horizon))

    dy = grid.dy(L)
    y_grid = grid.nodes(L)
    n_steps = int(math.ceil((horizon - t0) / grid.dt_pde - 1e-9))
    step_times = t0 + (horizon - t0) * np.arange(n_steps + 1) / n_steps
    dt = float(step_times[1] - step_times[0])
    slopes = np.asarray(path.df(step_times), dtype=float) * np.ones_like(step_times)
    _raise_for_peclet(step_times, slopes, dy)

    # y = W(t0) - f(t0) ~ N(-f(t0), t0)
    centre = -float(path.f(t0))
    u = np.exp(-(y_grid - centre) ** 2 / (2.0 * t0)) / math.sqrt(2.0 * math.pi * t0)
    u /= dy * np.sum(u)

    survival = np.empty(n_steps + 2)
    survival[0] = 1.0
    survival[1] = 1.0
    theta = grid.theta
    banded = np.zeros((3, grid.ny))
    explicit = _operator_bands(slopes[0], dy)
    for n in range(n_steps):
        implicit = _operator_bands(slopes[n + 1], dy)
        rhs = u + (1.0 - theta) * dt * _apply(explicit, u) if theta < 1.0 else u
        banded[0, 1:] = -theta * dt * implicit[0]
        banded[1, :] = 1.0 - theta * dt * implicit[1]
        banded[2, :-1] = -theta * dt * implicit[2]
        u = solve_banded((1, 1), banded, rhs, overwrite_b=True, check_finite=False)
        # trapezoid rule with u = 0 at both walls
        survival[n + 2] = dy * np.sum(u)
        explicit = implicit

    logger.debug('Solved survival for %s, L=%g to t=%g: %d steps of %g on %d nodes', path, L,
                 horizon, n_steps, dt, grid.ny)
    return PDESolution(
        t_grid=np.concatenate([[0.0], step_times]),
        survival=survival,
        mass_profile=u,
        y_grid=y_grid,
        L=L,
        grid=grid,
    )


def constant_tube_exact(L, t, y0=0.0):
    """
    The probability that a Brownian motion started at y0 stays in (-L, L) up to time t, from the
    Dirichlet eigenfunction expansion
        Σ_{n>=0} 4(-1)ⁿ/((2n+1)π) cos((2n+1)πy0/2L) e^{-(2n+1)²π²t/8L²},
    truncated once the exponential factor of the next term drops below 1e-14.
    Accepts a scalar or an array of times.
    """
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0):
        raise ValueError('t must be >= 0')
    if abs(y0) >= L:
        result = np.zeros_like(times)
    else:
        result = np.array([_eigen_series(L, value, y0) for value in times])
    if np.ndim(t) == 0:
        return float(result[0])
    return result


def _eigen_series(L, t, y0):
    if t == 0:
        return 1.0
    rate = math.pi ** 2 / (8.0 * L ** 2)
    # smallest odd k with e^{-k² rate t} < tolerance
    k_max = math.sqrt(-math.log(SERIES_TOLERANCE) / (rate * t))
    n_terms = min(MAX_SERIES_TERMS, int(math.ceil((k_max - 1.0) / 2.0)) + 1)
    n = np.arange(n_terms)
    k = 2 * n + 1
    coefficients = 4.0 * (-1.0) ** n / (k * math.pi) * np.cos(k * math.pi * y0 / (2.0 * L))
    return float(np.sum(coefficients * np.exp(-(k ** 2) * rate * t)))


def expected_count_curve(path, r, L, horizon, grid=None):
    """
    E|N̂(t)| = e^{rt} p(t) together with its local log-slope d/dt log(e^{rt}p(t)), computed by
    centred differences on the solver's time grid.
    """
    solution = solve_survival(path, L, horizon, grid)
    expected = solution.expected_count(r)
    with np.errstate(divide='ignore'):
        log_expected = np.log(expected)
    log_slope = np.gradient(log_expected, solution.t_grid)
    return ExpectedCountCurve(
        t_grid=solution.t_grid,
        survival=solution.survival,
        expected_count=expected,
        log_slope=log_slope,
        r=r,
        L=L,
        grid=solution.grid,
    )


def asymptotic_log_slope(curve, window):
    """
    Least-squares slope of log(e^{rt}p(t)) over the time window (t_lo, t_hi).
    :param curve: an ExpectedCountCurve (a PDESolution gives the slope of log p instead)
    """
    t_lo, t_hi = window
    values = getattr(curve, 'expected_count', None)
    if values is None:
        values = curve.survival
    selected = (curve.t_grid >= t_lo) & (curve.t_grid <= t_hi)
    if np.count_nonzero(selected) < 2:
        raise ValueError('Window (%g, %g) holds fewer than 2 solver times' % (t_lo, t_hi))
    return float(linregress(curve.t_grid[selected], np.log(values[selected])).slope)
