# -*- coding: utf-8 -*-
"""
The built-in catalog of example paths, addressable by string keys of the form
"<key>:<param>=<value>,<param>=<value>", e.g. "linear:lambda=0.5" or "power:beta=0.5,eps=1".
Every evaluator accepts a scalar or an array of times and returns a matching array.
"""
import logging
import math

import numpy as np

from .api import PathSpec
from .constants import (
    CRITICAL_KEY,
    CRITICAL_LOG_KEY,
    DEFAULT_DYADIC_WINDOW,
    DEFAULT_POWER_EPS,
    DYADIC_KEY,
    DYADIC_SMOOTH_KEY,
    KEY_SEPARATOR,
    LINEAR_KEY,
    LOG_KEY,
    PARAM_SEPARATOR,
    POWER_KEY,
    SIN_FREQ_KEY,
    SIN_LOG_KEY,
    SMALL_SIN_KEY,
    VALUE_SEPARATOR,
    ZERO_KEY,
)

logger = logging.getLogger(__name__)


class UnknownPathError(ValueError):
    """Raised for catalog keys or parameters that aren't recognized."""


def _as_times(t):
    return np.asarray(t, dtype=float)


def _spec(key, params, f, df, d2f, usual_conditions_expected=True, twice_differentiable=True):
    name = format_path_key(key, params)
    params = dict(params)
    params['key'] = key
    return PathSpec(name=name, f=f, df=df, d2f=d2f, params=params,
                    usual_conditions_expected=usual_conditions_expected,
                    twice_differentiable=twice_differentiable)


def zero_path():
    def f(t):
        return np.zeros_like(_as_times(t))

    return _spec(ZERO_KEY, {}, f, f, f)


def linear_path(lam=1.0):
    def f(t):
        return lam * _as_times(t)

    def df(t):
        return np.full_like(_as_times(t), lam)

    def d2f(t):
        return np.zeros_like(_as_times(t))

    return _spec(LINEAR_KEY, {'lambda': lam}, f, df, d2f)


def power_path(beta=0.5, eps=DEFAULT_POWER_EPS):
    """f(t) = (t + eps)^beta - eps^beta, the eps-shift of t^beta that keeps f'(0) finite"""
    if eps <= 0:
        raise UnknownPathError('power paths require eps > 0 (got %g)' % eps)

    def f(t):
        return (_as_times(t) + eps) ** beta - eps ** beta

    def df(t):
        return beta * (_as_times(t) + eps) ** (beta - 1.0)

    def d2f(t):
        return beta * (beta - 1.0) * (_as_times(t) + eps) ** (beta - 2.0)

    return _spec(POWER_KEY, {'beta': beta, 'eps': eps}, f, df, d2f)


def log_path(a=1.0):
    def f(t):
        return a * np.log1p(_as_times(t))

    def df(t):
        return a / (1.0 + _as_times(t))

    def d2f(t):
        return -a / (1.0 + _as_times(t)) ** 2

    return _spec(LOG_KEY, {'a': a}, f, df, d2f)


def critical_path(c=1.0, beta=0.5, r=1.0, eps=DEFAULT_POWER_EPS):
    """
    f(t) = sqrt(2r) t - c((t + eps)^beta - eps^beta). S(f) = 2r by construction, so the tube
    dies out for every L.
    """
    speed = math.sqrt(2.0 * r)
    bend = power_path(beta, eps)

    def f(t):
        return speed * _as_times(t) - c * bend.f(t)

    def df(t):
        return speed - c * bend.df(t)

    def d2f(t):
        return -c * bend.d2f(t)

    return _spec(CRITICAL_KEY, {'c': c, 'beta': beta, 'r': r, 'eps': eps}, f, df, d2f)


def critical_log_path(c=1.0, r=1.0):
    speed = math.sqrt(2.0 * r)

    def f(t):
        return speed * _as_times(t) - c * np.log1p(_as_times(t))

    def df(t):
        return speed - c / (1.0 + _as_times(t))

    def d2f(t):
        return c / (1.0 + _as_times(t)) ** 2

    return _spec(CRITICAL_LOG_KEY, {'c': c, 'r': r}, f, df, d2f)


def sin_log_path(lam=1.0):
    """f(t) = λ(t+1) sin(log(t+1)); the running energy oscillates with golden-ratio extremes"""

    def f(t):
        s = _as_times(t) + 1.0
        return lam * s * np.sin(np.log(s))

    def df(t):
        phase = np.log1p(_as_times(t))
        return lam * (np.sin(phase) + np.cos(phase))

    def d2f(t):
        s = _as_times(t) + 1.0
        phase = np.log(s)
        return lam * (np.cos(phase) - np.sin(phase)) / s

    return _spec(SIN_LOG_KEY, {'lambda': lam}, f, df, d2f)


def sin_freq_path(delta=0.1):
    """f(t) = sin(t/δ): unit amplitude, violates usual condition (3)"""

    def f(t):
        return np.sin(_as_times(t) / delta)

    def df(t):
        return np.cos(_as_times(t) / delta) / delta

    def d2f(t):
        return -np.sin(_as_times(t) / delta) / delta ** 2

    return _spec(SIN_FREQ_KEY, {'delta': delta}, f, df, d2f, usual_conditions_expected=False)


def small_sin_path(delta=0.1):
    """f(t) = δ sin(t/δ): converges uniformly to zero, violates usual condition (3)"""

    def f(t):
        return delta * np.sin(_as_times(t) / delta)

    def df(t):
        return np.cos(_as_times(t) / delta)

    def d2f(t):
        return -np.sin(_as_times(t) / delta) / delta

    return _spec(SMALL_SIN_KEY, {'delta': delta}, f, df, d2f, usual_conditions_expected=False)


###################################################################################################
# Dyadic oscillation. f = 0 on [0, 1], then f' = 0 on [2^2k, 2^(2k+1)) and f' = 1 on
# [2^(2k+1), 2^(2k+2)). Each switch at t = 2^n (n >= 1) raises the slope for odd n and lowers it
# for even n, so f'(t) = Σ_n sign_n · H(t - 2^n) for the unit step H.
###################################################################################################

def _switch_count(t_max):
    return max(1, int(math.ceil(math.log2(max(t_max, 2.0)))) + 2)


def _switch_sign(n):
    return 1.0 if n % 2 == 1 else -1.0


def dyadic_energy_exact(t):
    """
    Counts the time spent on slope-1 intervals up to t. Since f' is 0 or 1 on the exact dyadic
    path, this is both f(t) and the energy ∫₀ᵗ f'(s)² ds.
    """
    t = _as_times(t)
    total = np.zeros_like(t)
    for k in range(_switch_count(float(np.max(t)) if t.size else 2.0) // 2 + 1):
        start = 2.0 ** (2 * k + 1)
        length = start
        total += np.clip(t - start, 0.0, length)
    return total


def dyadic_path():
    """The exact, non-C² dyadic path. Its f'' is zero away from the switches."""

    def f(t):
        return dyadic_energy_exact(t)

    def df(t):
        t = _as_times(t)
        slope = np.zeros_like(t)
        for n in range(1, _switch_count(float(np.max(t)) if t.size else 2.0)):
            slope += _switch_sign(n) * (t >= 2.0 ** n)
        return slope

    def d2f(t):
        return np.zeros_like(_as_times(t))

    return _spec(DYADIC_KEY, {}, f, df, d2f, usual_conditions_expected=False,
                 twice_differentiable=False)


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _smoothstep_integral(u):
    # ∫₀ᵘ smoothstep, continued linearly past u = 1
    inside = np.clip(u, 0.0, 1.0)
    ramp = inside ** 3 - inside ** 4 / 2.0
    return np.where(u >= 1.0, u - 0.5, np.where(u <= 0.0, 0.0, ramp))


def _smoothstep_slope(u):
    inside = (u > 0.0) & (u < 1.0)
    return np.where(inside, 6.0 * u * (1.0 - u), 0.0)


def dyadic_smooth_path(window=DEFAULT_DYADIC_WINDOW):
    """
    C² mollification of the dyadic path: the slope switch at 2^n becomes a cubic smoothstep ramp
    of f' centred on 2^n, of width window·2^(n-1).
    """
    if not 0 < window < 1:
        raise UnknownPathError('dyadic window must lie in (0, 1) (got %g)' % window)

    def _ramps(t):
        t = _as_times(t)
        n_max = _switch_count(float(np.max(t)) if t.size else 2.0)
        for n in range(1, n_max):
            width = window * 2.0 ** (n - 1)
            start = 2.0 ** n - width / 2.0
            yield _switch_sign(n), width, (t - start) / width

    def f(t):
        total = np.zeros_like(_as_times(t))
        for sign, width, u in _ramps(t):
            total += sign * width * _smoothstep_integral(u)
        return total

    def df(t):
        total = np.zeros_like(_as_times(t))
        for sign, _width, u in _ramps(t):
            total += sign * _smoothstep(u)
        return total

    def d2f(t):
        total = np.zeros_like(_as_times(t))
        for sign, width, u in _ramps(t):
            total += sign * _smoothstep_slope(u) / width
        return total

    return _spec(DYADIC_SMOOTH_KEY, {'window': window}, f, df, d2f)


###################################################################################################
# Key parsing
###################################################################################################

# key -> (factory, {catalog param name: factory kwarg}, description)
CATALOG = {
    ZERO_KEY: (zero_path, {}, 'f(t) = 0'),
    LINEAR_KEY: (linear_path, {'lambda': 'lam'}, 'f(t) = λt'),
    POWER_KEY: (power_path, {'beta': 'beta', 'eps': 'eps'}, 'f(t) = (t+ε)^β - ε^β'),
    LOG_KEY: (log_path, {'a': 'a'}, 'f(t) = a log(t+1)'),
    CRITICAL_KEY: (critical_path, {'c': 'c', 'beta': 'beta', 'r': 'r', 'eps': 'eps'},
                   'f(t) = √(2r)t - c((t+ε)^β - ε^β)'),
    CRITICAL_LOG_KEY: (critical_log_path, {'c': 'c', 'r': 'r'}, 'f(t) = √(2r)t - c log(t+1)'),
    SIN_LOG_KEY: (sin_log_path, {'lambda': 'lam'}, 'f(t) = λ(t+1) sin(log(t+1))'),
    DYADIC_KEY: (dyadic_path, {}, 'exact dyadic slope-0/slope-1 path (not C²)'),
    DYADIC_SMOOTH_KEY: (dyadic_smooth_path, {'window': 'window'},
                        'C² mollified dyadic path'),
    SIN_FREQ_KEY: (sin_freq_path, {'delta': 'delta'}, 'f(t) = sin(t/δ)'),
    SMALL_SIN_KEY: (small_sin_path, {'delta': 'delta'}, 'f(t) = δ sin(t/δ)'),
}


def format_path_key(key, params):
    if not params:
        return key
    formatted = PARAM_SEPARATOR.join(
        '%s%s%g' % (name, VALUE_SEPARATOR, value) for name, value in params.items()
    )
    return '%s%s%s' % (key, KEY_SEPARATOR, formatted)


def parse_path_key(path_key):
    """
    Builds a catalog path from its string key.
    :param path_key: e.g. "sinlog:lambda=1" or "zero"
    :raises UnknownPathError: if the key or any parameter isn't recognized
    """
    key, _, param_str = path_key.strip().partition(KEY_SEPARATOR)
    key = key.strip().lower()
    if key not in CATALOG:
        raise UnknownPathError(
            'Unknown path key "%s". Known keys: %s' % (key, ', '.join(sorted(CATALOG)))
        )
    factory, param_names, _description = CATALOG[key]

    kwargs = {}
    for item in filter(None, (part.strip() for part in param_str.split(PARAM_SEPARATOR))):
        name, sep, value = item.partition(VALUE_SEPARATOR)
        name = name.strip()
        if not sep or name not in param_names:
            raise UnknownPathError(
                'Unsupported parameter "%s" for path "%s" (supported: %s)'
                % (item, key, ', '.join(param_names) or 'none')
            )
        try:
            kwargs[param_names[name]] = float(value)
        except ValueError:
            raise UnknownPathError('Parameter "%s" of path "%s" is not a number' % (name, key))
    return factory(**kwargs)


def list_paths():
    """
    :return: a list of (key, parameter names, description, usual_conditions_expected)
    """
    listing = []
    for key, (factory, param_names, description) in sorted(CATALOG.items()):
        listing.append((key, tuple(param_names), description,
                        factory().usual_conditions_expected))
    return listing
