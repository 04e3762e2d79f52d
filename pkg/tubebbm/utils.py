# -*- coding: utf-8 -*-
"""
Small helpers shared by the simulation and oracle packages: CSV/JSON output, canonical config
hashing, and the handful of ensemble statistics every comparison needs.
"""
import csv
import hashlib
import json
import logging
import math

import arrow
import numpy as np
from scipy.stats import binomtest

logger = logging.getLogger(__name__)

# confidence level of the binomial intervals reported for survival frequencies
CONFIDENCE_LEVEL = 0.95


def canonical_json(payload):
    """
    Serializes a JSON-compatible mapping deterministically (sorted keys, compact separators) so
    that equal configurations always hash to the same value.
    """
    return json.dumps(_sanitize(payload), sort_keys=True, separators=(',', ':'), ensure_ascii=True)


def config_hash(payload):
    return hashlib.sha256(canonical_json(payload).encode('utf-8')).hexdigest()


def _sanitize(value):
    if isinstance(value, dict):
        return {str(key): _sanitize(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(item) for item in value]
    if isinstance(value, np.ndarray):
        return [_sanitize(item) for item in value.tolist()]
    if isinstance(value, np.generic):
        return _sanitize(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        # JSON has no inf/nan literals
        return repr(value)
    return value


def timestamp():
    return arrow.utcnow().isoformat()


def write_csv(file_path, header, rows, float_format='%.12g'):
    """
    Writes rows to a CSV file, formatting floats with a fixed precision so that identical inputs
    always produce byte-identical files.
    """
    with open(file_path, 'w', newline='') as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(value, float_format) for value in row])


def _format_cell(value, float_format):
    if isinstance(value, (float, np.floating)):
        return float_format % value
    return value


def write_json(file_path, payload):
    with open(file_path, 'w') as json_file:
        json.dump(_sanitize(payload), json_file, indent=2, sort_keys=True)
        json_file.write('\n')


def mean_and_standard_error(values):
    """
    :return: (mean, standard error of the mean) over the finite entries of values; the standard
        error is nan when fewer than two finite values are available
    """
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if not values.size:
        return math.nan, math.nan
    mean = float(np.mean(values))
    if values.size < 2:
        return mean, math.nan
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size))


def binomial_interval(successes, trials, confidence=CONFIDENCE_LEVEL):
    """Wilson score interval (low, high) for the success probability of a binomial sample"""
    interval = binomtest(int(successes), int(trials)).proportion_ci(
        confidence_level=confidence, method='wilson')
    return float(interval.low), float(interval.high)


def binomial_ci_halfwidth(successes, trials, confidence=CONFIDENCE_LEVEL):
    """
    :return: the half-width of the narrowest interval centred on successes / trials that holds
        the Wilson score interval. Unlike the normal approximation, it stays positive when every
        trial fails (or every trial succeeds).
    """
    estimate = successes / float(trials)
    low, high = binomial_interval(successes, trials, confidence)
    return max(estimate - low, high - estimate)


def combined_standard_error(*standard_errors):
    return math.sqrt(sum(se ** 2 for se in standard_errors))
