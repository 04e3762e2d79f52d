# coding: utf-8

from .api import (  # noqa: F401
    PathSpec, accumulate_functionals, compute_T, eval_path, predict_rates, shift_path,
)
from .catalog import parse_path_key  # noqa: F401
