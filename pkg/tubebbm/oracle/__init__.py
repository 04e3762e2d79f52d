# coding: utf-8

from .pde import (  # noqa: F401
    PDEGrid, PecletError, asymptotic_log_slope, constant_tube_exact, expected_count_curve,
    solve_survival,
)
