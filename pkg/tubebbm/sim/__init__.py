# coding: utf-8

from .bbm import (  # noqa: F401
    SimConfig, TrajectoryStats, compute_Z, estimate_growth_rate, simulate, simulate_ensemble,
    survival_probability,
)
from .spine import (  # noqa: F401
    equilibrium_check, simulate_spine, simulate_under_Q, spine_decomposition_series, spine_drift,
)
