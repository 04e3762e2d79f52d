"""
Defines settings used by scripts in this package.  Clients may override settings defined here in a
custom local.py in the same package.
"""
import os

from tubebbm.oracle.pde import DEFAULT_DT_PDE, DEFAULT_NY, DEFAULT_THETA
from tubebbm.sim.constants import DEFAULT_N_MAX

###################################################################################################
# Output locations. Each experiment writes to <OUTPUT_ROOT>/<experiment name>/ unless its config
# names an output directory. The environment variable takes precedence over the default here.
###################################################################################################
OUTPUT_ROOT = os.environ.get('TUBEBBM_OUTPUT_ROOT', 'experiment_output')

SUITES_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'suites')

# recorded in every manifest so that results can be traced back to the code that produced them
CODE_VERSION = 'tubebbm 0.1.0'

###################################################################################################
# Engine defaults, used when an experiment config doesn't set them
###################################################################################################
N_MAX = DEFAULT_N_MAX
PDE_NY = DEFAULT_NY
PDE_DT = DEFAULT_DT_PDE
PDE_THETA = DEFAULT_THETA

# at most this many rows are written to series.csv for the deterministic engines
MAX_SERIES_ROWS = 20000

# worker processes for suites. None uses one per CPU
MAX_WORKERS = None

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '%(asctime)s %(name)-12s %(levelname)-8s %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        '__main__': {
            'level': 'INFO',
            'handlers': ['console', ],
        },
        'experiments': {
            'level': 'INFO',
            'handlers': ['console', ],
        },
        'tubebbm': {
            'level': 'WARNING',
            'handlers': ['console', ],
        },
    },
}
