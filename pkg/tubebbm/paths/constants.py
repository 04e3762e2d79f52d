###################################################################################################
# String constants and defaults used by the path library.
###################################################################################################

# growth regimes reported by predict_rates()
EXTINCTION = 'EXTINCTION'
SUPERCRITICAL = 'SUPERCRITICAL'
CRITICAL_UNDETERMINED = 'CRITICAL_UNDETERMINED'
REGIMES = (EXTINCTION, SUPERCRITICAL, CRITICAL_UNDETERMINED)

###################################################################################################
# Catalog keys. Paths are addressed as "<key>:<param>=<value>,<param>=<value>"
###################################################################################################
ZERO_KEY = 'zero'
LINEAR_KEY = 'linear'
POWER_KEY = 'power'
LOG_KEY = 'log'
CRITICAL_KEY = 'critical'
CRITICAL_LOG_KEY = 'criticallog'
SIN_LOG_KEY = 'sinlog'
DYADIC_KEY = 'dyadic'
DYADIC_SMOOTH_KEY = 'dyadicsmooth'
SIN_FREQ_KEY = 'sinfreq'
SMALL_SIN_KEY = 'smallsin'

PARAM_SEPARATOR = ','
KEY_SEPARATOR = ':'
VALUE_SEPARATOR = '='

# tail window for S_sup / S_inf starts at horizon * TAIL_WINDOW_FRACTION
TAIL_WINDOW_FRACTION = 0.1

DEFAULT_N_STEPS = 20000
MIN_N_STEPS = 10

# relative tolerance for finite-difference consistency of f, f', f''
DERIVATIVE_RTOL = 1e-5

# verdict threshold for B(t)/t in check_usual_conditions()
USUAL_CONDITION_TOLERANCE = 1e-2

# default mollification window for the smoothed dyadic path, as a fraction of the length of the
# constant-slope interval that ends at each switch
DEFAULT_DYADIC_WINDOW = 0.01

# default epsilon shift applied to power-law paths so that f'(0) stays finite
DEFAULT_POWER_EPS = 1.0
