###################################################################################################
# Population cap policies
###################################################################################################
STOP_AT_CAP = 'STOP_AT_CAP'
UNIFORM_THIN = 'UNIFORM_THIN'
THINNING_POLICIES = (STOP_AT_CAP, UNIFORM_THIN)

DEFAULT_N_MAX = 10 ** 6
DEFAULT_CHECKPOINT_INTERVAL = 0.5

# time step caps: branching probability per step stays below ~0.1, spatial steps stay small
# relative to the tube
MAX_BRANCH_RATE_STEP = 0.1
MAX_TUBE_STEP_FRACTION = 0.01

# a run must span at least this many steps (path functionals are accumulated on the step grid)
MIN_SIM_STEPS = 10

ROOT_PARTICLE_ID = 1
FIRST_CHILD_SLOT = 1
SECOND_CHILD_SLOT = 2

# label used in exports for replications that never went extinct
SURVIVED_TO_HORIZON = 'survived-to-horizon'

###################################################################################################
# Random stream channels. Each draw is addressed by (replication key, particle id, step, channel)
###################################################################################################
CHANNEL_MOVE = 1
CHANNEL_BRIDGE = 2
CHANNEL_BRANCH = 3
# thinning round a draws from CHANNEL_THIN + a
CHANNEL_THIN = 32
MAX_THIN_ROUNDS = 16
CHANNEL_SPINE_MOVE = 5
CHANNEL_FISSION = 6
# spine substeps use CHANNEL_SUBSTEP + (level << SUBSTEP_LEVEL_SHIFT) + index
CHANNEL_SUBSTEP = 64
SUBSTEP_LEVEL_SHIFT = 12
CHANNEL_COUNT = 1 << 16

###################################################################################################
# Spine integration
###################################################################################################
# Euler steps landing beyond this fraction of L are retried with halved steps
SPINE_BOUNDARY_FRACTION = 1.0 - 1e-6
# dt / 2**10 = dt / 1024 is the smallest substep
MAX_SUBSTEP_HALVINGS = 10

EQUILIBRIUM_BINS = 20
EQUILIBRIUM_BURN_IN = 10.0
EQUILIBRIUM_SAMPLE_SPACING = 0.5
MIN_EQUILIBRIUM_SAMPLES = 1000
# spines simulated together by summarize_spines; bounds the memory held by their traces
SPINE_BATCH_SIZE = 100

# comparisons between ensembles pass within this many (combined) standard errors
DEFAULT_N_STANDARD_ERRORS = 3.0
