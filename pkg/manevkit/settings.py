import logging
import os

logger = logging.getLogger(__name__)

DEBUG = False

# radial grid
GRID_SIZE = 2000
EXTENT_FACTOR = 3.0
INNER_FRACTION = 0.6
ENERGY_NODES = 400
ENERGY_GRADING = 2.0

# kernel quadrature
GAUSS_POINTS = 6
KERNEL_BLOCK_ROWS = 64

# ground state fixed point
DAMPING = 0.5
MAX_ITERATIONS = 500
TOLERANCE = 1e-10
DIVERGENCE_PATIENCE = 20
OMEGA_BRACKET = (1e-3, 1e3)
AMPLITUDE_BRACKET = (1e-6, 1e6)
MANEV_TUNE_TOLERANCE = 1e-4

# self-similar relaxation
RELAX_ITERATIONS = 200
RELAX_TOLERANCE = 1e-8
NU_BRACKET = (1e-3, 1e3)
NU_TOLERANCE = 1e-8
DESCENT_SLACK = 1e-10
CHI_MARGIN = 2.1
B_LADDER_START = 0.5
B_LADDER_DEPTH = 4

# dynamics
R_FLOOR = 1e-6
BANDWIDTH = 2
BLOWUP_FACTOR = 1e3
CFL = 0.05
DEPOSIT_SIZE = 800
MIN_PARTICLES = 1000

# empirical constants
TRIAL_FAMILY_SIZE = 32
DECAY_ALPHA = 0.5

# cli
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NONCONVERGED = 2
EXIT_PARTIAL = 3
THREADS_ENV = "MANEV_THREADS"
DEFAULT_SEED = 0


def thread_count(requested: int = 0) -> int:
    """Number of worker processes, capped by MANEV_THREADS when set."""
    available = os.cpu_count() or 1
    if requested > 0:
        available = min(available, requested)
    cap = os.environ.get(THREADS_ENV, "").strip()
    if cap:
        try:
            available = min(available, max(1, int(cap)))
        except ValueError:
            logger.warning("ignoring %s=%r: not an integer", THREADS_ENV, cap)
    return max(1, available)
