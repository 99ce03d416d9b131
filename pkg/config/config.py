import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# RUNTIME SETTINGS
WORKERS = int(os.getenv("EIKONAL_WORKERS", "0")) or (os.cpu_count() or 1)
OUTPUT_DIR = os.getenv("EIKONAL_OUTPUT_DIR", "results")
LOG_LEVEL = os.getenv("EIKONAL_LOG_LEVEL", "INFO")
MEMORY_BUDGET_MB = float(os.getenv("EIKONAL_MEMORY_BUDGET_MB", "2048"))

# SWEEP SETTINGS
FSM_MAX_ROUNDS = 50
FSM_TOL_FACTOR = 1e-12
REFERENCE_MAX_ROUNDS = 500

# TWO-SCALE SETTINGS
MAX_ITERS = 100
CONV_TOL = 1e-10
UPDATE_ROUNDS = 1

# THETA SETTINGS
THETA_DEFAULTS = {
    "x0": 0.9,
    "gamma": 0.75,
    "delta": 0.01,
    "omega": (4.0, 2.0, 1.0),
    "bootstrap": 0.01,
    "denom_guard_factor": 1e-14,
}
ORACLE_MARGIN = 1e-3

# SLOWNESS CATALOG: kind -> required parameters
SLOWNESS_CATALOG = {
    "constant": ("c",),
    "gauss1d": (),
    "sine2d": ("A", "f"),
    "r1": (),
    "r2": (),
    "varsine": (),
    "obstacles": ("shapes", "inside_value"),
    "maze": (),
    "fast_obstacle": (),
    "barrier_box": (),
    "squares": ("eps",),
    "checkerboard": ("eps",),
}

# OUTPUT SETTINGS
CSV_FLOAT_FORMAT = "%.17g"
HISTORY_COLUMNS = ("k", "l1_rel", "l1_abs", "linf", "wall_ms", "converged")
MODEL_COLUMNS = ("k", "linf", "l1_abs", "min_Mbar", "max_theta_used")
