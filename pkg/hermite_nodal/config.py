"""
Runtime settings for hermite_nodal.

Values come from the environment (optionally a local .env file) so experiments
can be steered without code edits. See example.env for the full list.
"""

import logging
import os

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

__version__ = "0.3.0"

# Eigenspace size cap for enumeration and exact sums
CAPACITY = int(os.getenv("HERMITE_NODAL_CAPACITY", "10000000"))

# Pi(x,x) below this is treated as a degenerate kernel
DEGENERATE_PI = float(os.getenv("HERMITE_NODAL_DEGENERATE_PI", "1e-280"))

# Region classification: origin disk radius ORIGIN_FACTOR * h and
# caustic band | |x|^2 - 2E | < CAUSTIC_KAPPA * h^(2/3)
ORIGIN_FACTOR = float(os.getenv("HERMITE_NODAL_ORIGIN_FACTOR", "10"))
CAUSTIC_KAPPA = float(os.getenv("HERMITE_NODAL_CAUSTIC_KAPPA", "1.0"))

# Relative eigenvalue tolerance for PSD clipping of Omega
PSD_TOL = float(os.getenv("HERMITE_NODAL_PSD_TOL", "1e-10"))

# Largest accepted roundoff of the Mehler quadrature, relative to the kernel scale
ROUNDOFF_RTOL = float(os.getenv("HERMITE_NODAL_ROUNDOFF_RTOL", "1e-8"))

# Monte-Carlo
WORKERS = int(os.getenv("HERMITE_NODAL_WORKERS", "4"))
MC_SEED = int(os.getenv("HERMITE_NODAL_MC_SEED", "20240531"))

LOG_LEVEL = os.getenv("HERMITE_NODAL_LOG_LEVEL", "WARNING")


def setup_logging(level: str | int | None = None) -> logging.Logger:
    """Configure the package logger once and return it."""
    logger = logging.getLogger("hermite_nodal")
    logger.setLevel(level if level is not None else LOG_LEVEL)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        logger.addHandler(handler)
    return logger
