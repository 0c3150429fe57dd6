"""
Process-wide defaults, read from the environment.
"""

import os

# Load configuration from environment variables
OUTPUT_DIR = os.getenv('DSLDA_OUTPUT_DIR', './out')
LOG_LEVEL = os.getenv('DSLDA_LOG_LEVEL', 'WARNING').upper()
WORKERS = int(os.getenv('DSLDA_WORKERS', '1'))

GLASSO_MAX_ITERS = int(os.getenv('DSLDA_GLASSO_MAX_ITERS', '200'))
GLASSO_TOL = float(os.getenv('DSLDA_GLASSO_TOL', '1e-5'))
GLASSO_INNER_MAX_ITERS = int(os.getenv('DSLDA_GLASSO_INNER_MAX_ITERS', '1000'))
GLASSO_INNER_TOL = float(os.getenv('DSLDA_GLASSO_INNER_TOL', '1e-7'))

# O_p constant of the stochastic bound; the rate gives no value for it
BOUND_C_RATE = float(os.getenv('DSLDA_BOUND_C_RATE', '1.0'))
