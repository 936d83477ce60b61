import json
import logging
import os
from typing import List

from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger(__name__)


def _float_list(name: str, default: str) -> List[float]:
    # Supports both a JSON array and a comma-separated string
    raw = os.getenv(name, default)
    try:
        values = json.loads(raw)
    except json.JSONDecodeError:
        values = [v for v in raw.split(",") if v.strip()]
    return [float(v) for v in values]


LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

# Quadrature
N_GRID = int(os.getenv("CK_N_GRID", "1024"))
MAX_DOUBLINGS = int(os.getenv("CK_MAX_DOUBLINGS", "20"))
RATE_RTOL = float(os.getenv("CK_RATE_RTOL", "1e-8"))
RADIUS_XTOL = float(os.getenv("CK_RADIUS_XTOL", "1e-10"))

# Simulation
STEP_SIZE = float(os.getenv("CK_STEP_SIZE", "1e-3"))
EPS_MERGE = float(os.getenv("CK_EPS_MERGE", "1e-6"))
MC_WORKERS = int(os.getenv("CK_MC_WORKERS", "4"))
MC_CHUNK_SIZE = int(os.getenv("CK_MC_CHUNK_SIZE", "2048"))
NOISE_BLOCK = int(os.getenv("CK_NOISE_BLOCK", "256"))
SAVE_TIMES = _float_list("CK_SAVE_TIMES", "[0,0.5,1,1.5,2,3,4,5,6,7,8,9,10]")

# Spectral
EIGEN_N_GRID = int(os.getenv("CK_EIGEN_N_GRID", "1000"))
EIGEN_MAX_DOUBLINGS = int(os.getenv("CK_EIGEN_MAX_DOUBLINGS", "12"))
EIGEN_RTOL = float(os.getenv("CK_EIGEN_RTOL", "1e-6"))
