import numpy as np
from pydantic import BaseModel, ConfigDict

from models.curvature import CurvatureProfile


class DistanceFunction(BaseModel):
    """Tabulated phi, Phi, g, f on a grid together with R0, R1 and the certified rate c"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    profile: CurvatureProfile
    grid: np.ndarray
    phi: np.ndarray
    Phi: np.ndarray
    g: np.ndarray
    f: np.ndarray
    f_prime: np.ndarray
    R0: float
    R1: float
    c: float
    alpha: float
    phi_R0: float
    slope_beyond: float  # phi(R0)/2, the exact slope of f beyond R1
    f_R1: float
    n_doublings: int = 0

    @property
    def r_max(self) -> float:
        return float(self.grid[-1])


class LocalDistanceFunction(BaseModel):
    """Distance f_R cut at f_R(R) with its local rate c_R"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    profile: CurvatureProfile
    R: float
    grid: np.ndarray
    phi: np.ndarray
    g_R: np.ndarray
    f_R: np.ndarray
    c_R: float
    cap: float
    alpha: float
    n_doublings: int = 0
