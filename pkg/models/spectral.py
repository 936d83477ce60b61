from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict


class EigenResult(BaseModel):
    lambda1: float
    n_grid: int
    x_max: float
    residual: float
    boundary_weight: float  # e^{-U(x_max)} relative to the largest weight on the grid
    previous: float  # value on the coarser grid of the last refinement


class Potential(BaseModel):
    """A one-dimensional potential U with its derivative U'"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
