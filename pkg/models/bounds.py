from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator


class RateBound(BaseModel):
    value: float
    case_tag: Literal["convex", "mild_nonconvex", "deep_nonconvex"]
    R: float
    L: float
    K: float
    alpha: float
    inverse_bound: float  # the bound on 1/c itself
    simplified_value: Optional[float] = None


class PerturbationBound(BaseModel):
    value: float
    kind: Literal["bounded", "lipschitz"]
    radius_within_R0: Optional[bool] = None  # None when R0 was not supplied


class ProductRate(BaseModel):
    rate: float
    A: float
    certified: bool


class InteractionMatrix(BaseModel):
    """Interaction weights a_ij of a system of n coupled diffusions"""

    model_config = ConfigDict(frozen=True)

    n: int
    entries: Tuple[Tuple[float, ...], ...]
    kind: Literal["mean_field", "nearest_neighbour", "general"] = "general"
    coupling_alpha: float = 0.0

    @field_validator("n")
    @classmethod
    def validate_n(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"n must be at least 1, got {v}")
        return v

    @model_validator(mode="after")
    def check_entries(self) -> "InteractionMatrix":
        a = np.asarray(self.entries, dtype=float)
        if a.shape != (self.n, self.n):
            raise ValueError(f"entries must be {self.n}x{self.n}, got {a.shape}")
        if self.kind != "general":
            expected = interaction_entries(self.kind, self.n, self.coupling_alpha)
            if not np.allclose(a, expected, rtol=0, atol=1e-15):
                raise ValueError(f"entries do not match the {self.kind} pattern")
        return self

    @classmethod
    def mean_field(cls, n: int, coupling_alpha: float) -> "InteractionMatrix":
        return cls(
            n=n,
            entries=interaction_entries("mean_field", n, coupling_alpha),
            kind="mean_field",
            coupling_alpha=coupling_alpha,
        )

    @classmethod
    def nearest_neighbour(cls, n: int, coupling_alpha: float) -> "InteractionMatrix":
        return cls(
            n=n,
            entries=interaction_entries("nearest_neighbour", n, coupling_alpha),
            kind="nearest_neighbour",
            coupling_alpha=coupling_alpha,
        )

    def as_array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=float)


def interaction_entries(kind: str, n: int, coupling_alpha: float) -> Tuple[Tuple[float, ...], ...]:
    a = np.zeros((n, n))
    if kind == "mean_field":
        a[:, :] = coupling_alpha / n
    elif kind == "nearest_neighbour":
        for i in range(n):
            for j in range(n):
                if i != j and ((i - j) % n == 1 or (j - i) % n == 1):
                    a[i, j] = coupling_alpha / 2
    else:
        raise ValueError(f"no entry pattern for kind {kind}")
    return tuple(tuple(float(v) for v in row) for row in a)


class InteractingRate(BaseModel):
    rate: float
    certified: bool
    condition_holds: bool
    lam: float
    max_row_sum: float
    A: float
    theta: float  # derived: c_bar = base_c - theta * |coupling_alpha| for the two standard patterns
    critical_coupling: Optional[float] = None


class HeatEquationRate(BaseModel):
    K_d: float
    rate: float
    inverse_bound: float
    case_tag: Literal["deep_nonconvex", "mild_nonconvex", "flat", "convex"]
    local: bool


class ErgodicBounds(BaseModel):
    bias_bound: float
    variance_bound: float


class ComponentwisePenalty(BaseModel):
    m_delta: float
    per_block: List[float]
    delta: float
