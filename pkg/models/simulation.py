from typing import Any, Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

import config
from models.bounds import InteractionMatrix
from models.curvature import CurvatureProfile

Drift = Callable[[np.ndarray], np.ndarray]


class BlockSpec(BaseModel):
    """One component x^i in R^{d_i} with autonomous drift b_0^i and noise scale s_i"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dim: int
    drift: Drift  # (paths, d_i) -> (paths, d_i)
    scale: float = 1.0

    @field_validator("dim")
    @classmethod
    def validate_dim(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"block dimension must be at least 1, got {v}")
        return v

    @field_validator("scale")
    @classmethod
    def validate_scale(cls, v: float) -> float:
        if not v > 0:
            raise ValueError(f"block noise scale must be positive, got {v}")
        return v


class ModelSpec(BaseModel):
    """
    Block-structured diffusion dX^i = (b_0^i(X^i) + gamma^i(X)) dt + s_i dB^i

    A full sigma matrix is allowed only for a single block; with several
    blocks sigma is block-diagonal with s_i * I on block i.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    blocks: List[BlockSpec]
    interaction: Optional[Drift] = None  # (paths, d) -> (paths, d)
    sigma: Optional[np.ndarray] = None
    norm_kind: Literal["intrinsic", "euclidean"] = "intrinsic"

    @model_validator(mode="after")
    def check_sigma(self) -> "ModelSpec":
        if not self.blocks:
            raise ValueError("model needs at least one block")
        if self.sigma is not None:
            if len(self.blocks) != 1:
                raise ValueError("a full sigma matrix is only allowed for a single block")
            d = self.blocks[0].dim
            if self.sigma.shape != (d, d):
                raise ValueError(f"sigma must be {d}x{d}, got {self.sigma.shape}")
            if not np.linalg.det(self.sigma) > 0:
                raise ValueError("sigma must have strictly positive determinant")
        return self

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def block_slices(self) -> List[slice]:
        slices, start = [], 0
        for block in self.blocks:
            slices.append(slice(start, start + block.dim))
            start += block.dim
        return slices

    def sigma_matrix(self) -> np.ndarray:
        if self.sigma is not None:
            return np.asarray(self.sigma, dtype=float)
        return np.diag(np.concatenate([np.full(b.dim, b.scale) for b in self.blocks]))

    def drift(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        for block, sl in zip(self.blocks, self.block_slices):
            out[:, sl] = block.drift(x[:, sl])
        if self.interaction is not None:
            out += self.interaction(x)
        return out

    def block_radii(self, z: np.ndarray, sigma_inv: np.ndarray) -> np.ndarray:
        """Per-block norms of the difference z, shape (paths, n_blocks)"""
        u = z @ sigma_inv.T if self.norm_kind == "intrinsic" else z
        return np.stack([np.linalg.norm(u[:, sl], axis=1) for sl in self.block_slices], axis=1)


class CouplingConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["synchronous", "reflection", "componentwise"] = "reflection"
    delta: float = 1e-3
    eps_merge: float = config.EPS_MERGE
    h: float = config.STEP_SIZE
    T: float = 10.0
    save_times: Tuple[float, ...] = tuple(config.SAVE_TIMES)
    n_paths: int = 1000
    seed: int = 0
    bridge_correction: bool = False
    noise_block: int = config.NOISE_BLOCK

    @field_validator("delta", "eps_merge", "h", "T")
    @classmethod
    def validate_positive(cls, v: float, info) -> float:
        if not v > 0:
            raise ValueError(f"{info.field_name} must be positive, got {v}")
        return v

    @field_validator("n_paths", "noise_block")
    @classmethod
    def validate_count(cls, v: int, info) -> int:
        if v < 1:
            raise ValueError(f"{info.field_name} must be at least 1, got {v}")
        return v

    @field_validator("seed")
    @classmethod
    def validate_seed(cls, v: int) -> int:
        if not 0 <= v < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {v}")
        return v

    @model_validator(mode="after")
    def check_consistency(self) -> "CouplingConfig":
        times = np.asarray(self.save_times, dtype=float)
        if times.size == 0:
            raise ValueError("save_times must not be empty")
        if np.any(np.diff(times) <= 0):
            raise ValueError("save_times must be strictly increasing")
        if times[0] < 0 or times[-1] > self.T + 1e-12:
            raise ValueError(f"save_times must lie in [0, T={self.T}]")
        steps = self.save_steps
        if np.any(np.diff(steps) <= 0):
            raise ValueError(f"save_times must fall on distinct steps of h={self.h}, got steps {steps.tolist()}")
        if self.kind == "componentwise" and not self.eps_merge < self.delta / 2:
            raise ValueError(f"eps_merge={self.eps_merge} must be below delta/2={self.delta / 2}")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.h))

    @property
    def save_steps(self) -> np.ndarray:
        return np.rint(np.asarray(self.save_times) / self.h).astype(int)


class PairState(BaseModel):
    """Coupled states for a batch of paths, x and y of shape (paths, d)"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    y: np.ndarray
    merged: np.ndarray  # (paths, n_blocks) bool
    t: float = 0.0
    path_indices: List[int] = []


class NoiseIncrement(BaseModel):
    """Brownian increments for one step, already scaled by sqrt(h)"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    dB: np.ndarray
    dB_tilde: Optional[np.ndarray] = None  # componentwise kind only
    uniform: Optional[np.ndarray] = None  # bridge correction only


class PathRecord(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    path_indices: List[int]
    times: np.ndarray
    distances: np.ndarray  # (paths, saves) values of d_{f,w}
    radii: np.ndarray  # (paths, saves, n_blocks)
    merge_times: np.ndarray  # (paths,), nan if never merged
    x_final: np.ndarray
    y_final: np.ndarray


class DecaySeries(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int
    config_echo: Dict[str, Any] = {}
    note: Optional[str] = None

    @model_validator(mode="after")
    def check_series(self) -> "DecaySeries":
        if not (len(self.times) == len(self.mean) == len(self.stderr)):
            raise ValueError("times, mean and stderr must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.mean < 0) or np.any(self.stderr < 0):
            raise ValueError("mean and stderr must be nonnegative")
        return self


class RateFit(BaseModel):
    rate: float
    intercept: float
    r_squared: float
    rate_stderr: float
    window: Tuple[int, int]
    n_points: int


class ContractionReport(BaseModel):
    passed: bool
    c: float
    worst_violation: float
    worst_pair: Optional[Tuple[int, int]] = None


class FloorReport(BaseModel):
    passed: bool
    floor: float
    floor_stderr: float
    m_delta: float
    c: float
    threshold: float


class ErgodicAverageReport(BaseModel):
    t: float
    bias_estimate: float
    variance_estimate: float
    bias_bound: float
    variance_bound: float
    reference_mean: float
    reference_stderr: float
    moment_d_f: float
    burn_in: float
    burn_in_warning: bool
    within_bounds: bool


class RegisteredModel(BaseModel):
    """A built-in model with its per-block curvature profiles and default initial pair"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    model: ModelSpec
    profiles: List[CurvatureProfile]
    x0: np.ndarray
    y0: np.ndarray
    weights: List[float]
    params: Dict[str, float] = {}
    interaction: Optional[InteractionMatrix] = None
    M: float = 0.0
    max_step: Optional[float] = None  # explicit Euler stability limit, if any
