import math
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator


class MetricSpec(BaseModel):
    """Norm ||z|| = sqrt(z.Gz) the curvature profile is measured in, with its distortion constant"""

    model_config = ConfigDict(frozen=True)

    norm_kind: Literal["intrinsic", "euclidean"] = "intrinsic"
    sigma: Optional[Tuple[Tuple[float, ...], ...]] = None
    alpha: float = 1.0

    @model_validator(mode="before")
    @classmethod
    def derive_alpha(cls, data):
        if not isinstance(data, dict) or data.get("sigma") is None:
            return data
        sigma = np.asarray(data["sigma"], dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ValueError(f"sigma must be a square matrix, got shape {sigma.shape}")
        det = float(np.linalg.det(sigma))
        if not det > 0:
            raise ValueError(f"sigma must have strictly positive determinant, got {det}")
        data = dict(data)
        data["sigma"] = tuple(tuple(float(v) for v in row) for row in sigma)
        if "alpha" not in data:
            if data.get("norm_kind", "intrinsic") == "euclidean":
                data["alpha"] = euclidean_alpha(sigma)
            else:
                data["alpha"] = 1.0
        return data

    @model_validator(mode="after")
    def check_alpha(self) -> "MetricSpec":
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.norm_kind == "intrinsic" and self.alpha != 1.0:
            raise ValueError(f"intrinsic metric requires alpha = 1, got {self.alpha}")
        if self.norm_kind == "euclidean" and self.sigma is not None:
            expected = euclidean_alpha(np.asarray(self.sigma))
            if not math.isclose(self.alpha, expected, rel_tol=1e-12):
                raise ValueError(f"euclidean alpha must equal {expected}, got {self.alpha}")
        return self

    @classmethod
    def from_sigma(cls, sigma, norm_kind: str = "intrinsic") -> "MetricSpec":
        return cls(norm_kind=norm_kind, sigma=np.atleast_2d(np.asarray(sigma, dtype=float)).tolist())


def euclidean_alpha(sigma: np.ndarray) -> float:
    # sup |sigma^-1 z|^2 over |z| = 1 is the top eigenvalue of (sigma sigma^T)^-1
    inv = np.linalg.inv(sigma @ sigma.T)
    return float(np.max(np.linalg.eigvalsh(0.5 * (inv + inv.T))))


class CurvatureProfile(BaseModel):
    """
    Piecewise-linear curvature profile r -> kappa(r)

    kappa(r) = kappa[0] below the first knot, linear between knots and
    tail_value from the last knot on. Ordering and tail positivity are
    checked by CurvatureService.validate_profile, not here, so that an
    invalid profile can still be loaded and diagnosed.
    """

    model_config = ConfigDict(frozen=True)

    radii: Tuple[float, ...]
    kappa: Tuple[float, ...]
    tail_value: float
    metric: MetricSpec = MetricSpec()

    @model_validator(mode="after")
    def check_shape(self) -> "CurvatureProfile":
        if len(self.radii) == 0:
            raise ValueError("profile needs at least one knot")
        if len(self.radii) != len(self.kappa):
            raise ValueError(f"got {len(self.radii)} radii but {len(self.kappa)} kappa values")
        values = list(self.radii) + list(self.kappa) + [self.tail_value]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("profile values must be finite")
        return self

    @property
    def knots(self) -> List[Tuple[float, float]]:
        return list(zip(self.radii, self.kappa))

    @property
    def last_radius(self) -> float:
        return self.radii[-1]


class ProfileDiagnostics(BaseModel):
    valid: bool
    knots_positive: bool
    knots_ordered: bool
    tail_positive: bool
    integral_r_kappa_minus: Optional[float] = None
    violations: List[str] = []
