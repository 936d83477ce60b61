import logging
import math
from typing import Callable, Dict, List

import numpy as np

from models.bounds import InteractionMatrix
from models.simulation import BlockSpec, ModelSpec, RegisteredModel
from services.curvature_service import CurvatureService
from services.errors import DomainError
from services.spectral_solver import doublewell_potential

logger = logging.getLogger(__name__)


def _linear_drift(K: float) -> Callable[[np.ndarray], np.ndarray]:
    # overdamped Langevin drift -U'/2 for U = K x^2 / 2
    return lambda x: -0.5 * K * x


class ModelRegistry:
    """Built-in models selectable by name"""

    DEFAULTS: Dict[str, Dict[str, float]] = {
        "ou": {"K": 1.0, "dim": 1, "z0": 1.0},
        "double-well": {"L": 1.0, "R": 4.0, "ramp": 1.0, "K_out": 1.0},
        "product-ou": {"K1": 1.0, "K2": 2.0, "z0": 1.0},
        "mean-field": {"n": 10, "K": 1.0, "M": 1.0, "coupling": 0.0, "z0": 1.0},
        "nearest-neighbour": {"n": 10, "K": 1.0, "M": 1.0, "coupling": 0.0, "z0": 1.0},
        "heat-eq": {"d": 8, "L": 0.0, "z0": 1.0},
    }

    def __init__(self):
        self.curvature = CurvatureService()
        self._builders = {
            "ou": self._ou,
            "double-well": self._double_well,
            "product-ou": self._product_ou,
            "mean-field": self._interacting,
            "nearest-neighbour": self._interacting,
            "heat-eq": self._heat_eq,
        }

    @property
    def names(self) -> List[str]:
        return list(self._builders)

    def build(self, name: str, **params: float) -> RegisteredModel:
        """
        Build a registered model

        Args:
            name: one of the registry names
            params: overrides of the model defaults; unknown keys are rejected

        Returns:
            RegisteredModel with its curvature profiles and initial pair
        """
        if name not in self._builders:
            raise DomainError(f"unknown model '{name}', choose from {', '.join(self.names)}")
        defaults = self.DEFAULTS[name]
        unknown = set(params) - set(defaults)
        if unknown:
            raise DomainError(f"unknown parameters for model '{name}': {sorted(unknown)}")
        resolved = {**defaults, **{k: float(v) for k, v in params.items()}}
        logger.info(f"Building model {name} with {resolved}")
        return self._builders[name](name, resolved)

    def _ou(self, name: str, p: Dict[str, float]) -> RegisteredModel:
        K, dim = p["K"], int(p["dim"])
        if not K > 0 or dim < 1:
            raise DomainError(f"ou needs K > 0 and dim >= 1, got K={K}, dim={dim}")
        model = ModelSpec(name=name, blocks=[BlockSpec(dim=dim, drift=_linear_drift(K))])
        x0 = np.zeros(dim)
        x0[0] = p["z0"] / 2
        return RegisteredModel(
            name=name,
            model=model,
            profiles=[self.curvature.constant_profile(K)],
            x0=x0,
            y0=-x0,
            weights=[1.0],
            params=p,
        )

    def _double_well(self, name: str, p: Dict[str, float]) -> RegisteredModel:
        L, R, ramp, K_out = p["L"], p["R"], p["ramp"], p["K_out"]
        potential = doublewell_potential(L, R, ramp, K_out)
        model = ModelSpec(name=name, blocks=[BlockSpec(dim=1, drift=lambda x: -0.5 * potential.grad(x))])

        # U' vanishes again past the ramp; kappa at r_max is positive once r_max/2 is beyond that zero
        outer = R / 2 + ramp
        zero = outer + max(0.0, -float(potential.grad(np.array(outer)))) / K_out
        r_max = 3.0 * zero
        profile = self.curvature.profile_from_potential_1d(
            potential.grad,
            x_lo=-r_max,
            x_hi=r_max,
            n_x=4001,
            r_grid=np.linspace(r_max / 256, r_max, 256),
        )
        return RegisteredModel(
            name=name,
            model=model,
            profiles=[profile],
            x0=np.array([R / 2]),
            y0=np.array([-R / 2]),
            weights=[1.0],
            params=p,
        )

    def _product_ou(self, name: str, p: Dict[str, float]) -> RegisteredModel:
        Ks = [p["K1"], p["K2"]]
        if min(Ks) <= 0:
            raise DomainError(f"product-ou needs positive K1, K2, got {Ks}")
        model = ModelSpec(name=name, blocks=[BlockSpec(dim=1, drift=_linear_drift(K)) for K in Ks])
        half = p["z0"] / 2
        return RegisteredModel(
            name=name,
            model=model,
            profiles=[self.curvature.constant_profile(K) for K in Ks],
            x0=np.full(2, half),
            y0=np.full(2, -half),
            weights=[1.0, 1.0],
            params=p,
        )

    def _interacting(self, name: str, p: Dict[str, float]) -> RegisteredModel:
        """n one-dimensional Langevin particles with U = K x^2/2 coupled through V = M u^2/2"""
        n, K, M, a = int(p["n"]), p["K"], p["M"], p["coupling"]
        if n < 2 or not K > 0 or M < 0:
            raise DomainError(f"{name} needs n >= 2, K > 0, M >= 0, got n={n}, K={K}, M={M}")
        matrix = InteractionMatrix.mean_field(n, a) if name == "mean-field" else InteractionMatrix.nearest_neighbour(n, a)
        entries = matrix.as_array()
        row_sums = entries.sum(axis=1)

        def interaction(x: np.ndarray) -> np.ndarray:
            # gamma^i = -sum_j a_ij V'(x^i - x^j)
            return -M * (x * row_sums - x @ entries.T)

        model = ModelSpec(
            name=name,
            blocks=[BlockSpec(dim=1, drift=_linear_drift(K)) for _ in range(n)],
            interaction=interaction,
        )
        half = p["z0"] / 2
        profile = self.curvature.constant_profile(K)
        return RegisteredModel(
            name=name,
            model=model,
            profiles=[profile] * n,
            x0=np.full(n, half),
            y0=np.full(n, -half),
            weights=[1.0] * n,
            params=p,
            interaction=matrix,
            M=M,
        )

    def _heat_eq(self, name: str, p: Dict[str, float]) -> RegisteredModel:
        """Finite-difference heat equation on d-1 interior points, drift -d grad U with V = -L u^2/2, sigma = sqrt(d) I"""
        d, L = int(p["d"]), p["L"]
        if d < 2:
            raise DomainError(f"heat-eq needs d >= 2, got {d}")
        m = d - 1

        def drift(x: np.ndarray) -> np.ndarray:
            padded = np.pad(x, ((0, 0), (1, 1)))
            laplacian = padded[:, 2:] - 2.0 * x + padded[:, :-2]
            return d * d * laplacian + L * x

        sigma = math.sqrt(d) * np.eye(m)
        model = ModelSpec(name=name, blocks=[BlockSpec(dim=m, drift=drift)], sigma=sigma, norm_kind="intrinsic")
        # z0 is measured in the intrinsic norm |x|/sqrt(d)
        direction = np.sin(np.pi * np.arange(1, d) / d)
        direction *= math.sqrt(d) / np.linalg.norm(direction)
        profile = self.curvature.heat_eq_profile(d, L)
        return RegisteredModel(
            name=name,
            model=model,
            profiles=[profile],
            x0=0.5 * p["z0"] * direction,
            y0=-0.5 * p["z0"] * direction,
            weights=[1.0],
            params=p,
            max_step=0.5 / (d * d),
        )
