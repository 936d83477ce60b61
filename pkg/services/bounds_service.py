import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np

from models.bounds import (
    ComponentwisePenalty,
    ErgodicBounds,
    HeatEquationRate,
    InteractingRate,
    InteractionMatrix,
    PerturbationBound,
    ProductRate,
    RateBound,
)
from models.curvature import CurvatureProfile
from models.distance import DistanceFunction
from services.curvature_service import heat_eq_constant, kappa_lower
from services.distance_builder import DistanceBuilder
from services.errors import DomainError, NoContractionError

logger = logging.getLogger(__name__)


def _require_nonnegative(**values: float) -> None:
    for name, value in values.items():
        if not (value >= 0 and math.isfinite(value)):
            raise DomainError(f"{name} must be a finite nonnegative number, got {value}")


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")


class BoundsService:
    """Closed-form rate bounds, perturbation rules and consequence bounds"""

    def __init__(self, builder: Optional[DistanceBuilder] = None):
        self.builder = builder or DistanceBuilder()

    def lemma_rate_bound(self, R: float, L: float, K: float, alpha: float = 1.0) -> RateBound:
        """
        Certified lower bound on c for kappa >= -L on (0, R] and kappa >= K beyond R

        The case is keyed on L R^2: for L > 0 the minorant has R0 = R exactly,
        for L = 0 the convex bound 2 max(R^2, 2/K) applies.

        Args:
            R: radius of the nonconvex region
            L: depth of the negative curvature
            K: curvature beyond R
            alpha: metric distortion constant

        Returns:
            RateBound with the rate, the bound on 1/c and the case used
        """
        _require_positive(K=K, alpha=alpha)
        _require_nonnegative(R=R, L=L)
        simplified = None
        if L == 0:
            case = "convex"
            inverse = 2.0 * max(R * R, 2.0 / K)
        elif L * R * R <= 8:
            case = "mild_nonconvex"
            inverse = (math.e - 1) / 2 * R * R + math.e * math.sqrt(8.0 / K) * R + 4.0 / K
            simplified = 1.0 / (alpha * 1.5 * math.e * max(R * R, 8.0 / K))
        else:
            case = "deep_nonconvex"
            if R == 0:
                raise DomainError("the deep nonconvex bound needs R > 0")
            inverse = (
                8.0 * math.sqrt(2 * math.pi) / (R * math.sqrt(L)) * (1.0 / L + 1.0 / K) * math.exp(L * R * R / 8)
                + 32.0 / (R * R * K * K)
            )
        return RateBound(
            value=1.0 / (alpha * inverse),
            case_tag=case,
            R=R,
            L=L,
            K=K,
            alpha=alpha,
            inverse_bound=alpha * inverse,
            simplified_value=simplified,
        )

    def perturbation_bounded(self, c0: float, R: float, sup_gamma: float, R0: Optional[float] = None) -> PerturbationBound:
        """c >= c0 exp(-R sup|gamma|) for a bounded perturbation supported in a ball of radius R"""
        _require_nonnegative(c0=c0, R=R, sup_gamma=sup_gamma)
        return PerturbationBound(
            value=c0 * math.exp(-R * sup_gamma),
            kind="bounded",
            radius_within_R0=self._within_R0(R, R0),
        )

    def perturbation_lipschitz(self, c0: float, R: float, L_pert: float, R0: Optional[float] = None) -> PerturbationBound:
        """c >= c0 exp(-L R^2 / 4) for a Lipschitz perturbation supported in a ball of radius R"""
        _require_nonnegative(c0=c0, R=R, L_pert=L_pert)
        return PerturbationBound(
            value=c0 * math.exp(-L_pert * R * R / 4),
            kind="lipschitz",
            radius_within_R0=self._within_R0(R, R0),
        )

    def _within_R0(self, R: float, R0: Optional[float]) -> Optional[bool]:
        if R0 is None:
            return None
        if R > R0:
            logger.warning(f"Perturbation radius R={R} exceeds R0={R0}; the bound is not certified")
        return R <= R0

    def product_rate(
        self,
        c: Sequence[float],
        eps: Sequence[float],
        phi_R0: Sequence[float],
        w: Sequence[float],
    ) -> ProductRate:
        """Rate min(c_i - eps_i) and constant A = 2 / min(phi_i(R0) w_i) for weakly coupled products"""
        c_arr, eps_arr, phi_arr, w_arr = (np.asarray(v, dtype=float) for v in (c, eps, phi_R0, w))
        if not (c_arr.size > 0 and c_arr.size == eps_arr.size == phi_arr.size == w_arr.size):
            raise DomainError("c, eps, phi_R0 and w must be nonempty and of equal length")
        if np.any(eps_arr < 0):
            raise DomainError(f"eps must be nonnegative, got {eps_arr.tolist()}")
        if np.any(w_arr <= 0) or np.any(w_arr > 1):
            raise DomainError(f"weights must lie in (0, 1], got {w_arr.tolist()}")
        if np.any(eps_arr >= c_arr):
            raise NoContractionError(
                f"no contraction certified: eps_i >= c_i for components {np.flatnonzero(eps_arr >= c_arr).tolist()}",
                rate=float(np.min(c_arr - eps_arr)),
            )
        return ProductRate(
            rate=float(np.min(c_arr - eps_arr)),
            A=float(2.0 / np.min(phi_arr * w_arr)),
            certified=True,
        )

    def perturbed_product_rate(self, c: Sequence[float], phi_R0: Sequence[float], lam: float) -> ProductRate:
        """Rate min(c_i - 2 lam / phi_i(R0)) under an l1-Lipschitz interaction with constant lam"""
        _require_nonnegative(lam=lam)
        c_arr, phi_arr = np.asarray(c, dtype=float), np.asarray(phi_R0, dtype=float)
        if not (c_arr.size > 0 and c_arr.size == phi_arr.size):
            raise DomainError("c and phi_R0 must be nonempty and of equal length")
        rate = float(np.min(c_arr - 2.0 * lam / phi_arr))
        if rate <= 0:
            logger.warning(f"no contraction certified: perturbed rate {rate:.6g} <= 0")
        return ProductRate(rate=rate, A=float(2.0 * np.max(1.0 / phi_arr)), certified=rate > 0)

    def interacting_rate(self, base_c: float, phi_R0: float, M: float, A_mat: InteractionMatrix) -> InteractingRate:
        """
        Rate of n copies of a contracting diffusion coupled through V(x_i - x_j) with |V''| <= M

        lam = M max_i sum_j (|a_ij| + |a_ji|); for the mean-field and
        nearest-neighbour patterns this gives c_bar = base_c - theta |a| with
        theta = 4M / phi(R0).
        """
        _require_nonnegative(M=M)
        _require_positive(base_c=base_c, phi_R0=phi_R0)
        a = np.abs(A_mat.as_array())
        max_row_sum = float(np.max(a.sum(axis=1) + a.sum(axis=0)))
        lam = M * max_row_sum
        product = self.perturbed_product_rate([base_c], [phi_R0], lam)
        condition_holds = M == 0 or max_row_sum <= base_c * phi_R0 / M
        theta = 4.0 * M / phi_R0
        if not condition_holds:
            logger.warning(f"Interaction condition fails: row sum {max_row_sum:.6g} > c phi(R0)/M = {base_c * phi_R0 / M:.6g}")
        return InteractingRate(
            rate=product.rate,
            certified=condition_holds and product.rate > 0,
            condition_holds=condition_holds,
            lam=lam,
            max_row_sum=max_row_sum,
            A=product.A,
            theta=theta,
            critical_coupling=base_c / theta if theta > 0 else None,
        )

    def stationary_variance_bound(self, c: float, lip_f_norm: float) -> float:
        """Var_mu(g) <= ||g||^2 / (2c)"""
        _require_positive(c=c)
        _require_nonnegative(lip_f_norm=lip_f_norm)
        return lip_f_norm**2 / (2.0 * c)

    def correlation_bound(self, t: float, s: float, c: float, lip_g: float, lip_h: float) -> float:
        """|Cov(g(X_t), h(X_{t+s}))| <= (1 - e^{-2ct}) / (2c) e^{-cs} ||g|| ||h||"""
        _require_positive(c=c)
        for name, value in (("t", t), ("s", s), ("lip_g", lip_g), ("lip_h", lip_h)):
            if not value >= 0:
                raise DomainError(f"{name} must be nonnegative, got {value}")
        return -math.expm1(-2.0 * c * t) / (2.0 * c) * math.exp(-c * s) * lip_g * lip_h

    def ergodic_average_bounds(self, t: float, c: float, lip_g: float, moment_d_f: float) -> ErgodicBounds:
        """Bias and variance bounds for the time average (1/t) int_0^t g(X_s) ds"""
        _require_positive(t=t, c=c)
        if not (lip_g >= 0 and moment_d_f >= 0):
            raise DomainError(f"lip_g and moment_d_f must be nonnegative, got {lip_g}, {moment_d_f}")
        if math.isinf(t):
            return ErgodicBounds(bias_bound=0.0, variance_bound=0.0)
        return ErgodicBounds(
            bias_bound=-math.expm1(-c * t) / (c * t) * lip_g * moment_d_f,
            variance_bound=lip_g**2 / (c * c * t),
        )

    def heat_eq_rate(self, d: int, L: float, R: float) -> HeatEquationRate:
        """
        K_d and the local rate bound for the discretized heat equation with potential V, V'' >= -L

        The profile is kappa = 2 K_d in the intrinsic metric; for K_d > 0 the
        global convex rate is returned instead of a local one.
        """
        _require_positive(R=R)
        k_d = heat_eq_constant(d, L)
        x = k_d * R * R
        if k_d > 0:
            bound = self.lemma_rate_bound(0.0, 0.0, 2.0 * k_d, 1.0)
            return HeatEquationRate(K_d=k_d, rate=bound.value, inverse_bound=bound.inverse_bound, case_tag="convex", local=False)
        if k_d == 0:
            case, inverse = "flat", R * R / 2
        elif x > -4:
            case, inverse = "mild_nonconvex", (math.e - 1) * R * R / 2
        else:
            case = "deep_nonconvex"
            inverse = 4.0 * math.sqrt(math.pi) / (R * abs(k_d) ** 1.5) * math.exp(-x / 4)
        return HeatEquationRate(K_d=k_d, rate=1.0 / inverse, inverse_bound=inverse, case_tag=case, local=True)

    def lipschitz_seminorm_1d(self, g: Callable[[np.ndarray], np.ndarray], df: DistanceFunction, x_grid: Sequence[float]) -> float:
        """
        Grid maximum of |g(x) - g(y)| / f(|x - y|)

        This is a lower estimate of the true supremum; coincident points are skipped.
        """
        x = np.asarray(x_grid, dtype=float)
        if x.size == 0 or not np.all(np.isfinite(x)):
            raise DomainError("x_grid must be a finite nonempty grid")
        gx = np.asarray(g(x), dtype=float)
        numerator = np.abs(gx[:, None] - gx[None, :])
        distance = self.builder.eval_f(df, np.abs(x[:, None] - x[None, :]))
        mask = distance > 0
        if not np.any(mask):
            return 0.0
        return float(np.max(numerator[mask] / distance[mask]))

    def componentwise_penalty(self, profiles: Sequence[CurvatureProfile], c: Sequence[float], delta: float, n_points: int = 2001) -> ComponentwisePenalty:
        """m(delta) = sum_i (c_i delta + sup_{r < delta} r kappa_i(r)^- / 2), sup taken on a grid plus the knots"""
        _require_positive(delta=delta)
        if len(profiles) != len(c):
            raise DomainError(f"got {len(profiles)} profiles but {len(c)} rates")
        per_block = []
        for profile, c_i in zip(profiles, c):
            r = np.linspace(0.0, delta, n_points)[1:]
            r = np.unique(np.concatenate([r, [k for k in profile.radii if k < delta]]))
            sup = float(np.max(r * np.maximum(-kappa_lower(profile, r), 0.0)))
            per_block.append(c_i * delta + 0.5 * sup)
        return ComponentwisePenalty(m_delta=float(sum(per_block)), per_block=per_block, delta=delta)

    def drift_lemma_bound(self, t: float, c: float, rho0: float, m: float) -> float:
        """E[rho_t] <= e^{-ct} E[rho_0] + m (1 - e^{-ct}) / c"""
        _require_positive(c=c)
        _require_nonnegative(t=t, rho0=rho0, m=m)
        return math.exp(-c * t) * rho0 - m * math.expm1(-c * t) / c
