import logging
import math
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from models.curvature import CurvatureProfile, MetricSpec, ProfileDiagnostics
from services.errors import DomainError, ProfileError

logger = logging.getLogger(__name__)


class CurvatureService:
    """Construction, evaluation and (de)serialization of curvature profiles"""

    # Width of the ramp that realizes a jump of kappa at a radius R, relative to R
    JUMP_WIDTH = 1e-9

    def eval_kappa(self, profile: CurvatureProfile, r: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """
        Evaluate kappa(r) for r > 0

        Below the first knot kappa is constant, between knots it is linear
        and from the last knot on it equals the tail value.
        """
        arr = np.asarray(r, dtype=float)
        if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
            raise DomainError(f"kappa is only defined for finite r > 0, got {r}")
        values = kappa_right(profile, arr)
        return float(values) if np.ndim(r) == 0 else values

    def constant_profile(self, kappa: float, metric: Optional[MetricSpec] = None) -> CurvatureProfile:
        return CurvatureProfile(radii=(1.0,), kappa=(kappa,), tail_value=kappa, metric=metric or MetricSpec())

    def profile_from_bounds(self, R: float, L: float, K: float, metric: Optional[MetricSpec] = None) -> CurvatureProfile:
        """
        Minorant profile kappa = -L on (0, R] and kappa = K on (R, inf)

        Args:
            R: radius of the nonconvex region, R >= 0
            L: lower bound on the negative curvature inside, L >= 0
            K: curvature outside, K > 0
            metric: metric the profile is measured in (intrinsic by default)

        Returns:
            CurvatureProfile whose last knot sits at R with tail K
        """
        if not K > 0:
            raise ProfileError(f"tail value K must be positive, got {K}", ["tail_value <= 0"])
        if R < 0 or L < 0:
            raise DomainError(f"R and L must be nonnegative, got R={R}, L={L}")
        if R == 0:
            # L is irrelevant on an empty interval
            return self.constant_profile(K, metric)
        return CurvatureProfile(radii=(R,), kappa=(-L,), tail_value=K, metric=metric or MetricSpec())

    def profile_from_potential_1d(
        self,
        grad_U: Callable[[np.ndarray], np.ndarray],
        x_lo: float,
        x_hi: float,
        n_x: int,
        r_grid: Sequence[float],
        metric: Optional[MetricSpec] = None,
    ) -> CurvatureProfile:
        """Grid minimum over x of (U'(x+r) - U'(x))/r for each r in r_grid"""
        radii = np.asarray(r_grid, dtype=float)
        if n_x < 2:
            raise DomainError(f"n_x must be at least 2, got {n_x}")
        if radii.size == 0 or np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
            raise DomainError("r_grid must be positive and strictly increasing")
        if not x_hi - radii[-1] > x_lo:
            raise DomainError(f"r_max={radii[-1]} does not fit in [{x_lo}, {x_hi}]")

        kappa = np.empty_like(radii)
        for idx, r in enumerate(radii):
            xs = np.linspace(x_lo, x_hi - r, n_x)
            quotient = (np.asarray(grad_U(xs + r)) - np.asarray(grad_U(xs))) / r
            if not np.all(np.isfinite(quotient)):
                raise DomainError(f"grad_U is not finite on [{x_lo}, {x_hi}]")
            kappa[idx] = quotient.min()

        tail = float(kappa[-1])
        if not tail > 0:
            raise ProfileError(
                "no strict convexity detected at r_max; enlarge r_grid",
                [f"kappa(r_max={radii[-1]}) = {tail} <= 0"],
            )
        logger.info(f"Estimated kappa on {radii.size} radii, min {kappa.min():.6g}, tail {tail:.6g}")
        return CurvatureProfile(
            radii=tuple(float(v) for v in radii),
            kappa=tuple(float(v) for v in kappa),
            tail_value=tail,
            metric=metric or MetricSpec(),
        )

    def heat_eq_profile(self, d: int, L: float) -> CurvatureProfile:
        """Constant profile 2 K_d of the discretized stochastic heat equation in the intrinsic metric"""
        k_d = heat_eq_constant(d, L)
        return self.constant_profile(2.0 * k_d)

    def perturbed_profile(
        self,
        base: CurvatureProfile,
        R: float,
        L_pert: Optional[float] = None,
        sup_gamma: Optional[float] = None,
        n_knots: int = 64,
    ) -> CurvatureProfile:
        """
        Worst-case profile of a drift perturbed by gamma supported in the ball of radius R

        With a Lipschitz perturbation kappa drops by 2 L_pert on (0, R], with a
        bounded one by 4 sup|gamma| / r. Beyond R the base profile is kept.
        """
        if (L_pert is None) == (sup_gamma is None):
            raise DomainError("pass exactly one of L_pert and sup_gamma")
        amount = L_pert if L_pert is not None else sup_gamma
        if amount < 0 or not R > 0:
            raise DomainError(f"need R > 0 and a nonnegative perturbation, got R={R}, {amount}")

        if L_pert is not None:
            inner = np.unique(np.concatenate([[R], [r for r in base.radii if r < R]]))
            drop = np.full(inner.size, 2.0 * L_pert)
        else:
            # chords of the convex 4 sup|gamma| / r lie above it, so the profile stays
            # below the exact minorant between knots; refine geometrically towards 0
            inner = np.unique(np.concatenate([R * np.geomspace(1e-3, 1.0, n_knots), [r for r in base.radii if r < R]]))
            drop = 4.0 * sup_gamma / inner
        inner_kappa = kappa_left(base, inner) - drop

        outer = [r for r in base.radii if r > R * (1 + 2 * self.JUMP_WIDTH)]
        jump_r = R * (1 + self.JUMP_WIDTH)
        radii = list(inner) + [jump_r] + outer
        values = list(inner_kappa) + [float(kappa_right(base, np.array(jump_r)))] + [float(kappa_right(base, np.array(r))) for r in outer]
        return CurvatureProfile(
            radii=tuple(float(v) for v in radii),
            kappa=tuple(float(v) for v in values),
            tail_value=base.tail_value,
            metric=base.metric,
        )

    def validate_profile(self, profile: CurvatureProfile) -> ProfileDiagnostics:
        """Report tail positivity, knot ordering and the integral of r kappa^- over (0, 1]"""
        radii = np.asarray(profile.radii)
        violations: List[str] = []
        knots_positive = bool(np.all(radii > 0))
        knots_ordered = bool(np.all(np.diff(radii) > 0))
        tail_positive = profile.tail_value > 0
        if not knots_positive:
            violations.append("knot radii must be positive")
        if not knots_ordered:
            violations.append("knot radii must be strictly increasing")
        if not tail_positive:
            violations.append(f"tail value must be positive (liminf kappa > 0), got {profile.tail_value}")

        integral = None
        if knots_positive and knots_ordered:
            integral = integrate_r_kappa_minus(profile, 1.0)
        return ProfileDiagnostics(
            valid=not violations,
            knots_positive=knots_positive,
            knots_ordered=knots_ordered,
            tail_positive=tail_positive,
            integral_r_kappa_minus=integral,
            violations=violations,
        )

    def require_valid(self, profile: CurvatureProfile, require_tail: bool = True) -> None:
        diagnostics = self.validate_profile(profile)
        violations = [v for v in diagnostics.violations if require_tail or not v.startswith("tail")]
        if violations:
            raise ProfileError("; ".join(violations), violations)

    def write_csv(self, profile: CurvatureProfile, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_csv(profile))

    def to_csv(self, profile: CurvatureProfile) -> str:
        lines = ["r,kappa"]
        lines += [f"{r!r},{k!r}" for r, k in profile.knots]
        lines.append(f"tail={profile.tail_value!r},alpha={profile.metric.alpha!r},norm={profile.metric.norm_kind}")
        return "\n".join(lines) + "\n"

    def read_csv(self, path: Union[str, Path]) -> CurvatureProfile:
        return self.from_csv(Path(path).read_text())

    def from_csv(self, text: str) -> CurvatureProfile:
        lines = [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
        if not lines or lines[0].replace(" ", "") != "r,kappa":
            raise DomainError("profile CSV must start with the header 'r,kappa'")
        if not lines[-1].startswith("tail="):
            raise DomainError("profile CSV must end with 'tail=<value>,alpha=<value>,norm=<kind>'")

        meta = dict(item.split("=", 1) for item in lines[-1].split(","))
        radii, kappa = [], []
        for line in lines[1:-1]:
            r, k = line.split(",")
            radii.append(float(r))
            kappa.append(float(k))
        metric = MetricSpec(norm_kind=meta.get("norm", "intrinsic"), alpha=float(meta.get("alpha", 1.0)))
        return CurvatureProfile(radii=tuple(radii), kappa=tuple(kappa), tail_value=float(meta["tail"]), metric=metric)


def heat_eq_constant(d: int, L: float) -> float:
    """K_d = 2 d^2 (1 - cos(pi/d)) - L"""
    if d < 2:
        raise DomainError(f"heat equation discretization needs d >= 2, got {d}")
    return 2.0 * d * d * (1.0 - math.cos(math.pi / d)) - L


def kappa_right(profile: CurvatureProfile, r: np.ndarray) -> np.ndarray:
    """kappa with the tail value taken at the last knot itself"""
    radii = np.asarray(profile.radii)
    values = np.interp(r, radii, np.asarray(profile.kappa))
    return np.where(r >= radii[-1], profile.tail_value, values)


def kappa_left(profile: CurvatureProfile, r: np.ndarray) -> np.ndarray:
    """kappa with the last knot value taken at the last knot itself"""
    radii = np.asarray(profile.radii)
    values = np.interp(r, radii, np.asarray(profile.kappa))
    return np.where(r > radii[-1], profile.tail_value, values)


def kappa_lower(profile: CurvatureProfile, r: np.ndarray) -> np.ndarray:
    """Lower of the two one-sided limits, used by the R0/R1 scans"""
    return np.minimum(kappa_left(profile, r), kappa_right(profile, r))


def integrate_r_kappa_minus(profile: CurvatureProfile, upper: float) -> float:
    """Exact integral of r kappa(r)^- over (0, upper] for the piecewise-linear profile"""
    radii = np.asarray(profile.radii)
    # kappa^- is piecewise linear once the zero crossings are added as breakpoints
    breaks = [0.0, upper] + [r for r in radii if r < upper]
    for (r_a, k_a), (r_b, k_b) in zip(profile.knots, profile.knots[1:]):
        if k_a * k_b < 0:
            crossing = r_a + (r_b - r_a) * k_a / (k_a - k_b)
            if crossing < upper:
                breaks.append(crossing)
    breaks = np.unique(breaks)

    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        # one-sided values inside [a, b]; Simpson is exact for the quadratic r * (linear)
        ka = float(np.maximum(-kappa_right(profile, np.array(a)), 0.0))
        kb = float(np.maximum(-kappa_left(profile, np.array(b)), 0.0))
        km = float(np.maximum(-kappa_right(profile, np.array(0.5 * (a + b))), 0.0))
        total += (b - a) / 6.0 * (a * ka + 4.0 * 0.5 * (a + b) * km + b * kb)
    return total
