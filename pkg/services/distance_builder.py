import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import bisect

import config
from models.curvature import CurvatureProfile
from models.distance import DistanceFunction, LocalDistanceFunction
from services.curvature_service import CurvatureService, kappa_left, kappa_lower, kappa_right
from services.errors import DomainError, QuadratureError

logger = logging.getLogger(__name__)

T = TypeVar("T")

# Geometric grid points B * 2^-j added below the first breakpoint B
GEOMETRIC_LEVELS = 20


class DistanceBuilder:
    """Builds the concave distance f, the radii R0/R1 and the contraction rate c from a curvature profile"""

    def __init__(
        self,
        n_grid: int = config.N_GRID,
        max_doublings: int = config.MAX_DOUBLINGS,
        rtol: float = config.RATE_RTOL,
        xtol: float = config.RADIUS_XTOL,
    ):
        if n_grid < 64:
            raise DomainError(f"n_grid must be at least 64, got {n_grid}")
        self.n_grid = n_grid
        self.max_doublings = max_doublings
        self.rtol = rtol
        self.xtol = xtol
        self.curvature = CurvatureService()

    # ------------------------------------------------------------------
    # Radii
    # ------------------------------------------------------------------

    def compute_R0(self, profile: CurvatureProfile) -> float:
        """Smallest R with kappa(r) >= 0 for all r >= R (lower one-sided limits at jumps)"""
        radii, kappa = profile.radii, profile.kappa
        if min(kappa[-1], profile.tail_value) < 0:
            return float(radii[-1])
        for j in range(len(radii) - 2, -1, -1):
            k_a, k_b = kappa[j], kappa[j + 1]
            if k_a < 0:
                # k_b >= 0 here, so kappa crosses zero inside [r_j, r_j+1]
                return float(radii[j] + (radii[j + 1] - radii[j]) * (-k_a) / (k_b - k_a))
        return 0.0

    def compute_R1(self, profile: CurvatureProfile, R0: float) -> float:
        """Smallest R >= R0 with inf_{r >= R} kappa(r) * R * (R - R0) >= 8"""
        radii = np.asarray(profile.radii)
        r_last = float(radii[-1])
        suffix = _knot_suffix_min(profile)

        def condition(R: float) -> float:
            return _suffix_min(profile, suffix, R) * R * (R - R0) - 8.0

        if condition(r_last) < 0:
            # only the tail can satisfy the condition: solve tail * R * (R - R0) = 8
            closed = 0.5 * (R0 + math.sqrt(R0 * R0 + 32.0 / profile.tail_value))
            return max(closed, r_last)

        lower = R0
        for r in radii[radii > R0]:
            if condition(float(r)) >= 0:
                return float(bisect(condition, lower, float(r), xtol=self.xtol))
            lower = float(r)
        # unreachable: the last knot satisfies the condition
        return r_last

    # ------------------------------------------------------------------
    # Global distance
    # ------------------------------------------------------------------

    def build_distance(self, profile: CurvatureProfile, n_grid: Optional[int] = None) -> DistanceFunction:
        """
        Tabulate phi, Phi, g, f and compute c = 1 / (alpha * int_0^R1 Phi/phi)

        The grid is doubled until c changes by less than rtol between two
        successive meshes.
        """
        self.curvature.require_valid(profile)
        n = self._check_n_grid(n_grid)
        R0 = self.compute_R0(profile)
        R1 = self.compute_R1(profile, R0)
        alpha = profile.metric.alpha
        r_max = 1.5 * max(R1, profile.last_radius)
        breakpoints = _breakpoints(profile, r_max) + [R0, R1]

        def tabulate(r: np.ndarray) -> DistanceFunction:
            phi, Phi, J = _tabulate(profile, r)
            i0 = _index_of(r, R0)
            i1 = _index_of(r, R1)
            J1 = J[i1]
            g = 1.0 - 0.5 * J[np.minimum(np.arange(r.size), i1)] / J1
            f_prime = phi * g
            f = cumulative_trapezoid(f_prime, r, initial=0.0)
            return DistanceFunction(
                profile=profile,
                grid=r,
                phi=phi,
                Phi=Phi,
                g=g,
                f=f,
                f_prime=f_prime,
                R0=R0,
                R1=R1,
                c=1.0 / (alpha * J1),
                alpha=alpha,
                phi_R0=float(phi[i0]),
                slope_beyond=float(phi[i0]) / 2.0,
                f_R1=float(f[i1]),
            )

        df, doublings = self._refine(breakpoints, n, tabulate, lambda d: d.c)
        df = df.model_copy(update={"n_doublings": doublings})
        logger.info(f"Built distance: R0={R0:.10g}, R1={R1:.10g}, c={df.c:.10g} ({df.grid.size} points)")
        return df

    def eval_f(self, df: DistanceFunction, r: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        arr = _check_radius(r)
        inside = np.interp(np.minimum(arr, df.R1), df.grid, df.f)
        values = np.where(arr > df.R1, df.f_R1 + (arr - df.R1) * df.slope_beyond, inside)
        return float(values) if np.ndim(r) == 0 else values

    def eval_f_prime(self, df: DistanceFunction, r: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        arr = _check_radius(r)
        inside = np.interp(np.minimum(arr, df.R1), df.grid, df.f_prime)
        values = np.where(arr > df.R1, df.slope_beyond, inside)
        return float(values) if np.ndim(r) == 0 else values

    def mixing_time_bound(self, df: DistanceFunction, eps: float) -> float:
        """Time after which the W1 distance to equilibrium is at most eps times its initial value"""
        if not 0 < eps < 1:
            raise DomainError(f"eps must lie in (0, 1), got {eps}")
        return math.log(2.0 / (eps * df.phi_R0)) / df.c

    def w1_contraction_factor(self, df: DistanceFunction, t: float) -> float:
        """Factor A e^{-ct} with A = 2/phi(R0) in W1(mu p_t, nu p_t) <= A e^{-ct} W1(mu, nu)"""
        if t < 0:
            raise DomainError(f"t must be nonnegative, got {t}")
        return 2.0 / df.phi_R0 * math.exp(-df.c * t)

    def differential_inequality_residual(self, df: DistanceFunction) -> float:
        """
        Largest value of f'' - r kappa f'/4 + (alpha c/2) f over interval midpoints

        f'' is the difference quotient of the tabulated f' on each interval,
        which is a centered estimate at the midpoint.
        """
        r = df.grid
        h = np.diff(r)
        keep = h > 0
        mid = 0.5 * (r[1:] + r[:-1])[keep]
        f_second = (np.diff(df.f_prime) / np.where(keep, h, 1.0))[keep]
        f_prime_mid = 0.5 * (df.f_prime[1:] + df.f_prime[:-1])[keep]
        f_mid = 0.5 * (df.f[1:] + df.f[:-1])[keep]
        kappa_mid = kappa_right(df.profile, mid)
        residual = f_second - 0.25 * mid * kappa_mid * f_prime_mid + 0.5 * df.alpha * df.c * f_mid
        return float(residual.max())

    # ------------------------------------------------------------------
    # Local distance
    # ------------------------------------------------------------------

    def build_local_distance(self, profile: CurvatureProfile, R: float, n_grid: Optional[int] = None) -> LocalDistanceFunction:
        """f_R cut at f_R(R) with local rate c_R = 1 / (alpha * int_0^R Phi/phi); no tail condition"""
        if not R > 0:
            raise DomainError(f"R must be positive, got {R}")
        self.curvature.require_valid(profile, require_tail=False)
        n = self._check_n_grid(n_grid)
        alpha = profile.metric.alpha
        breakpoints = _breakpoints(profile, 1.5 * R) + [R]

        def tabulate(r: np.ndarray) -> LocalDistanceFunction:
            phi, _, J = _tabulate(profile, r)
            iR = _index_of(r, R)
            g_R = 1.0 - J[np.minimum(np.arange(r.size), iR)] / J[iR]
            f_R = cumulative_trapezoid(phi * g_R, r, initial=0.0)
            return LocalDistanceFunction(
                profile=profile,
                R=R,
                grid=r,
                phi=phi,
                g_R=g_R,
                f_R=f_R,
                c_R=1.0 / (alpha * J[iR]),
                cap=float(f_R[iR]),
                alpha=alpha,
            )

        local, doublings = self._refine(breakpoints, n, tabulate, lambda d: d.c_R)
        logger.info(f"Built local distance: R={R:.6g}, c_R={local.c_R:.10g}")
        return local.model_copy(update={"n_doublings": doublings})

    def eval_local_f(self, local: LocalDistanceFunction, r: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        arr = _check_radius(r)
        values = np.where(arr >= local.R, local.cap, np.interp(np.minimum(arr, local.R), local.grid, local.f_R))
        return float(values) if np.ndim(r) == 0 else values

    def local_rate_curve(self, profile: CurvatureProfile, radii: Sequence[float], n_grid: Optional[int] = None) -> np.ndarray:
        """c_R for every R in radii from one shared tabulation"""
        R = np.asarray(radii, dtype=float)
        if R.size == 0 or np.any(R <= 0):
            raise DomainError("radii must be positive")
        self.curvature.require_valid(profile, require_tail=False)
        n = self._check_n_grid(n_grid)
        alpha = profile.metric.alpha
        breakpoints = _breakpoints(profile, 1.5 * float(R.max())) + list(R)

        def tabulate(r: np.ndarray) -> np.ndarray:
            _, _, J = _tabulate(profile, r)
            return 1.0 / (alpha * J[[_index_of(r, v) for v in R]])

        rates, _ = self._refine(breakpoints, n, tabulate, lambda c: c)
        return rates

    # ------------------------------------------------------------------
    # Mesh refinement
    # ------------------------------------------------------------------

    def _check_n_grid(self, n_grid: Optional[int]) -> int:
        n = self.n_grid if n_grid is None else n_grid
        if n < 64:
            raise DomainError(f"n_grid must be at least 64, got {n}")
        return n

    def _refine(self, breakpoints: List[float], n_grid: int, tabulate: Callable[[np.ndarray], T], key) -> Tuple[T, int]:
        r = _initial_grid(breakpoints, n_grid)
        previous = None
        iterates: List[float] = []
        for doubling in range(self.max_doublings + 1):
            result = tabulate(r)
            current = np.atleast_1d(np.asarray(key(result), dtype=float))
            iterates.append(float(current[0]))
            if previous is not None and np.all(np.abs(current - previous) <= self.rtol * np.abs(current)):
                return result, doubling
            previous = current
            r = _double(r)
        raise QuadratureError(
            f"rate did not stabilise to rtol={self.rtol} after {self.max_doublings} doublings",
            iterates[-2:],
        )


def _check_radius(r) -> np.ndarray:
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DomainError(f"f is only defined for finite r >= 0, got {r}")
    return arr


def _knot_suffix_min(profile: CurvatureProfile) -> np.ndarray:
    """suffix[j] = inf of kappa over r >= r_j, using min(kappa_N, tail) at the last knot"""
    values = np.asarray(profile.kappa, dtype=float).copy()
    values[-1] = min(values[-1], profile.tail_value)
    return np.minimum.accumulate(values[::-1])[::-1]


def _suffix_min(profile: CurvatureProfile, suffix: np.ndarray, R: float) -> float:
    radii = np.asarray(profile.radii)
    if R > radii[-1]:
        return profile.tail_value
    j = int(np.searchsorted(radii, R, side="left"))
    # R lies in (r_{j-1}, r_j]; kappa is linear there and the rest is covered by suffix[j]
    return float(min(kappa_lower(profile, np.array(R)), suffix[j]))


def _breakpoints(profile: CurvatureProfile, r_max: float) -> List[float]:
    """Radii the grid must contain: knots, zero crossings of kappa, 0 and r_max"""
    points = [0.0, r_max] + [r for r in profile.radii if r < r_max]
    for (r_a, k_a), (r_b, k_b) in zip(profile.knots, profile.knots[1:]):
        if k_a * k_b < 0:
            crossing = r_a + (r_b - r_a) * k_a / (k_a - k_b)
            if crossing < r_max:
                points.append(crossing)
    return points


def _initial_grid(breakpoints: List[float], n_grid: int) -> np.ndarray:
    pts = np.unique(np.asarray(breakpoints, dtype=float))
    pts = pts[pts >= 0]
    total = pts[-1] - pts[0]
    pieces = [
        np.linspace(a, b, max(1, int(math.ceil(n_grid * (b - a) / total))) + 1)
        for a, b in zip(pts[:-1], pts[1:])
    ]
    geometric = pts[1] * 2.0 ** -np.arange(1, GEOMETRIC_LEVELS + 1)
    return np.unique(np.concatenate(pieces + [geometric]))


def _double(r: np.ndarray) -> np.ndarray:
    out = np.empty(2 * r.size - 1)
    out[0::2] = r
    out[1::2] = 0.5 * (r[1:] + r[:-1])
    return out


def _index_of(r: np.ndarray, value: float) -> int:
    return int(np.argmin(np.abs(r - value)))


def _tabulate(profile: CurvatureProfile, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    phi = exp(-I/4) with I the exact integral of s kappa(s)^-, then Phi and
    J = int Phi/phi by cumulative trapezoid
    """
    a, b = r[:-1], r[1:]
    m = 0.5 * (a + b)
    # kappa is linear without sign change inside each interval, so Simpson is exact
    ka = np.maximum(-kappa_right(profile, a), 0.0)
    kb = np.maximum(-kappa_left(profile, b), 0.0)
    km = np.maximum(-kappa_right(profile, m), 0.0)
    pieces = (b - a) / 6.0 * (a * ka + 4.0 * m * km + b * kb)
    integral = np.concatenate([[0.0], np.cumsum(pieces)])
    phi = np.exp(-0.25 * integral)
    Phi = cumulative_trapezoid(phi, r, initial=0.0)
    J = cumulative_trapezoid(Phi / phi, r, initial=0.0)
    return phi, Phi, J
