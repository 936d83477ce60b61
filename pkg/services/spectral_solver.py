import logging
import math
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import eigh_tridiagonal

import config
from models.spectral import EigenResult, Potential
from services.errors import DomainError, EigenSolverError

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8


def doublewell_potential(L: float, R: float, ramp_width: float = 1.0, K_out: float = 1.0) -> Potential:
    """
    Even potential with U'' = -L on [-R/2, R/2], U'' ramping linearly to K_out
    over [R/2, R/2 + ramp_width] and U'' = K_out beyond

    U and U' are integrated in closed form, U(0) = 0.
    """
    if not (ramp_width > 0 and K_out > 0):
        raise DomainError(f"ramp_width and K_out must be positive, got {ramp_width}, {K_out}")
    if L < 0 or R < 0:
        raise DomainError(f"L and R must be nonnegative, got L={L}, R={R}")
    a, w = R / 2.0, ramp_width
    slope = (L + K_out) / w
    b = a + w
    grad_b = -L * b + slope * w * w / 2.0
    value_b = -L * b * b / 2.0 + slope * w**3 / 6.0

    def grad(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = np.abs(x)
        inner = -L * s
        ramp = -L * s + slope * (s - a) ** 2 / 2.0
        outer = grad_b + K_out * (s - b)
        return np.sign(x) * np.where(s <= a, inner, np.where(s <= b, ramp, outer))

    def value(x: np.ndarray) -> np.ndarray:
        s = np.abs(np.asarray(x, dtype=float))
        inner = -L * s * s / 2.0
        ramp = -L * s * s / 2.0 + slope * (s - a) ** 3 / 6.0
        outer = value_b + grad_b * (s - b) + K_out * (s - b) ** 2 / 2.0
        return np.where(s <= a, inner, np.where(s <= b, ramp, outer))

    return Potential(value=value, grad=grad)


def doublewell_bound(L: float, R: float) -> float:
    """Upper bound 3/4 e^{1/2} L^{3/2} R exp(-L R^2 / 8) on the first Dirichlet eigenvalue, valid for L R^2 >= 4"""
    if not L * R * R >= 4:
        raise DomainError(f"the double-well eigenvalue bound requires L R^2 >= 4, got L R^2 = {L * R * R}")
    return 0.75 * math.exp(0.5) * L**1.5 * R * math.exp(-L * R * R / 8.0)


def default_x_max(R: float, K_out: float) -> float:
    return 4.0 * (R / 2.0 + math.sqrt(8.0 / K_out))


class DirichletEigenSolver:
    """
    First eigenvalue of -(v'' - U'v')/2 on (0, x_max) with v(0) = v(x_max) = 0

    The weighted form (1/2) int v'^2 e^{-U} / int v^2 e^{-U} is discretized with
    e^{-U} at cell midpoints and nodes and symmetrized, which gives a
    symmetric tridiagonal matrix whose smallest eigenvalue is found by
    Sturm-sequence bisection.
    """

    def __init__(
        self,
        n_grid: int = config.EIGEN_N_GRID,
        max_doublings: int = config.EIGEN_MAX_DOUBLINGS,
        rtol: float = config.EIGEN_RTOL,
    ):
        self.n_grid = n_grid
        self.max_doublings = max_doublings
        self.rtol = rtol

    def dirichlet_lambda1(
        self,
        grad_U: Callable[[np.ndarray], np.ndarray],
        x_max: float,
        n_grid: Optional[int] = None,
        U: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ) -> EigenResult:
        if not x_max > 0:
            raise DomainError(f"x_max must be positive, got {x_max}")
        n = n_grid or self.n_grid
        if n < 4:
            raise DomainError(f"n_grid must be at least 4, got {n}")

        iterates: List[float] = []
        for _ in range(self.max_doublings + 1):
            lam, residual, boundary_weight = self._solve(grad_U, U, x_max, n)
            iterates.append(lam)
            if residual >= RESIDUAL_TOL:
                logger.warning(f"Eigenvector residual {residual:.3g} above {RESIDUAL_TOL} at n={n}")
            if len(iterates) >= 2 and abs(iterates[-1] - iterates[-2]) <= self.rtol * abs(iterates[-1]):
                logger.info(f"lambda1={lam:.10g} on n={n}, x_max={x_max:.6g}")
                return EigenResult(
                    lambda1=lam,
                    n_grid=n,
                    x_max=x_max,
                    residual=residual,
                    boundary_weight=boundary_weight,
                    previous=iterates[-2],
                )
            n *= 2
        raise EigenSolverError(
            f"lambda1 did not stabilise to rtol={self.rtol} after {self.max_doublings} doublings",
            iterates[-2:],
        )

    def trial_rayleigh_quotient(
        self,
        grad_U: Callable[[np.ndarray], np.ndarray],
        x_max: float,
        n_grid: int,
        trial: Callable[[np.ndarray], np.ndarray],
        U: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ) -> float:
        """Discrete Rayleigh quotient of a trial function on the same grid (values at x_max are dropped)"""
        x, log_w_nodes, log_w_mid = self._weights(grad_U, U, x_max, n_grid)
        h = x_max / n_grid
        v = np.zeros(n_grid + 1)
        v[1:-1] = np.asarray(trial(x[1:-1]), dtype=float)
        shift = log_w_nodes.max()
        energy = 0.5 * np.sum(np.exp(log_w_mid - shift) * np.diff(v) ** 2) / h
        mass = np.sum(np.exp(log_w_nodes[1:-1] - shift) * v[1:-1] ** 2) * h
        return float(energy / mass)

    def _weights(self, grad_U, U, x_max: float, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Grid nodes and log e^{-U} at the nodes and the cell midpoints"""
        fine = np.linspace(0.0, x_max, 2 * n + 1)
        if U is not None:
            u = np.asarray(U(fine), dtype=float)
        else:
            u = cumulative_trapezoid(np.asarray(grad_U(fine), dtype=float), fine, initial=0.0)
        if not np.all(np.isfinite(u)):
            raise DomainError("potential is not finite on [0, x_max]")
        return fine[0::2], -u[0::2], -u[1::2]

    def _solve(self, grad_U, U, x_max: float, n: int) -> Tuple[float, float, float]:
        x, log_w_nodes, log_w_mid = self._weights(grad_U, U, x_max, n)
        h = x_max / n
        # interior nodes j = 1..n-1; entries use differences of log weights only
        lw = log_w_nodes[1:-1]
        diag = (np.exp(log_w_mid[:-1] - lw) + np.exp(log_w_mid[1:] - lw)) / (2.0 * h * h)
        off = -np.exp(log_w_mid[1:-1] - 0.5 * (lw[:-1] + lw[1:])) / (2.0 * h * h)
        w, v = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0), lapack_driver="stebz")
        lam = float(w[0])
        vec = v[:, 0]
        Av = diag * vec
        Av[:-1] += off * vec[1:]
        Av[1:] += off * vec[:-1]
        residual = float(np.linalg.norm(Av - lam * vec) / np.linalg.norm(vec))
        boundary_weight = float(np.exp(log_w_nodes[-1] - log_w_nodes.max()))
        return lam, residual, boundary_weight
