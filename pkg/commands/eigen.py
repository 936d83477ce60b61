import argparse
import logging
import math
from typing import Optional

import numpy as np

import config
from commands.common import EXIT_FAILURE, EXIT_OK, CommandParams, add_common_arguments, emit, execute, format_rows
from models.run import RunConfig
from services.spectral_solver import DirichletEigenSolver, default_x_max, doublewell_bound, doublewell_potential

logger = logging.getLogger(__name__)


class EigenParams(CommandParams):
    L: float
    R: float
    ramp: float = 1.0
    kout: float = 1.0
    x_max: Optional[float] = None
    n_grid: int = config.EIGEN_N_GRID


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("eigen", help="first Dirichlet eigenvalue of the double-well generator against its bound")
    parser.add_argument("--L", type=float)
    parser.add_argument("--R", type=float)
    parser.add_argument("--ramp", type=float)
    parser.add_argument("--kout", type=float)
    parser.add_argument("--x-max", dest="x_max", type=float)
    parser.add_argument("--n-grid", dest="n_grid", type=int)
    add_common_arguments(parser)
    parser.set_defaults(handler=run_command)


def handle(params: EigenParams, run: RunConfig) -> int:
    bound = doublewell_bound(params.L, params.R)
    potential = doublewell_potential(params.L, params.R, params.ramp, params.kout)
    x_max = params.x_max or default_x_max(params.R, params.kout)

    solver = DirichletEigenSolver(n_grid=params.n_grid)
    result = solver.dirichlet_lambda1(potential.grad, x_max, U=potential.value)
    # trial function min(sqrt(L) x, 1) of the upper-bound argument, on the converged grid
    trial = solver.trial_rayleigh_quotient(
        potential.grad,
        x_max,
        result.n_grid,
        lambda x: np.minimum(math.sqrt(params.L) * x, 1.0),
        U=potential.value,
    )
    passed = result.lambda1 <= bound
    verdict = "PASS" if passed else "FAIL"
    logger.info(f"lambda1={result.lambda1:.10g}, bound={bound:.10g}: {verdict}")

    if run.format == "csv":
        header = ["lambda1", "bound", "trial_quotient", "n_grid", "x_max", "residual", "boundary_weight", "verdict"]
        emit(run, format_rows(header, [[result.lambda1, bound, trial, result.n_grid, x_max, result.residual, result.boundary_weight, verdict]]))
    else:
        emit(
            run,
            [
                f"lambda1={result.lambda1:.10g}",
                f"bound={bound:.10g}",
                f"trial_quotient={trial:.10g}",
                f"n_grid={result.n_grid} x_max={x_max:.6g} boundary_weight={result.boundary_weight:.3g}",
                verdict,
            ],
        )
    return EXIT_OK if passed else EXIT_FAILURE


def run_command(args: argparse.Namespace) -> int:
    return execute("eigen", EigenParams, handle, args)
