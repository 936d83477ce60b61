import argparse
import logging

import config
from commands.common import EXIT_FAILURE, EXIT_OK, CommandParams, add_common_arguments, emit, execute, format_rows
from models.run import RunConfig
from services.bounds_service import BoundsService
from services.curvature_service import CurvatureService
from services.distance_builder import DistanceBuilder

logger = logging.getLogger(__name__)

# The three local cases are bounds obtained analogously to the nonconvex lemma
MATCH_TOLERANCE = 0.1


class HeatEqParams(CommandParams):
    d: int
    L: float = 0.0
    R: float = 1.0
    n_grid: int = config.N_GRID


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("heat-eq", help="K_d and the rate bound of the discretized heat equation against quadrature")
    parser.add_argument("--d", type=int)
    parser.add_argument("--L", type=float)
    parser.add_argument("--R", type=float)
    parser.add_argument("--n-grid", dest="n_grid", type=int)
    add_common_arguments(parser)
    parser.set_defaults(handler=run_command)


def handle(params: HeatEqParams, run: RunConfig) -> int:
    result = BoundsService().heat_eq_rate(params.d, params.L, params.R)
    profile = CurvatureService().heat_eq_profile(params.d, params.L)
    builder = DistanceBuilder(n_grid=params.n_grid)
    if result.local:
        quadrature = builder.build_local_distance(profile, params.R).c_R
    else:
        quadrature = builder.build_distance(profile).c

    # the closed form bounds 1/c from above; allow the stated slack
    inverse_quadrature = 1.0 / quadrature
    passed = inverse_quadrature <= result.inverse_bound * (1.0 + MATCH_TOLERANCE)
    verdict = "PASS" if passed else "FAIL"
    logger.info(f"heat-eq d={params.d}: K_d={result.K_d:.10g}, bound 1/c={result.inverse_bound:.6g}, quadrature 1/c={inverse_quadrature:.6g}")

    if run.format == "csv":
        header = ["K_d", "case_tag", "local", "rate_bound", "inverse_bound", "quadrature_rate", "verdict"]
        emit(run, format_rows(header, [[result.K_d, result.case_tag, result.local, result.rate, result.inverse_bound, quadrature, verdict]]))
    else:
        emit(
            run,
            [
                f"K_d={result.K_d:.10g}",
                f"case={result.case_tag} ({'local c_R' if result.local else 'global c'})",
                f"rate_bound={result.rate:.10g} inverse_bound={result.inverse_bound:.10g}",
                f"quadrature_rate={quadrature:.10g}",
                verdict,
            ],
        )
    return EXIT_OK if passed else EXIT_FAILURE


def run_command(args: argparse.Namespace) -> int:
    return execute("heat-eq", HeatEqParams, handle, args)
