import argparse
import logging

from commands.common import EXIT_FAILURE, EXIT_OK, emit, execute
from commands.simulate import EnsembleParams, add_ensemble_arguments, certified_rate, prepare_ensemble, run_ensemble, series_rows
from models.run import RunConfig
from services.bounds_service import BoundsService
from services.errors import NoContractionError
from services.montecarlo_service import MonteCarloService

logger = logging.getLogger(__name__)


class VerifyParams(EnsembleParams):
    paths: int = 10000


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("verify", help="estimate, fit and check the contraction of E[d_f(X_t, Y_t)]")
    add_ensemble_arguments(parser)
    parser.set_defaults(handler=run_command)


def handle(params: VerifyParams, run: RunConfig) -> int:
    """
    Run estimate -> fit -> check_contraction for a registered model

    Passes when e^{ct} E[d_f] is nonincreasing within the statistical slack and
    the fitted rate is at least c minus two fit standard errors. Componentwise
    runs must also keep their final value below the m(delta)/c floor.
    """
    ensemble = prepare_ensemble(params)
    c, interacting = certified_rate(ensemble)
    if interacting is not None and not interacting.certified:
        raise NoContractionError(
            f"interaction does not certify contraction: c_bar={interacting.rate:.6g}, condition_holds={interacting.condition_holds}",
            rate=interacting.rate,
        )

    series = run_ensemble(params, ensemble)
    monte_carlo = MonteCarloService(workers=params.workers, chunk_size=params.chunk_size)
    fit = monte_carlo.fit_decay_rate(series)
    contraction = monte_carlo.check_contraction(series, c)
    rate_ok = fit.rate >= c - 2.0 * fit.rate_stderr

    report = [
        f"c={c:.10g}",
        f"fitted_rate={fit.rate:.6g} +- {fit.rate_stderr:.2g} (r2={fit.r_squared:.4f}, points {fit.window[0]}..{fit.window[1]})",
        f"contraction={'PASS' if contraction.passed else 'FAIL'} worst_violation={contraction.worst_violation:.3g}",
        f"rate_lower_bound={'PASS' if rate_ok else 'FAIL'}",
    ]
    passed = contraction.passed and rate_ok

    if params.coupling == "componentwise":
        penalty = BoundsService().componentwise_penalty(ensemble.registered.profiles, ensemble.rates, params.delta)
        floor = monte_carlo.check_floor(series, penalty.m_delta, c)
        report.append(f"floor={floor.floor:.6g} threshold={floor.threshold:.6g} m_delta={floor.m_delta:.6g}: {'PASS' if floor.passed else 'FAIL'}")
        passed = passed and floor.passed

    report.append("PASS" if passed else "FAIL")
    emit(run, series_rows(series))
    # the report stays out of the series file so the file can be replayed as a config
    print("\n".join(report))
    return EXIT_OK if passed else EXIT_FAILURE


def run_command(args: argparse.Namespace) -> int:
    return execute("verify", VerifyParams, handle, args)
