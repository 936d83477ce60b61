import argparse
import logging
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

import config
from commands.common import EXIT_OK, CommandParams, add_common_arguments, emit, execute, format_rows, parse_model_params, split_list
from models.bounds import InteractingRate
from models.run import RunConfig
from models.simulation import CouplingConfig, DecaySeries, RegisteredModel
from services.bounds_service import BoundsService
from services.coupling_simulator import BlockDistance
from services.curvature_service import CurvatureService
from services.distance_builder import DistanceBuilder
from services.errors import DomainError
from services.model_registry import ModelRegistry
from services.montecarlo_service import MonteCarloService

logger = logging.getLogger(__name__)


class EnsembleParams(CommandParams):
    model: str
    model_params: Optional[str] = None
    coupling: Literal["synchronous", "reflection", "componentwise"] = "reflection"
    paths: int = 1000
    seed: int = 0
    h: float = config.STEP_SIZE
    T: float = 10.0
    save_times: List[float]
    delta: float = 1e-3
    eps_merge: float = config.EPS_MERGE
    bridge_correction: bool = False
    profile: Optional[str] = None
    local: Optional[float] = None
    n_grid: int = config.N_GRID
    workers: int = config.MC_WORKERS
    chunk_size: int = config.MC_CHUNK_SIZE
    noise_block: int = config.NOISE_BLOCK

    @field_validator("save_times", mode="before")
    @classmethod
    def parse_save_times(cls, v):
        return split_list(v)

    @model_validator(mode="before")
    @classmethod
    def default_save_times(cls, data):
        # configured save times that fall inside the horizon
        if isinstance(data, dict) and data.get("save_times") is None:
            T = float(data.get("T", 10.0))
            data = {**data, "save_times": [t for t in config.SAVE_TIMES if t <= T]}
        return data


class Ensemble(BaseModel):
    """Everything an ensemble run needs, resolved from the command parameters"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    registered: RegisteredModel
    coupling: CouplingConfig
    distances: List[BlockDistance]
    rates: List[float]
    phi_R0: List[float]


def add_ensemble_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", help="built-in model name")
    parser.add_argument("--model-params", dest="model_params", help="model overrides, e.g. K=2,z0=1")
    parser.add_argument("--coupling", choices=["synchronous", "reflection", "componentwise"])
    parser.add_argument("--paths", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--h", type=float)
    parser.add_argument("--T", type=float)
    parser.add_argument("--save-times", dest="save_times", help="comma-separated list")
    parser.add_argument("--delta", type=float)
    parser.add_argument("--eps-merge", dest="eps_merge", type=float)
    parser.add_argument("--bridge-correction", dest="bridge_correction", action="store_const", const=True)
    parser.add_argument("--profile", help="profile CSV used for every block instead of the model's own")
    parser.add_argument("--local", type=float, help="use the local distance f_R with this R")
    parser.add_argument("--n-grid", dest="n_grid", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--chunk-size", dest="chunk_size", type=int)
    parser.add_argument("--noise-block", dest="noise_block", type=int)
    add_common_arguments(parser)


def prepare_ensemble(params: EnsembleParams) -> Ensemble:
    registered = ModelRegistry().build(params.model, **parse_model_params(params.model_params))
    if registered.max_step is not None and not params.h < registered.max_step:
        raise DomainError(f"step size h={params.h} must be below {registered.max_step:.6g} for model '{params.model}'")
    coupling = CouplingConfig(
        kind=params.coupling,
        delta=params.delta,
        eps_merge=params.eps_merge,
        h=params.h,
        T=params.T,
        save_times=tuple(params.save_times),
        n_paths=params.paths,
        seed=params.seed,
        bridge_correction=params.bridge_correction,
        noise_block=params.noise_block,
    )

    if params.profile is not None:
        shared = CurvatureService().read_csv(params.profile)
        profiles = [shared] * registered.model.n_blocks
        registered = registered.model_copy(update={"profiles": profiles})
    builder = DistanceBuilder(n_grid=params.n_grid)

    # interacting models repeat one profile object, build it once
    built = {}
    distances, rates, phi_R0 = [], [], []
    for profile in registered.profiles:
        key = id(profile)
        if key not in built:
            if params.local is not None:
                local = builder.build_local_distance(profile, params.local)
                # phi is nonincreasing, so phi(R) is below phi(R0) once R >= R0
                built[key] = (local, local.c_R, float(np.interp(params.local, local.grid, local.phi)))
            else:
                df = builder.build_distance(profile)
                built[key] = (df, df.c, df.phi_R0)
        dist, rate, phi = built[key]
        distances.append(dist)
        rates.append(rate)
        phi_R0.append(phi)
    return Ensemble(registered=registered, coupling=coupling, distances=distances, rates=rates, phi_R0=phi_R0)


def certified_rate(ensemble: Ensemble) -> Tuple[float, Optional[InteractingRate]]:
    """Rate the series is checked against: single-block c, product min c_i, or the interacting c_bar"""
    bounds = BoundsService()
    registered = ensemble.registered
    if registered.interaction is not None:
        interacting = bounds.interacting_rate(min(ensemble.rates), min(ensemble.phi_R0), registered.M, registered.interaction)
        return interacting.rate, interacting
    n = len(ensemble.rates)
    product = bounds.product_rate(ensemble.rates, [0.0] * n, ensemble.phi_R0, registered.weights)
    return product.rate, None


def run_ensemble(params: EnsembleParams, ensemble: Ensemble) -> DecaySeries:
    registered = ensemble.registered
    service = MonteCarloService(workers=params.workers, chunk_size=params.chunk_size)
    return service.estimate_mean_distance(
        registered.model,
        ensemble.coupling,
        ensemble.distances,
        registered.weights,
        registered.x0,
        registered.y0,
    )


def series_rows(series: DecaySeries) -> List[str]:
    rows = [[t, m, s, series.n_paths] for t, m, s in zip(series.times, series.mean, series.stderr)]
    return format_rows(["t", "mean_df", "stderr", "n_paths"], rows)


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="Monte Carlo estimate of E[d_f(X_t, Y_t)] under a coupling")
    add_ensemble_arguments(parser)
    parser.set_defaults(handler=run_command)


def handle(params: EnsembleParams, run: RunConfig) -> int:
    ensemble = prepare_ensemble(params)
    series = run_ensemble(params, ensemble)
    emit(run, series_rows(series))
    return EXIT_OK


def run_command(args: argparse.Namespace) -> int:
    return execute("simulate", EnsembleParams, handle, args)
