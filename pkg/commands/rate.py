import argparse
import logging
from typing import Optional

from pydantic import field_validator, model_validator

import config
from commands.common import EXIT_OK, CommandParams, add_common_arguments, emit, execute, format_rows, parse_model_params
from models.run import RunConfig
from services.curvature_service import CurvatureService
from services.distance_builder import DistanceBuilder
from services.errors import DomainError
from services.model_registry import ModelRegistry

logger = logging.getLogger(__name__)


class RateParams(CommandParams):
    profile: Optional[str] = None
    model: Optional[str] = None
    model_params: Optional[str] = None
    block: int = 0
    n_grid: int = config.N_GRID
    local: Optional[float] = None
    table: Optional[str] = None
    save_profile: Optional[str] = None

    @field_validator("local")
    @classmethod
    def validate_local(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not v > 0:
            raise ValueError(f"local radius must be positive, got {v}")
        return v

    @model_validator(mode="after")
    def check_source(self) -> "RateParams":
        if (self.profile is None) == (self.model is None):
            raise ValueError("give exactly one of profile and model")
        return self


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("rate", help="R0, R1 and the contraction rate c of a curvature profile")
    parser.add_argument("--profile", help="profile CSV with header r,kappa")
    parser.add_argument("--model", help="take the profile of a built-in model instead")
    parser.add_argument("--model-params", dest="model_params", help="model overrides, e.g. K=2,dim=1")
    parser.add_argument("--block", type=int)
    parser.add_argument("--n-grid", dest="n_grid", type=int)
    parser.add_argument("--local", type=float, help="also report the local rate c_R at this R")
    parser.add_argument("--table", help="write the f-table (r,phi,Phi,g,f) to this CSV")
    parser.add_argument("--save-profile", dest="save_profile", help="write the profile used to this CSV")
    add_common_arguments(parser)
    parser.set_defaults(handler=run_command)


def handle(params: RateParams, run: RunConfig) -> int:
    curvature = CurvatureService()
    if params.profile is not None:
        profile = curvature.read_csv(params.profile)
    else:
        registered = ModelRegistry().build(params.model, **parse_model_params(params.model_params))
        if not 0 <= params.block < len(registered.profiles):
            raise DomainError(f"block must lie in [0, {len(registered.profiles) - 1}], got {params.block}")
        profile = registered.profiles[params.block]
    if params.save_profile:
        curvature.write_csv(profile, params.save_profile)

    builder = DistanceBuilder(n_grid=params.n_grid)
    df = builder.build_distance(profile)
    c_R = builder.build_local_distance(profile, params.local).c_R if params.local is not None else None

    if params.table:
        table = format_rows(["r", "phi", "Phi", "g", "f"], zip(df.grid, df.phi, df.Phi, df.g, df.f))
        with open(params.table, "w") as fh:
            fh.write("\n".join(run.echo_lines() + table) + "\n")
        logger.info(f"Wrote f-table with {df.grid.size} rows to {params.table}")

    if run.format == "csv":
        header = ["R0", "R1", "c"] + (["c_R"] if c_R is not None else [])
        values = [df.R0, df.R1, df.c] + ([c_R] if c_R is not None else [])
        emit(run, format_rows(header, [values]))
    else:
        lines = [f"R0={df.R0:.10g}", f"R1={df.R1:.10g}", f"c={df.c:.10g}"]
        if c_R is not None:
            lines.append(f"c_R={c_R:.10g} (R={params.local:g})")
        lines.append(f"phi(R0)={df.phi_R0:.10g}")
        emit(run, lines)
    return EXIT_OK


def run_command(args: argparse.Namespace) -> int:
    return execute("rate", RateParams, handle, args)
