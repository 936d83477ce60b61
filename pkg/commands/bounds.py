import argparse
import logging
from typing import List, Literal, Optional

from pydantic import field_validator, model_validator

from commands.common import EXIT_FAILURE, EXIT_OK, CommandParams, add_common_arguments, emit, execute, format_rows, split_list
from models.bounds import InteractionMatrix
from models.run import RunConfig
from services.bounds_service import BoundsService

logger = logging.getLogger(__name__)

# Parameters each case cannot do without
REQUIRED = {
    "lemma": ["R", "L", "K"],
    "perturb": ["c0", "R"],
    "product": ["c", "phi"],
    "interact": ["base_c", "phi_R0", "M", "n", "coupling"],
    "heat": ["d", "L", "R"],
}


class BoundsParams(CommandParams):
    case: Literal["lemma", "perturb", "product", "interact", "heat"]
    R: Optional[float] = None
    L: Optional[float] = None
    K: Optional[float] = None
    alpha: float = 1.0
    c0: Optional[float] = None
    sup_gamma: Optional[float] = None
    L_pert: Optional[float] = None
    R0: Optional[float] = None
    c: Optional[List[float]] = None
    eps: Optional[List[float]] = None
    phi: Optional[List[float]] = None
    w: Optional[List[float]] = None
    lam: Optional[float] = None
    base_c: Optional[float] = None
    phi_R0: Optional[float] = None
    M: Optional[float] = None
    n: Optional[int] = None
    coupling: Optional[float] = None
    kind: Literal["mean_field", "nearest_neighbour"] = "mean_field"
    d: Optional[int] = None

    @field_validator("c", "eps", "phi", "w", mode="before")
    @classmethod
    def parse_lists(cls, v):
        return split_list(v)

    @model_validator(mode="after")
    def check_required(self) -> "BoundsParams":
        missing = [name for name in REQUIRED[self.case] if getattr(self, name) is None]
        if missing:
            raise ValueError(f"case '{self.case}' needs {', '.join(missing)}")
        if self.case == "perturb" and (self.sup_gamma is None) == (self.L_pert is None):
            raise ValueError("case 'perturb' needs exactly one of sup_gamma and L_pert")
        return self


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("bounds", help="closed-form rate bounds")
    parser.add_argument("--case", choices=list(REQUIRED))
    for name in ("R", "L", "K", "alpha", "c0", "R0", "lam", "base_c", "phi_R0", "M", "coupling"):
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float)
    parser.add_argument("--sup-gamma", dest="sup_gamma", type=float)
    parser.add_argument("--L-pert", dest="L_pert", type=float)
    for name in ("c", "eps", "phi", "w"):
        parser.add_argument(f"--{name}", help="comma-separated list")
    parser.add_argument("--n", type=int)
    parser.add_argument("--d", type=int)
    parser.add_argument("--kind", choices=["mean_field", "nearest_neighbour"])
    add_common_arguments(parser)
    parser.set_defaults(handler=run_command)


def handle(params: BoundsParams, run: RunConfig) -> int:
    bounds = BoundsService()
    certified = True

    if params.case == "lemma":
        result = bounds.lemma_rate_bound(params.R, params.L, params.K, params.alpha)
        row = {"value": result.value, "case_tag": result.case_tag, "inverse_bound": result.inverse_bound}
        if result.simplified_value is not None:
            row["simplified_value"] = result.simplified_value
    elif params.case == "perturb":
        if params.sup_gamma is not None:
            result = bounds.perturbation_bounded(params.c0, params.R, params.sup_gamma, params.R0)
        else:
            result = bounds.perturbation_lipschitz(params.c0, params.R, params.L_pert, params.R0)
        row = {"value": result.value, "case_tag": result.kind}
        if result.radius_within_R0 is not None:
            row["radius_within_R0"] = result.radius_within_R0
    elif params.case == "product":
        if params.lam is not None:
            result = bounds.perturbed_product_rate(params.c, params.phi, params.lam)
            case_tag = "perturbed_product"
        else:
            n = len(params.c)
            eps = params.eps if params.eps is not None else [0.0] * n
            w = params.w if params.w is not None else [1.0] * n
            result = bounds.product_rate(params.c, eps, params.phi, w)
            case_tag = "product"
        certified = result.certified
        row = {"value": result.rate, "case_tag": case_tag, "A": result.A, "certified": result.certified}
    elif params.case == "interact":
        if params.kind == "mean_field":
            matrix = InteractionMatrix.mean_field(params.n, params.coupling)
        else:
            matrix = InteractionMatrix.nearest_neighbour(params.n, params.coupling)
        result = bounds.interacting_rate(params.base_c, params.phi_R0, params.M, matrix)
        certified = result.certified
        row = {
            "value": result.rate,
            "case_tag": params.kind,
            "certified": result.certified,
            "condition_holds": result.condition_holds,
            "lam": result.lam,
            "theta": result.theta,
            "A": result.A,
        }
    else:
        result = bounds.heat_eq_rate(params.d, params.L, params.R)
        row = {
            "value": result.rate,
            "case_tag": result.case_tag,
            "K_d": result.K_d,
            "inverse_bound": result.inverse_bound,
            "local": result.local,
        }

    if run.format == "csv":
        emit(run, format_rows(["case"] + list(row), [[params.case] + list(row.values())]))
    else:
        lines = [f"c >= {row['value']:.10g} ({row['case_tag']})"]
        lines += [f"{key}={value:.10g}" if isinstance(value, float) else f"{key}={value}" for key, value in row.items() if key not in ("value", "case_tag")]
        if not certified:
            lines.append("no contraction certified")
        emit(run, lines)
    return EXIT_OK if certified else EXIT_FAILURE


def run_command(args: argparse.Namespace) -> int:
    return execute("bounds", BoundsParams, handle, args)
