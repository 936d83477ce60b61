import argparse
import io
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, ValidationError

from models.run import RunConfig
from services.errors import ContractionKitError, DomainError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

RESERVED_KEYS = {"command", "format", "output", "config"}


class CommandParams(BaseModel):
    """Base of the per-command parameter models; unknown keys are rejected"""

    model_config = ConfigDict(extra="forbid", frozen=True)


def split_list(value: Any) -> Any:
    # list parameters arrive as "a,b,c" from flags and config files
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return value


def parse_model_params(text: Optional[str]) -> Dict[str, float]:
    """'K=2,dim=1' -> {'K': 2.0, 'dim': 1.0}"""
    if not text:
        return {}
    params = {}
    for item in text.split(","):
        if "=" not in item:
            raise DomainError(f"model parameter '{item}' is not of the form key=value")
        key, value = item.split("=", 1)
        try:
            params[key.strip()] = float(value)
        except ValueError:
            raise DomainError(f"model parameter '{key.strip()}' must be a number, got '{value}'")
    return params


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value file; an output header can be replayed as a config")
    parser.add_argument("--out", dest="output", help="write output to this file instead of stdout")
    parser.add_argument("--format", choices=["human", "csv"], default=argparse.SUPPRESS)


def read_config_file(path: str) -> Dict[str, str]:
    """Parse a key=value config file; when the file carries `# key=value` header lines only those are read"""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise DomainError(f"cannot read config file {path}: {e}")
    lines = text.splitlines()
    header = [line[2:] for line in lines if line.startswith("# ") and "=" in line]
    body = "\n".join(header) if header else text
    values = dotenv_values(stream=io.StringIO(body))
    return {key.replace("-", "_"): value for key, value in values.items() if value is not None}


def resolve_run(
    command: str,
    params_model: Type[CommandParams],
    args: argparse.Namespace,
) -> Tuple[RunConfig, CommandParams]:
    """Merge defaults, config file and flags (later wins) and validate against the command's model"""
    flags = {k: v for k, v in vars(args).items() if k not in ("handler", "command_name") and v is not None}
    merged: Dict[str, Any] = {}
    if flags.get("config"):
        from_file = read_config_file(flags["config"])
        if from_file.get("command", command) != command:
            raise DomainError(f"config file is for command '{from_file['command']}', not '{command}'")
        merged.update(from_file)
    merged.update(flags)

    output = merged.get("output")
    fmt = merged.get("format", "human")
    values = {k: v for k, v in merged.items() if k not in RESERVED_KEYS}
    params = params_model(**values)
    run = RunConfig(command=command, params=params.model_dump(), output=output, format=fmt)
    return run, params


def emit(run: RunConfig, body: Sequence[str]) -> None:
    text = "\n".join(list(run.echo_lines()) + list(body)) + "\n"
    if run.output:
        Path(run.output).write_text(text)
        logger.info(f"Wrote {run.output}")
    else:
        sys.stdout.write(text)


def execute(command: str, params_model: Type[CommandParams], handler, args: argparse.Namespace) -> int:
    """
    Run a command handler and map its outcome to an exit code

    Usage, validation and domain errors give 2; certified and computational
    failures give 1. Every error is reported with the violated precondition.
    """
    try:
        run, params = resolve_run(command, params_model, args)
        logger.info(f"Running {command} with {run.params}")
        return handler(params, run)
    except ValidationError as e:
        messages = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        logger.error(f"Invalid parameters for {command}: {messages}")
        print(f"error: {messages}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as e:
        logger.error(f"{command} failed a precondition: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ContractionKitError as e:
        logger.error(f"{command} failed: {e}")
        print(f"failure: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        logger.exception(f"Unexpected error in {command}: {e}")
        print(f"failure: {e}", file=sys.stderr)
        return EXIT_FAILURE


def format_rows(header: List[str], rows: Sequence[Sequence[Any]]) -> List[str]:
    """CSV rows with floats in repr form so that values survive a round trip"""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    return lines
