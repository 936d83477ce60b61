from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict

Command = Literal["rate", "bounds", "simulate", "eigen", "verify", "heat-eq"]


def format_value(value: Any) -> str:
    """Render a resolved parameter so that parsing it back gives the same value"""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    return str(value)


class RunConfig(BaseModel):
    """Resolved run of one sub-command: every parameter after config file, flags and defaults are merged"""

    model_config = ConfigDict(frozen=True)

    command: Command
    params: Dict[str, Any]
    output: Optional[str] = None
    format: Literal["human", "csv"] = "human"

    def echo_lines(self) -> List[str]:
        """`# key=value` header lines; the header itself is a valid --config file"""
        lines = [f"# command={self.command}", f"# format={self.format}"]
        for key in sorted(self.params):
            value = self.params[key]
            if value is None:
                continue
            lines.append(f"# {key}={format_value(value)}")
        return lines
