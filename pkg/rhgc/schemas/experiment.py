import re
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, ValidationInfo, field_validator, model_validator

from rhgc.core.errors import ConfigError

ALGORITHM_NAME = re.compile(r"^(foss|rhgd|rhag|rhtm|submpc-([1-9][0-9]*))$")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# System matrices given inline or as plain-text matrix files
class SystemSpec(_Section):
    A: Optional[List[List[float]]] = None
    B: Optional[List[List[float]]] = None
    A_file: Optional[str] = None
    B_file: Optional[str] = None
    # Dimensions of randomly drawn systems
    n: int = Field(2, ge=1)
    m: int = Field(1, ge=1)

    @field_validator("A_file", "B_file")
    @classmethod
    def file_exists(cls, value: Optional[str], info: ValidationInfo) -> Optional[str]:
        if value is None:
            return value
        base = (info.context or {}).get("base_dir")
        path = Path(value)
        if not path.is_absolute() and base is not None:
            path = Path(base) / path
        if not path.is_file():
            raise ValueError(f"matrix file '{value}' does not exist")
        return str(path)


# Distribution of random stage costs
class CostSpec(_Section):
    kind: Literal["quadratic", "pseudo-huber"] = "quadratic"
    weight_low: float = Field(1.0, gt=0)
    weight_high: float = Field(2.0, gt=0)
    theta_low: float = -10.0
    theta_high: float = 10.0
    time_invariant: bool = False
    terminal: Literal["stage", "dare"] = "stage"
    x0: Optional[List[float]] = None
    # Pseudo-Huber state costs only
    curvature: float = Field(1.0, gt=0)
    scale: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def ordered_ranges(self) -> "CostSpec":
        if self.weight_low > self.weight_high:
            raise ValueError("weight_low must not exceed weight_high")
        if self.theta_low > self.theta_high:
            raise ValueError("theta_low must not exceed theta_high")
        return self


# Parameters of the lower-bound instance family
class LowerBoundSpec(_Section):
    zeta: float = Field(5.0, gt=1)
    p: int = Field(2, ge=1)
    L_N: float = Field(8.0, gt=0)
    theta_bar: float = Field(1.0, gt=0)


# Two-wheel robot tracking demo
class RobotSpec(_Section):
    reference: Literal["heart", "line"] = "heart"
    dt: float = Field(0.025, gt=0)
    sim_dt: float = Field(0.001, gt=0)
    control_scale: float = Field(15.0, ge=0)
    # Reference parameter per second; one lap over the horizon when omitted
    time_scale: Optional[float] = None
    speed: float = Field(1.0, gt=0)
    heading: float = 0.0
    oracle: Literal["reference", "hold"] = "reference"
    finite_difference: bool = False


# Which problem instances are built for each seed
class InstanceSpec(_Section):
    source: Literal["explicit", "lqt-random", "lower-bound", "robot"]
    N: int = Field(ge=2)
    system: SystemSpec = SystemSpec()
    costs: CostSpec = CostSpec()
    lower_bound: Optional[LowerBoundSpec] = None
    robot: Optional[RobotSpec] = None

    @model_validator(mode="after")
    def source_sections(self) -> "InstanceSpec":
        if self.source == "explicit":
            if self.system.A is None and self.system.A_file is None:
                raise ValueError("explicit systems need system.A or system.A_file")
            if self.system.B is None and self.system.B_file is None:
                raise ValueError("explicit systems need system.B or system.B_file")
        if self.source == "lower-bound" and self.lower_bound is None:
            self.lower_bound = LowerBoundSpec()
        if self.source == "robot" and self.robot is None:
            self.robot = RobotSpec()
        return self


# Top-level experiment description
class ExperimentConfig(_Section):
    name: str = "experiment"
    instance: InstanceSpec
    algorithms: List[str] = Field(min_length=1)
    W: List[int] = Field(min_length=1)
    seeds: List[int] = Field(min_length=1)
    offline_method: Optional[Literal["dp", "linear_solve", "batch_tm"]] = None
    output: Optional[str] = None

    _path: str = PrivateAttr(default="<memory>")

    @field_validator("algorithms")
    @classmethod
    def known_algorithms(cls, value: List[str]) -> List[str]:
        for name in value:
            if not ALGORITHM_NAME.match(name):
                raise ValueError(f"unknown algorithm '{name}'")
        if len(set(value)) != len(value):
            raise ValueError("algorithms must be distinct")
        return value

    @field_validator("W")
    @classmethod
    def positive_windows(cls, value: List[int]) -> List[int]:
        if any(w < 1 for w in value):
            raise ValueError("every W must be >= 1")
        return value

    @field_validator("seeds")
    @classmethod
    def nonnegative_seeds(cls, value: List[int]) -> List[int]:
        if any(s < 0 for s in value):
            raise ValueError("seeds must be nonnegative")
        return value

    @model_validator(mode="after")
    def robot_algorithms(self) -> "ExperimentConfig":
        if self.instance.source == "robot":
            allowed = {"rhgd", "rhag", "rhtm"}
            if not set(self.algorithms) <= allowed:
                raise ValueError(f"robot runs support {sorted(allowed)} only")
            if min(self.W) < 3:
                raise ValueError("robot runs need W >= 3")
        return self

    @property
    def path(self) -> str:
        return self._path


def _field_of(error: Dict[str, Any]) -> str:
    location = ".".join(str(part) for part in error.get("loc", ()))
    return location or "<root>"


def parse_config(data: Any, path: str = "<memory>", base_dir: Optional[str] = None) -> ExperimentConfig:
    """
    Validate a parsed document into an ExperimentConfig.

    Raises:
        ConfigError: naming the first offending field
    """
    if not isinstance(data, dict):
        raise ConfigError(path, "<root>", "the document must be a mapping")
    try:
        config = ExperimentConfig.model_validate(data, context={"base_dir": base_dir})
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(path, _field_of(first), first.get("msg", str(e))) from e
    config._path = path
    return config


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a YAML experiment file; relative matrix files resolve next to it."""
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(path, "<file>", "config file not found")
    try:
        data = yaml.safe_load(config_path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(path, "<file>", f"invalid YAML: {str(e)}") from e
    return parse_config(data, path=str(config_path), base_dir=str(config_path.parent))
