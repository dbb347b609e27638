"""
Configuration Management for the Tracking Solver
Cost coefficients, solver settings and generator parameters from key = value files and environment
"""

import os
import sys
from typing import Dict, Mapping, Optional, Type

from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError

from cost_model import (
    BoundaryCoefficients,
    CostParams,
    DetectionCoefficients,
    DivisionCoefficients,
    MoveCoefficients,
)
from dual_bca import SolverConfig
from synth_gen import GenParams

ENV_PREFIX = "TRACKBCA_"

# key prefix in config files -> parameter model of that section
SECTIONS: Dict[str, Type[BaseModel]] = {
    "det": DetectionCoefficients,
    "move": MoveCoefficients,
    "div": DivisionCoefficients,
    "app": BoundaryCoefficients,
    "dis": BoundaryCoefficients,
    "solver": SolverConfig,
    "gen": GenParams,
}


class ConfigError(ValueError):
    """Unknown key or invalid value in the configuration"""


def known_keys() -> Dict[str, str]:
    """Every accepted config key mapped to its environment variable name"""
    return {
        f"{section}.{name}": ENV_PREFIX + f"{section}_{name}".upper()
        for section, model in SECTIONS.items()
        for name in model.model_fields
    }


class Config:
    """Main configuration class"""

    def __init__(self, path: Optional[str] = None, environ: Optional[Mapping[str, str]] = None):
        self.path = path
        self._values = self._read(path, os.environ if environ is None else environ)
        self.cost = self._load_cost_params()
        self.solver = self._load_solver_config()
        self.gen = self._load_gen_params()

    def _read(self, path: Optional[str], environ: Mapping[str, str]) -> Dict[str, str]:
        """Merge file values and environment overrides, rejecting unknown keys"""
        keys = known_keys()
        values: Dict[str, str] = {}
        if path is not None:
            if not os.path.isfile(path):
                raise FileNotFoundError(f"config file not found: {path}")
            for key, value in dotenv_values(path).items():
                if key not in keys:
                    raise ConfigError(f"{path}: unknown config key {key!r}")
                if value is None or not value.strip():
                    raise ConfigError(f"{path}: key {key!r} has no value")
                values[key] = value.strip()
        for key, env_name in keys.items():
            if env_name in environ:
                values[key] = environ[env_name]
        return values

    def _section(self, section: str) -> Dict[str, str]:
        prefix = section + "."
        return {key[len(prefix):]: value for key, value in self._values.items() if key.startswith(prefix)}

    def _build(self, section: str, model: Type[BaseModel]) -> BaseModel:
        try:
            return model(**self._section(section))
        except ValidationError as e:
            problems = "; ".join(
                f"{section}.{'.'.join(str(p) for p in err['loc'])}: {err['msg']}"
                for err in e.errors()
            )
            raise ConfigError(f"invalid configuration: {problems}") from None

    def _load_cost_params(self) -> CostParams:
        """Load cost coefficients (det.*, move.*, div.*, app.*, dis.*)"""
        return CostParams(
            detection=self._build("det", DetectionCoefficients),
            move=self._build("move", MoveCoefficients),
            division=self._build("div", DivisionCoefficients),
            appearance=self._build("app", BoundaryCoefficients),
            disappearance=self._build("dis", BoundaryCoefficients),
        )

    def _load_solver_config(self) -> SolverConfig:
        """Load dual solver settings (solver.*)"""
        return self._build("solver", SolverConfig)

    def _load_gen_params(self) -> GenParams:
        """Load synthetic generator parameters (gen.*)"""
        return self._build("gen", GenParams)

    def solver_with(self, **overrides) -> SolverConfig:
        """Solver settings with command-line overrides applied (None values are ignored)"""
        updates = {k: v for k, v in overrides.items() if v is not None}
        try:
            return SolverConfig(**{**self.solver.model_dump(), **updates})
        except ValidationError as e:
            raise ConfigError(f"invalid solver override: {e.errors()[0]['msg']}") from None

    def display(self, stream=None):
        """Display the effective configuration"""
        out = stream or sys.stdout
        print("=" * 70, file=out)
        print("EFFECTIVE CONFIGURATION" + (f" ({self.path})" if self.path else " (defaults)"), file=out)
        print("=" * 70, file=out)
        cost_sections = {
            "det": self.cost.detection,
            "move": self.cost.move,
            "div": self.cost.division,
            "app": self.cost.appearance,
            "dis": self.cost.disappearance,
        }
        for section, model in {**cost_sections, "solver": self.solver, "gen": self.gen}.items():
            for name, value in model.model_dump().items():
                print(f"  {section}.{name} = {value}", file=out)
        print("=" * 70, file=out)


def load_config(path: Optional[str] = None, environ: Optional[Mapping[str, str]] = None) -> Config:
    """Load and validate configuration"""
    return Config(path, environ)


if __name__ == "__main__":
    try:
        load_config(sys.argv[1] if len(sys.argv) > 1 else None).display()
    except (ConfigError, OSError) as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        sys.exit(1)
