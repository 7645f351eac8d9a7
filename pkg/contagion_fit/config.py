"""
Run configuration: defaults, then an optional flat key=value file, then command-line flags.
"""

import logging
import os
from dataclasses import asdict, dataclass, fields
from typing import Optional, get_args

from contagion_fit.errors import InputError
from contagion_fit.mcmc_engine import McmcConfig
from contagion_fit.observation_model import GammaPrior

LOG_LEVEL_ENV = "CONTAGION_FIT_LOG_LEVEL"
DEFAULT_LOG_LEVEL = "INFO"

# Keys that describe where output goes rather than what was computed.
_NOT_EMBEDDED = ("out_dir", "log_level", "config")


@dataclass
class RunConfig:
    input: Optional[str] = None
    validate_input: Optional[str] = None
    posterior: Optional[str] = None
    out_dir: str = "out"
    seed: Optional[int] = None
    chains: int = 1
    workers: Optional[int] = None
    burn_in: int = 10_000
    samples: int = 40_000
    thin: int = 1
    step_sizes: Optional[str] = None
    ensemble: int = 1000
    prior_mean: float = 1.0
    prior_var: float = 0.1
    beta: Optional[float] = None
    gamma: Optional[float] = None
    r: Optional[float] = None
    i0: Optional[float] = None
    horizon: Optional[int] = None
    emit_svg: bool = False
    bins: int = 40
    log_level: Optional[str] = None
    config: Optional[str] = None

    @classmethod
    def from_sources(cls, file_values: dict, flag_values: dict) -> "RunConfig":
        merged = {}
        merged.update(file_values)
        merged.update({k: v for k, v in flag_values.items() if v is not None})
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(merged) - set(known))
        if unknown:
            raise InputError(f"Unknown configuration keys: {', '.join(unknown)}")
        values = {name: _coerce(name, known[name].type, value) for name, value in merged.items()}
        return cls(**values)

    def require(self, *names: str) -> None:
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            flags = ", ".join("--" + name.replace("_", "-") for name in missing)
            raise InputError(f"Missing required setting(s): {flags}")

    def check_paths(self, *names: str) -> None:
        for name in names:
            path = getattr(self, name)
            if path is not None and not os.path.exists(path):
                raise InputError(f"File given for --{name.replace('_', '-')} does not exist: {path}")

    @property
    def worker_count(self) -> int:
        """Processes for the chains; one per chain unless --workers says otherwise."""
        return self.workers if self.workers is not None else self.chains

    def mcmc_config(self) -> McmcConfig:
        self.require("seed")
        kwargs = dict(seed=self.seed, burn_in=self.burn_in, samples=self.samples, thin=self.thin)
        if self.step_sizes:
            try:
                kwargs["step_sizes"] = tuple(float(s) for s in self.step_sizes.split(","))
            except ValueError:
                raise InputError(f"Invalid step sizes: {self.step_sizes!r}")
            if len(kwargs["step_sizes"]) != 4:
                raise InputError("Exactly four step sizes are needed (beta, gamma, r, i0)")
        return McmcConfig(**kwargs)

    def prior(self) -> GammaPrior:
        try:
            return GammaPrior.from_moments(self.prior_mean, self.prior_var)
        except ValueError as e:
            raise InputError(str(e))

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in _NOT_EMBEDDED}


def _base_type(annotation):
    args = [a for a in get_args(annotation) if a is not type(None)]
    return args[0] if args else annotation


def _coerce(name: str, annotation, value):
    if value is None:
        return None
    kind = _base_type(annotation)
    try:
        if kind is bool:
            if isinstance(value, bool):
                return value
            lowered = str(value).strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
    except ValueError:
        raise InputError(f"Invalid value for {name}: {value!r}")
    return str(value)


def read_config_file(path) -> dict:
    """Parse `key=value` lines; `#` starts a comment and keys may use - or _."""
    if not os.path.exists(path):
        raise InputError(f"Config file not found: {path}")
    values = {}
    with open(path, encoding="utf-8") as f:
        for number, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{number}: expected key=value, got {raw.strip()!r}")
            key, value = line.split("=", 1)
            values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def log_level(config: RunConfig) -> str:
    level = (config.log_level or os.getenv(LOG_LEVEL_ENV) or DEFAULT_LOG_LEVEL).upper()
    return level if isinstance(logging.getLevelName(level), int) else DEFAULT_LOG_LEVEL
