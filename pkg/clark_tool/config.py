# -*- coding: utf-8 -*-
"""
Run configuration.

A RunConfig is layered: built-in defaults, then an optional JSON file given
with --config, then explicit command-line flags. Numbers may be written as
decimals ("0.125"), fractions ("1/8") or powers of two ("2^-3"); all of them
are converted to exact intervals before any check runs.

Example config file:

    {
        "stages": 3,
        "precision": {"bits": 256, "max_bits": 262144, "escalation_factor": 2},
        "schedule": "triangular",
        "base": {"t1": "1/2", "mu1": "1/4", "c1": "1/8"},
        "tolerances": {"eigenvalue": 1e-8},
        "iteration_cap": 10000
    }
"""
import json
import os
from dataclasses import dataclass, field, replace

from .certreal import DEFAULT_BITS, DEFAULT_ESCALATION_FACTOR, DEFAULT_MAX_BITS, PrecisionContext
from .construct import BASE_DEFAULTS, DEFAULT_ITERATION_CAP, BaseParams, Schedule
from .diskop import DEFAULT_TOLERANCES
from .errors import ConfigError, DomainError

_KNOWN_KEYS = {"stages", "precision", "schedule", "base", "tolerances", "iteration_cap", "output"}


@dataclass(frozen=True)
class RunConfig:
    """
    Everything a construction run needs.

    Attributes:
        stages (int): Number of stages to commit (>= 1).
        bits, max_bits, escalation_factor (int): Precision policy.
        schedule (Schedule): The l(N) enumeration.
        base (tuple): (t1, mu1, c1) as given (numbers or strings).
        tolerances (dict): Spectral tolerances for the operator report.
        iteration_cap (int): Maximum shrinks per loop.
        output (str): Path of the state file.
    """

    stages: int = 1
    bits: int = DEFAULT_BITS
    max_bits: int = DEFAULT_MAX_BITS
    escalation_factor: int = DEFAULT_ESCALATION_FACTOR
    schedule: Schedule = field(default_factory=Schedule)
    base: tuple = BASE_DEFAULTS
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    iteration_cap: int = DEFAULT_ITERATION_CAP
    output: str = "state.json"

    @property
    def precision(self):
        return PrecisionContext(self.bits, self.max_bits, self.escalation_factor)

    @property
    def base_params(self):
        t1, mu1, c1 = self.base
        return BaseParams.from_values(t1, mu1, c1, bits=self.bits)

    def validate(self):
        """
        Checks the configuration against the construction's preconditions.

        Returns:
            RunConfig: self, for chaining.

        Raises:
            ConfigError: On the first violated precondition.
        """
        if not isinstance(self.stages, int) or self.stages < 1:
            raise ConfigError(f"stages must be a positive integer, got {self.stages!r}.")
        if not isinstance(self.iteration_cap, int) or self.iteration_cap < 1:
            raise ConfigError("iteration_cap must be a positive integer.")
        PrecisionContext(self.bits, self.max_bits, self.escalation_factor)
        try:
            self.base_params.validate()
        except DomainError as e:
            raise ConfigError(f"Invalid base parameter: {e}") from None
        reach = self.schedule.reach()
        if reach is not None and self.stages > reach:
            raise ConfigError(f"The schedule defines l(N) only up to stage {reach}.")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"Unknown tolerance keys: {sorted(unknown)}.")
        return self

    def to_dict(self):
        return {
            "stages": self.stages,
            "precision": {
                "bits": self.bits,
                "max_bits": self.max_bits,
                "escalation_factor": self.escalation_factor,
            },
            "schedule": self.schedule.to_text(),
            "base": {k: str(v) for k, v in zip(("t1", "mu1", "c1"), self.base)},
            "tolerances": dict(self.tolerances),
            "iteration_cap": self.iteration_cap,
            "output": self.output,
        }


def _apply(config, data, source):
    """Overlays a mapping of settings onto a RunConfig."""
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"Unknown keys in {source}: {sorted(unknown)}.")
    changes = {}
    if "stages" in data:
        changes["stages"] = data["stages"]
    precision = data.get("precision") or {}
    for key in ("bits", "max_bits", "escalation_factor"):
        if key in precision:
            changes[key] = precision[key]
    if "schedule" in data:
        schedule = data["schedule"]
        changes["schedule"] = schedule if isinstance(schedule, Schedule) else Schedule.parse(schedule)
    base = data.get("base") or {}
    if base:
        # Partial overrides keep the other base values.
        current = dict(zip(("t1", "mu1", "c1"), config.base))
        current.update({k: v for k, v in base.items() if v is not None})
        changes["base"] = (current["t1"], current["mu1"], current["c1"])
    if "tolerances" in data:
        merged = dict(config.tolerances)
        merged.update({k: float(v) for k, v in data["tolerances"].items()})
        changes["tolerances"] = merged
    if "iteration_cap" in data:
        changes["iteration_cap"] = data["iteration_cap"]
    if "output" in data:
        changes["output"] = data["output"]
    return replace(config, **changes)


def load_config_file(path):
    """
    Reads a JSON config file.

    Raises:
        ConfigError: If the file is missing or not a JSON object.
    """
    if not os.path.exists(path):
        raise ConfigError(f"Config file not found at {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object.")
    return data


def build_config(config_path=None, overrides=None):
    """
    Layers defaults, an optional config file and explicit overrides.

    Args:
        config_path (str, optional): JSON file given with --config.
        overrides (dict, optional): Settings from command-line flags, in the
            config-file layout; None values are ignored.

    Returns:
        RunConfig: The validated configuration.
    """
    config = RunConfig()
    if config_path:
        config = _apply(config, load_config_file(config_path), config_path)
    if overrides:
        cleaned = {k: v for k, v in overrides.items() if v is not None}
        # Drop empty nested groups so they do not count as settings.
        for key in ("precision", "base"):
            if key in cleaned:
                cleaned[key] = {k: v for k, v in cleaned[key].items() if v is not None}
                if not cleaned[key]:
                    del cleaned[key]
        config = _apply(config, cleaned, "command-line flags")
    return config.validate()
