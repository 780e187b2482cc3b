"""Configuration defaults for the expanderlab command line.

A Config is built from the dataclass defaults, then a JSON file (--config),
then the explicit command-line flags, and is validated before dispatch.
"""

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from expanderlab.models import ConfigError, RadialGrid
from expanderlab.utils import THREADS_ENV

logger = logging.getLogger("expanderlab")


@dataclass(frozen=True)
class Config:
    """Every tunable default of the command line."""

    d: int = 3
    alpha: float = 0.5
    ell: float = 1.0
    pole: str = "north"
    branch: str = "north"
    tol: float = 1e-10
    rho0: float = 1e-4
    rho_max: float = 30.0
    order: Optional[int] = None
    alpha_range: Tuple[float, float] = (0.0, 100.0)
    scan_points: int = 200
    grid: str = "graded:3.0"
    dt: float = 0.02
    dt_mode: str = "proportional"
    theta: float = 0.5
    t_span: Tuple[float, float] = (1e-3, 1e-2)
    delta: float = 1e-3
    s_span: Tuple[float, float] = (0.0, 6.0)
    ds: float = 0.01
    epsilon_seq: Tuple[float, ...] = (0.04, 0.02, 0.01)
    gl_dt: float = 2e-4
    gl_t_end: float = 0.05
    zeta_eps: float = 0.1
    threads: Optional[int] = None
    constants: Optional[str] = None

    def with_overrides(self, **flags: Any) -> "Config":
        """Copy with every non-None flag applied.

        Raises:
            ConfigError: A flag names no configuration field.
        """
        known = {f.name for f in fields(self)}
        updates = {}
        for key, value in flags.items():
            if value is None:
                continue
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            if isinstance(value, list):
                value = tuple(value)
            updates[key] = value
        return replace(self, **updates)

    def validate(self) -> "Config":
        """Check ranges shared by the library entry points.

        Raises:
            ConfigError: A value is out of range.
        """
        if int(self.d) != self.d or self.d < 3:
            raise ConfigError(f"d must be an integer >= 3, got {self.d}")
        if self.alpha < 0 or not math.isfinite(self.alpha):
            raise ConfigError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not 0 <= self.ell < math.pi:
            raise ConfigError(f"ell must lie in [0, pi), got {self.ell}")
        for name in ("pole", "branch"):
            if getattr(self, name) not in ("north", "south"):
                raise ConfigError(f"{name} must be north or south")
        if not 0 < self.tol <= 1e-6:
            raise ConfigError(f"tol must lie in (0, 1e-6], got {self.tol}")
        if self.rho_max < 10:
            raise ConfigError(f"rho_max must be >= 10, got {self.rho_max}")
        if self.alpha_range[0] < 0 or self.alpha_range[1] <= self.alpha_range[0]:
            raise ConfigError(f"invalid alpha range {self.alpha_range}")
        if self.scan_points < 2:
            raise ConfigError("scan_points must be >= 2")
        for name in ("t_span", "s_span"):
            lo, hi = getattr(self, name)
            if hi <= lo:
                raise ConfigError(f"{name} must be increasing, got {(lo, hi)}")
        if min(self.dt, self.ds, self.gl_dt, self.delta) <= 0:
            raise ConfigError("dt, ds, gl_dt and delta must be positive")
        eps = self.epsilon_seq
        if not eps or min(eps) <= 0 or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError(f"epsilon_seq must decrease and stay > 0, got {eps}")
        if self.threads is not None and self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        self.radial_grid()
        return self

    def radial_grid(self) -> RadialGrid:
        return parse_grid(self.grid)

    def apply_threads(self) -> None:
        """Export the worker cap unless EXPANDERLAB_THREADS is already set."""
        if self.threads is not None and not os.environ.get(THREADS_ENV):
            os.environ[THREADS_ENV] = str(self.threads)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def parse_grid(spec: str) -> RadialGrid:
    """Grid from "uniform:R:N" or "graded:R[:r1[:ratio[:dr_max]]]".

    Raises:
        ConfigError: Malformed grid string.
    """
    kind, _, rest = spec.partition(":")
    try:
        numbers = [float(x) for x in rest.split(":") if x]
        if kind == "uniform" and len(numbers) == 2:
            return RadialGrid.uniform(numbers[0], int(numbers[1]))
        if kind == "graded" and 1 <= len(numbers) <= 4:
            return RadialGrid.graded(*numbers)
    except ValueError as e:
        raise ConfigError(f"bad grid string {spec!r}: {e}") from e
    raise ConfigError(f"bad grid string {spec!r}")


def load_config(path: Optional[Union[str, Path]] = None) -> Config:
    """Defaults, updated from a JSON object file when a path is given.

    The file is either a flat object of configuration keys or a manifest.json
    written by an earlier run, whose "parameters" are used.

    Raises:
        ConfigError: Unreadable file, non-object JSON or unknown keys.
    """
    config = Config()
    if path is None:
        return config
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(payload, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    if "parameters" in payload and ("schema" in payload or "command" in payload):
        payload = payload["parameters"]
        if not isinstance(payload, dict):
            raise ConfigError(f"manifest {path} has no parameter object")
    logger.debug(f"loaded config {path}: {sorted(payload)}")
    return config.with_overrides(**payload)
