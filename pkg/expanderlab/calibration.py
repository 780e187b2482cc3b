"""Regression constants computed by high-resolution oracles.

The constants live in a checked-in constants.json at the project root:

    {"schema": 1, "status": "calibrated", "values": {name: {"value", "tol"}}}

`expanderlab calibrate` regenerates the file. Consumers call `constant(name)`,
which reads the file and raises MissingConstant when a value is absent.
Passing compute_missing=True runs the oracle once per process instead.
"""

import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple

from .export import read_json, write_json
from .models import SCHEMA_VERSION, ConfigError, MissingConstant, RangeError
from .profile_solver import (
    cached_profile,
    critical_params,
    kappa_threshold,
    shoot_for_limit,
)

logger = logging.getLogger("expanderlab")

CONSTANTS_PATH = Path(__file__).resolve().parent.parent / "constants.json"
ORACLE_TOL = 1e-9
ORACLE_RHO_MAX = 50.0
CRITICAL_DIMENSIONS = (3, 4, 5, 6)


def alpha_hat(d: int, ell: float, tol: float = ORACLE_TOL) -> float:
    """First-branch alpha whose profile tends to ell."""
    return shoot_for_limit(d, ell, 0, tol=tol, rho_max=ORACLE_RHO_MAX).alpha


def kappa_hat(d: int, alpha: float, tol: float = 1e-6) -> float:
    """Midpoint of the positivity-threshold bracket of w along psi_alpha."""
    lo, hi = kappa_threshold(cached_profile(d, alpha, ORACLE_RHO_MAX), tol=tol)
    return 0.5 * (lo + hi)


def _critical_oracle(d: int, field: str) -> Callable[[], Tuple[float, float]]:
    def compute():
        crit = critical_params(d, tol=1e-9, rho_max=ORACLE_RHO_MAX)
        return getattr(crit, field), crit.tol

    return compute


def _oracles() -> Dict[str, Callable[[], Tuple[float, float]]]:
    oracles = {
        "alpha_hat_d3_ell1": lambda: (alpha_hat(3, 1.0), ORACLE_TOL),
        "kappa_hat_d3_alpha0.5": lambda: (kappa_hat(3, 0.5), 1e-6),
    }
    for d in CRITICAL_DIMENSIONS:
        for field in ("alpha0", "alpha_star", "ell_star", "delta_star"):
            oracles[f"{field}_d{d}"] = _critical_oracle(d, field)
    return oracles


def load_constants(path: Optional[Path] = None) -> Dict[str, Dict[str, float]]:
    """Values stored in constants.json; empty when the file is absent.

    Raises:
        ConfigError: The file exists with a different schema.
    """
    path = Path(path or CONSTANTS_PATH)
    if not path.exists():
        logger.warning(f"no calibration file at {path}")
        return {}
    payload = read_json(path)
    if payload.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported constants schema {payload.get('schema')}")
    return dict(payload.get("values", {}))


def save_constants(
    values: Dict[str, Dict[str, float]], path: Optional[Path] = None
) -> Path:
    payload = {"schema": SCHEMA_VERSION, "status": "calibrated", "values": values}
    return write_json(Path(path or CONSTANTS_PATH), payload)


@lru_cache(maxsize=None)
def _computed(name: str) -> float:
    oracles = _oracles()
    if name not in oracles:
        raise RangeError(f"unknown calibration constant {name!r}")
    logger.warning(f"calibration constant {name} missing; running its oracle")
    value, _ = oracles[name]()
    return value


def constant(
    name: str, path: Optional[Path] = None, compute_missing: bool = False
) -> float:
    """Calibrated value of name.

    Raises:
        RangeError: name is not a known constant.
        MissingConstant: The file lacks name and compute_missing is off.
    """
    stored = load_constants(path).get(name)
    if stored is not None and math.isfinite(stored["value"]):
        return float(stored["value"])
    if name not in _oracles():
        raise RangeError(f"unknown calibration constant {name!r}")
    if not compute_missing:
        raise MissingConstant(f"{name} not calibrated; run `expanderlab calibrate`")
    return _computed(name)


def calibrate(path: Optional[Path] = None, names=None) -> Dict[str, Dict[str, float]]:
    """Run the oracles (all, or the given names) and write constants.json."""
    oracles = _oracles()
    selected = list(names) if names else list(oracles)
    values = load_constants(path) if names else {}
    for name in selected:
        if name not in oracles:
            raise RangeError(f"unknown calibration constant {name!r}")
        value, tol = oracles[name]()
        logger.debug(f"calibrated {name} = {value!r} (tol {tol:g})")
        values[name] = {"value": value, "tol": tol}
    save_constants(values, path)
    return values
