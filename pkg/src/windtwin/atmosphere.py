"""Air density from temperature, pressure and relative humidity.

All inputs are SI (kelvin, pascal, humidity as a fraction).  Functions accept
scalars or numpy arrays and broadcast.

The saturation pressure uses the Tetens/Bolton form written for a kelvin
argument::

    p_sat = 611 Pa * 10 ** (7.5 * (T - 273.15) / (T - 35.85))

35.85 K is 273.15 K - 237.3 K, so this is the familiar celsius expression
``6.11 hPa * 10 ** (7.5 t / (t + 237.3))`` and returns exactly 611 Pa at
273.15 K.  The exponent ``7.5 (T + 273.15) / (T + 510.45)`` that circulates
with these constants does not reduce to 6.11 hPa at 0 degC and is not used.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError

M_DRY = 0.0289652  # kg/mol
M_VAPOUR = 0.018016  # kg/mol
R_GAS = 8.31446  # J/(K mol)
RHO_STANDARD = 1.225  # kg/m^3

TETENS_BASE_PA = 611.0
TETENS_SINGULARITY_K = 35.85


@dataclass(frozen=True)
class PhysicalConstants:
    M_d: float = M_DRY
    M_v: float = M_VAPOUR
    R: float = R_GAS
    rho_s: float = RHO_STANDARD


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class AtmosphericState:
    T: float
    p: float
    phi: Optional[float] = None

    def __post_init__(self):
        if not np.all(np.asarray(self.T) > 0):
            raise DomainError("temperature must be positive kelvin", module="atmosphere",
                              operation="AtmosphericState")
        if not np.all(np.asarray(self.p) > 0):
            raise DomainError("pressure must be positive", module="atmosphere", operation="AtmosphericState")
        if self.phi is not None:
            phi = np.asarray(self.phi)
            if np.any((phi < 0) | (phi > 1)):
                raise DomainError("relative humidity must be in [0, 1]", module="atmosphere",
                                  operation="AtmosphericState")


def _check_temperature(T, floor: float, operation: str):
    T = np.asarray(T, dtype=float)
    if np.any(~(T > floor)):
        raise DomainError(f"temperature must exceed {floor} K", module="atmosphere", operation=operation)
    return T


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def density_dry(T, p):
    """Ideal-gas density of dry air, kg/m^3."""
    T = _check_temperature(T, 0.0, "density_dry")
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0)):
        raise DomainError("pressure must be positive", module="atmosphere", operation="density_dry")
    return _out(p * M_DRY / (R_GAS * T))


def saturation_pressure(T):
    """Water-vapour saturation pressure in Pa for temperature T in kelvin."""
    T = _check_temperature(T, TETENS_SINGULARITY_K, "saturation_pressure")
    return _out(TETENS_BASE_PA * 10.0 ** (7.5 * (T - 273.15) / (T - TETENS_SINGULARITY_K)))


def density_humid(T, p, phi):
    """Density of moist air: the vapour partial pressure replaces dry air mole for mole."""
    T = _check_temperature(T, TETENS_SINGULARITY_K, "density_humid")
    p = np.asarray(p, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(np.isnan(phi)):
        raise DomainError("relative humidity missing", module="atmosphere", operation="density_humid")
    if np.any((phi < 0) | (phi > 1)):
        raise DomainError("relative humidity must be in [0, 1]", module="atmosphere", operation="density_humid")
    vapour = phi * saturation_pressure(T)
    if np.any(vapour > p):
        raise DomainError("vapour pressure exceeds total pressure", module="atmosphere",
                          operation="density_humid")
    return _out(((p - vapour) * M_DRY + vapour * M_VAPOUR) / (R_GAS * T))


def density(state: AtmosphericState, humid: bool = False):
    if humid:
        if state.phi is None:
            raise DomainError("humid density needs relative humidity", module="atmosphere", operation="density")
        return density_humid(state.T, state.p, state.phi)
    return density_dry(state.T, state.p)
