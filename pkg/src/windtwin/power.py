"""Hub-height weather to turbine power.

Two mappings are supported: the tabulated power curve rescaled by the ratio of
actual to standard air density, and the power coefficient route
``P = 0.5 rho C_P(v) A v^3``.  Both tables are interpolated either linearly
or with a monotone cubic Hermite spline.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Mapping

import numpy as np

from . import atmosphere
from .errors import ConfigError, FormatError

BETZ_LIMIT = 16.0 / 27.0

SOURCES = ("MEPS", "SIMRA", "measured")
DENSITIES = ("constant", "dry", "humid")
MAPPINGS = ("power_curve", "power_coefficient")
INTERPOLATIONS = ("linear", "cubic")


def monotone_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Fritsch-Carlson knot derivatives for a shape-preserving cubic.

    Start from the mean of adjacent secants, zero them at local extrema and
    flat segments, then shrink any pair (alpha, beta) outside the radius-3
    circle so every interval stays monotone.
    """
    h = np.diff(x)
    delta = np.diff(y) / h
    m = np.empty_like(y)
    m[0], m[-1] = delta[0], delta[-1]
    m[1:-1] = 0.5 * (delta[:-1] + delta[1:])
    m[1:-1][delta[:-1] * delta[1:] <= 0] = 0.0
    for k in range(delta.size):
        if delta[k] == 0.0:
            m[k] = m[k + 1] = 0.0
            continue
        # one-sided end slopes can still point the wrong way
        if m[k] * delta[k] < 0:
            m[k] = 0.0
        if m[k + 1] * delta[k] < 0:
            m[k + 1] = 0.0
        # alpha^2 + beta^2 > 9 written without dividing by delta
        norm = np.hypot(m[k], m[k + 1])
        if norm > 3.0 * abs(delta[k]):
            tau = 3.0 * abs(delta[k]) / norm
            m[k] *= tau
            m[k + 1] *= tau
    return m


def interpolate_table(knots, v, method: Literal["linear", "cubic"] = "linear", outside: float = 0.0):
    """Evaluate a tabulated curve at ``v`` (scalar or array).

    ``knots`` is an ``(n, 2)`` array-like of ``(x, y)`` rows with strictly
    increasing x.  Knot values are returned bit-exactly by both methods;
    arguments outside ``[x[0], x[-1]]`` give ``outside``.
    """
    table = np.asarray(knots, dtype=float)
    if table.ndim != 2 or table.shape[0] < 2 or table.shape[1] != 2:
        raise ConfigError("table needs at least two (x, y) knots", module="power-model",
                          operation="interpolate_table")
    x, y = table[:, 0], table[:, 1]
    if np.any(np.diff(x) <= 0):
        raise ConfigError("knots must be strictly increasing", module="power-model",
                          operation="interpolate_table")
    scalar = np.ndim(v) == 0
    v = np.atleast_1d(np.asarray(v, dtype=float))
    k = np.clip(np.searchsorted(x, v, side="right") - 1, 0, x.size - 2)
    x0, x1, y0, y1 = x[k], x[k + 1], y[k], y[k + 1]
    t = (v - x0) / (x1 - x0)
    if method == "linear":
        out = y0 + t * (y1 - y0)
    elif method == "cubic":
        m = monotone_slopes(x, y)
        h = x1 - x0
        t2, t3 = t * t, t * t * t
        out = ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * m[k]
               + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * m[k + 1])
        # the spline is monotone per interval; clip away last-bit rounding
        out = np.clip(out, np.minimum(y0, y1), np.maximum(y0, y1))
    else:
        raise ConfigError(f"unknown interpolation {method!r}", module="power-model",
                          operation="interpolate_table")
    out = np.where(v == x0, y0, out)
    out = np.where(v == x1, y1, out)
    out = np.where((v < x[0]) | (v > x[-1]) | np.isnan(v), outside, out)
    out = np.where(np.isnan(v), np.nan, out)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class TurbineSpec:
    rated_power: float  # kW
    swept_area: float  # m^2
    power_curve: np.ndarray  # (n, 2): v [m/s], P [kW]
    cp_curve: np.ndarray  # (n, 2): v [m/s], C_P
    cut_in: float
    cut_out: float
    name: str = ""

    def __post_init__(self):
        ctx = dict(module="power-model", operation="TurbineSpec")
        pc = np.asarray(self.power_curve, dtype=float)
        cp = np.asarray(self.cp_curve, dtype=float)
        object.__setattr__(self, "power_curve", pc)
        object.__setattr__(self, "cp_curve", cp)
        if not self.swept_area > 0:
            raise ConfigError("swept area must be positive", **ctx)
        if not self.rated_power > 0:
            raise ConfigError("rated power must be positive", **ctx)
        for name, table in (("power_curve", pc), ("cp_curve", cp)):
            if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 2:
                raise ConfigError(f"{name} needs at least two (v, value) rows", **ctx)
            if np.any(np.diff(table[:, 0]) <= 0):
                raise ConfigError(f"{name} knots must be strictly increasing", **ctx)
        if np.any((pc[:, 1] < 0) | (pc[:, 1] > self.rated_power)):
            raise ConfigError("power curve values must lie in [0, rated_power]", **ctx)
        if np.any((cp[:, 1] < 0) | (cp[:, 1] >= BETZ_LIMIT)):
            raise ConfigError("power coefficient must lie in [0, 16/27)", **ctx)
        if not 0 <= self.cut_in < self.cut_out:
            raise ConfigError("need 0 <= cut_in < cut_out", **ctx)

    @classmethod
    def from_json(cls, doc: Mapping) -> "TurbineSpec":
        return cls(
            rated_power=float(doc["rated_power_kw"]),
            swept_area=float(doc["swept_area_m2"]),
            power_curve=np.asarray(doc["power_curve"], dtype=float),
            cp_curve=np.asarray(doc["cp_curve"], dtype=float),
            cut_in=float(doc["cut_in"]),
            cut_out=float(doc["cut_out"]),
            name=str(doc.get("name", "")),
        )

    def to_json(self) -> dict:
        doc = {
            "rated_power_kw": self.rated_power,
            "swept_area_m2": self.swept_area,
            "cut_in": self.cut_in,
            "cut_out": self.cut_out,
            "power_curve": self.power_curve.tolist(),
            "cp_curve": self.cp_curve.tolist(),
        }
        if self.name:
            doc["name"] = self.name
        return doc


def load_turbine_spec(path) -> TurbineSpec:
    try:
        return TurbineSpec.from_json(json.loads(Path(path).read_text()))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed turbine spec: {exc}", module="power-model",
                          operation="load_turbine_spec", location=str(path)) from exc


@dataclass(frozen=True)
class ModelVariant:
    source: str
    density: str = "constant"
    mapping: str = "power_curve"
    interpolation: str = "linear"
    cap: bool = True

    def __post_init__(self):
        ctx = dict(module="power-model", operation="ModelVariant")
        if self.density not in DENSITIES:
            raise ConfigError(f"unknown density {self.density!r}", **ctx)
        if self.mapping not in MAPPINGS:
            raise ConfigError(f"unknown mapping {self.mapping!r}", **ctx)
        if self.interpolation not in INTERPOLATIONS:
            raise ConfigError(f"unknown interpolation {self.interpolation!r}", **ctx)

    @property
    def id(self) -> str:
        mapping = "curve" if self.mapping == "power_curve" else "cp"
        cap = "cap" if self.cap else "nocap"
        return f"{self.source.lower()}-{self.density}-{mapping}-{self.interpolation}-{cap}"

    @classmethod
    def from_id(cls, model_id: str, sources: Iterable[str] = SOURCES) -> "ModelVariant":
        try:
            src, density, mapping, interp, cap = model_id.split("-")
        except ValueError:
            raise ConfigError(f"not a physics model id: {model_id!r}", module="power-model",
                              operation="ModelVariant") from None
        source = next((s for s in sources if s.lower() == src), src.upper())
        return cls(source, density, "power_curve" if mapping == "curve" else "power_coefficient",
                   interp, cap == "cap")


def variant_matrix(sources: Iterable[str], densities=DENSITIES, mappings=MAPPINGS,
                   interpolations=INTERPOLATIONS, caps=(True, False)) -> list[ModelVariant]:
    return [ModelVariant(s, d, m, i, c)
            for s, d, m, i, c in itertools.product(sources, densities, mappings, interpolations, caps)]


def _operating(spec: TurbineSpec, v: np.ndarray) -> np.ndarray:
    return (v >= spec.cut_in) & (v <= spec.cut_out)


def power_from_cp(spec: TurbineSpec, v, rho, interpolation: str = "linear"):
    """``0.5 rho C_P(v) A v^3`` in kW, zero outside the operating range."""
    scalar = np.ndim(v) == 0 and np.ndim(rho) == 0
    v = np.atleast_1d(np.asarray(v, dtype=float))
    rho = np.asarray(rho, dtype=float)
    cp = interpolate_table(spec.cp_curve, v, interpolation)
    p = 0.5 * rho * cp * spec.swept_area * v ** 3 / 1000.0
    p = np.where(_operating(spec, v), p, 0.0)
    return float(p[0]) if scalar else p


def _field(weather, name):
    if isinstance(weather, Mapping):
        return weather.get(name)
    return getattr(weather, name, None)


def air_density(weather, density: str):
    if density == "constant":
        return atmosphere.RHO_STANDARD
    T, p = _field(weather, "temperature"), _field(weather, "pressure")
    if T is None or p is None:
        raise ConfigError(f"density={density} needs temperature and pressure", module="power-model",
                          operation="predict_power")
    if density == "dry":
        return atmosphere.density_dry(T, p)
    phi = _field(weather, "humidity")
    if phi is None or np.any(np.isnan(np.asarray(phi, dtype=float))):
        raise ConfigError("density=humid but the weather source carries no humidity",
                          module="power-model", operation="predict_power")
    return atmosphere.density_humid(T, p, phi)


def predict_power(spec: TurbineSpec, weather, variant: ModelVariant):
    """Power in kW for one variant; ``weather`` is a mapping or object of arrays.

    Needs ``wind_speed`` and, depending on the density option, ``temperature``,
    ``pressure`` and ``humidity``.  NaN wind speeds propagate as NaN.
    """
    v = _field(weather, "wind_speed")
    if v is None:
        raise ConfigError("weather has no wind_speed", module="power-model", operation="predict_power")
    scalar = np.ndim(v) == 0
    v = np.atleast_1d(np.asarray(v, dtype=float))
    rho = air_density(weather, variant.density)
    if variant.mapping == "power_curve":
        p = interpolate_table(spec.power_curve, v, variant.interpolation)
        if variant.density != "constant":
            p = p * (np.asarray(rho) / atmosphere.RHO_STANDARD)
        p = np.where(_operating(spec, v), p, 0.0)
    else:
        p = power_from_cp(spec, v, rho, variant.interpolation)
    p = np.maximum(p, 0.0)
    if variant.cap:
        p = np.minimum(p, spec.rated_power)
    p = np.where(np.isnan(v), np.nan, p)
    return float(p[0]) if scalar else p
