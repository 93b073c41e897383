"""Gridded weather forecasts: loading, sampling at turbine hubs, lead grouping."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Mapping

import numpy as np
import pandas as pd

from .errors import FormatError, OutOfDomainError, ValidationError
from .timeseries import HOUR, TurbineSite, format_times, parse_times, wrap_degrees

VARIABLES = ("wind_speed", "wind_direction", "temperature", "pressure", "humidity")
KEY_COLUMNS = ("source", "issuance", "valid", "x", "y", "height")
FORECAST_HEADER = KEY_COLUMNS + VARIABLES

IDW_POWER = 2.0


@dataclass(frozen=True)
class ForecastSource:
    name: str
    issuance_period: int  # h
    lead_min: int
    lead_max: int
    step: int = 1
    variables: tuple[str, ...] = VARIABLES
    horizontal_resolution: float = float("nan")  # m

    def __post_init__(self):
        if self.lead_min > self.lead_max:
            raise ValidationError("empty lead range", module="nwp-ingest", operation="ForecastSource")
        if self.step < 1 or self.lead_min % self.step or self.lead_max % self.step:
            raise ValidationError("step must divide every lead", module="nwp-ingest", operation="ForecastSource")

    @property
    def leads(self) -> np.ndarray:
        return np.arange(self.lead_min, self.lead_max + 1, self.step)


MEPS = ForecastSource("MEPS", 6, 1, 61, horizontal_resolution=2500.0)
SIMRA = ForecastSource("SIMRA", 12, 6, 18,
                       variables=("wind_speed", "wind_direction", "temperature", "pressure"),
                       horizontal_resolution=100.0)
PRESETS = {"MEPS": MEPS, "SIMRA": SIMRA}


@dataclass(frozen=True)
class ForecastSet:
    """Dense forecast cube: ``fields[var][time, node, level]`` per (issuance, valid) pair."""

    source: ForecastSource
    issuance: np.ndarray
    valid: np.ndarray
    nodes: np.ndarray  # (n_nodes, 2) x, y in m
    heights: np.ndarray  # (n_levels,) m above terrain
    fields: Mapping[str, np.ndarray]

    @property
    def leads(self) -> np.ndarray:
        return ((self.valid - self.issuance) // HOUR).astype(int)

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for v in VARIABLES if v in self.fields)

    @property
    def has_humidity(self) -> bool:
        return "humidity" in self.fields and not np.all(np.isnan(self.fields["humidity"]))

    def __len__(self) -> int:
        return self.issuance.size

    def to_frame(self) -> pd.DataFrame:
        n_t, n_n, n_h = len(self), len(self.nodes), len(self.heights)
        ti, ni, hi = np.meshgrid(np.arange(n_t), np.arange(n_n), np.arange(n_h), indexing="ij")
        ti, ni, hi = ti.ravel(), ni.ravel(), hi.ravel()
        frame = pd.DataFrame({
            "source": self.source.name,
            "issuance": format_times(self.issuance[ti]),
            "valid": format_times(self.valid[ti]),
            "x": self.nodes[ni, 0],
            "y": self.nodes[ni, 1],
            "height": self.heights[hi],
        })
        for var in self.variables:
            frame[var] = self.fields[var].ravel()
        return frame


def _empty_set(source: ForecastSource) -> ForecastSet:
    none = np.array([], dtype="datetime64[s]")
    return ForecastSet(source, none, none, np.zeros((0, 2)), np.zeros(0), {})


def load_forecast(path, source: ForecastSource | None = None,
                  presets: Mapping[str, ForecastSource] = PRESETS) -> ForecastSet:
    """Read and validate one forecast CSV (a single source per file)."""
    path = Path(path)
    ctx = dict(module="nwp-ingest", operation="load_forecast")
    if not path.exists():
        raise FormatError(f"no such file: {path}", location=str(path), **ctx)
    n_comments = 0
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            n_comments += 1
    try:
        frame = pd.read_csv(path, skiprows=n_comments, dtype={"source": str, "issuance": str, "valid": str})
    except pd.errors.EmptyDataError:
        warnings.warn(f"{path}: empty forecast file", stacklevel=2)
        return _empty_set(source or ForecastSource("custom", 1, 1, 1))
    columns = list(frame.columns)
    unknown = [c for c in columns if c not in FORECAST_HEADER]
    if unknown:
        raise FormatError(f"unknown column(s) {unknown}", location=f"{path}:{n_comments + 1}", **ctx)
    required = [c for c in FORECAST_HEADER if c != "humidity"]
    absent = [c for c in required if c not in columns]
    if absent:
        raise FormatError(f"missing column(s) {absent}", location=f"{path}:{n_comments + 1}", **ctx)

    names = frame["source"].unique()
    if len(names) > 1:
        raise FormatError(f"one source per file, found {sorted(names)}", location=str(path), **ctx)
    if source is None:
        if len(names) == 0:
            warnings.warn(f"{path}: empty forecast file", stacklevel=2)
            return _empty_set(ForecastSource("custom", 1, 1, 1))
        if names[0] not in presets:
            raise FormatError(f"unknown source {names[0]!r}; pass a ForecastSource", location=str(path), **ctx)
        source = presets[names[0]]
    if len(frame) == 0:
        warnings.warn(f"{path}: empty forecast file", stacklevel=2)
        return _empty_set(source)

    first = n_comments + 2
    issuance = parse_times(frame["issuance"])
    valid = parse_times(frame["valid"])
    lead_s = (valid - issuance).astype(np.int64)
    lead_ok = (lead_s % 3600 == 0)
    lead_h = lead_s // 3600
    lead_ok &= (lead_h >= source.lead_min) & (lead_h <= source.lead_max) & (lead_h % source.step == 0)
    if not lead_ok.all():
        rows = (np.flatnonzero(~lead_ok) + first).tolist()
        shown = ", ".join(map(str, rows[:10])) + (" ..." if len(rows) > 10 else "")
        raise ValidationError(
            f"{len(rows)} row(s) with lead outside {source.lead_min}..{source.lead_max} h for {source.name}",
            location=f"{path}: rows {shown}", **ctx)

    xy = frame[["x", "y"]].to_numpy(dtype=float)
    height = frame["height"].to_numpy(dtype=float)
    t_key = pd.MultiIndex.from_arrays([issuance, valid])
    t_codes, t_uniques = pd.factorize(t_key, sort=True)
    n_codes, n_uniques = pd.factorize(pd.MultiIndex.from_arrays([xy[:, 0], xy[:, 1]]), sort=True)
    h_codes, h_uniques = pd.factorize(height, sort=True)
    n_t, n_n, n_h = len(t_uniques), len(n_uniques), len(h_uniques)
    flat = (t_codes * n_n + n_codes) * n_h + h_codes
    order = np.argsort(flat, kind="stable")
    dup = np.flatnonzero(np.diff(flat[order]) == 0)
    if dup.size:
        row = int(order[dup[0] + 1]) + first
        raise ValidationError("duplicate (issuance, valid, node, height) record", location=f"{path}:{row}", **ctx)
    if flat.size != n_t * n_n * n_h:
        counts = np.bincount(t_codes, minlength=n_t)
        bad = int(np.flatnonzero(counts != n_n * n_h)[0])
        row = int(np.flatnonzero(t_codes == bad)[0]) + first
        raise ValidationError(f"incomplete grid: expected {n_n * n_h} node/level records per valid time",
                              location=f"{path}:{row}", **ctx)

    fields = {}
    for var in VARIABLES:
        if var in frame.columns:
            cube = np.empty(flat.size)
            cube[flat] = frame[var].to_numpy(dtype=float)
            if var == "wind_direction":
                cube = wrap_degrees(cube)
            fields[var] = cube.reshape(n_t, n_n, n_h)
            fields[var].setflags(write=False)
    iss = np.array([k[0] for k in t_uniques], dtype="datetime64[s]")
    val = np.array([k[1] for k in t_uniques], dtype="datetime64[s]")
    nodes = np.array([[k[0], k[1]] for k in n_uniques], dtype=float)
    return ForecastSet(source, iss, val, nodes, np.asarray(h_uniques, dtype=float), fields)


def write_forecast(fcst: ForecastSet, path, header_comment: str | None = None) -> None:
    frame = fcst.to_frame()
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        frame.to_csv(fh, index=False, float_format="%.8g", lineterminator="\n")


@dataclass(frozen=True)
class HubWeatherSeries:
    """Forecast weather at one hub, one entry per (issuance, lead)."""

    turbine_id: str
    source: str
    issuance: np.ndarray
    lead: np.ndarray
    wind_speed: np.ndarray
    wind_direction: np.ndarray
    temperature: np.ndarray
    pressure: np.ndarray
    humidity: np.ndarray
    strategy: str = "nearest"
    meta: Mapping = field(default_factory=dict)

    @property
    def valid(self) -> np.ndarray:
        return self.issuance + self.lead * HOUR

    @property
    def has_humidity(self) -> bool:
        return not np.all(np.isnan(self.humidity))

    def __len__(self) -> int:
        return self.issuance.size


def _horizontal_weights(nodes: np.ndarray, x: float, y: float, strategy: str) -> np.ndarray:
    d = np.hypot(nodes[:, 0] - x, nodes[:, 1] - y)
    order = np.argsort(d, kind="stable")
    w = np.zeros(len(nodes))
    if strategy == "nearest" or d[order[0]] == 0.0:
        w[order[0]] = 1.0
        return w
    near = order[: min(4, len(nodes))]
    # relative to the nearest distance so sub-ulp offsets cannot overflow
    inv = (d[order[0]] / d[near]) ** IDW_POWER
    w[near] = inv / inv.sum()
    return w


def _vertical_weights(heights: np.ndarray, z: float, strategy: str) -> np.ndarray:
    w = np.zeros(len(heights))
    if strategy == "nearest" or len(heights) == 1:
        w[int(np.argmin(np.abs(heights - z)))] = 1.0
        return w
    if z <= heights[0]:
        w[0] = 1.0
    elif z >= heights[-1]:
        w[-1] = 1.0
    else:
        k = int(np.searchsorted(heights, z, side="right")) - 1
        if heights[k] == z:
            w[k] = 1.0
        else:
            frac = (z - heights[k]) / (heights[k + 1] - heights[k])
            w[k], w[k + 1] = 1.0 - frac, frac
    return w


def sample_at_hub(fcst: ForecastSet, turbine: TurbineSite, strategy: Literal["nearest", "idw4"] = "nearest",
                  height_reference: Literal["terrain", "sea"] = "terrain") -> HubWeatherSeries:
    """Extract the hub-height forecast time series for one turbine.

    Directions are always combined as unit vectors.  With
    ``height_reference="sea"`` the forecast levels are taken as altitudes and
    the hub sits at terrain elevation plus hub height.
    """
    ctx = dict(module="nwp-ingest", operation="sample_at_hub")
    if strategy not in ("nearest", "idw4"):
        raise ValidationError(f"unknown strategy {strategy!r}", **ctx)
    nan = np.full(len(fcst), np.nan)
    if len(fcst) == 0:
        return HubWeatherSeries(turbine.id, fcst.source.name, fcst.issuance, np.zeros(0, dtype=int),
                                nan, nan, nan, nan, nan, strategy)
    lo, hi = fcst.nodes.min(axis=0), fcst.nodes.max(axis=0)
    if not (lo[0] <= turbine.x <= hi[0] and lo[1] <= turbine.y <= hi[1]):
        raise OutOfDomainError(f"turbine {turbine.id} at ({turbine.x}, {turbine.y}) outside grid "
                               f"[{lo[0]}, {hi[0]}] x [{lo[1]}, {hi[1]}]", location=turbine.id, **ctx)
    z = turbine.hub_height + (turbine.elevation if height_reference == "sea" else 0.0)
    wn = _horizontal_weights(fcst.nodes, turbine.x, turbine.y, strategy)
    wz = _vertical_weights(fcst.heights, z, strategy)
    w = np.outer(wn, wz)

    def combine(var):
        if var not in fcst.fields:
            return nan.copy()
        return fcst.fields[var].reshape(len(fcst), -1) @ w.ravel()

    out = {var: combine(var) for var in ("wind_speed", "temperature", "pressure", "humidity")}
    if "wind_direction" in fcst.fields:
        rad = np.deg2rad(fcst.fields["wind_direction"])
        s = np.sin(rad).reshape(len(fcst), -1) @ w.ravel()
        c = np.cos(rad).reshape(len(fcst), -1) @ w.ravel()
        out["wind_direction"] = wrap_degrees(np.rad2deg(np.arctan2(s, c)))
    else:
        out["wind_direction"] = nan.copy()
    meta = {"strategy": strategy, "height_reference": height_reference, "hub_level_m": z,
            "nodes_used": int(np.count_nonzero(wn))}
    return HubWeatherSeries(turbine.id, fcst.source.name, fcst.issuance, fcst.leads, strategy=strategy,
                            meta=meta, **out)


@dataclass(frozen=True)
class LeadGroup:
    """Targets covered at one lead and the matching row in the hub series."""

    targets: np.ndarray
    index: np.ndarray


def group_by_lead(series: HubWeatherSeries, targets) -> dict[int, LeadGroup]:
    """For each lead L, the targets t whose issuance t - L exists in ``series``."""
    targets = np.asarray(targets, dtype="datetime64[s]")
    valid = series.valid
    groups = {}
    for lead in np.unique(series.lead):
        rows = np.flatnonzero(series.lead == lead)
        hit = np.isin(valid[rows], targets)
        rows = rows[hit]
        order = np.argsort(valid[rows], kind="stable")
        rows = rows[order]
        groups[int(lead)] = LeadGroup(valid[rows], rows)
    return groups
