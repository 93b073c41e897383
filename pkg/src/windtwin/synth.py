"""Synthetic wind farm: ground truth, SCADA measurements and degraded forecasts.

The hourly ground truth per turbine is an AR(1) wind anomaly (correlated
between turbines through a shared innovation) on top of a mean and a diurnal
cycle, plus annual/diurnal temperature, slowly varying pressure and humidity.
True power is the cubic power-curve model with humid-air density and the
rated cap.  SCADA samples arrive every 3-10 minutes and read the truth of the
hour they fall in plus measurement noise.

Forecast sources put the truth on their own grid and add Gaussian wind-speed
errors whose standard deviation grows linearly with lead.  A fine grid has a
node on every turbine, so with zero error it reproduces each turbine exactly;
a coarse grid only carries the farm-mean wind.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import atmosphere
from .errors import ConfigError
from .nwp import ForecastSet, ForecastSource, write_forecast
from .power import ModelVariant, TurbineSpec, predict_power
from .timeseries import HOUR, FarmLayout, TurbineSite, circular_mean, format_times, wrap_degrees

TRUTH_VARIANT = ModelVariant("measured", "humid", "power_curve", "cubic", True)
SHEAR = 0.2  # relative wind-speed gradient per hub height, linear profile
LAPSE = 0.0065  # K/m
GRAVITY = 9.80665
LSTM_EPOCHS = 20  # keeps a full synthetic run within a couple of minutes on one core

# synthetic E70-class machine; 71 m rotor gives the 3959 m^2 swept area
_CURVE_KW = [0, 0, 2, 18, 56, 127, 240, 400, 626, 892, 1223, 1590, 1900, 2080, 2230, 2300,
             2300, 2300, 2300, 2300, 2300, 2300, 2300, 2300, 2300, 2300]


def synthetic_turbine() -> TurbineSpec:
    """Plausible 2.3 MW power curve at 1 m/s knots, C_P derived at standard density."""
    area = 3959.0
    v = np.arange(len(_CURVE_KW), dtype=float)
    p = np.array(_CURVE_KW, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        cp = np.where(v > 0, p * 1000.0 / (0.5 * atmosphere.RHO_STANDARD * area * v ** 3), 0.0)
    return TurbineSpec(2300.0, area, np.column_stack([v, p]), np.column_stack([v, np.round(cp, 6)]),
                       cut_in=2.0, cut_out=25.0, name="synthetic-2300kW")


@dataclass(frozen=True)
class SourceErrorModel:
    name: str
    issuance_period: int
    lead_min: int
    lead_max: int
    bias: float = 0.0
    sd0: float = 0.5  # m/s at lead 0
    growth: float = 0.01  # m/s per lead hour
    resolution: float = 400.0  # m
    fine: bool = True
    levels: tuple[float, ...] = (-30.0, 0.0, 30.0)  # relative to hub height
    humidity: bool = True

    def sd(self, lead):
        return self.sd0 + self.growth * np.asarray(lead, dtype=float)

    def source(self) -> ForecastSource:
        return ForecastSource(self.name, self.issuance_period, self.lead_min, self.lead_max,
                              horizontal_resolution=self.resolution)


SIMRA_LIKE = SourceErrorModel("SIMRA", 12, 6, 18, sd0=0.25, growth=0.01, resolution=400.0, fine=True)
MEPS_LIKE = SourceErrorModel("MEPS", 6, 1, 61, sd0=1.0, growth=0.01, resolution=2500.0, fine=False,
                             levels=(-14.0, 36.0))


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    n_turbines: int = 5
    days: int = 365
    start: str = "2021-01-01T00:00:00"
    mean_wind: float = 8.0
    wind_sd: float = 2.5
    ar_coefficient: float = 0.98
    diurnal_amplitude: float = 1.0
    inter_turbine_correlation: float = 0.9
    mean_direction: float = 225.0
    direction_sd: float = 25.0
    temperature_mean: float = 285.15
    temperature_annual_amplitude: float = 15.0
    temperature_diurnal_amplitude: float = 4.0
    pressure_mean: float = 100800.0
    pressure_sd: float = 900.0
    humidity_mean: float = 0.78
    humidity_amplitude: float = 0.12
    jitter_min: float = 3.0  # minutes
    jitter_max: float = 10.0
    power_noise_sd: float = 15.0  # kW per sample
    speed_noise_sd: float = 0.15
    yaw_error_sd: float = 4.0
    missing_fraction: float = 0.002
    hub_height: float = 64.0
    sources: tuple[SourceErrorModel, ...] = (SIMRA_LIKE, MEPS_LIKE)

    def __post_init__(self):
        ctx = dict(module="synth-gen", operation="SynthConfig")
        if not 0 < self.ar_coefficient < 1:
            raise ConfigError("AR coefficient must be in (0, 1)", **ctx)
        if not 3.0 <= self.jitter_min <= self.jitter_max <= 10.0:
            raise ConfigError("SCADA jitter must lie within [3, 10] minutes", **ctx)
        if not 0 <= self.inter_turbine_correlation <= 1:
            raise ConfigError("inter-turbine correlation must be in [0, 1]", **ctx)
        if self.n_turbines < 1 or self.days < 1:
            raise ConfigError("need at least one turbine and one day", **ctx)
        for s in self.sources:
            if s.growth < 0 or s.sd0 < 0:
                raise ConfigError(f"{s.name}: error stddev and its growth must be >= 0", **ctx)
        object.__setattr__(self, "sources", tuple(
            SourceErrorModel(**s) if isinstance(s, dict) else s for s in self.sources))

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["sources"] = [asdict(s) for s in self.sources]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SynthConfig":
        doc = {k: v for k, v in doc.items() if k != "provenance"}
        if "sources" in doc:
            doc["sources"] = tuple(SourceErrorModel(**{**s, "levels": tuple(s.get("levels", (0.0,)))})
                                   for s in doc["sources"])
        return cls(**doc)

    def hash(self) -> str:
        return config_hash(self.to_json())


def config_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest()[:16]


def make_layout(config: SynthConfig, spacing: float | None = None) -> FarmLayout:
    fine = next((s for s in config.sources if s.fine), None)
    spacing = spacing or (fine.resolution if fine else 400.0)
    per_row = int(np.ceil(np.sqrt(config.n_turbines)))
    turbines = []
    for i in range(config.n_turbines):
        x, y = spacing * (i % per_row), spacing * (i // per_row)
        turbines.append(TurbineSite(f"T{i + 1:02d}", float(x), float(y), config.hub_height,
                                    elevation=float(250.0 + 10.0 * i)))
    return FarmLayout("synthetic-farm", {"x": 0.0, "y": 0.0, "crs": "local planar, metres"}, tuple(turbines))


@dataclass
class Truth:
    hours: np.ndarray
    wind_speed: np.ndarray  # (n_turbines, n_hours)
    wind_direction: np.ndarray
    temperature: np.ndarray  # (n_hours,)
    pressure: np.ndarray
    humidity: np.ndarray
    power: np.ndarray  # (n_turbines, n_hours)

    def weather(self, i: int) -> dict:
        return {"wind_speed": self.wind_speed[i], "temperature": self.temperature,
                "pressure": self.pressure, "humidity": self.humidity}


def _ar1(rng, n, phi, sd, shape=()):
    x = np.empty(shape + (n,))
    innov = rng.standard_normal(shape + (n,)) * sd * np.sqrt(1 - phi * phi)
    x[..., 0] = rng.standard_normal(shape) * sd
    for t in range(1, n):
        x[..., t] = phi * x[..., t - 1] + innov[..., t]
    return x


def generate_truth(config: SynthConfig, spec: TurbineSpec, rng: np.random.Generator) -> Truth:
    n = config.days * 24
    start = np.datetime64(config.start, "s")
    hours = start + np.arange(n) * HOUR
    hod = (hours - hours.astype("datetime64[D]")).astype(int) / 3600.0
    doy = (hours - hours.astype("datetime64[Y]")).astype(int) / 86400.0
    k = config.n_turbines
    phi = config.ar_coefficient
    rho = config.inter_turbine_correlation
    sd_innov = config.wind_sd * np.sqrt(1 - phi * phi)
    common = rng.standard_normal(n)
    local = rng.standard_normal((k, n))
    shocks = np.sqrt(rho) * common + np.sqrt(1 - rho) * local
    anomaly = np.empty((k, n))
    anomaly[:, 0] = config.wind_sd * shocks[:, 0]
    for t in range(1, n):
        anomaly[:, t] = phi * anomaly[:, t - 1] + sd_innov * shocks[:, t]
    diurnal = config.diurnal_amplitude * np.sin(2 * np.pi * (hod - 9.0) / 24.0)
    speed = np.maximum(config.mean_wind + diurnal + anomaly, 0.0)

    dir_anom = _ar1(rng, n, 0.97, config.direction_sd)
    offsets = rng.normal(0.0, 3.0, size=k)
    direction = wrap_degrees(config.mean_direction + dir_anom[None, :] + offsets[:, None])

    temperature = (config.temperature_mean
                   - config.temperature_annual_amplitude * np.cos(2 * np.pi * (doy - 20.0) / 365.25)
                   + config.temperature_diurnal_amplitude * np.sin(2 * np.pi * (hod - 9.0) / 24.0)
                   + _ar1(rng, n, 0.9, 1.0))
    pressure = config.pressure_mean + _ar1(rng, n, 0.98, config.pressure_sd)
    humidity = np.clip(config.humidity_mean
                       - config.humidity_amplitude * np.sin(2 * np.pi * (hod - 9.0) / 24.0)
                       + _ar1(rng, n, 0.9, 0.05), 0.05, 1.0)
    truth = Truth(hours, speed, direction, temperature, pressure, humidity, np.empty((k, n)))
    for i in range(k):
        truth.power[i] = predict_power(spec, truth.weather(i), TRUTH_VARIANT)
    return truth


def generate_scada(config: SynthConfig, layout: FarmLayout, spec: TurbineSpec, truth: Truth,
                   rng: np.random.Generator) -> pd.DataFrame:
    start = truth.hours[0]
    span = int((truth.hours[-1] + HOUR - start) / np.timedelta64(1, "s"))
    lo, hi = int(round(config.jitter_min * 60)), int(round(config.jitter_max * 60))
    frames = []
    for i, site in enumerate(layout.turbines):
        steps = rng.integers(lo, hi + 1, size=span // lo + 2)
        offsets = int(rng.integers(0, hi)) + np.concatenate([[0], np.cumsum(steps)])
        offsets = offsets[offsets < span]
        times = start + offsets.astype("timedelta64[s]")
        h = offsets // 3600
        m = offsets.size
        power = np.clip(truth.power[i, h] + rng.normal(0, config.power_noise_sd, m), 0.0, spec.rated_power)
        speed = np.maximum(truth.wind_speed[i, h] + rng.normal(0, config.speed_noise_sd, m), 0.0)
        wdir = wrap_degrees(truth.wind_direction[i, h] + rng.normal(0, 2.0, m))
        ndir = wrap_degrees(truth.wind_direction[i, h] + rng.normal(0, config.yaw_error_sd, m))
        values = np.column_stack([speed, wdir, ndir, power])
        values[rng.random(values.shape) < config.missing_fraction] = np.nan
        frames.append(pd.DataFrame({
            "turbine_id": site.id,
            "timestamp": np.repeat(format_times(times), 4),
            "channel": np.tile(["wind_speed", "wind_direction", "nacelle_direction", "active_power"], m),
            "value": values.ravel(),
        }))
    return pd.concat(frames, ignore_index=True)


def _grid_nodes(model: SourceErrorModel, layout: FarmLayout) -> np.ndarray:
    xy = np.array([[t.x, t.y] for t in layout.turbines])
    if model.fine:
        xs = np.arange(xy[:, 0].min(), xy[:, 0].max() + model.resolution / 2, model.resolution)
        ys = np.arange(xy[:, 1].min(), xy[:, 1].max() + model.resolution / 2, model.resolution)
    else:
        centre = xy.mean(axis=0)
        xs = centre[0] + np.array([-0.5, 0.5]) * model.resolution
        ys = centre[1] + np.array([-0.5, 0.5]) * model.resolution
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def generate_forecast(model: SourceErrorModel, layout: FarmLayout, truth: Truth,
                      rng: np.random.Generator) -> ForecastSet:
    n = truth.hours.size
    hub = layout.turbines[0].hub_height
    leads = np.arange(model.lead_min, model.lead_max + 1)
    issue_idx = np.arange(0, n, model.issuance_period)
    ii, ll = np.meshgrid(issue_idx, leads, indexing="ij")
    valid_idx = ii + ll
    keep = valid_idx < n
    ii, ll, vi = ii[keep], ll[keep], valid_idx[keep]
    err = model.bias + model.sd(ll) * rng.standard_normal(ii.size)

    nodes = _grid_nodes(model, layout)
    farm_speed = truth.wind_speed.mean(axis=0)
    farm_dir = circular_mean(truth.wind_direction, axis=0)
    node_speed = np.tile(farm_speed, (len(nodes), 1))
    node_dir = np.tile(farm_dir, (len(nodes), 1))
    if model.fine:
        for i, t in enumerate(layout.turbines):
            hit = np.flatnonzero((nodes[:, 0] == t.x) & (nodes[:, 1] == t.y))
            node_speed[hit] = truth.wind_speed[i]
            node_dir[hit] = truth.wind_direction[i]

    heights = hub + np.asarray(model.levels, dtype=float)
    dz = heights - hub
    speed_hub = np.maximum(node_speed[:, vi].T + err[:, None], 0.0)  # (rows, nodes)
    T = truth.temperature[vi]
    p = truth.pressure[vi]
    rho = atmosphere.density_dry(T, p)
    fields = {
        "wind_speed": speed_hub[:, :, None] * (1.0 + SHEAR * dz / hub)[None, None, :],
        "wind_direction": np.repeat(node_dir[:, vi].T[:, :, None], len(heights), axis=2),
        "temperature": np.broadcast_to((T[:, None] - LAPSE * dz[None, :])[:, None, :],
                                       (vi.size, len(nodes), len(heights))).copy(),
        "pressure": np.broadcast_to((p[:, None] - (rho * GRAVITY)[:, None] * dz[None, :])[:, None, :],
                                    (vi.size, len(nodes), len(heights))).copy(),
    }
    if model.humidity:
        fields["humidity"] = np.broadcast_to(truth.humidity[vi][:, None, None],
                                             (vi.size, len(nodes), len(heights))).copy()
    order = np.lexsort((ll, ii))
    fields = {k: v[order] for k, v in fields.items()}
    return ForecastSet(model.source(), truth.hours[ii[order]], truth.hours[vi[order]], nodes, heights, fields)


def truth_frame(layout: FarmLayout, truth: Truth) -> pd.DataFrame:
    frames = []
    stamps = format_times(truth.hours)
    for i, site in enumerate(layout.turbines):
        frames.append(pd.DataFrame({
            "turbine_id": site.id, "timestamp": stamps,
            "wind_speed": truth.wind_speed[i], "wind_direction": truth.wind_direction[i],
            "temperature": truth.temperature, "pressure": truth.pressure, "humidity": truth.humidity,
            "power": truth.power[i],
        }))
    return pd.concat(frames, ignore_index=True)


@dataclass
class SynthDataset:
    config: SynthConfig
    layout: FarmLayout
    spec: TurbineSpec
    truth: Truth
    scada: pd.DataFrame
    forecasts: dict = field(default_factory=dict)


def generate(config: SynthConfig = SynthConfig(), spec: TurbineSpec | None = None) -> SynthDataset:
    spec = spec or synthetic_turbine()
    streams = np.random.SeedSequence(config.seed).spawn(2 + len(config.sources))
    layout = make_layout(config)
    truth = generate_truth(config, spec, np.random.default_rng(streams[0]))
    scada = generate_scada(config, layout, spec, truth, np.random.default_rng(streams[1]))
    forecasts = {m.name: generate_forecast(m, layout, truth, np.random.default_rng(s))
                 for m, s in zip(config.sources, streams[2:])}
    return SynthDataset(config, layout, spec, truth, scada, forecasts)


def default_run_config(dataset: SynthDataset, out_dir: Path) -> dict:
    """Run configuration pointing at the generated files, with a chronological 2:1 split."""
    hours = dataset.truth.hours
    cut = hours[int(len(hours) * 2 // 3)]
    fmt = lambda t: str(np.datetime_as_string(t, unit="s")) + "Z"  # noqa: E731
    sampling = {m.name: ("nearest" if m.fine else "idw4") for m in dataset.config.sources}
    return {
        "seed": dataset.config.seed,
        "paths": {
            "scada": "scada.csv",
            "layout": "layout.json",
            "turbine_spec": "turbine.json",
            "forecasts": {name: f"forecast_{name.lower()}.csv" for name in dataset.forecasts},
            "output_dir": "run",
        },
        "sampling": sampling,
        "ddm": {"kinds": ["persistence", "dnn", "lstm"], "overrides": {"lstm": {"max_epochs": LSTM_EPOCHS}}},
        "evaluation": {
            "normalizer": "rated",
            "selection_period": [fmt(hours[0]), fmt(cut - HOUR)],
            "report_period": [fmt(cut), fmt(hours[-1])],
        },
    }


def write_dataset(dataset: SynthDataset, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = f"config_hash={dataset.config.hash()} seed={dataset.config.seed}"
    paths = {}

    def csv(name, frame, fmt):
        path = out / name
        with open(path, "w", newline="") as fh:
            fh.write(f"# {stamp}\n")
            frame.to_csv(fh, index=False, float_format=fmt, lineterminator="\n")
        paths[name] = path

    def js(name, doc):
        path = out / name
        path.write_text(json.dumps({**doc, "provenance": stamp} if isinstance(doc, dict) else doc,
                                   indent=1, sort_keys=True) + "\n")
        paths[name] = path

    js("layout.json", dataset.layout.to_json())
    js("turbine.json", dataset.spec.to_json())
    js("synth_config.json", dataset.config.to_json())
    csv("scada.csv", dataset.scada, "%.8g")
    csv("truth.csv", truth_frame(dataset.layout, dataset.truth), "%.10g")
    for name, fcst in dataset.forecasts.items():
        path = out / f"forecast_{name.lower()}.csv"
        write_forecast(fcst, path, header_comment=stamp)
        paths[path.name] = path
    js("run_config.json", default_run_config(dataset, out))
    return paths


def with_sources(config: SynthConfig, **changes) -> SynthConfig:
    """Copy of ``config`` with per-source fields replaced, e.g. ``SIMRA={"sd0": 0}``."""
    sources = tuple(replace(s, **changes.get(s.name, {})) for s in config.sources)
    return replace(config, sources=sources)
