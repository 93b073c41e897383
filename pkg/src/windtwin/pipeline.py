"""Config-driven batch steps: ingest, train, predict, evaluate, hybrid.

Each step reads the outputs of the previous one from the run's output
directory, so steps can be invoked separately or chained by :func:`run_all`.
Every file written carries a ``config_hash=... seed=...`` stamp, as a leading
``#`` comment in CSV files or a ``provenance`` key in JSON files.

Output tree::

    store/hourly/<turbine>.csv      hourly means of every SCADA channel
    store/load_summary.json
    models/<turbine>_<kind>.json    trained DDM parameters
    models/<turbine>_<kind>_log.csv per-epoch losses
    predictions/<model>/<turbine>.csv
    predictions/metadata.json       model list, sampling strategies, skipped variants
    reports/<period>/               nrmse_<scope>.csv, spread_<model>.csv, schedule.csv
    hybrid/schedule.csv
    hybrid/<period>/                reports of the stitched hybrid forecast
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import pandas as pd

from . import ddm
from .errors import ConfigError, MissingInputError, OutputError, ValidationError
from .evaluation import (FARM, NORMALIZERS, PredictionMatrix, apply_hybrid, emit_report,
                         evaluate_by_lead, farm_aggregate, farm_measured, normalizer_for, select_hybrid,
                         write_schedule)
from .nwp import load_forecast, sample_at_hub
from .power import (DENSITIES, INTERPOLATIONS, MAPPINGS, ModelVariant, TurbineSpec, load_turbine_spec,
                    predict_power)
from .synth import config_hash
from .timeseries import CHANNELS, format_times, hourly_frame, load_layout, load_scada, to_time

log = logging.getLogger(__name__)

DDM_KINDS = ddm.KINDS
PERIODS = ("selection", "report")


def _ctx(operation: str) -> dict:
    return dict(module="cli", operation=operation)


@dataclass(frozen=True)
class RunConfig:
    """Resolved run configuration; paths are absolute."""

    doc: dict
    base_dir: Path
    seed: int
    scada: Path
    layout: Path
    turbine_spec: Path
    forecasts: dict
    output_dir: Path
    sources: tuple
    densities: tuple
    mappings: tuple
    interpolations: tuple
    caps: tuple
    skip_unavailable: bool
    sampling: dict
    height_reference: str
    ddm_kinds: tuple
    training: ddm.TrainingConfig
    overrides: dict
    normalizer: str
    periods: dict
    horizon: int
    priority: tuple | None
    hybrid: bool

    @property
    def hash(self) -> str:
        """Hash of the configuration document, independent of where outputs go."""
        doc = copy.deepcopy(self.doc)
        doc.get("paths", {}).pop("output_dir", None)
        doc.pop("provenance", None)
        return config_hash(doc)

    @property
    def stamp(self) -> str:
        return f"config_hash={self.hash} seed={self.seed}"

    def training_for(self, kind: str, seed: int) -> ddm.TrainingConfig:
        extra = self.overrides.get(kind, {})
        return replace(self.training, **extra, seed=int(seed))

    def resolve(self, *parts) -> Path:
        return self.output_dir.joinpath(*parts)


_TRAINING_FIELDS = {f.name for f in fields(ddm.TrainingConfig)} - {"seed"}


def _as_tuple(value, default) -> tuple:
    if value is None:
        return tuple(default)
    if isinstance(value, (str, bool)):
        return (value,)
    return tuple(value)


def _period(value, name: str):
    if value is None:
        return None
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{name} must be [start, end]", **_ctx("load_config"))
    try:
        start, end = to_time(value[0]), to_time(value[1])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name}: {exc}", **_ctx("load_config")) from None
    if end < start:
        raise ConfigError(f"{name} ends before it starts", **_ctx("load_config"))
    return start, end


def parse_run_config(doc: Mapping, base_dir: Path | str = ".", check_files: bool = True) -> RunConfig:
    ctx = _ctx("load_config")
    doc = copy.deepcopy(dict(doc))
    base = Path(base_dir).resolve()
    paths = doc.get("paths") or {}
    missing = [k for k in ("scada", "layout", "turbine_spec") if k not in paths]
    if missing:
        raise ConfigError(f"paths missing {missing}", **ctx)

    def path(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    forecasts = {str(k): path(v) for k, v in (paths.get("forecasts") or {}).items()}
    files = {"scada": path(paths["scada"]), "layout": path(paths["layout"]),
             "turbine_spec": path(paths["turbine_spec"]), **{f"forecast {k}": v for k, v in forecasts.items()}}
    if check_files:
        absent = [f"{k}={v}" for k, v in files.items() if not v.is_file()]
        if absent:
            raise ConfigError(f"referenced file(s) not found: {', '.join(absent)}", location=str(base), **ctx)

    variants = doc.get("variants") or {}
    sources = _as_tuple(variants.get("sources"), forecasts)
    densities = _as_tuple(variants.get("densities"), DENSITIES)
    mappings = _as_tuple(variants.get("mappings"), MAPPINGS)
    interpolations = _as_tuple(variants.get("interpolations"), INTERPOLATIONS)
    caps = _as_tuple(variants.get("caps"), (True, False))
    for name, vals, allowed in (("densities", densities, DENSITIES), ("mappings", mappings, MAPPINGS),
                                ("interpolations", interpolations, INTERPOLATIONS), ("caps", caps, (True, False))):
        bad = [v for v in vals if v not in allowed]
        if bad:
            raise ConfigError(f"variants.{name}: unknown value(s) {bad}", **ctx)

    sampling = dict(doc.get("sampling") or {})
    height_reference = sampling.pop("height_reference", "terrain")
    for src, strategy in sampling.items():
        if strategy not in ("nearest", "idw4"):
            raise ConfigError(f"sampling.{src}: unknown strategy {strategy!r}", **ctx)
    if height_reference not in ("terrain", "sea"):
        raise ConfigError(f"unknown height_reference {height_reference!r}", **ctx)

    ddm_doc = dict(doc.get("ddm") or {})
    kinds = _as_tuple(ddm_doc.pop("kinds", None), DDM_KINDS)
    bad = [k for k in kinds if k not in DDM_KINDS]
    if bad:
        raise ConfigError(f"ddm.kinds: unknown kind(s) {bad}", **ctx)
    overrides = ddm_doc.pop("overrides", {}) or {}
    unknown = set(ddm_doc) - _TRAINING_FIELDS
    for kind, extra in overrides.items():
        unknown |= set(extra) - _TRAINING_FIELDS
    if unknown:
        raise ConfigError(f"ddm: unknown training field(s) {sorted(unknown)}", **ctx)
    if "layer_units" in ddm_doc:
        ddm_doc["layer_units"] = tuple(ddm_doc["layer_units"])
    try:
        training = ddm.TrainingConfig(**ddm_doc, seed=0)
        for kind, extra in overrides.items():
            replace(training, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"ddm: {exc}", **ctx) from None

    ev = doc.get("evaluation") or {}
    normalizer = ev.get("normalizer", "rated")
    if normalizer not in NORMALIZERS:
        raise ConfigError(f"unknown normalizer {normalizer!r}", **ctx)
    periods = {"selection": _period(ev.get("selection_period"), "selection_period"),
               "report": _period(ev.get("report_period"), "report_period")}
    hybrid = bool(ev.get("hybrid", True))
    sel, rep = periods["selection"], periods["report"]
    if hybrid and sel and rep and not (sel[1] < rep[0] or rep[1] < sel[0]):
        raise ConfigError("selection and report periods overlap", **ctx)
    horizon = int(ev.get("horizon", 61))
    if horizon < 1:
        raise ConfigError("horizon must be >= 1", **ctx)
    priority = tuple(ev["priority"]) if ev.get("priority") else None

    try:
        seed = int(doc.get("seed", 0))
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an integer, got {doc.get('seed')!r}", **ctx) from None
    out = path(paths.get("output_dir", "run"))
    return RunConfig(doc, base, seed, files["scada"], files["layout"], files["turbine_spec"], forecasts, out,
                     sources, densities, mappings, interpolations, caps, bool(variants.get("skip_unavailable", True)),
                     sampling, height_reference, kinds, training, overrides, normalizer, periods, horizon,
                     priority, hybrid)


def load_run_config(path, seed: int | None = None, output_dir=None, check_files: bool = True) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such config file: {path}", location=str(path), **_ctx("load_config")) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", location=f"{path}:{exc.lineno}",
                          **_ctx("load_config")) from None
    if seed is not None:
        doc["seed"] = int(seed)
    if output_dir is not None:
        doc.setdefault("paths", {})["output_dir"] = str(Path(output_dir).resolve())
    return parse_run_config(doc, path.parent, check_files)


# -- helpers ---------------------------------------------------------------

def _mkdir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {path}: {exc}", location=str(path), **_ctx("write")) from exc
    return path


def write_json(path: Path, doc: dict, stamp: str) -> None:
    _mkdir(path.parent)
    try:
        path.write_text(json.dumps({**doc, "provenance": stamp}, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}", location=str(path), **_ctx("write")) from exc


def _require(path: Path, step: str, operation: str) -> Path:
    if not path.exists():
        raise MissingInputError(f"{path} not found; run `{step}` first", location=str(path), **_ctx(operation))
    return path


def derived_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed), *keys]).generate_state(1)[0])


# -- ingest ----------------------------------------------------------------

def ingest(cfg: RunConfig) -> dict[str, pd.DataFrame]:
    """Validate the SCADA file and store hourly means on a farm-wide hour grid."""
    layout = load_layout(cfg.layout)
    data = load_scada(cfg.scada)
    unknown = [t for t in data if t not in layout.ids]
    if unknown:
        raise ValidationError(f"SCADA turbines {unknown} not in layout", location=str(cfg.scada),
                              module="core-data", operation="ingest")
    all_series = [s for channels in data.values() for s in channels.values() if len(s)]
    if not all_series:
        raise ValidationError("SCADA file holds no samples", location=str(cfg.scada), module="core-data",
                              operation="ingest")
    start = min(s.times[0] for s in all_series).astype("datetime64[h]")
    end = max(s.times[-1] for s in all_series).astype("datetime64[h]")
    out_dir = _mkdir(cfg.resolve("store", "hourly"))
    frames = {}
    for turbine in layout.ids:
        if turbine not in data:
            continue
        frame = hourly_frame(data[turbine], start, end)
        frames[turbine] = frame
        _write_hourly(frame, out_dir / f"{turbine}.csv", cfg.stamp)
    summary = data.summary.to_json()
    summary.update(hours=int(len(next(iter(frames.values())))),
                   start=str(format_times(np.array([start], dtype="datetime64[s]"))[0]),
                   end=str(format_times(np.array([end], dtype="datetime64[s]"))[0]))
    write_json(cfg.resolve("store", "load_summary.json"), summary, cfg.stamp)
    return frames


def _write_hourly(frame: pd.DataFrame, path: Path, stamp: str) -> None:
    stamps = format_times(frame.index.to_numpy().astype("datetime64[s]"))
    with open(path, "w", newline="") as fh:
        fh.write(f"# {stamp}\n")
        fh.write(",".join(["timestamp", *frame.columns]) + "\n")
        for t, row in zip(stamps, frame.to_numpy().tolist()):
            fh.write(t + "," + ",".join("" if x != x else repr(x) for x in row) + "\n")


def read_hourly(path: Path) -> pd.DataFrame:
    frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    times = frame.pop("timestamp").str.rstrip("Z").to_numpy().astype("datetime64[s]")
    frame.index = pd.DatetimeIndex(times, name="timestamp")
    return frame.reindex(columns=[c for c in CHANNELS if c in frame.columns])


def load_store(cfg: RunConfig, operation: str = "load_store") -> dict[str, pd.DataFrame]:
    _require(cfg.resolve("store", "load_summary.json"), "ingest", operation)
    layout = load_layout(cfg.layout)
    out = {}
    for turbine in layout.ids:
        path = cfg.resolve("store", "hourly", f"{turbine}.csv")
        if path.exists():
            out[turbine] = read_hourly(path)
    if not out:
        raise MissingInputError("hourly store is empty; run `ingest` first",
                                location=str(cfg.resolve("store")), **_ctx(operation))
    return out


def _hours(frame: pd.DataFrame) -> np.ndarray:
    return frame.index.to_numpy().astype("datetime64[s]")


def _in_period(times: np.ndarray, period) -> np.ndarray:
    if period is None:
        return np.ones(times.size, dtype=bool)
    return (times >= period[0]) & (times <= period[1])


# -- train -----------------------------------------------------------------

def train(cfg: RunConfig) -> dict[tuple[str, str], ddm.TrainingLog]:
    """Fit every configured DDM kind per turbine on the selection period."""
    store = load_store(cfg, "train")
    spec = load_turbine_spec(cfg.turbine_spec)
    layout = load_layout(cfg.layout)
    out_dir = _mkdir(cfg.resolve("models"))
    logs = {}
    for ti, turbine in enumerate(layout.ids):
        if turbine not in store:
            continue
        frame = store[turbine]
        power = frame["active_power"].to_numpy(dtype=float)
        power = np.where(_in_period(_hours(frame), cfg.periods["selection"]), power, np.nan)
        for kind in cfg.ddm_kinds:
            seed = derived_seed(cfg.seed, ti, DDM_KINDS.index(kind))
            tcfg = cfg.training_for(kind, seed)
            if kind == "persistence":
                model, tlog = ddm.ForecastModel("persistence", {}, spec.rated_power, tcfg), ddm.TrainingLog()
            else:
                data = ddm.supervised_for(kind, power, tcfg, spec.rated_power)
                log.info("training %s for %s on %d windows", kind, turbine, data.n_windows)
                model, tlog = ddm.train(data, kind, tcfg, scale=spec.rated_power)
            ddm.save_model(model, out_dir / f"{turbine}_{kind}.json",
                           extra={"turbine_id": turbine, "provenance": cfg.stamp})
            tlog.to_csv(out_dir / f"{turbine}_{kind}_log.csv", header_comment=cfg.stamp)
            logs[(turbine, kind)] = tlog
    return logs


# -- predict ---------------------------------------------------------------

def ddm_forecasts(model: ddm.ForecastModel, power: np.ndarray, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Origins (indices into ``power``) and their ``horizon``-step forecasts in kW.

    Persistence forecasts from the latest present value at or before the
    origin; the networks need a complete input window ending at the origin.
    """
    n = power.size
    present = ~np.isnan(power)
    if model.kind == "persistence":
        last = np.where(present, np.arange(n), -1)
        last = np.maximum.accumulate(last)
        origins = np.flatnonzero(last >= 0)
        values = power[last[origins]]
        return origins, np.repeat(values[:, None], horizon, axis=1)
    width = model.window
    if n < width:
        return np.zeros(0, dtype=int), np.zeros((0, horizon))
    idx = np.arange(width - 1, n)
    windows = power[idx[:, None] - np.arange(width - 1, -1, -1)[None, :]]
    ok = ~np.isnan(windows).any(axis=1)
    origins = idx[ok]
    if origins.size == 0:
        return origins, np.zeros((0, horizon))
    return origins, ddm.rollout(model, windows[ok], horizon)


def _physics_variants(cfg: RunConfig, source: str) -> list[ModelVariant]:
    return [ModelVariant(source, d, m, i, c) for d in cfg.densities for m in cfg.mappings
            for i in cfg.interpolations for c in cfg.caps]


def iter_predict(cfg: RunConfig, meta: dict | None = None):
    """Compute and write predictions model by model, yielding ``(model id, {turbine: matrix})``.

    ``meta`` is filled in as models are produced; ``predictions/metadata.json``
    is written once the generator is exhausted.
    """
    store = load_store(cfg, "predict")
    spec = load_turbine_spec(cfg.turbine_spec)
    layout = load_layout(cfg.layout)
    turbines = [t for t in layout.ids if t in store]
    targets = _hours(store[turbines[0]])
    pred_dir = _mkdir(cfg.resolve("predictions"))
    meta = {} if meta is None else meta
    meta.update(models=[], skipped=[], sampling={}, turbines=turbines, horizon=cfg.horizon,
                targets=[str(format_times(targets[:1])[0]), str(format_times(targets[-1:])[0])])

    def write(model_id: str, matrices: dict):
        _mkdir(pred_dir / model_id)
        for turbine, matrix in matrices.items():
            try:
                matrix.write_csv(pred_dir / model_id / f"{turbine}.csv", header_comment=cfg.stamp)
            except OSError as exc:
                raise OutputError(f"cannot write predictions: {exc}", **_ctx("predict")) from exc
        return model_id, matrices

    for kind in cfg.ddm_kinds:
        matrices = {}
        for turbine in turbines:
            path = _require(cfg.resolve("models", f"{turbine}_{kind}.json"), "train", "predict")
            model = ddm.load_model(path)
            power = store[turbine]["active_power"].to_numpy(dtype=float)
            origins, fc = ddm_forecasts(model, power, cfg.horizon)
            matrices[turbine] = PredictionMatrix.from_rollouts(kind, turbine, targets, targets[origins], fc)
        meta["models"].append({"id": kind, "family": "ddm", "kind": kind})
        yield write(kind, matrices)

    for source in cfg.sources:
        variants = _physics_variants(cfg, source)
        if source not in cfg.forecasts:
            reason = f"no forecast file configured for source {source}"
            if not cfg.skip_unavailable:
                raise ConfigError(reason, **_ctx("predict"))
            meta["skipped"] += [{"id": v.id, "reason": reason} for v in variants]
            continue
        fcst = load_forecast(cfg.forecasts[source])
        strategy = cfg.sampling.get(source, "nearest")
        hubs = {t: sample_at_hub(fcst, layout[t], strategy, cfg.height_reference) for t in turbines}
        meta["sampling"][source] = {"strategy": strategy, "height_reference": cfg.height_reference,
                                    "turbines": {t: dict(h.meta) for t, h in hubs.items()}}
        for v in variants:
            if v.density == "humid" and not fcst.has_humidity:
                reason = f"{source} forecasts carry no humidity"
                if not cfg.skip_unavailable:
                    raise ConfigError(reason, **_ctx("predict"))
                meta["skipped"].append({"id": v.id, "reason": reason})
                continue
            matrices = {t: PredictionMatrix.from_entries(v.id, t, targets, h.valid, h.lead,
                                                         predict_power(spec, h, v), cfg.horizon)
                        for t, h in hubs.items()}
            meta["models"].append({"id": v.id, "family": "physics", "source": v.source, "density": v.density,
                                   "mapping": v.mapping, "interpolation": v.interpolation, "cap": v.cap})
            yield write(v.id, matrices)

    write_json(pred_dir / "metadata.json", meta, cfg.stamp)


def predict(cfg: RunConfig) -> dict:
    """Write a prediction matrix per model and turbine; returns the metadata document."""
    meta = {}
    for _ in iter_predict(cfg, meta):
        pass
    return meta


# -- evaluate --------------------------------------------------------------

@dataclass
class Evaluation:
    """Reports per period, keyed by (model id, scope)."""

    reports: dict = field(default_factory=dict)

    def farm(self, period: str) -> list:
        return [r for (m, s), r in self.reports[period].items() if s == FARM]


def _metadata(cfg: RunConfig, operation: str) -> dict:
    path = _require(cfg.resolve("predictions", "metadata.json"), "predict", operation)
    return json.loads(path.read_text())


def _load_matrices(cfg: RunConfig, model_id: str, turbines, targets) -> dict[str, PredictionMatrix]:
    out = {}
    for turbine in turbines:
        path = _require(cfg.resolve("predictions", model_id, f"{turbine}.csv"), "predict", "evaluate")
        out[turbine] = PredictionMatrix.read_csv(path, model_id, turbine, targets, cfg.horizon)
    return out


class _Scorer:
    """Measured series and normalizers shared by all models within one period."""

    def __init__(self, cfg: RunConfig, store: Mapping[str, pd.DataFrame], spec: TurbineSpec, turbines, period):
        self.cfg = cfg
        self.period = period
        self.turbines = list(turbines)
        self.times = _hours(store[self.turbines[0]])
        keep = _in_period(self.times, period)
        self.measured = {t: np.where(keep, store[t]["active_power"].to_numpy(dtype=float), np.nan)
                         for t in self.turbines}
        self.farm = farm_measured([self.measured[t] for t in self.turbines])
        kind = cfg.normalizer
        self.norm = {t: normalizer_for(kind, spec.rated_power, self.measured[t]) for t in self.turbines}
        self.norm[FARM] = normalizer_for(kind, spec.rated_power * len(self.turbines), self.farm)

    def restrict(self, m: PredictionMatrix) -> PredictionMatrix:
        return m.restrict(*self.period) if self.period else m

    def score(self, matrices: Mapping[str, PredictionMatrix]) -> dict[str, Any]:
        parts = [self.restrict(matrices[t]) for t in self.turbines]
        out = {}
        for t, m in zip(self.turbines, parts):
            out[t] = evaluate_by_lead(m, self.times, self.measured[t], self.norm[t], self.cfg.normalizer)
        farm = farm_aggregate(parts)
        out[FARM] = evaluate_by_lead(farm, self.times, self.farm, self.norm[FARM], self.cfg.normalizer)
        return out


def _periods(cfg: RunConfig) -> dict:
    defined = {k: v for k, v in cfg.periods.items() if v is not None}
    return defined or {"all": None}


def evaluate(cfg: RunConfig, stream=None) -> Evaluation:
    """Per-lead NRMSE of every predicted model, per turbine and for the farm, per period.

    Predictions are read back from disk unless ``stream`` supplies the
    ``(model id, {turbine: matrix})`` pairs directly (see :func:`iter_predict`).
    """
    store = load_store(cfg, "evaluate")
    spec = load_turbine_spec(cfg.turbine_spec)
    if stream is None:
        meta = _metadata(cfg, "evaluate")
        turbines = meta["turbines"]
        targets = _hours(store[turbines[0]])
        stream = ((m["id"], _load_matrices(cfg, m["id"], turbines, targets)) for m in meta["models"])
    else:
        turbines = [t for t in load_layout(cfg.layout).ids if t in store]
    result = Evaluation()
    scorers = {name: _Scorer(cfg, store, spec, turbines, p) for name, p in _periods(cfg).items()}
    for name in scorers:
        result.reports[name] = {}
    for model_id, matrices in stream:
        for name, scorer in scorers.items():
            for scope, rep in scorer.score(matrices).items():
                result.reports[name][(model_id, scope)] = rep
    for name, reports in result.reports.items():
        emit_report(list(reports.values()), None, cfg.resolve("reports", name), cfg.stamp)
    return result


def score_models(cfg: RunConfig, model_ids=None, period=None) -> dict:
    """``{model id: {scope: LeadTimeReport}}`` for written predictions over ``period`` (None: whole span)."""
    meta = _metadata(cfg, "score_models")
    store = load_store(cfg, "score_models")
    spec = load_turbine_spec(cfg.turbine_spec)
    turbines = meta["turbines"]
    targets = _hours(store[turbines[0]])
    period = None if period is None else (to_time(period[0]), to_time(period[1]))
    scorer = _Scorer(cfg, store, spec, turbines, period)
    ids = [m["id"] for m in meta["models"]] if model_ids is None else list(model_ids)
    return {m: scorer.score(_load_matrices(cfg, m, turbines, targets)) for m in ids}


# -- hybrid ----------------------------------------------------------------

def default_priority(meta: dict) -> list[str]:
    return [m["id"] for m in meta["models"]]


def hybrid(cfg: RunConfig, evaluation: Evaluation | None = None):
    """Select the best farm model per lead on the selection period and score the stitched forecast."""
    meta = _metadata(cfg, "hybrid")
    store = load_store(cfg, "hybrid")
    spec = load_turbine_spec(cfg.turbine_spec)
    turbines = meta["turbines"]
    targets = _hours(store[turbines[0]])
    periods = _periods(cfg)
    select_name = "selection" if "selection" in periods else next(iter(periods))
    select_period = periods[select_name]
    if evaluation is None or select_name not in evaluation.reports:
        scorer = _Scorer(cfg, store, spec, turbines, select_period)
        farm_reports = [scorer.score(_load_matrices(cfg, m["id"], turbines, targets))[FARM] for m in meta["models"]]
    else:
        farm_reports = evaluation.farm(select_name)
    priority = list(cfg.priority) if cfg.priority else default_priority(meta)
    schedule = select_hybrid(farm_reports, range(1, cfg.horizon + 1), priority,
                             selection_period=tuple(str(p) for p in select_period) if select_period else ())
    out = _mkdir(cfg.resolve("hybrid"))
    write_schedule(schedule, out / "schedule.csv", cfg.stamp)

    chosen = sorted(set(schedule.choice.values()), key=priority.index)
    per_model = {m: _load_matrices(cfg, m, turbines, targets) for m in chosen}
    stitched = {t: apply_hybrid(schedule, {m: per_model[m][t] for m in chosen}) for t in turbines}
    result = {}
    for name, period in periods.items():
        scorer = _Scorer(cfg, store, spec, turbines, period)
        reps = scorer.score(stitched)
        result[name] = reps
        emit_report(list(reps.values()), schedule, out / name, cfg.stamp)
    return schedule, result


def run_all(cfg: RunConfig) -> dict:
    ingest(cfg)
    train(cfg)
    meta = {}
    ev = evaluate(cfg, iter_predict(cfg, meta))
    out = {"metadata": meta, "evaluation": ev}
    if cfg.hybrid:
        out["schedule"], out["hybrid"] = hybrid(cfg, ev)
    return out


__all__ = [
    "RunConfig", "parse_run_config", "load_run_config", "ingest", "train", "predict", "evaluate", "hybrid",
    "run_all", "iter_predict", "score_models", "ddm_forecasts", "derived_seed", "read_hourly", "load_store", "Evaluation",
]
