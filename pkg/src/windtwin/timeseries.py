"""SCADA time series: loading, point queries, and hourly aggregation.

Timestamps are UTC ``datetime64[s]``; missing samples are NaN and stay NaN
through every operation (nothing is zero-filled).  Aggregated hourly values are
stamped with the start of their interval ``[h, h + 1 h)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Mapping

import numpy as np
import pandas as pd

from .errors import FormatError, ValidationError

CHANNELS = ("wind_speed", "wind_direction", "nacelle_direction", "active_power")
ANGULAR_CHANNELS = frozenset({"wind_direction", "nacelle_direction"})
SCADA_HEADER = ["turbine_id", "timestamp", "channel", "value"]

HOUR = np.timedelta64(3600, "s")


def to_time(value) -> np.datetime64:
    """Coerce an ISO string, datetime or datetime64 into UTC ``datetime64[s]``."""
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[s]")
    if isinstance(value, str):
        return np.datetime64(value.rstrip("Z").replace("+00:00", ""), "s")
    ts = pd.Timestamp(value)
    if ts.tzinfo is not None:
        ts = ts.tz_convert("UTC").tz_localize(None)
    return ts.to_datetime64().astype("datetime64[s]")


def parse_times(strings: Iterable[str]) -> np.ndarray:
    """Vectorised ISO-8601 parse to naive UTC ``datetime64[s]``."""
    parsed = pd.to_datetime(pd.Series(list(strings), dtype=object), utc=True, format="ISO8601")
    return parsed.dt.tz_localize(None).to_numpy().astype("datetime64[s]")


def format_times(times: np.ndarray) -> np.ndarray:
    return np.char.add(np.datetime_as_string(np.asarray(times, dtype="datetime64[s]"), unit="s"), "Z")


def wrap_degrees(deg):
    """Wrap angles into [0, 360); values within 1e-9 of 360 snap to 0."""
    wrapped = np.mod(np.asarray(deg, dtype=float), 360.0)
    wrapped = np.where(wrapped >= 360.0 - 1e-9, 0.0, wrapped)
    return wrapped if np.ndim(wrapped) else float(wrapped)


def circular_mean(deg, weights=None, axis=None):
    """Direction of the (weighted) resultant of unit vectors, in degrees."""
    rad = np.deg2rad(np.asarray(deg, dtype=float))
    w = np.ones_like(rad) if weights is None else np.asarray(weights, dtype=float)
    s = np.sum(w * np.sin(rad), axis=axis)
    c = np.sum(w * np.cos(rad), axis=axis)
    return wrap_degrees(np.rad2deg(np.arctan2(s, c)))


@dataclass(frozen=True)
class TimeSeries:
    """One channel of one turbine.  Immutable; ``append`` returns a new snapshot."""

    channel: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValidationError(f"unknown channel {self.channel!r}", module="core-data", operation="TimeSeries")
        times = np.asarray(self.times, dtype="datetime64[s]").copy()
        values = np.asarray(self.values, dtype=float).copy()
        if times.shape != values.shape or times.ndim != 1:
            raise ValidationError("times and values must be equal-length 1-D arrays",
                                  module="core-data", operation="TimeSeries")
        if times.size > 1:
            bad = np.flatnonzero(np.diff(times) <= np.timedelta64(0, "s"))
            if bad.size:
                raise ValidationError("timestamps not strictly increasing", module="core-data",
                                      operation="TimeSeries", location=f"sample {bad[0] + 1}")
        if self.is_angular:
            present = ~np.isnan(values)
            values[present] = wrap_degrees(values[present])
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def is_angular(self) -> bool:
        return self.channel in ANGULAR_CHANNELS

    def __len__(self) -> int:
        return self.times.size

    @property
    def missing_count(self) -> int:
        return int(np.isnan(self.values).sum())

    def append(self, times, values) -> "TimeSeries":
        """Single-writer streaming append; readers holding the old object are unaffected."""
        return TimeSeries(self.channel, np.concatenate([self.times, np.asarray(times, dtype="datetime64[s]")]),
                          np.concatenate([self.values, np.asarray(values, dtype=float)]))


@dataclass(frozen=True)
class TurbineSite:
    id: str
    x: float
    y: float
    hub_height: float
    elevation: float = 0.0


@dataclass(frozen=True)
class FarmLayout:
    farm_id: str
    origin: Mapping
    turbines: tuple[TurbineSite, ...]

    def __post_init__(self):
        ids = [t.id for t in self.turbines]
        if len(set(ids)) != len(ids):
            raise ValidationError("turbine ids must be unique", module="core-data", operation="FarmLayout")
        for t in self.turbines:
            if not t.hub_height > 0:
                raise ValidationError(f"hub height must be positive for {t.id}",
                                      module="core-data", operation="FarmLayout")

    def __getitem__(self, turbine_id: str) -> TurbineSite:
        for t in self.turbines:
            if t.id == turbine_id:
                return t
        raise KeyError(turbine_id)

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.turbines]

    def to_json(self) -> dict:
        return {
            "farm_id": self.farm_id,
            "origin": dict(self.origin),
            "turbines": [
                {"id": t.id, "x": t.x, "y": t.y, "hub_height": t.hub_height, "elevation": t.elevation}
                for t in self.turbines
            ],
        }


def load_layout(path) -> FarmLayout:
    try:
        doc = json.loads(Path(path).read_text())
        turbines = tuple(
            TurbineSite(str(t["id"]), float(t["x"]), float(t["y"]), float(t["hub_height"]),
                        float(t.get("elevation", 0.0)))
            for t in doc["turbines"]
        )
        return FarmLayout(str(doc["farm_id"]), doc.get("origin", {}), turbines)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise FormatError(f"malformed layout file: {exc}", module="core-data", operation="load_layout",
                          location=str(path)) from exc


@dataclass
class LoadSummary:
    rows: int = 0
    missing_count: int = 0
    unparseable_count: int = 0
    series: int = 0
    turbines: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"rows": self.rows, "missing_count": self.missing_count,
                "unparseable_count": self.unparseable_count, "series": self.series,
                "turbines": self.turbines}


class ScadaData(dict):
    """``turbine id -> channel -> TimeSeries`` with the load summary attached."""

    summary: LoadSummary


def _skip_comments(path: Path) -> int:
    n = 0
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            n += 1
    return n


def load_scada(path) -> ScadaData:
    path = Path(path)
    ctx = dict(module="core-data", operation="load_scada")
    if not path.exists():
        raise FormatError(f"no such file: {path}", location=str(path), **ctx)
    n_comments = _skip_comments(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skiprows=n_comments)
    except pd.errors.EmptyDataError as exc:
        raise FormatError("empty file, header missing", location=f"{path}:1", **ctx) from exc
    if list(frame.columns) != SCADA_HEADER:
        raise FormatError(f"header must be {','.join(SCADA_HEADER)}, got {','.join(map(str, frame.columns))}",
                          location=f"{path}:{n_comments + 1}", **ctx)

    first_line = n_comments + 2
    channel = frame["channel"].to_numpy()
    unknown = ~np.isin(channel, CHANNELS)
    if unknown.any():
        row = int(np.flatnonzero(unknown)[0])
        raise FormatError(f"unknown channel {channel[row]!r}", location=f"{path}:{first_line + row}", **ctx)
    try:
        times = parse_times(frame["timestamp"])
    except (ValueError, TypeError):
        row = next(i for i, s in enumerate(frame["timestamp"]) if not _parses(s))
        raise FormatError(f"unparseable timestamp {frame['timestamp'].iat[row]!r}",
                          location=f"{path}:{first_line + row}", **ctx) from None

    raw = frame["value"].str.strip()
    values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
    declared_nan = raw.str.lower().isin(["nan", "", "na", "null"]).to_numpy()
    values[~np.isfinite(values)] = np.nan
    missing = np.isnan(values)

    summary = LoadSummary(rows=len(frame), missing_count=int(missing.sum()),
                          unparseable_count=int((missing & ~declared_nan).sum()))
    turbine = frame["turbine_id"].to_numpy()
    # stable sort keeps file order inside each (turbine, channel) group
    key = pd.MultiIndex.from_arrays([turbine, channel]).codes
    order = np.lexsort((key[1], key[0]))
    sorted_times = times[order]
    same_group = (key[0][order][1:] == key[0][order][:-1]) & (key[1][order][1:] == key[1][order][:-1])
    steps = np.diff(sorted_times) <= np.timedelta64(0, "s")
    bad = np.flatnonzero(same_group & steps)
    if bad.size:
        row = int(order[bad[0] + 1])
        kind = "duplicate" if sorted_times[bad[0] + 1] == sorted_times[bad[0]] else "non-monotonic"
        raise ValidationError(f"{kind} timestamp for ({turbine[row]}, {channel[row]})",
                              location=f"{path}:{first_line + row}", **ctx)

    data = ScadaData()
    for t_id in dict.fromkeys(turbine):
        data[t_id] = {}
    starts = np.r_[0, np.flatnonzero(~same_group) + 1, len(order)]
    for lo, hi in zip(starts[:-1], starts[1:]):
        idx = order[lo:hi]
        if not idx.size:
            continue
        data[turbine[idx[0]]][channel[idx[0]]] = TimeSeries(channel[idx[0]], times[idx], values[idx])
    summary.series = sum(len(v) for v in data.values())
    summary.turbines = list(data)
    data.summary = summary
    return data


def _parses(s: str) -> bool:
    try:
        pd.Timestamp(s)
        return True
    except (ValueError, TypeError):
        return False


def value_at(series: TimeSeries, t, mode: Literal["realtime", "historic"] = "realtime") -> float:
    """Query a series at an arbitrary instant.

    ``realtime`` bridges gaps by persistence and never looks past ``t``.
    ``historic`` interpolates linearly between the bracketing present samples,
    along the shorter arc for angular channels.  Missing is returned as NaN.
    """
    if len(series) == 0:
        raise ValidationError("series is empty", module="core-data", operation="value_at")
    t = to_time(t)
    times, values = series.times, series.values
    pos = int(np.searchsorted(times, t, side="right")) - 1
    if pos >= 0 and times[pos] == t:
        return float(values[pos])
    present = ~np.isnan(values)
    ptimes, pvalues = times[present], values[present]
    i = int(np.searchsorted(ptimes, t, side="right")) - 1
    if mode == "realtime":
        return float(pvalues[i]) if i >= 0 else float("nan")
    if mode != "historic":
        raise ValueError(f"unknown mode {mode!r}")
    if i < 0 or i + 1 >= ptimes.size:
        return float("nan")
    t0, t1 = ptimes[i], ptimes[i + 1]
    frac = (t - t0) / (t1 - t0)
    v0, v1 = pvalues[i], pvalues[i + 1]
    if series.is_angular:
        delta = (v1 - v0 + 180.0) % 360.0 - 180.0
        return float(wrap_degrees(v0 + frac * delta))
    return float(v0 + frac * (v1 - v0))


def resample_hourly(series: TimeSeries, policy: Literal["mean", "last"] = "mean",
                    start=None, end=None) -> TimeSeries:
    """Aggregate onto clock hours ``[h, h+1)``; empty hours are NaN.

    The output spans the floor of the first sample to the floor of the last
    unless ``start``/``end`` (inclusive hour stamps) are given.
    """
    if len(series) == 0:
        raise ValidationError("series is empty", module="core-data", operation="resample_hourly")
    times = series.times
    h0 = to_time(start) if start is not None else times[0].astype("datetime64[h]").astype("datetime64[s]")
    h1 = to_time(end) if end is not None else times[-1].astype("datetime64[h]").astype("datetime64[s]")
    n = int((h1 - h0) // HOUR) + 1
    hours = h0 + np.arange(n) * HOUR

    idx = (times - h0) // HOUR
    keep = (idx >= 0) & (idx < n) & ~np.isnan(series.values)
    idx = idx[keep].astype(np.int64)
    vals = series.values[keep]
    out = np.full(n, np.nan)
    if policy == "mean":
        counts = np.bincount(idx, minlength=n)
        filled = counts > 0
        if series.is_angular:
            rad = np.deg2rad(vals)
            s = np.bincount(idx, np.sin(rad), minlength=n)
            c = np.bincount(idx, np.cos(rad), minlength=n)
            out[filled] = wrap_degrees(np.rad2deg(np.arctan2(s[filled], c[filled])))
        else:
            sums = np.bincount(idx, vals, minlength=n)
            out[filled] = sums[filled] / counts[filled]
    elif policy == "last":
        if idx.size:
            last = np.r_[idx[1:] != idx[:-1], True]
            out[idx[last]] = vals[last]
    else:
        raise ValueError(f"unknown policy {policy!r}")
    return TimeSeries(series.channel, hours, out)


def hourly_frame(channels: Mapping[str, TimeSeries], start=None, end=None) -> pd.DataFrame:
    """All channels of one turbine resampled (mean policy) onto a shared hourly index."""
    if start is None:
        start = min(s.times[0] for s in channels.values()).astype("datetime64[h]")
    if end is None:
        end = max(s.times[-1] for s in channels.values()).astype("datetime64[h]")
    cols = {}
    hours = None
    for name in CHANNELS:
        if name in channels:
            res = resample_hourly(channels[name], "mean", start=start, end=end)
            hours = res.times
            cols[name] = res.values
    frame = pd.DataFrame(cols, index=pd.DatetimeIndex(hours, name="timestamp"))
    return frame.reindex(columns=[c for c in CHANNELS if c in cols])
