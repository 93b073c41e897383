"""Per-lead scoring, turbine-to-farm aggregation and the per-horizon hybrid."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, OutputError, ValidationError
from .timeseries import HOUR, format_times

FARM = "FARM"
NORMALIZERS = ("rated", "mean", "range")


def fmt6(x: float) -> str:
    return format(float(x), ".6g")


@dataclass(frozen=True)
class PredictionMatrix:
    """``values[i, L - 1]`` is the prediction for ``targets[i]`` made ``L`` hours earlier."""

    model_id: str
    scope: str
    targets: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        targets = np.asarray(self.targets, dtype="datetime64[s]")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != targets.size:
            raise ValidationError("values must be (n_targets, horizon)", module="evaluation",
                                  operation="PredictionMatrix")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    @property
    def leads(self) -> np.ndarray:
        return np.arange(1, self.horizon + 1)

    @classmethod
    def from_entries(cls, model_id: str, scope: str, targets, entry_targets, entry_leads, entry_values,
                     horizon: int) -> "PredictionMatrix":
        targets = np.asarray(targets, dtype="datetime64[s]")
        values = np.full((targets.size, horizon), np.nan)
        entry_targets = np.asarray(entry_targets, dtype="datetime64[s]")
        entry_leads = np.asarray(entry_leads, dtype=int)
        row = np.searchsorted(targets, entry_targets)
        ok = (row < targets.size) & (entry_leads >= 1) & (entry_leads <= horizon)
        ok[ok] &= targets[row[ok]] == entry_targets[ok]
        values[row[ok], entry_leads[ok] - 1] = np.asarray(entry_values, dtype=float)[ok]
        return cls(model_id, scope, targets, values)

    @classmethod
    def from_rollouts(cls, model_id: str, scope: str, targets, origins, forecasts) -> "PredictionMatrix":
        """Place ``forecasts[j, k]`` (origin ``origins[j]``, step ``k + 1``) onto the target grid."""
        targets = np.asarray(targets, dtype="datetime64[s]")
        origins = np.asarray(origins, dtype="datetime64[s]")
        forecasts = np.atleast_2d(np.asarray(forecasts, dtype=float))
        horizon = forecasts.shape[1]
        values = np.full((targets.size, horizon), np.nan)
        base = np.searchsorted(targets, origins)
        for k in range(horizon):
            row = base + k + 1
            tgt = origins + (k + 1) * HOUR
            ok = row < targets.size
            ok[ok] &= targets[row[ok]] == tgt[ok]
            values[row[ok], k] = forecasts[ok, k]
        return cls(model_id, scope, targets, values)

    def restrict(self, start=None, end=None) -> "PredictionMatrix":
        keep = np.ones(self.targets.size, dtype=bool)
        if start is not None:
            keep &= self.targets >= np.datetime64(start, "s")
        if end is not None:
            keep &= self.targets <= np.datetime64(end, "s")
        return PredictionMatrix(self.model_id, self.scope, self.targets[keep], self.values[keep])

    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Present entries as (target, lead, value), ordered by target then lead."""
        row, col = np.nonzero(~np.isnan(self.values))
        return self.targets[row], col + 1, self.values[row, col]

    def write_csv(self, path, header_comment: str | None = None) -> None:
        """Long CSV ``target,lead,value`` of present entries; floats in shortest round-trip form."""
        row, col = np.nonzero(~np.isnan(self.values))
        grid = format_times(self.targets).tolist()
        stamps = [grid[i] for i in row.tolist()]
        L, v = col + 1, self.values[row, col]
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write("target,lead,value\n")
            fh.writelines(f"{a},{b},{c!r}\n" for a, b, c in zip(stamps, L.tolist(), v.tolist()))

    @classmethod
    def read_csv(cls, path, model_id: str, scope: str, targets=None, horizon: int | None = None
                 ) -> "PredictionMatrix":
        """Inverse of :meth:`write_csv`; the target grid and horizon default to those seen in the file."""
        frame = pd.read_csv(path, comment="#", float_precision="round_trip",
                            dtype={"target": str, "lead": np.int64, "value": float})
        leads = frame["lead"].to_numpy()
        if horizon is None:
            horizon = int(leads.max()) if leads.size else 1
        if targets is None:
            entry_t = frame["target"].str.rstrip("Z").to_numpy().astype("datetime64[s]")
            return cls.from_entries(model_id, scope, np.unique(entry_t), entry_t, leads,
                                    frame["value"].to_numpy(), horizon)
        targets = np.asarray(targets, dtype="datetime64[s]")
        row = pd.Index(format_times(targets)).get_indexer(frame["target"])
        ok = (row >= 0) & (leads >= 1) & (leads <= horizon)
        values = np.full((targets.size, horizon), np.nan)
        values[row[ok], leads[ok] - 1] = frame["value"].to_numpy()[ok]
        return cls(model_id, scope, targets, values)


@dataclass(frozen=True)
class LeadTimeReport:
    model_id: str
    scope: str
    leads: np.ndarray
    nrmse: np.ndarray
    counts: np.ndarray
    normalizer: float = 1.0
    normalizer_kind: str = "rated"

    def as_dict(self) -> dict[int, float]:
        return {int(L): float(v) for L, v in zip(self.leads, self.nrmse)}

    def at(self, lead: int) -> float:
        hit = np.flatnonzero(self.leads == lead)
        return float(self.nrmse[hit[0]]) if hit.size else float("nan")


def nrmse(predictions, actuals, normalizer: float) -> float:
    """Root mean squared error over pairs where both values exist, divided by ``normalizer``."""
    p = np.asarray(predictions, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if p.shape != a.shape or p.size == 0:
        raise ValidationError("predictions and actuals must be equal-length and non-empty",
                              module="evaluation", operation="nrmse")
    if not normalizer > 0:
        raise ValidationError("normalizer must be positive", module="evaluation", operation="nrmse")
    ok = ~np.isnan(p) & ~np.isnan(a)
    if not ok.any():
        raise ValidationError("no usable prediction/measurement pairs", module="evaluation", operation="nrmse")
    err = p[ok] - a[ok]
    return float(np.sqrt(np.mean(err * err)) / normalizer)


def align_measured(targets: np.ndarray, times, values) -> np.ndarray:
    """Measured values on ``targets``; NaN where no measurement is stamped."""
    times = np.asarray(times, dtype="datetime64[s]")
    values = np.asarray(values, dtype=float)
    out = np.full(targets.size, np.nan)
    if times.size == 0:
        return out
    pos = np.clip(np.searchsorted(times, targets), 0, times.size - 1)
    hit = times[pos] == targets
    out[hit] = values[pos[hit]]
    return out


def normalizer_for(kind: str, capacity: float, measured) -> float:
    measured = np.asarray(measured, dtype=float)
    if kind == "rated":
        return float(capacity)
    if kind == "mean":
        return float(np.nanmean(measured))
    if kind == "range":
        return float(np.nanmax(measured) - np.nanmin(measured))
    raise ConfigError(f"unknown normalizer {kind!r}; choose from {NORMALIZERS}", module="evaluation",
                      operation="normalizer_for")


def evaluate_by_lead(matrix: PredictionMatrix, measured_times, measured_values, normalizer: float,
                     normalizer_kind: str = "rated") -> LeadTimeReport:
    """NRMSE per lead over all targets that have both a prediction and a measurement."""
    actual = align_measured(matrix.targets, measured_times, measured_values)
    if np.all(np.isnan(actual)):
        raise ValidationError(f"measurements do not overlap the targets of {matrix.model_id}/{matrix.scope}",
                              module="evaluation", operation="evaluate_by_lead")
    if not normalizer > 0:
        raise ValidationError("normalizer must be positive", module="evaluation", operation="evaluate_by_lead")
    err = matrix.values - actual[:, None]
    ok = ~np.isnan(err)
    counts = ok.sum(axis=0)
    sq = np.where(ok, err * err, 0.0).sum(axis=0)
    present = counts > 0
    score = np.sqrt(sq[present] / counts[present]) / normalizer
    return LeadTimeReport(matrix.model_id, matrix.scope, matrix.leads[present], score, counts[present],
                          float(normalizer), normalizer_kind)


def farm_aggregate(matrices: Sequence[PredictionMatrix], scope: str = FARM) -> PredictionMatrix:
    """Entrywise sum; a missing turbine entry voids the farm entry."""
    if not matrices:
        raise ValidationError("no matrices to aggregate", module="evaluation", operation="farm_aggregate")
    ref = matrices[0]
    for m in matrices[1:]:
        if m.values.shape != ref.values.shape or not np.array_equal(m.targets, ref.targets):
            raise ValidationError(f"matrix for {m.scope} does not share the target/lead structure of {ref.scope}",
                                  module="evaluation", operation="farm_aggregate")
    total = ref.values.copy()
    for m in matrices[1:]:
        total = total + m.values
    return PredictionMatrix(ref.model_id, scope, ref.targets, total)


def farm_measured(series: Sequence[np.ndarray]) -> np.ndarray:
    """Sum of aligned turbine series; NaN wherever any turbine is missing."""
    stack = np.vstack([np.asarray(s, dtype=float) for s in series])
    return stack.sum(axis=0)


@dataclass(frozen=True)
class SpreadTable:
    model_id: str
    leads: np.ndarray
    stats: np.ndarray  # (n_leads, 5): min, q1, median, q3, max


def turbine_spread(reports: Sequence[LeadTimeReport]) -> SpreadTable:
    """Order statistics of turbine NRMSE per lead (quartiles by linear interpolation)."""
    if not reports:
        return SpreadTable("", np.zeros(0, dtype=int), np.zeros((0, 5)))
    leads = sorted(set().union(*(set(r.leads.tolist()) for r in reports)))
    rows = []
    for L in leads:
        vals = np.array([r.at(L) for r in reports])
        vals = vals[~np.isnan(vals)]
        rows.append(np.percentile(vals, [0, 25, 50, 75, 100]))
    return SpreadTable(reports[0].model_id, np.array(leads, dtype=int), np.array(rows))


@dataclass
class HybridSchedule:
    choice: dict[int, str]
    scores: dict[str, dict[int, float]] = field(default_factory=dict)
    selection_period: tuple = (None, None)
    priority: tuple = ()

    def segments(self) -> list[tuple[int, int, str]]:
        out = []
        for L in sorted(self.choice):
            m = self.choice[L]
            if out and out[-1][2] == m and out[-1][1] == L - 1:
                out[-1] = (out[-1][0], L, m)
            else:
                out.append((L, L, m))
        return out


def select_hybrid(reports: Sequence[LeadTimeReport], leads: Iterable[int] = range(1, 62),
                  priority: Sequence[str] | None = None, selection_period=(None, None)) -> HybridSchedule:
    """Per lead, the model with the smallest NRMSE; ties go to the earlier model in ``priority``."""
    by_model = {r.model_id: r.as_dict() for r in reports}
    order = list(priority) if priority is not None else [r.model_id for r in reports]
    order += [m for m in by_model if m not in order]
    rank = {m: i for i, m in enumerate(order)}
    choice = {}
    uncovered = []
    for L in leads:
        candidates = [(score[L], rank[m], m) for m, score in by_model.items()
                      if L in score and np.isfinite(score[L])]
        if not candidates:
            uncovered.append(L)
            continue
        choice[int(L)] = min(candidates)[2]
    if uncovered:
        raise ValidationError(f"no model covers lead(s) {uncovered}", module="evaluation",
                              operation="select_hybrid")
    return HybridSchedule(choice, by_model, tuple(selection_period), tuple(order))


def apply_hybrid(schedule: HybridSchedule, matrices: Mapping[str, PredictionMatrix],
                 model_id: str = "hybrid") -> PredictionMatrix:
    ref = next(iter(matrices.values()))
    values = np.full_like(ref.values, np.nan)
    for L, m in schedule.choice.items():
        if L <= ref.horizon:
            values[:, L - 1] = matrices[m].values[:, L - 1]
    return PredictionMatrix(model_id, ref.scope, ref.targets, values)


def _open(path: Path, provenance: str | None):
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}", module="evaluation", operation="emit_report",
                          location=str(path)) from exc
    if provenance:
        fh.write(f"# {provenance}\n")
    return fh


def write_lead_reports(reports: Sequence[LeadTimeReport], path, provenance: str | None = None) -> None:
    with _open(Path(path), provenance) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lead", "model", "nrmse", "count"])
        for r in reports:
            for L, v, n in zip(r.leads, r.nrmse, r.counts):
                w.writerow([int(L), r.model_id, fmt6(v), int(n)])


def write_spread(spread: SpreadTable, path, provenance: str | None = None) -> None:
    with _open(Path(path), provenance) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lead", "min", "q1", "median", "q3", "max"])
        for L, row in zip(spread.leads, spread.stats):
            w.writerow([int(L), *map(fmt6, row)])


def write_schedule(schedule: HybridSchedule | None, path, provenance: str | None = None) -> None:
    with _open(Path(path), provenance) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lead", "model"])
        if schedule is not None:
            for L in sorted(schedule.choice):
                w.writerow([L, schedule.choice[L]])


def emit_report(reports: Sequence[LeadTimeReport], schedule: HybridSchedule | None, path,
                provenance: str | None = None) -> list[Path]:
    """Write ``nrmse_<scope>.csv`` per scope, ``spread_<model>.csv`` per model and ``schedule.csv``.

    Spread files summarise the turbine-scope reports of each model.  With no
    reports at all a header-only ``nrmse_FARM.csv`` is still written.
    """
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out}: {exc}", module="evaluation", operation="emit_report",
                          location=str(out)) from exc
    written = []
    scopes = list(dict.fromkeys(r.scope for r in reports)) or [FARM]
    for scope in scopes:
        target = out / f"nrmse_{scope}.csv"
        write_lead_reports([r for r in reports if r.scope == scope], target, provenance)
        written.append(target)
    turbine_reports: dict[str, list[LeadTimeReport]] = {}
    for r in reports:
        if r.scope != FARM:
            turbine_reports.setdefault(r.model_id, []).append(r)
    for model_id, group in turbine_reports.items():
        target = out / f"spread_{model_id}.csv"
        write_spread(turbine_spread(group), target, provenance)
        written.append(target)
    target = out / "schedule.csv"
    write_schedule(schedule, target, provenance)
    written.append(target)
    return written
