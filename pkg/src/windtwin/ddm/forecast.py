"""Persistence, dense and LSTM one-step forecasters and their multi-step rollout."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from ..errors import ConfigError, FormatError, TrainingError, ValidationError
from .adam import AdamHyper, AdamState, adam_step
from .networks import DenseNet, LSTMNet

KINDS = ("persistence", "dnn", "lstm")


@dataclass(frozen=True)
class TrainingConfig:
    lag: int = 4
    layer_units: tuple[int, ...] = (5, 3, 1)
    recurrent_layers: int = 2
    lstm_window: int = 24
    batch_size: int = 64
    validation_fraction: float = 0.10
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    max_epochs: int = 200
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        ctx = dict(module="ddm", operation="TrainingConfig")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must be in (0, 1)", **ctx)
        if self.lag < 1 or self.lstm_window < 1 or self.batch_size < 1:
            raise ConfigError("lag, lstm_window and batch_size must be >= 1", **ctx)
        if self.layer_units[-1] != 1:
            raise ConfigError("the output layer must have one unit", **ctx)
        if not 1 <= self.recurrent_layers < len(self.layer_units):
            raise ConfigError("recurrent_layers must leave at least the output layer dense", **ctx)
        if self.activation not in ("tanh", "linear"):
            raise ConfigError(f"unknown activation {self.activation!r}", **ctx)
        object.__setattr__(self, "layer_units", tuple(int(u) for u in self.layer_units))

    @property
    def hyper(self) -> AdamHyper:
        return AdamHyper(self.lr, self.beta1, self.beta2, self.eps)

    def window(self, kind: str) -> int:
        return self.lstm_window if kind == "lstm" else self.lag

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["layer_units"] = list(self.layer_units)
        return doc


def build_network(kind: str, config: TrainingConfig):
    if kind == "dnn":
        return DenseNet(config.lag, config.layer_units, config.activation)
    if kind == "lstm":
        k = config.recurrent_layers
        return LSTMNet(config.layer_units[:k], config.layer_units[k:], config.activation)
    raise ConfigError(f"no network for kind {kind!r}", module="ddm", operation="build_network")


@dataclass
class ForecastModel:
    kind: str
    params: dict
    scale: float
    config: TrainingConfig = field(default_factory=TrainingConfig)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}", module="ddm", operation="ForecastModel")
        if not self.scale > 0:
            raise ConfigError("normalisation scale must be positive", module="ddm", operation="ForecastModel")
        if self.kind != "persistence":
            reference = build_network(self.kind, self.config).init(np.random.default_rng(0))
            for name, p in reference.items():
                if name not in self.params or np.shape(self.params[name]) != p.shape:
                    raise ConfigError(f"parameter {name} missing or misshapen", module="ddm",
                                      operation="ForecastModel")

    @property
    def window(self) -> int:
        return 1 if self.kind == "persistence" else self.config.window(self.kind)

    def predict_normalized(self, windows: np.ndarray) -> np.ndarray:
        windows = np.atleast_2d(np.asarray(windows, dtype=float))
        if self.kind == "persistence":
            return windows[:, -1].copy()
        return build_network(self.kind, self.config).predict(self.params, windows)

    def to_json(self) -> dict:
        names = sorted(self.params)
        return {
            "kind": self.kind,
            "shapes": {n: list(np.shape(self.params[n])) for n in names},
            "parameters": {n: np.asarray(self.params[n], dtype=float).ravel().tolist() for n in names},
            "normalization": {"scale": self.scale},
            "config": self.config.to_json(),
            "seed": self.config.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ForecastModel":
        try:
            cfg = dict(doc["config"])
            cfg["layer_units"] = tuple(cfg["layer_units"])
            params = {n: np.asarray(doc["parameters"][n], dtype=float).reshape(shape)
                      for n, shape in doc["shapes"].items()}
            return cls(doc["kind"], params, float(doc["normalization"]["scale"]), TrainingConfig(**cfg))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise FormatError(f"malformed model file: {exc}", module="ddm", operation="load_model") from exc


def save_model(model: ForecastModel, path, extra: dict | None = None) -> None:
    doc = model.to_json()
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_model(path) -> ForecastModel:
    return ForecastModel.from_json(json.loads(Path(path).read_text()))


def persistence_forecast(values: Sequence[float], t0_index: int, horizon: int) -> np.ndarray:
    """Repeat the latest present value at or before ``t0_index``."""
    values = np.asarray(values, dtype=float)
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    head = values[: t0_index + 1]
    present = np.flatnonzero(~np.isnan(head))
    if present.size == 0:
        raise ValidationError("no measured value at or before the forecast origin", module="ddm",
                              operation="persistence_forecast")
    return np.full(horizon, head[present[-1]])


@dataclass(frozen=True)
class SupervisedSet:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    target_index: np.ndarray  # position in the source series of each window's target

    @property
    def n_windows(self) -> int:
        return self.y_train.size + self.y_val.size


def make_supervised(values: Sequence[float], lag: int, validation_fraction: float = 0.10,
                    scale: float = 1.0) -> SupervisedSet:
    """Sliding ``lag``-windows mapping to the next value, split chronologically.

    Windows touching a missing value are dropped; the final share of the
    remaining windows becomes the validation set.
    """
    values = np.asarray(values, dtype=float) / scale
    ctx = dict(module="ddm", operation="make_supervised")
    if np.count_nonzero(~np.isnan(values)) < lag + 1:
        raise ValidationError(f"need at least {lag + 1} present values", **ctx)
    n = values.size - lag
    idx = np.arange(n)[:, None] + np.arange(lag + 1)[None, :]
    windows = values[idx]
    keep = ~np.isnan(windows).any(axis=1)
    windows = windows[keep]
    target_index = np.flatnonzero(keep) + lag
    if windows.shape[0] == 0:
        raise ValidationError("every window contains a missing value", **ctx)
    n_val = int(round(validation_fraction * windows.shape[0]))
    if windows.shape[0] >= 2:
        n_val = min(max(n_val, 1), windows.shape[0] - 1)
    else:
        n_val = 0
    split = windows.shape[0] - n_val
    X, y = windows[:, :lag], windows[:, lag]
    return SupervisedSet(X[:split], y[:split], X[split:], y[split:], target_index)


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)  # (epoch, train_loss, val_loss)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    stopped_early: bool = False
    patience: int = 0
    max_epochs: int = 0
    trajectory: list | None = None

    def to_csv(self, path, header_comment: str | None = None) -> None:
        with open(path, "w") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write(f"# best_epoch={self.best_epoch} stopped_early={str(self.stopped_early).lower()} "
                     f"patience={self.patience} max_epochs={self.max_epochs}\n")
            fh.write("epoch,train_loss,val_loss\n")
            for epoch, tr, va in self.epochs:
                fh.write(f"{epoch},{tr!r},{va!r}\n")


def _mse(net, params, X, y) -> float:
    if y.size == 0:
        return float("nan")
    err = net.predict(params, X) - y
    return float(np.mean(err * err))


def train(data: SupervisedSet, kind: Literal["dnn", "lstm"], config: TrainingConfig = TrainingConfig(),
          scale: float = 1.0, record_trajectory: bool = False) -> tuple[ForecastModel, TrainingLog]:
    """Mini-batch Adam on MSE with validation early stopping and best-epoch restore.

    Validation targets only enter ``val_loss``; with no validation windows the
    training loss is monitored instead.
    """
    if kind == "persistence":
        return ForecastModel("persistence", {}, scale, config), TrainingLog()
    if data.y_train.size == 0:
        raise ValidationError("empty training set", module="ddm", operation="train")
    width = config.window(kind)
    if data.X_train.shape[1] != width:
        raise ConfigError(f"{kind} expects windows of {width}, got {data.X_train.shape[1]}",
                          module="ddm", operation="train")
    net = build_network(kind, config)
    rng = np.random.default_rng(config.seed)
    params = net.init(rng)
    state = AdamState()
    hyper = config.hyper
    log = TrainingLog(patience=config.patience, max_epochs=config.max_epochs,
                      trajectory=[] if record_trajectory else None)
    best = {k: v.copy() for k, v in params.items()}
    wait = 0
    n = data.y_train.size
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            batch = order[lo:lo + config.batch_size]
            _, grads = net.loss_and_grads(params, data.X_train[batch], data.y_train[batch])
            params, state = adam_step(params, grads, state, hyper)
        train_loss = _mse(net, params, data.X_train, data.y_train)
        val_loss = _mse(net, params, data.X_val, data.y_val) if data.y_val.size else train_loss
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingError(f"loss diverged ({train_loss}, {val_loss})", module="ddm", operation="train",
                                location=f"epoch {epoch}")
        log.epochs.append((epoch, train_loss, val_loss))
        if log.trajectory is not None:
            log.trajectory.append({k: v.copy() for k, v in params.items()})
        if val_loss < log.best_val_loss:
            log.best_val_loss, log.best_epoch = val_loss, epoch
            best = {k: v.copy() for k, v in params.items()}
            wait = 0
        else:
            wait += 1
            if wait >= max(config.patience, 1):
                log.stopped_early = True
                break
    return ForecastModel(kind, best, scale, config), log


def rollout(model: ForecastModel, history, horizon: int) -> np.ndarray:
    """Iterated one-step forecasts in kW, each clamped to ``[0, scale]`` and fed back.

    ``history`` holds the latest ``model.window`` measured values in kW (or a
    2-D batch of such windows, one forecast origin per row).  The DNN slides
    its lag window, dropping the oldest value.  The LSTM is warmed up on the
    whole window once and then advanced one step per fed-back prediction.
    """
    hist = np.asarray(history, dtype=float)
    single = hist.ndim == 1
    hist = np.atleast_2d(hist)
    width = model.window
    if hist.shape[1] < width:
        raise ValidationError(f"{model.kind} needs {width} history values, got {hist.shape[1]}",
                              module="ddm", operation="rollout")
    window = hist[:, -width:] / model.scale
    out = np.empty((hist.shape[0], horizon))
    if model.kind == "lstm" and horizon:
        net = build_network("lstm", model.config)
        state = net.initial_state(window.shape[0])
        for t in range(width):
            state, pred = net.step(model.params, state, window[:, t])
        for k in range(horizon):
            if k:
                state, pred = net.step(model.params, state, out[:, k - 1])
            out[:, k] = np.clip(pred, 0.0, 1.0)
    else:
        for k in range(horizon):
            pred = np.clip(model.predict_normalized(window), 0.0, 1.0)
            out[:, k] = pred
            window = np.concatenate([window[:, 1:], pred[:, None]], axis=1)
    out *= model.scale
    return out[0] if single else out


def gradient_check(kind: Literal["dnn", "lstm"], X, y, seed: int = 0, config: TrainingConfig | None = None,
                   step: float = 1e-5, params: dict | None = None) -> float:
    """Max relative deviation between analytic and central-difference gradients.

    The relative error of each entry is ``|a - n| / max(|a| + |n|, 1e-6)`` so
    entries whose true gradient is zero are judged on an absolute scale.
    """
    config = config or TrainingConfig(seed=seed)
    net = build_network(kind, config)
    if params is None:
        params = net.init(np.random.default_rng(seed))
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _, analytic = net.loss_and_grads(params, X, y)
    worst = 0.0
    for name, p in params.items():
        for ix in np.ndindex(p.shape):
            orig = p[ix]
            p[ix] = orig + step
            up = _mse(net, params, X, y)
            p[ix] = orig - step
            down = _mse(net, params, X, y)
            p[ix] = orig
            numeric = (up - down) / (2 * step)
            a = analytic[name][ix]
            worst = max(worst, abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6))
    return worst


def supervised_for(kind: str, values, config: TrainingConfig, scale: float) -> SupervisedSet:
    return make_supervised(values, config.window(kind), config.validation_fraction, scale)


def with_seed(config: TrainingConfig, seed: int) -> TrainingConfig:
    return replace(config, seed=int(seed))
