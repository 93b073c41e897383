import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windtwin.ddm import (
    AdamHyper,
    AdamState,
    ForecastModel,
    TrainingConfig,
    adam_step,
    gradient_check,
    load_model,
    make_supervised,
    persistence_forecast,
    rollout,
    save_model,
    train,
)
from windtwin.ddm.forecast import build_network
from windtwin.errors import ConfigError, TrainingError, ValidationError

RATED = 2300.0


def ar1_series(n, seed=0, phi=0.95):
    rng = np.random.default_rng(seed)
    x = np.empty(n)
    x[0] = 0.5
    for t in range(1, n):
        x[t] = 0.5 + phi * (x[t - 1] - 0.5) + 0.05 * rng.standard_normal()
    return np.clip(x, 0, 1) * RATED


# -- persistence -------------------------------------------------------------

def test_persistence_repeats_last_value():
    assert persistence_forecast([10, 1500.0], 1, 61).tolist() == [1500.0] * 61


def test_persistence_zero_horizon_is_empty():
    assert persistence_forecast([1500.0], 0, 0).size == 0


def test_persistence_skips_missing_final_hour():
    values = [100.0, 200.0, np.nan, np.nan]
    # oracle: scan backward for the last present value
    expected = next(v for v in reversed(values) if not math.isnan(v))
    assert persistence_forecast(values, 3, 5).tolist() == [expected] * 5


def test_persistence_without_history_errors():
    with pytest.raises(ValidationError):
        persistence_forecast([np.nan, 5.0], 0, 3)


# -- make_supervised ---------------------------------------------------------

def test_window_enumeration():
    data = make_supervised([1, 2, 3, 4, 5, 6], 4, validation_fraction=0.5)
    X = np.vstack([data.X_train, data.X_val])
    y = np.concatenate([data.y_train, data.y_val])
    assert X.tolist() == [[1, 2, 3, 4], [2, 3, 4, 5]]
    assert y.tolist() == [5, 6]


def test_ten_percent_validation_is_latest():
    data = make_supervised(np.arange(104.0), 4)
    assert data.y_train.size == 90 and data.y_val.size == 10
    assert data.y_train.max() < data.y_val.min()


def test_windows_with_missing_values_are_dropped():
    values = np.arange(20.0)
    values[10] = np.nan
    data = make_supervised(values, 4)
    assert data.n_windows == 16 - 5
    assert not np.isnan(data.X_train).any()


def test_missing_hour_in_every_window_errors():
    values = np.arange(20.0)
    values[::3] = np.nan
    with pytest.raises(ValidationError):
        make_supervised(values, 4)


def test_scale_normalizes():
    data = make_supervised(ar1_series(200), 4, scale=RATED)
    assert data.X_train.min() >= 0 and data.X_train.max() <= 1


# -- adam --------------------------------------------------------------------

def test_zero_gradient_leaves_parameters():
    params = {"w": np.array([0.3, -1.2])}
    state = AdamState(t=3, m={"w": np.array([0.1, 0.2])}, v={"w": np.array([0.01, 0.04])})
    zero = {"w": np.zeros(2)}
    new, new_state = adam_step(params, zero, AdamState())
    assert np.array_equal(new["w"], params["w"])
    _, decayed = adam_step(params, zero, state)
    assert np.allclose(decayed.m["w"], 0.9 * state.m["w"])
    assert np.allclose(decayed.v["w"], 0.999 * state.v["w"])


def test_first_step_moves_by_learning_rate():
    new, _ = adam_step({"w": np.array([1.0])}, {"w": np.array([1.0])}, AdamState(), AdamHyper(lr=0.001))
    assert abs((1.0 - new["w"][0]) - 0.001) < 1e-6


def test_equal_gradients_give_equal_updates():
    params = {"w": np.array([0.5, -3.0])}
    new, _ = adam_step(params, {"w": np.array([0.2, 0.2])}, AdamState())
    delta = new["w"] - params["w"]
    # equal up to the rounding of p - step at different magnitudes of p
    assert delta[0] == pytest.approx(delta[1], rel=1e-12)


def test_adam_does_not_mutate_inputs():
    params = {"w": np.array([1.0])}
    adam_step(params, {"w": np.array([1.0])}, AdamState())
    assert params["w"][0] == 1.0


# -- training ----------------------------------------------------------------

def test_constant_series_is_learned():
    series = np.full(3000, 0.6 * RATED)
    cfg = TrainingConfig(max_epochs=60, seed=1)
    data = make_supervised(series, cfg.lag, scale=RATED)
    model, log = train(data, "dnn", cfg, scale=RATED)
    pred = model.predict_normalized(data.X_val)
    assert np.mean((pred - data.y_val) ** 2) < 1e-6
    assert log.best_val_loss < 1e-6


@pytest.mark.parametrize("kind", ["dnn", "lstm"])
def test_training_is_deterministic(kind):
    cfg = TrainingConfig(max_epochs=3, seed=7, lstm_window=6)
    data = make_supervised(ar1_series(300), cfg.window(kind), scale=RATED)
    a, log_a = train(data, kind, cfg, scale=RATED, record_trajectory=True)
    b, log_b = train(data, kind, cfg, scale=RATED, record_trajectory=True)
    for pa, pb in zip(log_a.trajectory, log_b.trajectory):
        assert all(np.array_equal(pa[k], pb[k]) for k in pa)
    assert log_a.epochs == log_b.epochs


def test_patience_zero_stops_at_first_non_improvement():
    cfg = TrainingConfig(max_epochs=200, patience=0, seed=3)
    data = make_supervised(ar1_series(600, seed=3), cfg.lag, scale=RATED)
    _, log = train(data, "dnn", cfg, scale=RATED)
    vals = [v for _, _, v in log.epochs]
    assert all(b < a for a, b in zip(vals[:-2], vals[1:-1]))
    assert log.stopped_early and vals[-1] >= min(vals[:-1])


def test_validation_labels_never_reach_gradients():
    cfg = TrainingConfig(max_epochs=5, patience=100, seed=11)
    data = make_supervised(ar1_series(400, seed=2), cfg.lag, scale=RATED)
    poisoned = type(data)(data.X_train, data.y_train, data.X_val, np.full_like(data.y_val, 1e3),
                          data.target_index)
    _, clean = train(data, "dnn", cfg, scale=RATED, record_trajectory=True)
    _, dirty = train(poisoned, "dnn", cfg, scale=RATED, record_trajectory=True)
    for pa, pb in zip(clean.trajectory, dirty.trajectory):
        assert all(np.array_equal(pa[k], pb[k]) for k in pa)
    assert [e[1] for e in clean.epochs] == [e[1] for e in dirty.epochs]


@pytest.mark.parametrize("kind", ["dnn", "lstm"])
def test_restored_best_is_below_every_logged_validation_loss(kind):
    cfg = TrainingConfig(max_epochs=8, patience=2, seed=5, lstm_window=8)
    data = make_supervised(ar1_series(500, seed=5), cfg.window(kind), scale=RATED)
    model, log = train(data, kind, cfg, scale=RATED)
    best = float(np.mean((model.predict_normalized(data.X_val) - data.y_val) ** 2))
    assert best == log.best_val_loss
    assert all(best <= v for _, _, v in log.epochs)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_names_the_epoch():
    data = make_supervised(np.full(100, 1e200), 4)
    with pytest.raises(TrainingError) as info:
        train(data, "dnn", TrainingConfig(max_epochs=2))
    assert info.value.location == "epoch 1"


def test_training_config_validation():
    with pytest.raises(ConfigError):
        TrainingConfig(validation_fraction=1.0)
    with pytest.raises(ConfigError):
        TrainingConfig(lag=0)


# -- rollout -----------------------------------------------------------------

def echo_dnn(lag=4, scale=RATED):
    cfg = TrainingConfig(lag=lag, activation="linear")
    params = build_network("dnn", cfg).init(np.random.default_rng(0))
    params = {k: np.zeros_like(v) for k, v in params.items()}
    params["d0.W"][lag - 1, 0] = 1.0
    params["d1.W"][0, 0] = 1.0
    params["d2.W"][0, 0] = 1.0
    return ForecastModel("dnn", params, scale, cfg)


def test_echo_dnn_rolls_out_constant():
    out = rollout(echo_dnn(), [100.0, 900.0, 300.0, 1200.0], 61)
    assert np.allclose(out, 1200.0, rtol=0, atol=1e-9)


@given(st.lists(st.floats(0, RATED), min_size=4, max_size=30), st.integers(0, 61))
@settings(max_examples=40)
def test_echo_dnn_equals_persistence(history, horizon):
    expected = persistence_forecast(history, len(history) - 1, horizon)
    assert np.allclose(rollout(echo_dnn(), history, horizon), expected, rtol=0, atol=1e-9)


def trained(kind, seed=0):
    cfg = TrainingConfig(max_epochs=4, seed=seed)
    data = make_supervised(ar1_series(800, seed=seed), cfg.window(kind), scale=RATED)
    model, _ = train(data, kind, cfg, scale=RATED)
    return model


@pytest.mark.parametrize("kind", ["dnn", "lstm"])
def test_single_step_rollout_is_one_step_prediction(kind):
    model = trained(kind)
    history = ar1_series(200, seed=9)[-model.window:]
    one = np.clip(model.predict_normalized(history / RATED)[0], 0, 1) * RATED
    assert rollout(model, history, 1)[0] == pytest.approx(one, rel=0, abs=1e-10)


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def ref_dense(params, x, n_layers, activation="tanh"):
    a = list(x)
    for l in range(n_layers):
        W, b = params[f"d{l}.W"], params[f"d{l}.b"]
        z = [b[j] + sum(a[i] * W[i, j] for i in range(len(a))) for j in range(W.shape[1])]
        a = z if l == n_layers - 1 else [math.tanh(v) if activation == "tanh" else v for v in z]
    return a[0]


def ref_lstm_step(params, states, x):
    inp = [x]
    new = []
    for l, (h, c) in enumerate(states):
        W, U, b = params[f"r{l}.W"], params[f"r{l}.U"], params[f"r{l}.b"]
        H = len(h)
        z = [b[j] + sum(inp[i] * W[i, j] for i in range(len(inp))) + sum(h[i] * U[i, j] for i in range(H))
             for j in range(4 * H)]
        gi = [sigmoid(v) for v in z[:H]]
        gf = [sigmoid(v) for v in z[H:2 * H]]
        gg = [math.tanh(v) for v in z[2 * H:3 * H]]
        go = [sigmoid(v) for v in z[3 * H:]]
        c = [gf[j] * c[j] + gi[j] * gg[j] for j in range(H)]
        h = [go[j] * math.tanh(c[j]) for j in range(H)]
        new.append((h, c))
        inp = h
    return new, inp


def ref_rollout(model, history, horizon):
    # loop-by-loop reference, independent of the vectorised code
    x = [v / model.scale for v in history[-model.window:]]
    out = []
    if model.kind == "dnn":
        n_layers = len(model.config.layer_units)
        for _ in range(horizon):
            p = min(max(ref_dense(model.params, x, n_layers), 0.0), 1.0)
            out.append(p)
            x = x[1:] + [p]
    else:
        units = model.config.layer_units[:model.config.recurrent_layers]
        states = [([0.0] * H, [0.0] * H) for H in units]
        head = len(model.config.layer_units) - model.config.recurrent_layers
        for v in x:
            states, h = ref_lstm_step(model.params, states, v)
        for k in range(horizon):
            if k:
                states, h = ref_lstm_step(model.params, states, out[-1])
            out.append(min(max(ref_dense(model.params, h, head), 0.0), 1.0))
    return [p * model.scale for p in out]


@pytest.mark.parametrize("kind", ["dnn", "lstm"])
def test_rollout_matches_reference_loop(kind):
    model = trained(kind, seed=4)
    held_out = ar1_series(300, seed=99)
    history = held_out[-model.window:]
    got = rollout(model, history, 61)
    expected = np.array(ref_rollout(model, list(history), 61))
    assert np.max(np.abs(got - expected)) < 1e-10


@pytest.mark.parametrize("kind", ["dnn", "lstm"])
def test_batched_rollout_matches_rows(kind):
    model = trained(kind, seed=2)
    series = ar1_series(400, seed=8)
    w = model.window
    batch = np.stack([series[i:i + w] for i in range(0, 100, 10)])
    out = rollout(model, batch, 12)
    for row, hist in zip(out, batch):
        assert np.allclose(row, rollout(model, hist, 12), rtol=0, atol=1e-9)


def test_rollout_is_clamped():
    model = echo_dnn()
    model.params["d2.b"][0] = 5.0
    assert np.all(rollout(model, [1.0, 2.0, 3.0, 4.0], 5) == RATED)


def test_short_history_errors():
    with pytest.raises(ValidationError):
        rollout(echo_dnn(), [1.0, 2.0], 3)


# -- gradients ---------------------------------------------------------------

def test_dnn_gradient_check():
    rng = np.random.default_rng(0)
    assert gradient_check("dnn", rng.uniform(0, 1, (16, 4)), rng.uniform(0, 1, 16), seed=0) < 1e-4


def test_lstm_gradient_check_length_8():
    rng = np.random.default_rng(1)
    cfg = TrainingConfig(lstm_window=8, seed=1)
    params = build_network("lstm", cfg).init(rng)
    # nonzero biases exercise every gate term
    for k in params:
        if k.endswith(".b"):
            params[k] = rng.normal(0, 0.3, params[k].shape)
    X, y = rng.uniform(0, 1, (6, 8)), rng.uniform(0, 1, 6)
    assert gradient_check("lstm", X, y, config=cfg, params=params) < 1e-4


@pytest.mark.parametrize("kind,width", [("dnn", 4), ("lstm", 8)])
def test_zero_output_layer_blocks_upstream_gradients(kind, width):
    cfg = TrainingConfig(lstm_window=8)
    net = build_network(kind, cfg)
    params = net.init(np.random.default_rng(3))
    last = max(k for k in params if k.startswith("d") and k.endswith(".W"))
    params[last] = np.zeros_like(params[last])
    rng = np.random.default_rng(4)
    _, grads = net.loss_and_grads(params, rng.uniform(0, 1, (5, width)), rng.uniform(0, 1, 5))
    upstream = [k for k in params if k.split(".")[0] != last.split(".")[0]]
    assert upstream
    assert all(np.all(grads[k] == 0.0) for k in upstream)


# -- persistence of models ---------------------------------------------------

@pytest.mark.parametrize("kind", ["dnn", "lstm"])
def test_model_json_roundtrip(tmp_path, kind):
    model = trained(kind, seed=1)
    path = tmp_path / "m.json"
    save_model(model, path, extra={"turbine_id": "T01"})
    back = load_model(path)
    assert back.kind == kind and back.scale == RATED
    assert all(np.array_equal(back.params[k], model.params[k]) for k in model.params)
    history = ar1_series(100, seed=6)
    assert np.array_equal(rollout(back, history, 10), rollout(model, history, 10))


def test_misshapen_parameters_rejected():
    model = echo_dnn()
    params = dict(model.params)
    params["d0.W"] = np.zeros((3, 5))
    with pytest.raises(ConfigError):
        ForecastModel("dnn", params, RATED, model.config)
