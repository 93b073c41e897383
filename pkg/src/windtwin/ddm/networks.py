"""Tiny dense and LSTM regressors with hand-written backpropagation.

Parameters live in flat ``dict[str, ndarray]`` objects so the optimiser,
serialisation and finite-difference checks can treat both kinds alike.

Naming: dense layer ``l`` has ``d{l}.W``/``d{l}.b``; recurrent layer ``l`` has
input kernel ``r{l}.W`` (in x 4H), recurrent kernel ``r{l}.U`` (H x 4H) and
bias ``r{l}.b`` with gate blocks ordered input, forget, cell, output.
"""

from __future__ import annotations

import numpy as np


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _act(z, activation):
    return np.tanh(z) if activation == "tanh" else z


def _act_grad(a, activation):
    return 1.0 - a * a if activation == "tanh" else np.ones_like(a)


class DenseNet:
    """Fully connected stack; hidden layers use ``activation``, the output is linear."""

    def __init__(self, n_inputs: int, units, activation: str = "tanh"):
        self.n_inputs = n_inputs
        self.units = list(units)
        self.activation = activation

    def init(self, rng: np.random.Generator, prefix: str = "d") -> dict:
        params = {}
        fan_in = self.n_inputs
        for l, n in enumerate(self.units):
            params[f"{prefix}{l}.W"] = glorot(rng, fan_in, n)
            params[f"{prefix}{l}.b"] = np.zeros(n)
            fan_in = n
        return params

    def forward(self, params, X, prefix: str = "d"):
        acts = [X]
        last = len(self.units) - 1
        for l in range(len(self.units)):
            z = acts[-1] @ params[f"{prefix}{l}.W"] + params[f"{prefix}{l}.b"]
            acts.append(z if l == last else _act(z, self.activation))
        return acts

    def backward(self, params, acts, d_out, prefix: str = "d"):
        grads = {}
        delta = d_out
        for l in reversed(range(len(self.units))):
            grads[f"{prefix}{l}.W"] = acts[l].T @ delta
            grads[f"{prefix}{l}.b"] = delta.sum(axis=0)
            d_in = delta @ params[f"{prefix}{l}.W"].T
            if l > 0:
                delta = d_in * _act_grad(acts[l], self.activation)
        return grads, d_in

    def predict(self, params, X):
        return self.forward(params, X)[-1][:, 0]

    def loss_and_grads(self, params, X, y):
        acts = self.forward(params, X)
        err = acts[-1][:, 0] - y
        loss = float(np.mean(err * err))
        d_out = (2.0 / y.size) * err[:, None]
        grads, _ = self.backward(params, acts, d_out)
        return loss, grads


class LSTMNet:
    """Stacked LSTM over scalar inputs followed by a dense head on the last hidden state."""

    def __init__(self, recurrent_units, head_units, activation: str = "tanh"):
        self.recurrent_units = list(recurrent_units)
        self.head = DenseNet(self.recurrent_units[-1], head_units, activation)

    def init(self, rng: np.random.Generator) -> dict:
        params = {}
        fan_in = 1
        for l, H in enumerate(self.recurrent_units):
            params[f"r{l}.W"] = glorot(rng, fan_in, 4 * H)
            params[f"r{l}.U"] = glorot(rng, H, 4 * H)
            params[f"r{l}.b"] = np.zeros(4 * H)
            fan_in = H
        params.update(self.head.init(rng))
        return params

    def _layer_forward(self, params, l, seq):
        W, U, b = params[f"r{l}.W"], params[f"r{l}.U"], params[f"r{l}.b"]
        H = U.shape[0]
        n, S, _ = seq.shape
        h = np.zeros((n, H))
        c = np.zeros((n, H))
        gates = np.empty((S, n, 4 * H))
        cells = np.empty((S + 1, n, H))
        hidden = np.empty((S + 1, n, H))
        cells[0], hidden[0] = c, h
        xW = np.einsum("nsi,ij->snj", seq, W) + b
        for t in range(S):
            z = xW[t] + h @ U
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = _sigmoid(z[:, 3 * H:])
            c = f * c + i * g
            h = o * np.tanh(c)
            gates[t, :, :H], gates[t, :, H:2 * H], gates[t, :, 2 * H:3 * H], gates[t, :, 3 * H:] = i, f, g, o
            cells[t + 1], hidden[t + 1] = c, h
        return hidden[1:].transpose(1, 0, 2), (seq, gates, cells, hidden)

    def _layer_backward(self, params, l, cache, d_hidden):
        W, U = params[f"r{l}.W"], params[f"r{l}.U"]
        seq, gates, cells, hidden = cache
        H = U.shape[0]
        S = gates.shape[0]
        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        db = np.zeros(4 * H)
        d_seq = np.zeros_like(seq)
        dh_next = np.zeros_like(hidden[0])
        dc_next = np.zeros_like(cells[0])
        for t in reversed(range(S)):
            i, f, g, o = (gates[t, :, :H], gates[t, :, H:2 * H], gates[t, :, 2 * H:3 * H], gates[t, :, 3 * H:])
            tc = np.tanh(cells[t + 1])
            dh = d_hidden[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * cells[t] * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                dh * tc * o * (1.0 - o),
            ], axis=1)
            dW += seq[:, t].T @ dz
            dU += hidden[t].T @ dz
            db += dz.sum(axis=0)
            d_seq[:, t] = dz @ W.T
            dh_next = dz @ U.T
            dc_next = dc * f
        return {f"r{l}.W": dW, f"r{l}.U": dU, f"r{l}.b": db}, d_seq

    def forward(self, params, X):
        seq = X[:, :, None]
        caches = []
        for l in range(len(self.recurrent_units)):
            seq, cache = self._layer_forward(params, l, seq)
            caches.append(cache)
        acts = self.head.forward(params, seq[:, -1, :])
        return acts, caches, seq

    def initial_state(self, n: int) -> list:
        """Zero ``(h, c)`` per recurrent layer, laid out (H, n) for inference."""
        return [(np.zeros((H, n)), np.zeros((H, n))) for H in self.recurrent_units]

    def step(self, params, state, x):
        """Advance every layer by one input ``x`` (n,); returns the new state and the network output."""
        inp = np.asarray(x, dtype=float)[None, :]
        new = []
        for l, (h, c) in enumerate(state):
            W, U, b = params[f"r{l}.W"], params[f"r{l}.U"], params[f"r{l}.b"]
            H = U.shape[0]
            # sigmoid(z) = (1 + tanh(z / 2)) / 2 on the input, forget and output rows
            half = np.where((np.arange(4 * H) // H) == 2, 1.0, 0.5)[:, None]
            a = np.tanh(half * (W.T @ inp + U.T @ h + b[:, None]))
            g = a[2 * H:3 * H].copy()
            a += 1.0
            a *= 0.5
            c = a[H:2 * H] * c + a[:H] * g
            h = a[3 * H:] * np.tanh(c)
            new.append((h, c))
            inp = h
        return new, self.head.forward(params, inp.T)[-1][:, 0]

    def predict(self, params, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        state = self.initial_state(X.shape[0])
        out = np.zeros(X.shape[0])
        for t in range(X.shape[1]):
            state, out = self.step(params, state, X[:, t])
        return out

    def loss_and_grads(self, params, X, y):
        acts, caches, top = self.forward(params, X)
        err = acts[-1][:, 0] - y
        loss = float(np.mean(err * err))
        grads, d_last = self.head.backward(params, acts, (2.0 / y.size) * err[:, None])
        d_hidden = np.zeros_like(top)
        d_hidden[:, -1] = d_last
        for l in reversed(range(len(self.recurrent_units))):
            g, d_hidden = self._layer_backward(params, l, caches[l], d_hidden)
            grads.update(g)
        return loss, grads
