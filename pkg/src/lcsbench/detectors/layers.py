"""Layers with hand-written backward passes, float64 throughout.

Every layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``self.grads`` during ``backward``.
"""

from __future__ import annotations

import numpy as np

from lcsbench.errors import NumericError


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    return q if rows >= cols else q.T


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Layer:
    name = "layer"

    def __init__(self) -> None:
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


class Dense(Layer):
    name = "dense"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        w = glorot_uniform(rng, n_in, n_out) if rng is not None else np.zeros((n_in, n_out))
        self.params = {"W": w, "b": np.zeros(n_out)}
        self.zero_grad()

    @staticmethod
    def shapes(n_in: int, n_out: int) -> dict[str, tuple[int, ...]]:
        return {"W": (n_in, n_out), "b": (n_out,)}

    def forward(self, x, training=False, rng=None):
        if x.shape[-1] != self.n_in:
            raise ValueError(f"dense layer expects {self.n_in} inputs, got {x.shape[-1]}")
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self.grads["W"] += self._x.T @ dy
        self.grads["b"] += dy.sum(axis=0)
        return dy @ self.params["W"].T


class LeakyReLU(Layer):
    name = "leaky_relu"

    def __init__(self, slope: float = 0.01):
        super().__init__()
        self.slope = slope

    def forward(self, x, training=False, rng=None):
        self._pos = x > 0
        return np.where(self._pos, x, self.slope * x)

    def backward(self, dy):
        return np.where(self._pos, dy, self.slope * dy)


class Linear(Layer):
    name = "linear"

    def forward(self, x, training=False, rng=None):
        return x

    def backward(self, dy):
        return dy


class BatchNorm(Layer):
    """Batch normalization over the leading axis with running statistics."""

    name = "batch_norm"

    def __init__(self, dim: int, momentum: float = 0.99, eps: float = 1e-3):
        super().__init__()
        self.dim, self.momentum, self.eps = dim, momentum, eps
        self.params = {"gamma": np.ones(dim), "beta": np.zeros(dim)}
        self.buffers = {"running_mean": np.zeros(dim), "running_var": np.ones(dim)}
        self.zero_grad()

    @staticmethod
    def shapes(dim: int) -> dict[str, tuple[int, ...]]:
        return {"gamma": (dim,), "beta": (dim,)}

    def forward(self, x, training=False, rng=None):
        if training:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            m = self.momentum
            self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mu
            self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * var
        else:
            mu, var = self.buffers["running_mean"], self.buffers["running_var"]
        self._inv = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mu) * self._inv
        self._training = training
        return self.params["gamma"] * self._xhat + self.params["beta"]

    def backward(self, dy):
        self.grads["gamma"] += (dy * self._xhat).sum(axis=0)
        self.grads["beta"] += dy.sum(axis=0)
        dxhat = dy * self.params["gamma"]
        if not self._training:
            return dxhat * self._inv
        n = dy.shape[0]
        return (self._inv / n) * (
            n * dxhat - dxhat.sum(axis=0) - self._xhat * (dxhat * self._xhat).sum(axis=0)
        )


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    name = "dropout"

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        self._mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


def _act(kind: str):
    if kind == "relu":
        return (lambda a: np.maximum(a, 0.0)), (lambda a, c: (a > 0).astype(a.dtype))
    if kind == "tanh":
        return np.tanh, (lambda a, c: 1.0 - c * c)
    if kind == "linear":
        return (lambda a: a), (lambda a, c: np.ones_like(a))
    raise ValueError(f"unknown activation {kind!r}")


def gru_cell(params: dict[str, np.ndarray], x: np.ndarray, h: np.ndarray, activation: str = "relu"):
    """One gated recurrent step; returns ``(h_next, cache)``.

    ``W`` is ``(in, 3u)``, ``U`` is ``(u, 3u)`` and ``b`` is ``(3u,)``, each
    laid out as [update | reset | candidate]::

        z = sigmoid(x Wz + h Uz + bz)
        r = sigmoid(x Wr + h Ur + br)
        c = act(x Wh + (r * h) Uh + bh)
        h' = (1 - z) * h + z * c
    """
    W, U, b = params["W"], params["U"], params["b"]
    u = U.shape[0]
    f, _ = _act(activation)
    xw = x @ W + b
    if h.any():
        hu = h @ U[:, : 2 * u]
    else:
        # zero state contributes nothing through U
        hu = np.zeros((x.shape[0], 2 * u))
    z = sigmoid(xw[:, :u] + hu[:, :u])
    r = sigmoid(xw[:, u : 2 * u] + hu[:, u:])
    rh = r * h
    a = xw[:, 2 * u :] + (rh @ U[:, 2 * u :] if h.any() else 0.0)
    c = f(a)
    h_next = (1.0 - z) * h + z * c
    return h_next, (x, h, z, r, rh, a, c)


def gru_cell_backward(params, cache, dh_next, grads, activation="relu"):
    """Backward of :func:`gru_cell`; accumulates into ``grads`` and returns ``(dx, dh)``."""
    x, h, z, r, rh, a, c = cache
    W, U = params["W"], params["U"]
    u = U.shape[0]
    _, df = _act(activation)
    dz = dh_next * (c - h)
    dc = dh_next * z
    dh = dh_next * (1.0 - z)
    da = dc * df(a, c)
    drh = da @ U[:, 2 * u :].T
    dr = drh * h
    dh += drh * r
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)
    dpre = np.concatenate([daz, dar, da], axis=1)
    grads["W"] += x.T @ dpre
    grads["b"] += dpre.sum(axis=0)
    grads["U"][:, : 2 * u] += h.T @ dpre[:, : 2 * u]
    grads["U"][:, 2 * u :] += rh.T @ da
    dx = dpre @ W.T
    dh += dpre[:, : 2 * u] @ U[:, : 2 * u].T
    return dx, dh


class GRU(Layer):
    """Recurrent layer over ``(batch, time, features)``, zero initial state."""

    name = "gru"

    def __init__(
        self,
        n_in: int,
        units: int,
        activation: str = "relu",
        return_sequences: bool = True,
        rng: np.random.Generator | None = None,
    ):
        super().__init__()
        self.n_in, self.units = n_in, units
        self.activation = activation
        self.return_sequences = return_sequences
        _act(activation)
        if rng is not None:
            W = glorot_uniform(rng, n_in, 3 * units)
            U = np.hstack([orthogonal(rng, units, units) for _ in range(3)])
        else:
            W, U = np.zeros((n_in, 3 * units)), np.zeros((units, 3 * units))
        self.params = {"W": W, "U": U, "b": np.zeros(3 * units)}
        self.zero_grad()

    @staticmethod
    def shapes(n_in: int, units: int) -> dict[str, tuple[int, ...]]:
        return {"W": (n_in, 3 * units), "U": (units, 3 * units), "b": (3 * units,)}

    def forward(self, x, training=False, rng=None):
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ValueError(f"gru layer expects (batch, time, {self.n_in}), got {x.shape}")
        n, steps, _ = x.shape
        h = np.zeros((n, self.units))
        self._caches = []
        outs = []
        for t in range(steps):
            h, cache = gru_cell(self.params, x[:, t, :], h, self.activation)
            self._caches.append(cache)
            outs.append(h)
        self._steps = steps
        if self.return_sequences:
            return np.stack(outs, axis=1)
        return h

    def backward(self, dy):
        n = dy.shape[0]
        dx = np.empty((n, self._steps, self.n_in))
        dh = np.zeros((n, self.units))
        for t in reversed(range(self._steps)):
            if self.return_sequences:
                dh = dh + dy[:, t, :]
            elif t == self._steps - 1:
                dh = dh + dy
            dx[:, t, :], dh = gru_cell_backward(self.params, self._caches[t], dh, self.grads, self.activation)
        return dx


class RepeatVector(Layer):
    name = "repeat"

    def __init__(self, steps: int):
        super().__init__()
        self.steps = steps

    def forward(self, x, training=False, rng=None):
        return np.repeat(x[:, None, :], self.steps, axis=1)

    def backward(self, dy):
        return dy.sum(axis=1)


def check_finite(x: np.ndarray, index: int, layer: Layer) -> None:
    if not np.isfinite(x).all():
        raise NumericError(f"non-finite activation after layer {index} ({layer.name})")
