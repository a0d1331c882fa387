"""Autoencoder architectures and their parameter bookkeeping."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from lcsbench.detectors.layers import (
    GRU,
    BatchNorm,
    Dense,
    Dropout,
    Layer,
    LeakyReLU,
    Linear,
    RepeatVector,
    check_finite,
)
from lcsbench.errors import ConfigError


@dataclass(frozen=True)
class AnnSpec:
    """Dense autoencoder: each hidden block is Dense, activation, batch norm, dropout.

    The latent and output layers are linear. The decoder mirrors ``widths``.
    """

    input_dim: int
    widths: tuple[int, ...] = (128, 64)
    latent: int = 14
    activation: str = "leaky_relu"
    slope: float = 0.01
    batch_norm: bool = True
    bn_momentum: float = 0.99
    bn_eps: float = 1e-3
    dropout: float = 0.2

    kind = "ann"

    def __post_init__(self) -> None:
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.input_dim < 1 or self.latent < 1 or any(w < 1 for w in self.widths):
            raise ConfigError("layer sizes must be positive")
        if self.widths and self.latent >= min(self.widths):
            raise ConfigError("latent must be smaller than every hidden width")
        if self.activation not in ("leaky_relu", "linear"):
            raise ConfigError(f"unknown ANN activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    @property
    def sizes(self) -> list[int]:
        return [self.input_dim, *self.widths, self.latent, *reversed(self.widths), self.input_dim]

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self), "widths": list(self.widths)}


@dataclass(frozen=True)
class GruSpec:
    """Stacked recurrent autoencoder.

    The last encoder layer has ``latent`` units and emits only its final
    state, which is repeated ``seq_len`` times for the decoder. The last
    decoder layer has ``input_dim`` units, so its state is the
    reconstruction.
    """

    input_dim: int
    encoder_layers: int = 7
    decoder_layers: int = 7
    units: int = 16
    latent: int = 14
    activation: str = "relu"
    seq_len: int = 1

    kind = "gru"

    def __post_init__(self) -> None:
        if min(self.input_dim, self.units, self.latent, self.seq_len) < 1:
            raise ConfigError("layer sizes and seq_len must be positive")
        if self.encoder_layers < 1 or self.decoder_layers < 1:
            raise ConfigError("need at least one encoder and one decoder layer")
        if self.activation not in ("relu", "tanh"):
            raise ConfigError(f"unknown GRU activation {self.activation!r}")

    @property
    def encoder_units(self) -> list[int]:
        return [self.units] * (self.encoder_layers - 1) + [self.latent]

    @property
    def decoder_units(self) -> list[int]:
        return [self.units] * (self.decoder_layers - 1) + [self.input_dim]

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}


def spec_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "ann":
        d["widths"] = tuple(d.get("widths", (128, 64)))
        return AnnSpec(**d)
    if kind == "gru":
        return GruSpec(**d)
    raise ConfigError(f"unknown detector kind {kind!r}")


def param_shapes(spec) -> dict[str, tuple[int, ...]]:
    """Trainable tensor names and shapes, without allocating anything."""
    out: dict[str, tuple[int, ...]] = {}
    if isinstance(spec, AnnSpec):
        sizes = spec.sizes
        hidden = set(range(len(spec.widths))) | set(range(len(spec.widths) + 1, 2 * len(spec.widths) + 1))
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            for k, s in Dense.shapes(a, b).items():
                out[f"dense{i}.{k}"] = s
            if spec.batch_norm and i in hidden:
                for k, s in BatchNorm.shapes(b).items():
                    out[f"bn{i}.{k}"] = s
        return out
    if isinstance(spec, GruSpec):
        n_in = spec.input_dim
        for i, u in enumerate(spec.encoder_units + spec.decoder_units):
            for k, s in GRU.shapes(n_in, u).items():
                out[f"gru{i}.{k}"] = s
            n_in = u
        return out
    raise TypeError(f"unsupported spec {type(spec).__name__}")


def parameter_count(spec) -> int:
    """Closed-form trainable parameter count."""
    if isinstance(spec, AnnSpec):
        s = spec.sizes
        dense = sum(a * b + b for a, b in zip(s[:-1], s[1:]))
        bn = 2 * 2 * sum(spec.widths) if spec.batch_norm else 0
        return dense + bn
    if isinstance(spec, GruSpec):
        total, n_in = 0, spec.input_dim
        for u in spec.encoder_units + spec.decoder_units:
            total += 3 * (n_in * u + u * u + u)
            n_in = u
        return total
    raise TypeError(f"unsupported spec {type(spec).__name__}")


@dataclass
class Network:
    """An ordered stack of named layers."""

    spec: object
    layers: list[tuple[str, Layer]] = field(default_factory=list)

    def forward(self, x: np.ndarray, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        for i, (_, layer) in enumerate(self.layers):
            x = layer.forward(x, training=training, rng=rng)
            check_finite(x, i, layer)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for _, layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def zero_grad(self) -> None:
        for _, layer in self.layers:
            layer.zero_grad()

    def tensors(self, kind: str = "params") -> Iterator[tuple[str, Layer, str]]:
        for lname, layer in self.layers:
            for k in getattr(layer, kind):
                yield f"{lname}.{k}", layer, k

    def state(self) -> dict[str, np.ndarray]:
        """Copies of all trainable tensors and running buffers, keyed by name."""
        out = {name: layer.params[k].copy() for name, layer, k in self.tensors("params")}
        out.update({name: layer.buffers[k].copy() for name, layer, k in self.tensors("buffers")})
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        expected = {n for n, _, _ in self.tensors("params")} | {n for n, _, _ in self.tensors("buffers")}
        if set(state) != expected:
            missing, extra = sorted(expected - set(state)), sorted(set(state) - expected)
            raise ValueError(f"state mismatch; missing {missing[:3]}, unexpected {extra[:3]}")
        for kind in ("params", "buffers"):
            for name, layer, k in self.tensors(kind):
                arr = np.asarray(state[name], dtype=np.float64)
                if arr.shape != getattr(layer, kind)[k].shape:
                    raise ValueError(f"{name}: shape {arr.shape} != {getattr(layer, kind)[k].shape}")
                getattr(layer, kind)[k] = arr.copy()

    def parameter_count(self) -> int:
        return sum(layer.params[k].size for _, layer, k in self.tensors("params"))

    def prepare(self, x: np.ndarray) -> np.ndarray:
        """Shape a ``(n, features)`` matrix (or windows) into model input."""
        x = np.asarray(x, dtype=np.float64)
        if isinstance(self.spec, GruSpec):
            if x.ndim == 2:
                x = make_windows(x, self.spec.seq_len)
            want = (self.spec.seq_len, self.spec.input_dim)
        else:
            want = (self.spec.input_dim,)
        if x.shape[1:] != want:
            raise ValueError(f"input shape {x.shape[1:]} does not match model input {want}")
        if not np.isfinite(x).all():
            raise ValueError("input contains non-finite values")
        return x

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        """Inference-mode reconstruction of the prepared input."""
        return self.forward(self.prepare(x), training=False)


def make_windows(x: np.ndarray, seq_len: int) -> np.ndarray:
    """Trailing windows ``(n, seq_len, d)`` ending at each row; the start is padded with row 0."""
    x = np.asarray(x, dtype=np.float64)
    if seq_len == 1:
        return x[:, None, :]
    padded = np.vstack([np.repeat(x[:1], seq_len - 1, axis=0), x])
    idx = np.arange(x.shape[0])[:, None] + np.arange(seq_len)[None, :]
    return padded[idx]


def build(spec, seed: int = 0) -> Network:
    """Instantiate a freshly initialized network for ``spec``."""
    rng = np.random.default_rng(seed)
    net = Network(spec)
    if isinstance(spec, AnnSpec):
        sizes = spec.sizes
        n_hidden = len(spec.widths)
        latent_at = n_hidden
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            net.layers.append((f"dense{i}", Dense(a, b, rng)))
            if i == latent_at or i == len(sizes) - 2:
                continue
            act = LeakyReLU(spec.slope) if spec.activation == "leaky_relu" else Linear()
            net.layers.append((f"act{i}", act))
            if spec.batch_norm:
                net.layers.append((f"bn{i}", BatchNorm(b, spec.bn_momentum, spec.bn_eps)))
            if spec.dropout > 0:
                net.layers.append((f"drop{i}", Dropout(spec.dropout)))
        return net
    if isinstance(spec, GruSpec):
        n_in, i = spec.input_dim, 0
        enc = spec.encoder_units
        for j, u in enumerate(enc):
            last = j == len(enc) - 1
            net.layers.append((f"gru{i}", GRU(n_in, u, spec.activation, return_sequences=not last, rng=rng)))
            n_in, i = u, i + 1
        net.layers.append(("repeat", RepeatVector(spec.seq_len)))
        for u in spec.decoder_units:
            net.layers.append((f"gru{i}", GRU(n_in, u, spec.activation, return_sequences=True, rng=rng)))
            n_in, i = u, i + 1
        return net
    raise TypeError(f"unsupported spec {type(spec).__name__}")


def ann_forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Inference-mode ANN reconstruction of ``x`` (one vector or a batch)."""
    if not isinstance(net.spec, AnnSpec):
        raise TypeError("ann_forward needs an ANN network")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    out = net.reconstruct(x[None, :] if single else x)
    return out[0] if single else out


def reconstruction_error(net: Network, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Per-row mean squared reconstruction error (last time step for windowed input)."""
    x = net.prepare(x)
    parts = []
    for lo in range(0, x.shape[0], batch_size):
        xb = x[lo : lo + batch_size]
        parts.append(mean_square_error(xb, net.forward(xb, training=False)))
    return np.concatenate(parts) if parts else np.zeros(0)


def mean_square_error(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.ndim == 3:
        x, y = x[:, -1, :], y[:, -1, :]
    return np.mean((x - y) ** 2, axis=-1)
