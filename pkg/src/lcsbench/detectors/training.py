"""Mini-batch training with MSE loss."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from lcsbench.detectors.models import Network, build
from lcsbench.errors import ConfigError, NumericError, TrainingDivergedError

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "momentum")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if not (0 <= self.momentum < 1 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("momentum coefficients must lie in [0, 1)")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, net: Network) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for name, layer, k in net.tensors("params"):
            g = layer.grads[k]
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            layer.params[k] -= c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


class Momentum:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.vel: dict[str, np.ndarray] = {}

    def step(self, net: Network) -> None:
        c = self.cfg
        for name, layer, k in net.tensors("params"):
            v = self.vel.setdefault(name, np.zeros_like(layer.params[k]))
            v *= c.momentum
            v -= c.learning_rate * layer.grads[k]
            layer.params[k] += v


def mse_loss(y: np.ndarray, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient w.r.t. ``y``."""
    diff = y - x
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


def train(spec, data: np.ndarray, cfg: TrainConfig = TrainConfig(), net: Network | None = None):
    """Fit an autoencoder on ``data`` (rows already scaled and imputed).

    Returns ``(network, losses)`` where ``losses[e]`` is the mean training
    loss of epoch ``e``. Raises :class:`TrainingDivergedError` as soon as a
    batch loss stops being finite.
    """
    net = net if net is not None else build(spec, cfg.seed)
    x = net.prepare(data)
    n = x.shape[0]
    if n == 0:
        raise ConfigError("training data is empty")
    rng = np.random.default_rng([cfg.seed, 1])
    opt = Adam(cfg) if cfg.optimizer == "adam" else Momentum(cfg)
    losses: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            xb = x[order[lo : lo + cfg.batch_size]]
            net.zero_grad()
            last = losses[-1] if losses else None
            hint = f"epoch {epoch}, batch {b}; last epoch loss {last}; try a smaller learning_rate (now {cfg.learning_rate})"
            try:
                yb = net.forward(xb, training=True, rng=rng)
            except NumericError as exc:
                raise TrainingDivergedError(f"{exc} at {hint}") from exc
            with np.errstate(over="ignore", invalid="ignore"):
                loss, dy = mse_loss(yb, xb)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss} at {hint}")
            net.backward(dy)
            opt.step(net)
            total += loss * xb.shape[0]
        losses.append(total / n)
        log.debug("epoch %d loss %.6g", epoch, losses[-1])
    return net, np.array(losses)


def write_loss_curve(losses, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(losses):
            w.writerow([i, repr(float(v))])


def read_loss_curve(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["loss"]) for r in rows])
