"""
Dichte Feed-Forward-Netze mit handgeschriebener Rückpropagation.

Zeilenvektor-Konvention: z = a @ W + b, ReLU auf versteckten Schichten,
Identität am Ausgang. Dropout ist invertiert und nur im Trainingsmodus aktiv.
"""
from __future__ import annotations

import copy
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .exceptions import TrainingError
from .metrics import QUANTILE_LEVELS, monotonize

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN = (20, 10, 10)


# ---------------------------------------------------
# Netz
# ---------------------------------------------------
@dataclass
class DenseNet:
    layer_dims: list
    weights: list
    biases: list
    dropout_rates: list
    # Standardisierung der Eingaben und Ziele
    x_mean: np.ndarray | None = None
    x_std: np.ndarray | None = None
    y_mean: float = 0.0
    y_scale: float = 1.0
    history: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def prepare(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.x_mean is None:
            return X
        return (X - self.x_mean) / self.x_std

    def predict(self, X) -> np.ndarray:
        """Auswertung ohne Dropout, in Zieleinheiten; Form (n_rows, output_dim)."""
        out, _ = forward(self, self.prepare(X), train_mode=False)
        return out * self.y_scale + self.y_mean

    def params(self) -> list:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "dropout_rates": list(self.dropout_rates),
            "x_mean": None if self.x_mean is None else self.x_mean.tolist(),
            "x_std": None if self.x_std is None else self.x_std.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "DenseNet":
        x_mean = payload.get("x_mean")
        x_std = payload.get("x_std")
        return cls(
            layer_dims=[int(d) for d in payload["layer_dims"]],
            weights=[np.asarray(w, dtype=float) for w in payload["weights"]],
            biases=[np.asarray(b, dtype=float) for b in payload["biases"]],
            dropout_rates=[float(r) for r in payload["dropout_rates"]],
            x_mean=None if x_mean is None else np.asarray(x_mean, dtype=float),
            x_std=None if x_std is None else np.asarray(x_std, dtype=float),
            y_mean=float(payload.get("y_mean", 0.0)),
            y_scale=float(payload.get("y_scale", 1.0)),
        )


def init_net(layer_dims: Sequence[int], dropout_rates: Sequence[float] | None = None, seed=0) -> DenseNet:
    """Gleichverteilte Startgewichte in +-sqrt(6/(fan_in+fan_out)), Bias 0."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"Ungültige Schichtdimensionen: {dims}")
    rates = list(dropout_rates) if dropout_rates is not None else [0.0] * (len(dims) - 1)
    if len(rates) != len(dims) - 1:
        raise ValueError("Eine Dropout-Rate je Schicht erwartet")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNet(layer_dims=dims, weights=weights, biases=biases, dropout_rates=rates)


def default_dropout(n_layers: int, input_rate: float = 0.1, hidden_rate: float = 0.2) -> list:
    """Eingangsschicht ``input_rate``, alle weiteren Schichteingänge ``hidden_rate``."""
    return [input_rate] + [hidden_rate] * (n_layers - 1)


def forward(net: DenseNet, X, train_mode: bool = False, rng=None):
    """
    Vorwärtslauf auf bereits standardisierten Eingaben.
    Rückgabe: (Ausgabe, Cache je Schicht aus Eingang, Voraktivierung, Maske).
    """
    a = np.atleast_2d(np.asarray(X, dtype=float))
    if a.shape[1] != net.input_dim:
        raise ValueError(f"Eingabebreite {a.shape[1]}, erwartet {net.input_dim}")
    if train_mode and not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    cache = []
    n_layers = len(net.weights)
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        mask = None
        rate = net.dropout_rates[i]
        if train_mode and rate > 0:
            mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
            a = a * mask
        z = a @ W + b
        cache.append((a, z, mask))
        a = np.maximum(z, 0.0) if i < n_layers - 1 else z
    return a, cache


def backward(net: DenseNet, cache, loss_grad) -> list:
    """Gradienten [(dW, db), ...] je Schicht zu dL/d(Ausgabe) = ``loss_grad``."""
    delta = np.atleast_2d(np.asarray(loss_grad, dtype=float))
    grads = [None] * len(net.weights)
    for i in reversed(range(len(net.weights))):
        a_in, z, mask = cache[i]
        if i < len(net.weights) - 1:
            delta = delta * (z > 0)
        grads[i] = (a_in.T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = delta @ net.weights[i].T
            if mask is not None:
                delta = delta * mask
    return grads


# ---------------------------------------------------
# Verluste
# ---------------------------------------------------
@dataclass(frozen=True)
class Loss:
    """MSE oder Pinball; bei Pinball ein Niveau je Ausgang."""
    kind: str = "mse"
    levels: tuple = ()

    @classmethod
    def mse(cls) -> "Loss":
        return cls("mse")

    @classmethod
    def pinball(cls, levels) -> "Loss":
        levels = tuple(float(q) for q in np.atleast_1d(levels))
        if any(not 0.0 < q < 1.0 for q in levels):
            raise ValueError("Quantilniveaus müssen in (0, 1) liegen")
        return cls("pinball", levels)

    def _broadcast(self, pred, y):
        pred = np.atleast_2d(np.asarray(pred, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1, 1) if np.ndim(y) <= 1 else np.asarray(y, dtype=float)
        return pred, np.broadcast_to(y, pred.shape)

    def value(self, pred, y) -> float:
        pred, y = self._broadcast(pred, y)
        if self.kind == "mse":
            return float(np.mean((pred - y) ** 2))
        diff = y - pred
        q = np.asarray(self.levels)
        return float(np.mean(np.where(diff > 0, q * diff, (q - 1.0) * diff)))

    def gradient(self, pred, y) -> np.ndarray:
        pred, y = self._broadcast(pred, y)
        if self.kind == "mse":
            return 2.0 * (pred - y) / pred.size
        q = np.asarray(self.levels)
        # am Knick y == Vorhersage gilt der Zweig y < Vorhersage
        return np.where(y > pred, -q, 1.0 - q) / pred.size


@dataclass(frozen=True)
class TrainConfig:
    loss: Loss = field(default_factory=Loss.mse)
    learning_rate: float = 0.01
    batch_size: int = 64
    max_epochs: int = 200
    early_stop_patience: int = 10
    early_stop_tolerance: float = 1e-4
    seed: int = 0
    hidden_dims: tuple = DEFAULT_HIDDEN
    dropout_input: float = 0.1
    dropout_hidden: float = 0.2
    validation_fraction: float = 0.2
    grid: Mapping | None = None

    def __post_init__(self):
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience muss >= 1 sein")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate muss > 0 sein")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size und max_epochs müssen >= 1 sein")


# ---------------------------------------------------
# Training
# ---------------------------------------------------
def temporal_split(n_rows: int, fraction: float = 0.2, split_key=None) -> tuple:
    """
    Validierung = letzte ``fraction`` der Tage (nach ``split_key``, sonst
    nach Zeilenposition). Mindestens ein Validierungstag.
    """
    if n_rows < 2:
        raise ValueError("Mindestens 2 Zeilen für Training und Validierung nötig")
    keys = np.arange(n_rows) if split_key is None else np.asarray(split_key)
    distinct = np.unique(keys)
    if len(distinct) < 2:
        raise ValueError("Mindestens 2 verschiedene Tage für eine zeitliche Aufteilung nötig")
    n_val = min(len(distinct) - 1, max(1, int(math.ceil(fraction * len(distinct)))))
    first_val = distinct[-n_val]
    val = np.flatnonzero(keys >= first_val)
    train_idx = np.flatnonzero(keys < first_val)
    return train_idx, val


def fit_standardization(X) -> tuple:
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def _target_scaling(y) -> tuple:
    y = np.asarray(y, dtype=float)
    scale = float(np.std(y))
    return float(np.mean(y)), (scale if scale > 0 else 1.0)


def train(
    X,
    y,
    cfg: TrainConfig | None = None,
    split_key=None,
    output_dim: int = 1,
    x_stats: tuple | None = None,
) -> DenseNet:
    """
    Mini-Batch-SGD mit zeitlicher Validierung und Early Stopping; liefert
    den Stand mit dem besten Validierungsverlust. ``net.history`` enthält
    die Verlaufskurven.
    """
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    train_idx, val_idx = temporal_split(len(y), cfg.validation_fraction, split_key)
    rng = np.random.default_rng(cfg.seed)

    dims = [X.shape[1], *cfg.hidden_dims, output_dim]
    net = init_net(dims, default_dropout(len(dims) - 1, cfg.dropout_input, cfg.dropout_hidden), rng)
    net.x_mean, net.x_std = x_stats if x_stats is not None else fit_standardization(X[train_idx])
    net.y_mean, net.y_scale = _target_scaling(y[train_idx])

    Xs = net.prepare(X)
    ys = (y - net.y_mean) / net.y_scale
    X_train, y_train = Xs[train_idx], ys[train_idx]
    X_val, y_val = Xs[val_idx], ys[val_idx]
    loss = cfg.loss

    best_val = math.inf
    best_params = None
    best_epoch = -1
    wait = 0
    history = {"train_loss": [], "val_loss": [], "best_val": []}
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train_idx))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            pred, cache = forward(net, X_train[batch], train_mode=True, rng=rng)
            grads = backward(net, cache, loss.gradient(pred, y_train[batch]))
            for i, (dW, db) in enumerate(grads):
                net.weights[i] = net.weights[i] - cfg.learning_rate * dW
                net.biases[i] = net.biases[i] - cfg.learning_rate * db

        with np.errstate(over="ignore", invalid="ignore"):
            train_loss = loss.value(forward(net, X_train)[0], y_train)
            val_loss = loss.value(forward(net, X_val)[0], y_val)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingError(epoch, cfg.learning_rate, train_loss)
        history["train_loss"].append(train_loss)
        history["val_loss"].append(val_loss)

        if val_loss < best_val - cfg.early_stop_tolerance or best_params is None:
            best_val = val_loss
            best_params = (copy.deepcopy(net.weights), copy.deepcopy(net.biases))
            best_epoch = epoch
            wait = 0
        else:
            wait += 1
        history["best_val"].append(best_val)
        if wait >= cfg.early_stop_patience:
            logger.debug("Early Stopping in Epoche %d (beste Epoche %d)", epoch, best_epoch)
            break

    net.weights, net.biases = best_params
    history["best_epoch"] = best_epoch
    net.history = history
    return net


@dataclass
class QuantileNets:
    """Ein Netz je Quantilniveau; Vorhersagen werden sortiert."""
    nets: list
    levels: tuple

    def predict(self, X) -> np.ndarray:
        columns = [net.predict(X)[:, 0] for net in self.nets]
        return monotonize(np.column_stack(columns))

    def to_dict(self) -> dict:
        return {"levels": list(self.levels), "nets": [net.to_dict() for net in self.nets]}

    @classmethod
    def from_dict(cls, payload: Mapping) -> "QuantileNets":
        return cls(
            nets=[DenseNet.from_dict(p) for p in payload["nets"]],
            levels=tuple(payload["levels"]),
        )


def train_quantile_nets(
    X,
    y,
    cfg: TrainConfig | None = None,
    levels: Sequence[float] = QUANTILE_LEVELS,
    split_key=None,
) -> QuantileNets:
    """Neun unabhängige Netze auf Pinball(q) mit gemeinsamer Eingangsstandardisierung."""
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=float)
    train_idx, _ = temporal_split(len(y), cfg.validation_fraction, split_key)
    stats = fit_standardization(X[train_idx])
    children = np.random.SeedSequence(cfg.seed).spawn(len(levels))
    nets = []
    for q, child in zip(levels, children):
        net_cfg = replace(cfg, loss=Loss.pinball(q), seed=int(child.generate_state(1)[0]))
        nets.append(train(X, y, net_cfg, split_key=split_key, x_stats=stats))
    return QuantileNets(nets=nets, levels=tuple(levels))


def grid_points(grid: Mapping) -> list[dict]:
    names = list(grid)
    return [dict(zip(names, values)) for values in itertools.product(*(grid[n] for n in names))]


def grid_search(X, y, grid: Mapping, cfg: TrainConfig | None = None, split_key=None) -> TrainConfig:
    """
    Vollständige Suche über das Gitter; bester Validierungsverlust gewinnt,
    bei Gleichstand der frühere Gitterpunkt. Divergente Läufe zählen als unendlich.
    """
    cfg = cfg or TrainConfig()
    points = grid_points(grid)
    if not points:
        raise ValueError("Leeres Hyperparametergitter")
    best_cfg, best_loss = None, math.inf
    for point in points:
        candidate = replace(cfg, grid=None, **point)
        try:
            net = train(X, y, candidate, split_key=split_key)
            loss = min(net.history["val_loss"])
        except TrainingError as exc:
            logger.info("Gitterpunkt %s divergiert: %s", point, exc)
            loss = math.inf
        logger.debug("Gitterpunkt %s: Validierungsverlust %.6g", point, loss)
        if best_cfg is None or loss < best_loss:
            best_cfg, best_loss = candidate, loss
    return best_cfg
