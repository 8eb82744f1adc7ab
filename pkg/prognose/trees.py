"""
Regressionsbäume: Zufallswald über alle Kreise mit empirischen Quantilen der
Einzelbäume, und kreisweise Gradient-Boosting-Modelle auf dem Pinball-Verlust.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .metrics import QUANTILE_LEVELS, monotonize, pinball_loss

logger = logging.getLogger(__name__)

LEAF = -1
MIN_GAIN = 1e-12
CLIP_FROM_LEVEL = 0.8


# ---------------------------------------------------
# Einzelbaum
# ---------------------------------------------------
@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 12
    min_samples_leaf: int = 3
    feature_fraction: float = 1.0
    loss: str = "mse"
    quantile: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.loss not in ("mse", "pinball"):
            raise ValueError(f"Unbekannter Verlust: {self.loss}")
        if self.min_samples_leaf < 1 or self.max_depth < 0:
            raise ValueError("min_samples_leaf >= 1 und max_depth >= 0 erforderlich")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ValueError("feature_fraction muss in (0, 1] liegen")


@dataclass
class RegressionTree:
    """
    Baum in Feldform: Knoten i teilt an ``feature[i]``/``threshold[i]``
    (links: x < threshold), Blätter haben ``feature == LEAF``.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    n_features: int
    max_depth: int = 12
    min_samples_leaf: int = 1

    @classmethod
    def constant(cls, value: float, n_features: int = 0) -> "RegressionTree":
        return cls(
            feature=np.array([LEAF]), threshold=np.array([0.0]),
            left=np.array([LEAF]), right=np.array([LEAF]),
            value=np.array([float(value)]), gain=np.array([0.0]),
            n_features=n_features, max_depth=0,
        )

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def apply(self, X) -> np.ndarray:
        """Blattindex je Zeile."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        nodes = np.zeros(len(X), dtype=int)
        active = self.feature[nodes] != LEAF
        while np.any(active):
            idx = np.flatnonzero(active)
            current = nodes[idx]
            go_left = X[idx, self.feature[current]] < self.threshold[current]
            nodes[idx] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[nodes] != LEAF
        return nodes

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def feature_importances(self) -> np.ndarray:
        importances = np.zeros(self.n_features)
        inner = self.feature != LEAF
        np.add.at(importances, self.feature[inner], self.gain[inner])
        return importances

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "n_features": self.n_features,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RegressionTree":
        return cls(
            feature=np.asarray(payload["feature"], dtype=int),
            threshold=np.asarray(payload["threshold"], dtype=float),
            left=np.asarray(payload["left"], dtype=int),
            right=np.asarray(payload["right"], dtype=int),
            value=np.asarray(payload["value"], dtype=float),
            gain=np.asarray(payload["gain"], dtype=float),
            n_features=int(payload["n_features"]),
            max_depth=int(payload.get("max_depth", 12)),
            min_samples_leaf=int(payload.get("min_samples_leaf", 1)),
        )


def leaf_value(y: np.ndarray, cfg: TreeConfig) -> float:
    if cfg.loss == "pinball":
        return float(np.quantile(y, cfg.quantile, method="inverted_cdf"))
    return float(np.mean(y))


def node_impurity(y: np.ndarray, cfg: TreeConfig) -> float:
    """Summe der Abweichungsquadrate bzw. des Pinball-Verlusts am Blattwert."""
    if len(y) == 0:
        return 0.0
    if cfg.loss == "pinball":
        return float(np.sum(pinball_loss(y, leaf_value(y, cfg), cfg.quantile)))
    return float(np.sum((y - y.mean()) ** 2))


def _best_split_mse(x, y, min_leaf):
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(ys)
    csum = np.cumsum(ys)
    csq = np.cumsum(ys ** 2)
    n_left = np.arange(1, n)
    s_left, q_left = csum[:-1], csq[:-1]
    s_right, q_right = csum[-1] - s_left, csq[-1] - q_left
    sse = (q_left - s_left ** 2 / n_left) + (q_right - s_right ** 2 / (n - n_left))
    parent = csq[-1] - csum[-1] ** 2 / n
    gains = parent - sse
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
    if not np.any(valid):
        return None
    gains = np.where(valid, gains, -np.inf)
    i = int(np.argmax(gains))
    return gains[i], 0.5 * (xs[i] + xs[i + 1])


def _best_split_pinball(x, y, min_leaf, cfg):
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(ys)
    parent = node_impurity(ys, cfg)
    best = None
    for i in range(min_leaf - 1, n - min_leaf):
        if xs[i] >= xs[i + 1]:
            continue
        gain = parent - node_impurity(ys[:i + 1], cfg) - node_impurity(ys[i + 1:], cfg)
        if best is None or gain > best[0]:
            best = (gain, 0.5 * (xs[i] + xs[i + 1]))
    return best


def best_split(X, y, features, cfg: TreeConfig):
    """
    Beste Teilung (Gewinn, Merkmal, Schwelle) über die Kandidatenmerkmale in
    aufsteigender Reihenfolge; bei gleichem Gewinn gewinnt die erste.
    """
    best = None
    for f in sorted(features):
        if cfg.loss == "pinball":
            found = _best_split_pinball(X[:, f], y, cfg.min_samples_leaf, cfg)
        else:
            found = _best_split_mse(X[:, f], y, cfg.min_samples_leaf)
        if found is not None and (best is None or found[0] > best[0]):
            best = (found[0], f, found[1])
    return best


def fit_tree(X, y, cfg: TreeConfig | None = None, rng=None) -> RegressionTree:
    """Gierige Teilung von oben nach unten."""
    cfg = cfg or TreeConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X muss 2-dimensional sein und zu y passen")
    if len(y) < 2 * cfg.min_samples_leaf:
        raise ValueError(
            f"Mindestens {2 * cfg.min_samples_leaf} Zeilen nötig, erhalten: {len(y)}"
        )
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    n_features = X.shape[1]
    n_candidates = max(1, int(round(cfg.feature_fraction * n_features)))

    feature, threshold, left, right, value, gain = [], [], [], [], [], []

    def grow(rows, depth):
        node = len(feature)
        ys = y[rows]
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(leaf_value(ys, cfg))
        gain.append(0.0)
        if depth >= cfg.max_depth or len(rows) < 2 * cfg.min_samples_leaf:
            return node
        if np.all(ys == ys[0]):
            return node
        if n_candidates < n_features:
            candidates = rng.choice(n_features, size=n_candidates, replace=False)
        else:
            candidates = range(n_features)
        split = best_split(X[rows], ys, candidates, cfg)
        if split is None or split[0] <= MIN_GAIN:
            return node
        split_gain, f, t = split
        mask = X[rows, f] < t
        feature[node], threshold[node], gain[node] = f, t, split_gain
        left[node] = grow(rows[mask], depth + 1)
        right[node] = grow(rows[~mask], depth + 1)
        return node

    grow(np.arange(len(y)), 0)
    return RegressionTree(
        feature=np.array(feature, dtype=int),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=int),
        right=np.array(right, dtype=int),
        value=np.array(value, dtype=float),
        gain=np.array(gain, dtype=float),
        n_features=n_features,
        max_depth=cfg.max_depth,
        min_samples_leaf=cfg.min_samples_leaf,
    )


# ---------------------------------------------------
# Zufallswald
# ---------------------------------------------------
@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    max_depth: int = 12
    min_samples_leaf: int = 3
    feature_fraction: float = 1 / 3
    bootstrap: bool = True
    clip_multiplier: float = 3.0
    seed: int = 0

    def tree_config(self) -> TreeConfig:
        return TreeConfig(
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            feature_fraction=self.feature_fraction,
            loss="mse",
            seed=self.seed,
        )


@dataclass
class ForestModel:
    trees: list
    seeds: tuple
    feature_fraction: float
    bootstrap_indices: list = field(default_factory=list)
    clip_multiplier: float = 3.0

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def tree_predictions(self, X) -> np.ndarray:
        """Form (n_trees, n_rows)."""
        return np.vstack([tree.predict(X) for tree in self.trees])

    def predict(self, X) -> np.ndarray:
        return self.tree_predictions(X).mean(axis=0)

    def feature_importances(self) -> np.ndarray:
        """Summierte Verlustreduktion je Merkmal, auf Summe 1 normiert."""
        total = sum(tree.feature_importances() for tree in self.trees)
        norm = float(np.sum(total))
        return total / norm if norm > 0 else total


def fit_forest(X, y, cfg: ForestConfig | None = None) -> ForestModel:
    cfg = cfg or ForestConfig()
    if cfg.n_trees < 1:
        raise ValueError("n_trees muss >= 1 sein")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)
    seeds = tuple(int(child.generate_state(1)[0]) for child in children)
    tree_cfg = cfg.tree_config()
    trees, indices = [], []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        rows = np.sort(rng.integers(0, n, size=n)) if cfg.bootstrap else np.arange(n)
        trees.append(fit_tree(X[rows], y[rows], tree_cfg, rng=rng))
        indices.append(rows)
    logger.debug("Wald mit %d Bäumen auf %d Zeilen angepasst", cfg.n_trees, n)
    return ForestModel(
        trees=trees,
        seeds=seeds,
        feature_fraction=cfg.feature_fraction,
        bootstrap_indices=indices,
        clip_multiplier=cfg.clip_multiplier,
    )


def clip_top_quantiles(values, levels, county_max: float, clip_multiplier: float) -> np.ndarray:
    """
    Quantile ab Niveau 0.8 auf clip_multiplier * Kreismaximum (mindestens 1)
    begrenzen. Niedrigere Quantile liegen danach nie über einem höheren.
    """
    values = np.array(values, dtype=float)
    cap = clip_multiplier * max(float(county_max), 1.0)
    top = np.asarray(levels) >= CLIP_FROM_LEVEL
    values[..., top] = np.minimum(values[..., top], cap)
    return np.minimum.accumulate(values[..., ::-1], axis=-1)[..., ::-1]


def forest_quantiles(
    model: ForestModel,
    row,
    levels: Sequence[float] = QUANTILE_LEVELS,
    county_max: float | None = None,
    clip_multiplier: float | None = None,
) -> np.ndarray:
    """Empirische Quantile der Einzelbaumvorhersagen, oben begrenzt, sortiert."""
    preds = model.tree_predictions(np.atleast_2d(row))[:, 0]
    values = np.quantile(preds, levels)
    if county_max is not None:
        multiplier = model.clip_multiplier if clip_multiplier is None else clip_multiplier
        values = clip_top_quantiles(values, levels, county_max, multiplier)
    return monotonize(values)


def forest_quantile_matrix(model: ForestModel, X, county_max, levels=QUANTILE_LEVELS) -> np.ndarray:
    """Wie ``forest_quantiles`` für viele Zeilen; ``county_max`` je Zeile."""
    preds = model.tree_predictions(X)
    values = np.quantile(preds, levels, axis=0).T
    caps = np.asarray(county_max, dtype=float)
    clipped = np.vstack([
        clip_top_quantiles(v, levels, c, model.clip_multiplier) for v, c in zip(values, caps)
    ]) if len(values) else values
    return monotonize(clipped)


# ---------------------------------------------------
# Gradient Boosting je Kreis
# ---------------------------------------------------
@dataclass(frozen=True)
class GbdtConfig:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 2
    n_runs: int = 5
    subsample: float = 0.8
    seed: int = 0
    # feste Saat je Lauf statt abgeleiteter Saaten
    run_seeds: tuple | None = None

    def __post_init__(self):
        if not 0.0 <= self.learning_rate <= 1.0:
            raise ValueError("learning_rate muss in [0, 1] liegen")
        if self.n_runs < 1 or self.n_rounds < 0:
            raise ValueError("n_runs >= 1 und n_rounds >= 0 erforderlich")

    def seeds(self) -> tuple:
        if self.run_seeds is not None:
            return tuple(int(s) for s in self.run_seeds)
        children = np.random.SeedSequence(self.seed).spawn(self.n_runs)
        return tuple(int(child.generate_state(1)[0]) for child in children)


@dataclass
class BoostingRun:
    base_score: float
    trees: list
    loss_trace: list
    seed: int = 0

    def predict(self, X, learning_rate: float) -> np.ndarray:
        pred = np.full(len(X), self.base_score)
        for tree in self.trees:
            pred = pred + learning_rate * tree.predict(X)
        return pred


@dataclass
class GbdtModel:
    fips: str
    levels: tuple
    runs: dict
    learning_rate: float
    n_rounds: int
    constant: bool = False

    def base_score(self, level: float) -> float:
        return self.runs[level][0].base_score

    def predict(self, X) -> np.ndarray:
        """Form (n_rows, n_levels), Mittel über die Läufe, sortiert."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        columns = [
            np.mean([run.predict(X, self.learning_rate) for run in self.runs[level]], axis=0)
            for level in self.levels
        ]
        return monotonize(np.column_stack(columns))


def pinball_gradient(y, pred, q: float) -> np.ndarray:
    """Negativer Subgradient: q für y > Vorhersage, sonst q - 1."""
    return np.where(np.asarray(y) > np.asarray(pred), q, q - 1.0)


def boost_quantile(X, y, q: float, cfg: GbdtConfig, seed: int) -> BoostingRun:
    """
    Ein Boosting-Lauf: Baumstruktur aus dem Gradienten auf einer
    Zeilenstichprobe, Blattwerte als q-Quantil der Residuen aller Zeilen im
    Blatt. Der Trainingsverlust sinkt dadurch je Runde nicht.
    """
    rng = np.random.default_rng(seed)
    n = len(y)
    base = float(np.quantile(y, q, method="inverted_cdf"))
    pred = np.full(n, base)
    trace = [float(np.mean(pinball_loss(y, pred, q)))]
    tree_cfg = TreeConfig(max_depth=cfg.max_depth, min_samples_leaf=cfg.min_samples_leaf, loss="mse")
    n_sample = min(n, max(2 * cfg.min_samples_leaf, int(round(cfg.subsample * n))))
    trees = []
    for _ in range(cfg.n_rounds):
        grad = pinball_gradient(y, pred, q)
        rows = np.sort(rng.choice(n, size=n_sample, replace=False))
        tree = fit_tree(X[rows], grad[rows], tree_cfg, rng=rng)
        leaves = tree.apply(X)
        for leaf in np.unique(leaves):
            in_leaf = leaves == leaf
            tree.value[leaf] = np.quantile(y[in_leaf] - pred[in_leaf], q, method="inverted_cdf")
        pred = pred + cfg.learning_rate * tree.value[leaves]
        trees.append(tree)
        trace.append(float(np.mean(pinball_loss(y, pred, q))))
    return BoostingRun(base_score=base, trees=trees, loss_trace=trace, seed=seed)


def fit_county_gbdt(fips: str, X, y, levels: Sequence[float] = QUANTILE_LEVELS, cfg: GbdtConfig | None = None) -> GbdtModel:
    cfg = cfg or GbdtConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    levels = tuple(levels)
    constant = len(y) < 2 * cfg.min_samples_leaf
    if len(y) == 0:
        raise ValueError(f"{fips}: keine Trainingszeilen")
    if constant:
        logger.warning("%s: nur %d Zeilen, konstantes Quantilmodell", fips, len(y))
        runs = {
            q: [BoostingRun(float(np.quantile(y, q, method="inverted_cdf")), [], [])]
            for q in levels
        }
        return GbdtModel(fips, levels, runs, cfg.learning_rate, 0, constant=True)

    seeds = cfg.seeds()
    runs = {}
    for i, q in enumerate(levels):
        # je Niveau eigene Saaten, abgeleitet aus den Laufsaaten
        runs[q] = [boost_quantile(X, y, q, cfg, seed + i) for seed in seeds]
    return GbdtModel(fips, levels, runs, cfg.learning_rate, cfg.n_rounds)
