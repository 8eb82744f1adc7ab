"""
Kreis-Cluster aus (dm, dt)-Histogrammen der Tagestoten und K-Means.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .exceptions import IngestionError

logger = logging.getLogger(__name__)

# Halboffene Intervalle [lo, hi)
DM_EDGES = np.array([-20, -5, -2, -1, 0, 1, 2, 30, 100], dtype=float)
DT_EDGES = np.array([1, 2, 3, 5, 10, 20, 30, 60, 100], dtype=float)
POOL = 2
FEATURE_LEN = 16


@dataclass
class DmDtHistogram:
    grid: np.ndarray
    n_pairs: int = 0
    # Reihe kürzer als 2 Tage
    too_short: bool = False

    @property
    def total(self) -> float:
        return float(self.grid.sum())


@dataclass(frozen=True)
class ClusterFeature:
    fips: str
    vector: tuple

    def __post_init__(self):
        if len(self.vector) != FEATURE_LEN:
            raise ValueError(f"Merkmalsvektor braucht Länge {FEATURE_LEN}")


@dataclass
class ClusterAssignment:
    labels: dict
    centroids: np.ndarray
    inertia: float
    inertia_trace: list = field(default_factory=list)
    k: int = 6
    k_reduced: bool = False
    n_iter: int = 0


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 6
    min_cumulative_cases: float = 10
    max_iter: int = 300
    seed: int = 0


# ---------------------------------------------------
# Merkmale
# ---------------------------------------------------
def _bin_index(values, edges) -> np.ndarray:
    """Binindex je Wert, -1 außerhalb aller Bins."""
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.where((idx >= 0) & (idx < len(edges) - 1), idx, -1)


def dmdt_histogram(values) -> DmDtHistogram:
    """Zählt alle Paare i < j nach (v[j] - v[i], j - i); Paare außerhalb fallen weg."""
    values = np.asarray(values, dtype=float)
    grid = np.zeros((len(DM_EDGES) - 1, len(DT_EDGES) - 1))
    n = len(values)
    if n < 2:
        return DmDtHistogram(grid, 0, too_short=True)
    i, j = np.triu_indices(n, k=1)
    dm_idx = _bin_index(values[j] - values[i], DM_EDGES)
    dt_idx = _bin_index((j - i).astype(float), DT_EDGES)
    keep = (dm_idx >= 0) & (dt_idx >= 0)
    np.add.at(grid, (dm_idx[keep], dt_idx[keep]), 1.0)
    return DmDtHistogram(grid, n_pairs=len(i))


def pool_and_flatten(hist) -> np.ndarray:
    """Mittel über nicht überlappende 2x2-Blöcke, zeilenweise flach."""
    grid = hist.grid if isinstance(hist, DmDtHistogram) else np.asarray(hist, dtype=float)
    rows, cols = grid.shape
    if rows % POOL or cols % POOL:
        raise ValueError(f"Gitter {grid.shape} nicht durch {POOL} teilbar")
    pooled = grid.reshape(rows // POOL, POOL, cols // POOL, POOL).mean(axis=(1, 3))
    return pooled.ravel()


def clustering_series(series, min_cumulative_cases: float = 10) -> np.ndarray:
    """Tagestote ab dem ersten Tag mit mindestens ``min_cumulative_cases`` kumulativen Fällen."""
    reached = series.cumulative_cases >= min_cumulative_cases
    if not np.any(reached):
        return np.empty(0)
    return series.daily_deaths[int(np.argmax(reached)):]


def county_feature(series, min_cumulative_cases: float = 10) -> ClusterFeature:
    hist = dmdt_histogram(clustering_series(series, min_cumulative_cases))
    if hist.too_short:
        logger.debug("%s: Reihe zu kurz, Null-Histogramm", series.fips)
    grid = hist.grid / hist.n_pairs if hist.n_pairs else hist.grid
    return ClusterFeature(series.fips, tuple(float(v) for v in pool_and_flatten(grid)))


# ---------------------------------------------------
# K-Means
# ---------------------------------------------------
def _sq_distances(X, centroids) -> np.ndarray:
    return ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def kmeans_plusplus(X, k: int, rng) -> np.ndarray:
    n = len(X)
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(0, n)]
    for c in range(1, k):
        dist_sq = _sq_distances(X, centroids[:c]).min(axis=1)
        centroids[c] = X[rng.choice(n, p=dist_sq / dist_sq.sum())]
    return centroids


def kmeans(features: Sequence[ClusterFeature], k: int = 6, seed: int = 0, max_iter: int = 300) -> ClusterAssignment:
    """
    k-means++-Start, dann Lloyd bis die Zuordnung stabil ist oder
    ``max_iter`` erreicht. Leere Cluster behalten ihren Schwerpunkt.
    """
    if not features:
        raise ValueError("Keine Kreise zum Clustern")
    X = np.array([f.vector for f in features], dtype=float)
    n_distinct = len(np.unique(X, axis=0))
    k_eff = min(int(k), n_distinct)
    reduced = k_eff < k
    if reduced:
        logger.warning("Nur %d verschiedene Merkmalsvektoren, k von %d auf %d reduziert", n_distinct, k, k_eff)

    rng = np.random.default_rng(seed)
    centroids = kmeans_plusplus(X, k_eff, rng)
    labels = None
    trace = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        dist = _sq_distances(X, centroids)
        new_labels = np.argmin(dist, axis=1)
        trace.append(float(dist[np.arange(len(X)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k_eff):
            members = labels == c
            if np.any(members):
                centroids[c] = X[members].mean(axis=0)

    inertia = float(_sq_distances(X, centroids)[np.arange(len(X)), labels].sum())
    return ClusterAssignment(
        labels={f.fips: int(label) for f, label in zip(features, labels)},
        centroids=centroids,
        inertia=inertia,
        inertia_trace=trace,
        k=k_eff,
        k_reduced=reduced,
        n_iter=n_iter,
    )


def cluster_counties(series: Mapping, cfg: ClusterConfig | None = None) -> ClusterAssignment:
    cfg = cfg or ClusterConfig()
    features = [county_feature(series[fips], cfg.min_cumulative_cases) for fips in sorted(series)]
    assignment = kmeans(features, cfg.k, cfg.seed, cfg.max_iter)
    sizes = np.bincount(list(assignment.labels.values()), minlength=assignment.k)
    logger.info("K-Means: %d Kreise, Clustergrößen %s, Trägheit %.4g", len(features), sizes.tolist(), assignment.inertia)
    return assignment


def write_clusters(path, assignment: ClusterAssignment) -> Path:
    frame = pd.DataFrame(sorted(assignment.labels.items()), columns=["fips", "cluster_label"])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def write_centroids(path, assignment: ClusterAssignment) -> Path:
    frame = pd.DataFrame(assignment.centroids, columns=[f"c{i}" for i in range(FEATURE_LEN)])
    frame.insert(0, "cluster_label", range(len(frame)))
    path = Path(path)
    frame.to_csv(path, index=False, float_format="%.8g")
    return path


def read_clusters(path) -> dict[str, int]:
    try:
        frame = pd.read_csv(path, dtype={"fips": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise IngestionError(f"Clusterdatei {path} nicht lesbar: {exc}") from exc
    return {row.fips: int(row.cluster_label) for row in frame.itertuples(index=False)}
