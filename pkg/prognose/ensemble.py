"""
Ensemble: ein flaches Netz mit neun Ausgängen kombiniert die Quantilprognosen
aller Einzelmodelle plus One-Hot-Seitenmerkmale und wird direkt auf dem
Pinball-Verlust trainiert.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from . import serialization
from .data import WEEKDAYS
from .exceptions import CoverageError, DataError, LayoutError, PrognoseError
from .metrics import QUANTILE_COLUMNS, QUANTILE_LEVELS, QuantileForecast
from .neural import DenseNet, Loss, TrainConfig, train

logger = logging.getLogger(__name__)

LAYOUT_VERSION = "1.0"
# Fehler eines Einzelmodells an einem Stichtag, die nur dessen Zeilen kosten
MODEL_FAILURES = (PrognoseError, ValueError, FloatingPointError, np.linalg.LinAlgError)


# ---------------------------------------------------
# Datentypen
# ---------------------------------------------------
@dataclass(frozen=True)
class EnsembleLayout:
    model_names: tuple
    states: tuple
    n_clusters: int
    forecast_len: int
    version: str = LAYOUT_VERSION

    @property
    def width(self) -> int:
        n_levels = len(QUANTILE_LEVELS)
        return n_levels * len(self.model_names) + len(self.states) + self.n_clusters + self.forecast_len + 7

    @property
    def columns(self) -> list[str]:
        cols = [f"{name}_{col}" for name in self.model_names for col in QUANTILE_COLUMNS]
        cols += [f"state_{s}" for s in self.states]
        cols += [f"cluster_{i}" for i in range(self.n_clusters)]
        cols += [f"horizon_{h}" for h in range(1, self.forecast_len + 1)]
        cols += [f"weekday_{d}" for d in WEEKDAYS]
        return cols

    def to_dict(self) -> dict:
        return {**asdict(self), "model_names": list(self.model_names), "states": list(self.states)}

    @classmethod
    def from_dict(cls, payload: Mapping) -> "EnsembleLayout":
        return cls(
            model_names=tuple(payload["model_names"]),
            states=tuple(payload["states"]),
            n_clusters=int(payload["n_clusters"]),
            forecast_len=int(payload["forecast_len"]),
            version=str(payload.get("version", LAYOUT_VERSION)),
        )

    def encode(self, row: "AggregationRow") -> np.ndarray:
        parts = [np.asarray(row.predictions[name], dtype=float) for name in self.model_names]
        state = np.zeros(len(self.states))
        state[self.states.index(row.state)] = 1.0
        cluster = np.zeros(self.n_clusters)
        cluster[row.cluster] = 1.0
        horizon = np.zeros(self.forecast_len)
        horizon[row.days_into_forecast - 1] = 1.0
        weekday = np.zeros(7)
        weekday[row.target_date.weekday()] = 1.0
        return np.concatenate([*parts, state, cluster, horizon, weekday])


@dataclass(frozen=True)
class AggregationRow:
    fips: str
    cutoff: date
    target_date: date
    predictions: Mapping
    state: str
    cluster: int
    days_into_forecast: int
    truth: float | None = None


@dataclass
class CoverageReport:
    expected: int = 0
    failures: list = field(default_factory=list)
    rows_kept: int = 0
    rows_dropped: int = 0

    @property
    def coverage(self) -> float:
        if self.expected == 0:
            return 0.0
        return 1.0 - len(self.failures) / self.expected

    def summary(self) -> str:
        return (
            f"Abdeckung {self.coverage:.1%} ({self.expected - len(self.failures)}/{self.expected} "
            f"Modell-Stichtage), {self.rows_kept} Zeilen, {self.rows_dropped} verworfen"
        )


@dataclass
class AggregationSet:
    rows: list
    layout: EnsembleLayout
    coverage: CoverageReport = field(default_factory=CoverageReport)

    def __len__(self) -> int:
        return len(self.rows)

    def matrix(self):
        """Merkmale, Wahrheit und Stichtag-Ordinal je Zeile."""
        if not self.rows:
            return np.empty((0, self.layout.width)), np.empty(0), np.empty(0, dtype=int)
        X = np.vstack([self.layout.encode(row) for row in self.rows])
        y = np.array([row.truth for row in self.rows], dtype=float)
        keys = np.array([row.cutoff.toordinal() for row in self.rows])
        return X, y, keys


@dataclass
class EnsembleNet:
    net: DenseNet
    layout: EnsembleLayout

    def to_dict(self) -> dict:
        return {"layout": self.layout.to_dict(), "net": self.net.to_dict()}

    @classmethod
    def from_dict(cls, payload: Mapping) -> "EnsembleNet":
        return cls(net=DenseNet.from_dict(payload["net"]), layout=EnsembleLayout.from_dict(payload["layout"]))


@dataclass(frozen=True)
class EnsembleConfig:
    hidden_dims: tuple = (32, 16)
    dropout: float = 0.1
    learning_rate: float = 0.005
    batch_size: int = 64
    max_epochs: int = 300
    early_stop_patience: int = 20
    early_stop_tolerance: float = 1e-5
    validation_fraction: float = 0.2
    seed: int = 0

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            loss=Loss.pinball(QUANTILE_LEVELS),
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            early_stop_patience=self.early_stop_patience,
            early_stop_tolerance=self.early_stop_tolerance,
            seed=self.seed,
            hidden_dims=tuple(self.hidden_dims),
            dropout_input=self.dropout,
            dropout_hidden=self.dropout,
            validation_fraction=self.validation_fraction,
        )


# ---------------------------------------------------
# Aggregationsmenge
# ---------------------------------------------------
def aggregation_cutoffs(forecast_start: date, forecast_len: int, days: int = 28) -> list[date]:
    """
    ``days`` aufeinanderfolgende Stichtage, der letzte so, dass sein
    Prognosefenster vor ``forecast_start`` endet.
    """
    last = forecast_start - timedelta(days=forecast_len + 1)
    return [last - timedelta(days=offset) for offset in reversed(range(days))]


def _assemble_rows(by_model, cutoff, forecast_len, series, clusters, layout, with_truth):
    """Zeilen je (Kreis, Tag), für die alle Modelle eine Prognose haben."""
    cells = {}
    for name in layout.model_names:
        for forecast in by_model.get(name, ()):
            horizon = (forecast.date - cutoff).days
            if 1 <= horizon <= forecast_len:
                cells.setdefault((forecast.fips, forecast.date), {})[name] = forecast.q_values
    rows, dropped = [], 0
    for (fips, day), preds in sorted(cells.items()):
        if len(preds) < len(layout.model_names) or fips not in series or fips not in clusters:
            dropped += 1
            continue
        s = series[fips]
        truth = None
        if with_truth:
            if s.index_of(day) is None:
                dropped += 1
                continue
            truth = s.value_at(day)
        rows.append(AggregationRow(
            fips=fips,
            cutoff=cutoff,
            target_date=day,
            predictions=preds,
            state=s.state,
            cluster=int(clusters[fips]),
            days_into_forecast=(day - cutoff).days,
            truth=truth,
        ))
    return rows, dropped


def make_layout(model_names: Iterable[str], series: Mapping, n_clusters: int, forecast_len: int) -> EnsembleLayout:
    return EnsembleLayout(
        model_names=tuple(model_names),
        states=tuple(sorted({s.state for s in series.values()})),
        n_clusters=int(n_clusters),
        forecast_len=int(forecast_len),
    )


def build_aggregation_set(
    models: Mapping[str, Callable[[date], list]],
    truth: Mapping,
    cutoffs: Sequence[date],
    forecast_len: int,
    clusters: Mapping[str, int],
    n_clusters: int = 6,
    min_coverage: float = 0.8,
    layout: EnsembleLayout | None = None,
) -> AggregationSet:
    """
    Ruft jedes Modell an jedem Stichtag auf und stapelt die Prognosen mit
    der Wahrheit. Scheitert ein Modell an einem Stichtag, fallen dessen
    Zellen weg; fehlt danach ein Modell in einer Zelle, fällt die Zeile weg.
    """
    layout = layout or make_layout(models, truth, n_clusters, forecast_len)
    report = CoverageReport(expected=len(models) * len(cutoffs))
    rows = []
    for cutoff in cutoffs:
        by_model = {}
        for name in layout.model_names:
            try:
                by_model[name] = models[name](cutoff)
            except MODEL_FAILURES as exc:
                logger.warning("Modell %s am Stichtag %s gescheitert: %s", name, cutoff, exc)
                report.failures.append((name, cutoff, str(exc)))
        kept, dropped = _assemble_rows(by_model, cutoff, forecast_len, truth, clusters, layout, True)
        rows.extend(kept)
        report.rows_dropped += dropped
    report.rows_kept = len(rows)
    logger.info("Aggregationsmenge: %s", report.summary())
    if report.coverage < min_coverage:
        raise CoverageError(report.summary())
    if not rows:
        raise DataError("Aggregationsmenge ist leer")
    return AggregationSet(rows=rows, layout=layout, coverage=report)


def prediction_rows(by_model: Mapping[str, list], cutoff: date, series: Mapping, clusters: Mapping, layout: EnsembleLayout) -> list:
    rows, dropped = _assemble_rows(by_model, cutoff, layout.forecast_len, series, clusters, layout, False)
    if dropped:
        logger.warning("%d Prognosezellen ohne vollständige Modelleingaben verworfen", dropped)
    return rows


# ---------------------------------------------------
# Training und Vorhersage
# ---------------------------------------------------
def train_ensemble(aggset: AggregationSet, cfg: EnsembleConfig | None = None) -> EnsembleNet:
    cfg = cfg or EnsembleConfig()
    if not len(aggset):
        raise ValueError("Leere Aggregationsmenge")
    X, y, keys = aggset.matrix()
    net = train(X, y, cfg.train_config(), split_key=keys, output_dim=len(QUANTILE_LEVELS))
    logger.info(
        "Ensemble trainiert: %d Zeilen, beste Epoche %d, Validierungsverlust %.4g",
        len(y), net.history["best_epoch"], min(net.history["val_loss"]),
    )
    return EnsembleNet(net=net, layout=aggset.layout)


def ensemble_predict(ensemble: EnsembleNet, rows: Sequence[AggregationRow], layout: EnsembleLayout) -> list[QuantileForecast]:
    if layout != ensemble.layout:
        raise LayoutError(
            f"Merkmalslayout passt nicht zum trainierten Ensemble: {layout} != {ensemble.layout}"
        )
    if not rows:
        return []
    X = np.vstack([layout.encode(row) for row in rows])
    raw = ensemble.net.predict(X)
    return [QuantileForecast.from_raw(row.fips, row.target_date, values) for row, values in zip(rows, raw)]


# ---------------------------------------------------
# Dateien
# ---------------------------------------------------
def write_aggregation_set(path, aggset: AggregationSet) -> Path:
    """CSV; erste Zeile ist ein Kommentar mit dem Layout als JSON."""
    layout = aggset.layout
    records = []
    for row in aggset.rows:
        record = {
            "fips": row.fips,
            "cutoff": row.cutoff.isoformat(),
            "target_date": row.target_date.isoformat(),
            "state": row.state,
            "cluster": row.cluster,
            "days_into_forecast": row.days_into_forecast,
            "truth": row.truth,
        }
        for name in layout.model_names:
            for col, value in zip(QUANTILE_COLUMNS, row.predictions[name]):
                record[f"{name}_{col}"] = value
        records.append(record)
    frame = pd.DataFrame(records)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        handle.write("# layout: " + json.dumps(layout.to_dict(), sort_keys=True) + "\n")
        frame.to_csv(handle, index=False, float_format="%.6f")
    return path


def read_aggregation_set(path) -> AggregationSet:
    path = Path(path)
    with path.open(encoding="utf-8") as handle:
        header = handle.readline()
    if not header.startswith("# layout: "):
        raise LayoutError(f"{path}: Layout-Kopfzeile fehlt")
    layout = EnsembleLayout.from_dict(json.loads(header[len("# layout: "):]))
    serialization.check_version(layout.version, LAYOUT_VERSION, what=f"Layout {path}")
    frame = pd.read_csv(path, skiprows=1, dtype={"fips": str, "state": str})
    frame["state"] = frame["state"].fillna("")
    rows = []
    for record in frame.to_dict(orient="records"):
        preds = {
            name: tuple(float(record[f"{name}_{col}"]) for col in QUANTILE_COLUMNS)
            for name in layout.model_names
        }
        rows.append(AggregationRow(
            fips=record["fips"],
            cutoff=date.fromisoformat(record["cutoff"]),
            target_date=date.fromisoformat(record["target_date"]),
            predictions=preds,
            state=record["state"],
            cluster=int(record["cluster"]),
            days_into_forecast=int(record["days_into_forecast"]),
            truth=float(record["truth"]),
        ))
    return AggregationSet(rows=rows, layout=layout)


def write_ensemble(path, ensemble: EnsembleNet) -> Path:
    return serialization.dump(path, "ensemble", ensemble.to_dict())


def read_ensemble(path) -> EnsembleNet:
    payload = serialization.load(path, "ensemble")
    layout = EnsembleLayout.from_dict(payload["layout"])
    serialization.check_version(layout.version, LAYOUT_VERSION, what="Ensemble-Layout")
    return EnsembleNet.from_dict(payload)
