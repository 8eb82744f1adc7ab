"""
Einheitlicher Modellvertrag: ``forecast(cutoff)`` liefert für jeden Kreis
mit Daten bis zum Stichtag neun Quantile je Tag cutoff+1 .. cutoff+L.
Mittelwertmodelle laufen dabei über den Negativ-Binomial-Umrechner.
"""
from __future__ import annotations

import logging
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Mapping

import numpy as np

from . import gp, neural, quantilegen, seirqd, trees
from .data import FeatureLayout, build_feature_rows, build_forecast_rows
from .metrics import QUANTILE_LEVELS, QuantileForecast

logger = logging.getLogger(__name__)

# Bevölkerung, falls für einen Kreis keine statischen Merkmale vorliegen
FALLBACK_POPULATION = 100_000.0


def model_seed(seed: int, name: str) -> int:
    """Stabile Saat je Modell, unabhängig von der Reihenfolge der Modelle."""
    return int(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]).generate_state(1)[0])


@dataclass
class ModelContext:
    series: Mapping
    static: Mapping
    clusters: Mapping
    layout: FeatureLayout
    forecast_len: int
    quantile_window: int = 14
    seed: int = 0


@dataclass
class ForecastModel:
    """Basisklasse; Unterklassen setzen ``name`` und ``_forecast``."""
    context: ModelContext
    options: Mapping = field(default_factory=dict)
    name = ""
    # Anpassung des letzten Stichtags, für Parameterdateien
    diagnostics: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return model_seed(self.context.seed, self.name)

    def history(self, cutoff: date) -> dict:
        out = {}
        for fips, s in sorted(self.context.series.items()):
            truncated = s.truncate(cutoff)
            if len(truncated) and truncated.end == cutoff:
                out[fips] = truncated
        return out

    def days(self, cutoff: date) -> list[date]:
        return [cutoff + timedelta(days=h) for h in range(1, self.context.forecast_len + 1)]

    def forecast(self, cutoff: date) -> list[QuantileForecast]:
        self.diagnostics.clear()
        forecasts = self._fill_horizons(cutoff, self._forecast(cutoff))
        logger.debug("%s @ %s: %d Prognosezellen", self.name, cutoff, len(forecasts))
        return forecasts

    def _forecast(self, cutoff: date) -> list[QuantileForecast]:
        raise NotImplementedError

    def _fill_horizons(self, cutoff: date, forecasts: list[QuantileForecast]) -> list[QuantileForecast]:
        """
        Jeder Kreis mit Daten bis zum Stichtag bekommt alle L Tage. Tage ohne
        Merkmalszeile (Historie kürzer als der größte Lag) erhalten Mittelwert 0.
        """
        covered = defaultdict(set)
        for f in forecasts:
            covered[f.fips].add(f.date)
        out, filled = list(forecasts), 0
        for fips, history in self.history(cutoff).items():
            for day in self.days(cutoff):
                if day in covered[fips]:
                    continue
                out.extend(quantilegen.meanforecast_to_quantiles(
                    [0.0], history, window=self.context.quantile_window, start=day,
                ))
                filled += 1
        if filled:
            logger.info("%s @ %s: %d Prognosezellen ohne Merkmale mit Mittelwert 0 ergänzt", self.name, cutoff, filled)
        out.sort(key=lambda f: (f.fips, f.date))
        return out

    def _from_means(self, history, means) -> list[QuantileForecast]:
        return quantilegen.meanforecast_to_quantiles(means, history, window=self.context.quantile_window)

    def _training_matrix(self, cutoff: date, layout: FeatureLayout | None = None, series=None):
        ctx = self.context
        layout = layout or ctx.layout
        rows = build_feature_rows(
            series or ctx.series, ctx.static, ctx.clusters, layout.lags, ctx.forecast_len,
            layout=layout, cutoff=cutoff,
        )
        X, y = layout.matrix(rows)
        keys = np.array([row.target_date.toordinal() for row in rows])
        return rows, X, y, keys

    def _forecast_matrix(self, cutoff: date, layout: FeatureLayout | None = None, series=None):
        ctx = self.context
        layout = layout or ctx.layout
        rows = build_forecast_rows(series or ctx.series, ctx.static, ctx.clusters, layout, cutoff)
        X, _ = layout.matrix(rows)
        return rows, X


def _group_by_county(rows, values) -> dict:
    grouped = defaultdict(list)
    for row, value in zip(rows, values):
        grouped[row.fips].append((row.target_date, value))
    out = {}
    for fips, items in grouped.items():
        items.sort(key=lambda item: item[0])
        out[fips] = (items[0][0], [v for _, v in items])
    return out


# ---------------------------------------------------
# Epidemiologische und GP-Modelle
# ---------------------------------------------------
class SeirQdForecaster(ForecastModel):
    name = "seirqd"

    def fit_config(self) -> seirqd.FitConfig:
        o = self.options
        return seirqd.FitConfig(
            weight_cases=float(o.get("weight_cases", 0.8)),
            weight_deaths=float(o.get("weight_deaths", 0.2)),
            severity_threshold=float(o.get("severity_threshold", 50.0)),
            max_iters=int(o.get("max_iters", 2000)),
            tolerance=float(o.get("tolerance", 1e-8)),
            restarts=int(o.get("restarts", 5)),
            seed=self.seed,
        )

    def population(self, fips: str) -> float:
        features = self.context.static.get(fips)
        population = features.population if features is not None else np.nan
        if not population > 0:
            logger.warning("%s: keine Bevölkerungszahl, verwende %g", fips, FALLBACK_POPULATION)
            return FALLBACK_POPULATION
        return population

    def _forecast(self, cutoff):
        cfg = self.fit_config()
        out, fits = [], []
        for fips, history in self.history(cutoff).items():
            try:
                fit = seirqd.fit(history, self.population(fips), cfg)
            except ValueError as exc:
                logger.info("%s: SEIR-QD nicht angepasst (%s), Mittelwert 0", fips, exc)
                means = np.zeros(self.context.forecast_len)
            else:
                fits.append(fit)
                means = seirqd.predict_mean_deaths(fit.params, fit.population, self.context.forecast_len, fit.end_state)
            out.extend(self._from_means(history, means))
        self.diagnostics[cutoff] = fits
        return out


class GpForecaster(ForecastModel):
    name = "gp"

    def _forecast(self, cutoff):
        cfg = gp.GpConfig(
            restarts=int(self.options.get("restarts", 3)),
            seed=self.seed,
            train_window=self.options.get("train_window"),
        )
        out, posteriors = [], []
        for fips, history in self.history(cutoff).items():
            try:
                posterior = gp.fit_county_gp(fips, history.daily_deaths, cfg)
            except ValueError as exc:
                logger.info("%s: GP nicht angepasst (%s), Mittelwert 0", fips, exc)
                means = np.zeros(self.context.forecast_len)
            else:
                posteriors.append(posterior)
                n = len(posterior.xs)
                means = gp.gp_predict_mean(posterior, np.arange(n, n + self.context.forecast_len, dtype=float))
            out.extend(self._from_means(history, means))
        self.diagnostics[cutoff] = posteriors
        return out


# ---------------------------------------------------
# Neuronale Netze
# ---------------------------------------------------
def _train_config(options: Mapping, seed: int, loss=None) -> neural.TrainConfig:
    return neural.TrainConfig(
        loss=loss or neural.Loss.mse(),
        learning_rate=float(options.get("learning_rate", 0.01)),
        batch_size=int(options.get("batch_size", 64)),
        max_epochs=int(options.get("max_epochs", 200)),
        early_stop_patience=int(options.get("early_stop_patience", 10)),
        early_stop_tolerance=float(options.get("early_stop_tolerance", 1e-4)),
        seed=seed,
        hidden_dims=tuple(options.get("hidden_dims", neural.DEFAULT_HIDDEN)),
        dropout_input=float(options.get("dropout_input", 0.1)),
        dropout_hidden=float(options.get("dropout_hidden", 0.2)),
    )


class MeanNetForecaster(ForecastModel):
    name = "nn"

    def _forecast(self, cutoff):
        _, X, y, keys = self._training_matrix(cutoff)
        cfg = _train_config(self.options, self.seed)
        grid = self.options.get("grid")
        if grid:
            cfg = neural.grid_search(X, y, grid, cfg, split_key=keys)
        net = neural.train(X, y, cfg, split_key=keys)
        self.diagnostics[cutoff] = net
        rows, X_new = self._forecast_matrix(cutoff)
        means = np.clip(net.predict(X_new)[:, 0], 0.0, None) if len(rows) else []
        histories = self.history(cutoff)
        out = []
        for fips, (start, county_means) in _group_by_county(rows, means).items():
            out.extend(quantilegen.meanforecast_to_quantiles(
                county_means, histories[fips], window=self.context.quantile_window, start=start,
            ))
        return out


class QuantileNetForecaster(ForecastModel):
    name = "qnn"

    def _forecast(self, cutoff):
        _, X, y, keys = self._training_matrix(cutoff)
        nets = neural.train_quantile_nets(X, y, _train_config(self.options, self.seed), split_key=keys)
        self.diagnostics[cutoff] = nets
        rows, X_new = self._forecast_matrix(cutoff)
        if not rows:
            return []
        values = nets.predict(X_new)
        return [QuantileForecast.from_raw(row.fips, row.target_date, v) for row, v in zip(rows, values)]


# ---------------------------------------------------
# Bäume
# ---------------------------------------------------
class ForestForecaster(ForecastModel):
    name = "forest"

    def forest_config(self) -> trees.ForestConfig:
        o = self.options
        return trees.ForestConfig(
            n_trees=int(o.get("n_trees", 200)),
            max_depth=int(o.get("max_depth", 12)),
            min_samples_leaf=int(o.get("min_samples_leaf", 3)),
            feature_fraction=float(o.get("feature_fraction", 1 / 3)),
            clip_multiplier=float(o.get("clip_multiplier", 3.0)),
            seed=self.seed,
        )

    def select_rows(self, cutoff, rows, X, y):
        return X, y

    def _forecast(self, cutoff):
        rows, X, y, _ = self._training_matrix(cutoff)
        X, y = self.select_rows(cutoff, rows, X, y)
        model = trees.fit_forest(X, y, self.forest_config())
        self.diagnostics[cutoff] = model
        new_rows, X_new = self._forecast_matrix(cutoff)
        if not new_rows:
            return []
        histories = self.history(cutoff)
        county_max = [float(np.max(histories[row.fips].daily_deaths)) for row in new_rows]
        values = trees.forest_quantile_matrix(model, X_new, county_max)
        return [QuantileForecast.from_raw(row.fips, row.target_date, v) for row, v in zip(new_rows, values)]


class MovingForestForecaster(ForestForecaster):
    """Gleicher Wald, nur auf den Zeilen der letzten ``window_days`` Tage vor dem Stichtag."""
    name = "forest_moving"

    def select_rows(self, cutoff, rows, X, y):
        window = int(self.options.get("window_days", 45))
        first = cutoff - timedelta(days=window - 1)
        keep = np.array([row.target_date >= first for row in rows], dtype=bool)
        return X[keep], y[keep]


class GbdtForecaster(ForecastModel):
    name = "gbdt"

    def gbdt_config(self) -> trees.GbdtConfig:
        o = self.options
        return trees.GbdtConfig(
            n_rounds=int(o.get("n_rounds", 100)),
            learning_rate=float(o.get("learning_rate", 0.1)),
            max_depth=int(o.get("max_depth", 3)),
            min_samples_leaf=int(o.get("min_samples_leaf", 2)),
            n_runs=int(o.get("n_runs", 5)),
            subsample=float(o.get("subsample", 0.8)),
            seed=self.seed,
        )

    def _forecast(self, cutoff):
        layout = self.context.layout.county_level()
        cfg = self.gbdt_config()
        out, models = [], []
        for fips, history in self.history(cutoff).items():
            county = {fips: self.context.series[fips]}
            _, X, y, _ = self._training_matrix(cutoff, layout, county)
            new_rows, X_new = self._forecast_matrix(cutoff, layout, county)
            if len(y) == 0 or not new_rows:
                continue
            model = trees.fit_county_gbdt(fips, X, y, QUANTILE_LEVELS, cfg)
            models.append(model)
            values = model.predict(X_new)
            out.extend(QuantileForecast.from_raw(row.fips, row.target_date, v) for row, v in zip(new_rows, values))
        self.diagnostics[cutoff] = models
        return out


MODEL_CLASSES = {
    cls.name: cls
    for cls in (
        SeirQdForecaster,
        GpForecaster,
        MeanNetForecaster,
        QuantileNetForecaster,
        ForestForecaster,
        MovingForestForecaster,
        GbdtForecaster,
    )
}
MODEL_NAMES = tuple(MODEL_CLASSES)


def build_registry(context: ModelContext, model_options: Mapping[str, Mapping]) -> dict[str, ForecastModel]:
    """Aktivierte Modelle in fester Reihenfolge (``MODEL_NAMES``)."""
    registry = {}
    for name in MODEL_NAMES:
        options = dict(model_options.get(name, {}))
        if not options.get("enabled", True):
            continue
        registry[name] = MODEL_CLASSES[name](context=context, options=options)
    return registry
