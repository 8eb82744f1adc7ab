"""
Ablauf eines Prognoselaufs: Einlesen, Bereinigen, Clustern, Einzelmodelle,
Aggregationsmenge, Ensemble, Vorhersage, Auswertung, Plotdaten.

Jede Stufe schreibt ihre Artefakte unter das Ausgabeverzeichnis und kann
einzeln (Management-Befehl) oder im Ganzen (``Pipeline.run``) laufen.
Einzeln gestartete Stufen lesen fehlende Vorstufen von der Platte.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import platform
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import date, timedelta
from importlib import metadata
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from django.conf import settings

from . import clustering, data, ensemble, gp, metrics, seirqd
from .exceptions import ConfigError, DataError, PrognoseError, StageError
from .metrics import QUANTILE_COLUMNS, QuantileForecast
from .registry import MODEL_NAMES, ModelContext, build_registry, model_seed

logger = logging.getLogger(__name__)

CONFIG_SCHEMA_DOC = """
Lauf-Konfiguration (JSON). Nicht angegebene Schlüssel kommen aus
settings.PROGNOSE, Objekte werden schlüsselweise zusammengeführt.

  config_version     "1.x"
  data               {"ground_truth": Pfad, "static": Pfad, "mobility": Pfad}
                     relative Pfade gelten relativ zur Konfigurationsdatei
  periods            [{"label": "period1", "start": "YYYY-MM-DD"}, ...]
  forecast_start     Kurzform für einen einzigen Zeitraum "period1"
  forecast_len       Tage je Prognose (>= 1)
  lags               Liste von Lags in Tagen, jeder >= forecast_len + 1
  seed               Master-Saat
  output_dir         Ausgabeverzeichnis
  aggregation_days   Zahl der Stichtage der Aggregationsmenge
  min_coverage       Mindestabdeckung (Modell, Stichtag) der Aggregationsmenge
  quantile_window    Fenster (Tage) für die Dispersionsschätzung
  plot_history_days  Historientage in Plotdateien
  dump               {"dump_abs_min", "dump_ratio", "trailing_days"}
  clustering         {"k", "min_cumulative_cases", "max_iter"}
  models             {<name>: {"enabled": bool, ...}} mit name aus
                     seirqd, gp, nn, qnn, forest, forest_moving, gbdt
  ensemble           {"hidden_dims", "dropout", "learning_rate", ...}
"""

PATH_KEYS = ("ground_truth", "static", "mobility")
PACKAGES = ("numpy", "pandas", "scipy", "Django")


# ---------------------------------------------------
# Konfiguration
# ---------------------------------------------------
def deep_merge(base: dict, override: Mapping) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


@dataclass(frozen=True)
class Period:
    label: str
    start: date
    forecast_len: int

    @property
    def cutoff(self) -> date:
        return self.start - timedelta(days=1)

    @property
    def end(self) -> date:
        return self.start + timedelta(days=self.forecast_len - 1)

    @property
    def days(self) -> list[date]:
        return metrics.period_days(self.start, self.end)


@dataclass(frozen=True)
class RunConfig:
    values: dict
    source: Path | None = None

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    @property
    def forecast_len(self) -> int:
        return int(self.values["forecast_len"])

    @property
    def lags(self) -> tuple:
        return tuple(self.values["lags"])

    @property
    def output_dir(self) -> Path:
        return Path(self.values["output_dir"])

    @property
    def periods(self) -> list[Period]:
        return [
            Period(p["label"], date.fromisoformat(p["start"]), self.forecast_len)
            for p in self.values["periods"]
        ]

    def data_path(self, key: str) -> Path | None:
        value = self.values.get("data", {}).get(key)
        return Path(value) if value else None

    @property
    def model_options(self) -> dict:
        return self.values.get("models", {})

    def dump_config(self) -> data.DumpConfig:
        return data.DumpConfig.from_mapping(self.values.get("dump"))

    def cluster_config(self) -> clustering.ClusterConfig:
        c = self.values.get("clustering", {})
        return clustering.ClusterConfig(
            k=int(c.get("k", 6)),
            min_cumulative_cases=float(c.get("min_cumulative_cases", 10)),
            max_iter=int(c.get("max_iter", 300)),
            seed=model_seed(self.seed, "clustering"),
        )

    def ensemble_config(self) -> ensemble.EnsembleConfig:
        e = self.values.get("ensemble", {})
        return ensemble.EnsembleConfig(
            hidden_dims=tuple(e.get("hidden_dims", (32, 16))),
            dropout=float(e.get("dropout", 0.1)),
            learning_rate=float(e.get("learning_rate", 0.005)),
            batch_size=int(e.get("batch_size", 64)),
            max_epochs=int(e.get("max_epochs", 300)),
            early_stop_patience=int(e.get("early_stop_patience", 20)),
            early_stop_tolerance=float(e.get("early_stop_tolerance", 1e-5)),
            validation_fraction=float(e.get("validation_fraction", 0.2)),
            seed=model_seed(self.seed, "ensemble"),
        )

    def canonical_json(self) -> str:
        return json.dumps(self.values, sort_keys=True, separators=(",", ":"), default=str)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def _form_data(values: Mapping) -> dict:
    flat = {key: values.get(key) for key in (
        "config_version", "seed", "forecast_len", "lags", "periods", "aggregation_days",
        "min_coverage", "quantile_window", "plot_history_days", "mobility_default",
        "output_dir", "models", "ensemble", "dump", "clustering",
    )}
    for key in PATH_KEYS:
        flat[key] = values.get("data", {}).get(key) or ""
    return flat


def load_config(path=None, overrides: Mapping | None = None) -> RunConfig:
    """
    Standardwerte aus ``settings.PROGNOSE``, darüber die JSON-Datei, darüber
    ``overrides`` (Kommandozeile). Ergebnis wird über ``RunConfigForm`` geprüft.
    """
    from .forms import RunConfigForm

    values = copy.deepcopy(settings.PROGNOSE)
    source = None
    if path is not None:
        source = Path(path).resolve()
        try:
            loaded = json.loads(source.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"Konfigurationsdatei {path} nicht lesbar: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Konfigurationsdatei {path} ist kein gültiges JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"Konfigurationsdatei {path}: Objekt auf oberster Ebene erwartet")
        values = deep_merge(values, loaded)
    for key, value in (overrides or {}).items():
        if value is not None:
            values = deep_merge(values, {key: value})

    if "forecast_start" in values and not values.get("periods"):
        values["periods"] = [{"label": "period1", "start": values.pop("forecast_start")}]
    values.pop("forecast_start", None)

    base_dir = source.parent if source else Path.cwd()
    data_paths = dict(values.get("data") or {})
    for key in PATH_KEYS:
        if data_paths.get(key):
            data_paths[key] = str((base_dir / data_paths[key]).resolve())
    values["data"] = data_paths
    values["output_dir"] = str((base_dir / values["output_dir"]).resolve())

    form = RunConfigForm(data=_form_data(values))
    if not form.is_valid():
        raise ConfigError(f"Ungültige Konfiguration: {form.error_summary()}")
    values["lags"] = form.cleaned_data["lags"]
    values["periods"] = form.cleaned_data["periods"]
    return RunConfig(values=values, source=source)


# ---------------------------------------------------
# Hilfsfunktionen
# ---------------------------------------------------
@contextmanager
def stage(name: str):
    """Protokolliert Beginn/Ende und hängt den Stufennamen an Fehler."""
    logger.info("Stufe %s beginnt", name)
    try:
        yield
    except StageError:
        raise
    except (PrognoseError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.error("Stufe %s fehlgeschlagen: %s", name, exc)
        raise StageError(name, exc) from exc
    logger.info("Stufe %s beendet", name)


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def package_versions() -> dict:
    versions = {"python": platform.python_version(), "prognose": getattr(settings, "APP_VERSION", "1.0")}
    for package in PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unbekannt"
    return versions


def emit_plotdata(
    forecasts: Iterable[QuantileForecast],
    truth: Mapping,
    fips_list: Sequence[str] | None,
    out_dir,
    history_days: int = 10,
) -> list[Path]:
    """
    Je Kreis eine CSV mit ``history_days`` Tagen Wahrheit vor der Prognose
    und den Prognosetagen mit allen Quantilen. Unbekannte Wahrheit bleibt leer.
    """
    by_county = {}
    for f in forecasts:
        by_county.setdefault(f.fips, []).append(f)
    wanted = sorted(by_county) if fips_list is None else list(fips_list)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for fips in wanted:
        county = sorted(by_county.get(fips, []), key=lambda f: f.date)
        if not county:
            logger.warning("Plotdaten: keine Prognose für Kreis %s, übersprungen", fips)
            continue
        series = truth.get(fips)
        first = county[0].date
        rows = []
        for offset in range(history_days, 0, -1):
            day = first - timedelta(days=offset)
            value = series.value_at(day, default=np.nan) if series is not None else np.nan
            rows.append({"date": day.isoformat(), "kind": "history", "truth": value})
        for f in county:
            known = series is not None and series.index_of(f.date) is not None
            row = {"date": f.date.isoformat(), "kind": "forecast", "truth": series.value_at(f.date) if known else np.nan}
            row.update(zip(QUANTILE_COLUMNS, f.q_values))
            rows.append(row)
        frame = pd.DataFrame(rows, columns=["date", "kind", "truth", *QUANTILE_COLUMNS])
        path = out_dir / f"{fips}.csv"
        frame.to_csv(path, index=False, float_format="%.6f", na_rep="")
        paths.append(path)
    return paths


# ---------------------------------------------------
# Ablauf
# ---------------------------------------------------
@dataclass
class RunResult:
    reports: dict = field(default_factory=dict)
    forecasts: dict = field(default_factory=dict)
    manifest: Path | None = None
    coverage: dict = field(default_factory=dict)


class Pipeline:
    def __init__(self, config: RunConfig):
        self.config = config
        self.out = config.output_dir
        self._raw = None
        self._cleaned = None
        self._static = None
        self._clusters = None
        self._training = {}
        self._forecasts = {}
        self._aggsets = {}
        self._ensembles = {}

    # --- Pfade ---
    def path(self, *parts) -> Path:
        return self.out.joinpath(*parts)

    def period_path(self, period: Period, *parts) -> Path:
        return self.path(period.label, *parts)

    def period(self, label: str | None = None) -> Period:
        periods = self.config.periods
        if label is None:
            return periods[0]
        for p in periods:
            if p.label == label:
                return p
        raise ConfigError(f"Zeitraum '{label}' nicht konfiguriert ({', '.join(p.label for p in periods)})")

    # --- Eingaben ---
    def ingest(self) -> dict:
        with stage("ingest"):
            path = self.config.data_path("ground_truth")
            series = data.load_ground_truth(path)
            if not series:
                raise DataError(f"Keine Kreise in {path}")
            mobility_path = self.config.data_path("mobility")
            if mobility_path:
                series = data.attach_mobility(series, data.load_mobility(mobility_path))
            data.write_cleaned(self.path("ingested.csv"), series)
            data.write_counties(self.path("counties.csv"), series)
            self._raw = series
        return series

    @property
    def raw(self) -> dict:
        if self._raw is None:
            if self.path("ingested.csv").exists():
                self._raw = data.read_cleaned(self.path("ingested.csv"), data.read_counties(self.path("counties.csv")))
            else:
                self.ingest()
        return self._raw

    @property
    def static(self) -> dict:
        if self._static is None:
            path = self.config.data_path("static")
            self._static = data.load_static_features(path, self.config.values.get("static_columns")) if path else {}
        return self._static

    def clean(self) -> dict:
        with stage("clean"):
            cleaned = data.clean_all(self.raw, self.config.dump_config(), self.config.values["mobility_default"])
            data.write_cleaned(self.path("cleaned.csv"), cleaned)
            self._cleaned = cleaned
        return cleaned

    @property
    def cleaned(self) -> dict:
        """Bereinigte Gesamtreihen; dienen als Wahrheit der Auswertung."""
        if self._cleaned is None:
            if self.path("cleaned.csv").exists():
                self._cleaned = data.read_cleaned(self.path("cleaned.csv"), data.read_counties(self.path("counties.csv")))
            else:
                self.clean()
        return self._cleaned

    def series_at(self, cutoff: date, cache: bool = True) -> dict:
        """Rohdaten bis ``cutoff``, erst danach bereinigt (keine Nachmeldungen aus der Zukunft)."""
        if cutoff in self._training:
            return self._training[cutoff]
        truncated = {
            fips: s.truncate(cutoff) for fips, s in self.raw.items()
            if len(s) and s.start <= cutoff
        }
        cleaned = data.clean_all(truncated, self.config.dump_config(), self.config.values["mobility_default"])
        if cache:
            self._training[cutoff] = cleaned
        return cleaned

    def training_series(self, period: Period) -> dict:
        return self.series_at(period.cutoff)

    # --- Clustering ---
    def cluster(self) -> dict:
        with stage("cluster"):
            first = min(self.config.periods, key=lambda p: p.start)
            assignment = clustering.cluster_counties(self.training_series(first), self.config.cluster_config())
            clustering.write_clusters(self.path("clusters.csv"), assignment)
            clustering.write_centroids(self.path("centroids.csv"), assignment)
            self._clusters = assignment.labels
        return self._clusters

    @property
    def clusters(self) -> dict:
        if self._clusters is None:
            if self.path("clusters.csv").exists():
                self._clusters = clustering.read_clusters(self.path("clusters.csv"))
            else:
                self.cluster()
        return self._clusters

    # --- Modelle ---
    def context_at(self, cutoff: date, states: Sequence[str] | None = None, cache: bool = True) -> ModelContext:
        series = self.series_at(cutoff, cache)
        layout = data.make_layout(
            series, self.config.lags, self.config.forecast_len,
            n_clusters=self.config.cluster_config().k,
            static_names=self.config.values.get("static_columns", ()),
            states=states,
        )
        return ModelContext(
            series=series,
            static=self.static,
            clusters=self.clusters,
            layout=layout,
            forecast_len=self.config.forecast_len,
            quantile_window=int(self.config.values["quantile_window"]),
            seed=self.config.seed,
        )

    def context(self, period: Period) -> ModelContext:
        return self.context_at(period.cutoff)

    def registry(self, period: Period, names: Sequence[str] | None = None, context: ModelContext | None = None) -> dict:
        registry = build_registry(context or self.context(period), self.config.model_options)
        if names:
            unknown = sorted(set(names) - set(MODEL_NAMES))
            if unknown:
                raise ConfigError(f"Unbekannte Modelle: {', '.join(unknown)}")
            registry = {name: model for name, model in registry.items() if name in names}
        if not registry:
            raise ConfigError("Kein aktives Modell ausgewählt")
        return registry

    def fit(self, period: Period, names: Sequence[str] | None = None) -> dict:
        """Einzelmodelle am Stichtag vor dem Prognosezeitraum."""
        forecasts = {}
        for name, model in self.registry(period, names).items():
            with stage(f"fit:{name}"):
                forecasts[name] = model.forecast(period.cutoff)
                metrics.write_forecasts(self.period_path(period, "forecasts", f"{name}.csv"), forecasts[name])
                self._write_diagnostics(period, name, model.diagnostics.get(period.cutoff))
        self._forecasts.setdefault(period.label, {}).update(forecasts)
        return forecasts

    def _write_diagnostics(self, period: Period, name: str, fitted) -> None:
        if fitted is None:
            return
        if name == "seirqd":
            seirqd.write_params(self.period_path(period, "seirqd_params.csv"), fitted)
        elif name == "gp":
            gp.write_hyperparams(self.period_path(period, "gp_hyperparams.csv"), fitted)
        elif name in ("forest", "forest_moving"):
            columns = self.context(period).layout.columns
            frame = pd.DataFrame({"feature": columns, "importance": fitted.feature_importances()})
            frame = frame.sort_values(["importance", "feature"], ascending=[False, True])
            frame.to_csv(self.period_path(period, f"{name}_importance.csv"), index=False, float_format="%.8f")

    def model_forecasts(self, period: Period) -> dict:
        cached = self._forecasts.get(period.label)
        if cached:
            return cached
        directory = self.period_path(period, "forecasts")
        found = {
            name: metrics.read_forecasts(directory / f"{name}.csv")
            for name in MODEL_NAMES if (directory / f"{name}.csv").exists()
        }
        if not found:
            return self.fit(period)
        self._forecasts[period.label] = found
        return found

    # --- Ensemble ---
    def aggregate(self, period: Period) -> ensemble.AggregationSet:
        with stage("aggregate"):
            names = list(self.registry(period))
            series = self.training_series(period)
            states = sorted({s.state for s in series.values()})
            cutoffs = ensemble.aggregation_cutoffs(
                period.start, self.config.forecast_len, int(self.config.values["aggregation_days"]),
            )
            # Bereinigung je Stichtag; spätere Nachmeldungen bleiben unsichtbar
            registries = {}

            def forecaster(name):
                def forecast(cutoff):
                    if cutoff not in registries:
                        registries.clear()
                        context = self.context_at(cutoff, states, cache=False)
                        registries[cutoff] = self.registry(period, names, context)
                    return registries[cutoff][name].forecast(cutoff)
                return forecast

            aggset = ensemble.build_aggregation_set(
                {name: forecaster(name) for name in names},
                series,
                cutoffs,
                self.config.forecast_len,
                self.clusters,
                n_clusters=self.config.cluster_config().k,
                min_coverage=float(self.config.values["min_coverage"]),
            )
            ensemble.write_aggregation_set(self.period_path(period, "aggregation_set.csv"), aggset)
            self._aggsets[period.label] = aggset
        return aggset

    def train_ensemble(self, period: Period) -> ensemble.EnsembleNet:
        aggset = self._aggsets.get(period.label)
        if aggset is None:
            path = self.period_path(period, "aggregation_set.csv")
            aggset = ensemble.read_aggregation_set(path) if path.exists() else self.aggregate(period)
        with stage("ensemble"):
            net = ensemble.train_ensemble(aggset, self.config.ensemble_config())
            ensemble.write_ensemble(self.period_path(period, "ensemble.json"), net)
            self._ensembles[period.label] = net
        return net

    def predict(self, period: Period) -> list[QuantileForecast]:
        net = self._ensembles.get(period.label)
        if net is None:
            path = self.period_path(period, "ensemble.json")
            net = ensemble.read_ensemble(path) if path.exists() else self.train_ensemble(period)
        by_model = self.model_forecasts(period)
        with stage("predict"):
            series = self.training_series(period)
            missing = [name for name in net.layout.model_names if name not in by_model]
            if missing:
                raise DataError(f"Ensemble braucht Prognosen von {', '.join(missing)} für {period.label}")
            layout = ensemble.make_layout(
                net.layout.model_names, series, self.config.cluster_config().k, self.config.forecast_len,
            )
            rows = ensemble.prediction_rows(by_model, period.cutoff, series, self.clusters, layout)
            forecasts = ensemble.ensemble_predict(net, rows, layout)
            metrics.write_forecasts(self.period_path(period, "forecasts", "ensemble.csv"), forecasts)
        self._forecasts.setdefault(period.label, {})["ensemble"] = forecasts
        return forecasts

    # --- Auswertung ---
    def evaluate(self) -> dict:
        """Pinball/RMSE je Modell und Zeitraum plus Null-Referenz."""
        with stage("evaluate"):
            truth = self.cleaned
            reports = {}
            for period in self.config.periods:
                by_model = dict(self.model_forecasts(period))
                ensemble_path = self.period_path(period, "forecasts", "ensemble.csv")
                if "ensemble" not in by_model and ensemble_path.exists():
                    by_model["ensemble"] = metrics.read_forecasts(ensemble_path)
                last_truth = max((s.end for s in truth.values() if len(s)), default=None)
                if last_truth is None or last_truth < period.end:
                    logger.warning("Wahrheit endet %s vor Ende von %s (%s)", last_truth, period.label, period.end)
                counties = sorted({f.fips for forecasts in by_model.values() for f in forecasts})
                by_model["naive_zero"] = metrics.naive_zero_forecasts(counties, period.days)
                for name, forecasts in by_model.items():
                    window = [f for f in forecasts if period.start <= f.date <= period.end]
                    reports.setdefault(name, {})[period.label] = metrics.evaluate(
                        window, truth, (period.start, period.end),
                    )
            metrics.write_report_table(self.path("report.csv"), reports)
            metrics.write_per_county(self.path("report_per_county.csv"), reports)
        for name, per_period in reports.items():
            for label, report in per_period.items():
                logger.info("%s %s: Pinball %.4f, RMSE %.4f", name, label, report.pinball, report.rmse)
        return reports

    def plotdata(self, period: Period, fips_list: Sequence[str] | None = None, model: str = "ensemble") -> list[Path]:
        with stage("plotdata"):
            path = self.period_path(period, "forecasts", f"{model}.csv")
            forecasts = self._forecasts.get(period.label, {}).get(model)
            if forecasts is None:
                if not path.exists():
                    raise DataError(f"Keine Prognosen für Modell {model} in {period.label}")
                forecasts = metrics.read_forecasts(path)
            return emit_plotdata(
                forecasts, self.cleaned, fips_list, self.period_path(period, "plots"),
                int(self.config.values["plot_history_days"]),
            )

    # --- Manifest ---
    def write_manifest(self) -> Path:
        manifest_path = self.path("manifest.json")
        artifacts = {
            str(p.relative_to(self.out)).replace("\\", "/"): sha256_file(p)
            for p in sorted(self.out.rglob("*")) if p.is_file() and p != manifest_path
        }
        document = {
            "config_sha256": self.config.digest(),
            "config": json.loads(self.config.canonical_json()),
            "seeds": {
                "master": self.config.seed,
                **{name: model_seed(self.config.seed, name) for name in (*MODEL_NAMES, "ensemble", "clustering")},
            },
            "versions": package_versions(),
            "artifacts": artifacts,
        }
        manifest_path.write_text(json.dumps(document, sort_keys=True, indent=1), encoding="utf-8")
        return manifest_path

    def run(self) -> RunResult:
        self.out.mkdir(parents=True, exist_ok=True)
        self.ingest()
        self.clean()
        self.cluster()
        result = RunResult()
        for period in self.config.periods:
            self.fit(period)
            aggset = self.aggregate(period)
            result.coverage[period.label] = aggset.coverage.coverage
            self.train_ensemble(period)
            self.predict(period)
            self.plotdata(period)
            result.forecasts[period.label] = self._forecasts[period.label]
        result.reports = self.evaluate()
        result.manifest = self.write_manifest()
        return result


def run(config: RunConfig) -> RunResult:
    return Pipeline(config).run()
