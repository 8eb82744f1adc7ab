"""
Einlesen der Rohdaten, Bereinigung von Meldeartefakten und Aufbau der
Merkmalszeilen für die Modelle.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .exceptions import ConfigError, DataError, IngestionError

logger = logging.getLogger(__name__)

# New York City meldet als eine Einheit ohne FIPS-Code
NYC_FIPS = "36999"
NYC_NAME = "New York City"

FIPS_PATTERN = re.compile(r"^\d{5}$")
GROUND_TRUTH_COLUMNS = ("date", "county", "state", "fips", "cases", "deaths")
CLEANED_COLUMNS = ("fips", "date", "daily_deaths", "daily_cases", "m50_index")
WEEKDAYS = ("Mo", "Di", "Mi", "Do", "Fr", "Sa", "So")


def to_day(value) -> date:
    """numpy/pandas-Datum -> datetime.date."""
    if isinstance(value, date) and not isinstance(value, pd.Timestamp):
        return value
    return pd.Timestamp(value).date()


# ---------------------------------------------------
# Datentypen
# ---------------------------------------------------
@dataclass(frozen=True, eq=False)
class CountySeries:
    """
    Tägliche Zeitreihe eines Kreises: Tote, Fälle, Mobilitätsindex.
    Die Tage sind lückenlos und aufsteigend.
    """
    fips: str
    state: str
    dates: np.ndarray
    daily_deaths: np.ndarray
    daily_cases: np.ndarray
    mobility_index: np.ndarray = None
    county: str = ""

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        object.__setattr__(self, "dates", dates)
        n = len(dates)
        object.__setattr__(self, "daily_deaths", np.asarray(self.daily_deaths, dtype=float))
        object.__setattr__(self, "daily_cases", np.asarray(self.daily_cases, dtype=float))
        mobility = self.mobility_index
        if mobility is None:
            mobility = np.full(n, np.nan)
        object.__setattr__(self, "mobility_index", np.asarray(mobility, dtype=float))

        for name in ("daily_deaths", "daily_cases", "mobility_index"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{self.fips}: {name} hat nicht die Länge der Datumsreihe")
        if n > 1 and not np.all(np.diff(dates).astype(int) == 1):
            raise ValueError(f"{self.fips}: Datumsreihe nicht lückenlos aufsteigend")

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def start(self) -> date:
        return to_day(self.dates[0])

    @property
    def end(self) -> date:
        return to_day(self.dates[-1])

    @property
    def cumulative_deaths(self) -> np.ndarray:
        return np.cumsum(self.daily_deaths)

    @property
    def cumulative_cases(self) -> np.ndarray:
        return np.cumsum(self.daily_cases)

    def day(self, index: int) -> date:
        return to_day(self.dates[index])

    def index_of(self, day: date):
        if len(self) == 0:
            return None
        offset = (day - self.start).days
        return offset if 0 <= offset < len(self) else None

    def value_at(self, day: date, default: float = 0.0) -> float:
        idx = self.index_of(day)
        return default if idx is None else float(self.daily_deaths[idx])

    def truncate(self, cutoff: date) -> "CountySeries":
        """Alle Tage bis einschließlich ``cutoff``."""
        keep = self.dates <= np.datetime64(cutoff, "D")
        return replace(
            self,
            dates=self.dates[keep],
            daily_deaths=self.daily_deaths[keep],
            daily_cases=self.daily_cases[keep],
            mobility_index=self.mobility_index[keep],
        )


@dataclass(frozen=True)
class StaticFeatures:
    """Zeitlich konstante Kreismerkmale (Bevölkerung, Dichte, Betten, ...)."""
    fips: str
    values: Mapping[str, float] = field(default_factory=dict)

    @property
    def population(self) -> float:
        return float(self.values.get("population", np.nan))

    @property
    def population_density(self) -> float:
        return float(self.values.get("population_density", np.nan))

    @property
    def hospital_beds(self) -> float:
        return float(self.values.get("hospital_beds", np.nan))

    def vector(self, names: Sequence[str]) -> tuple:
        return tuple(float(self.values.get(name, 0.0)) for name in names)


@dataclass(frozen=True)
class FeatureRow:
    fips: str
    target_date: date
    lagged_deaths: tuple
    lagged_cases: tuple
    lagged_mobility: tuple
    weekday_onehot: tuple
    state_onehot: tuple
    cluster_onehot: tuple
    days_into_forecast: int
    static: tuple = ()
    # Tagestote am Zieltag; None für echte Prognosezeilen
    target: float | None = None


@dataclass(frozen=True)
class DumpConfig:
    dump_abs_min: float = 10.0
    dump_ratio: float = 5.0
    trailing_days: int = 7

    @classmethod
    def from_mapping(cls, values: Mapping | None) -> "DumpConfig":
        values = dict(values or {})
        return cls(
            dump_abs_min=float(values.get("dump_abs_min", cls.dump_abs_min)),
            dump_ratio=float(values.get("dump_ratio", cls.dump_ratio)),
            trailing_days=int(values.get("trailing_days", cls.trailing_days)),
        )


# ---------------------------------------------------
# Einlesen
# ---------------------------------------------------
def _normalize_fips(raw: pd.Series, county: pd.Series | None = None) -> pd.Series:
    """
    Vereinheitlicht FIPS-Codes auf 5 Ziffern. Ungültige Werte -> NaN.
    New York City ohne Code wird auf eine synthetische Einheit gelegt.
    """
    text = raw.astype("string").str.strip()
    text = text.str.replace(r"\.0+$", "", regex=True)
    if county is not None:
        nyc = text.isna() & (county.astype("string").str.strip() == NYC_NAME)
        text = text.mask(nyc, NYC_FIPS)
    short = text.str.fullmatch(r"\d{4}").fillna(False)
    text = text.mask(short, text.str.zfill(5))
    valid = text.str.fullmatch(FIPS_PATTERN.pattern).fillna(False)
    return text.where(valid)


def _read_csv(path, what: str, **kwargs) -> pd.DataFrame | None:
    try:
        return pd.read_csv(path, **kwargs)
    except pd.errors.EmptyDataError:
        logger.warning("%s-Datei %s ist leer", what, path)
        return None
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise IngestionError(f"{what}-Datei {path} nicht lesbar: {exc}") from exc


def load_ground_truth(path) -> dict[str, CountySeries]:
    """
    Liest kumulative Fälle/Tote je Kreis und Tag und bildet Tageswerte
    durch erste Differenzen. Fehlende Tage im Inneren werden mit
    Tageswert 0 ergänzt (kumulativer Wert fortgeschrieben).
    """
    frame = _read_csv(path, "Wahrheits", dtype={"fips": str, "county": str, "state": str})
    if frame is None or frame.empty:
        if frame is not None:
            logger.warning("Wahrheitsdatei %s enthält keine Zeilen", path)
        return {}

    missing = set(GROUND_TRUTH_COLUMNS) - set(frame.columns)
    if missing:
        raise IngestionError(f"Wahrheitsdatei {path}: Spalten fehlen {sorted(missing)}")

    frame = frame.copy()
    frame["fips"] = _normalize_fips(frame["fips"], frame["county"])
    bad_fips = frame["fips"].isna()
    if bad_fips.any():
        logger.warning(
            "%d Zeilen ohne gültigen FIPS-Code übersprungen (z.B. %s)",
            int(bad_fips.sum()),
            ", ".join(frame.loc[bad_fips, "county"].astype(str).unique()[:5]),
        )
        frame = frame[~bad_fips]

    frame["date"] = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    for column in ("cases", "deaths"):
        frame[column] = pd.to_numeric(frame[column], errors="coerce")
    bad_rows = frame["date"].isna() | frame["cases"].isna() | frame["deaths"].isna()
    if bad_rows.any():
        logger.warning("%d Zeilen mit ungültigem Datum/Wert übersprungen", int(bad_rows.sum()))
        frame = frame[~bad_rows]

    out = {}
    for fips, group in frame.groupby("fips", sort=True):
        group = group.sort_values("date").drop_duplicates("date", keep="last")
        days = pd.date_range(group["date"].min(), group["date"].max(), freq="D")
        cumulative = (
            group.set_index("date")[["cases", "deaths"]]
            .reindex(days)
            .ffill()
        )
        daily = cumulative.diff()
        daily.iloc[0] = cumulative.iloc[0]
        out[fips] = CountySeries(
            fips=fips,
            state=str(group["state"].dropna().iloc[-1]) if group["state"].notna().any() else "",
            county=str(group["county"].dropna().iloc[-1]) if group["county"].notna().any() else "",
            dates=days.values.astype("datetime64[D]"),
            daily_deaths=daily["deaths"].to_numpy(dtype=float),
            daily_cases=daily["cases"].to_numpy(dtype=float),
        )
    logger.info("Wahrheitsdaten: %d Kreise aus %s", len(out), path)
    return out


def load_static_features(path, columns: Sequence[str] | None = None) -> dict[str, StaticFeatures]:
    """
    Statische Merkmale ``fips,<name>...``. Nicht-numerische Spalten werden
    ignoriert, fehlende Zellen durch den Spaltenmedian ersetzt.
    """
    frame = _read_csv(path, "Merkmals", dtype={"fips": str})
    if frame is None or frame.empty:
        return {}
    if "fips" not in frame.columns:
        raise IngestionError(f"Merkmalsdatei {path}: Spalte 'fips' fehlt")

    frame = frame.copy()
    frame["fips"] = _normalize_fips(frame["fips"])
    frame = frame[frame["fips"].notna()]
    if frame["fips"].duplicated().any():
        logger.warning("Merkmalsdatei %s: doppelte FIPS-Codes, letzte Zeile gilt", path)
        frame = frame.drop_duplicates("fips", keep="last")

    names = [c for c in frame.columns if c != "fips"]
    if columns is not None:
        names = [c for c in names if c in columns]
    numeric = frame[names].apply(pd.to_numeric, errors="coerce")
    numeric = numeric.loc[:, numeric.notna().any()]
    if numeric.isna().any().any():
        logger.warning(
            "Merkmalsdatei %s: %d fehlende Zellen durch Spaltenmedian ersetzt",
            path, int(numeric.isna().sum().sum()),
        )
        numeric = numeric.fillna(numeric.median())

    out = {}
    for fips, row in zip(frame["fips"], numeric.to_dict(orient="records")):
        out[fips] = StaticFeatures(fips=fips, values={k: float(v) for k, v in row.items()})
    return out


def load_mobility(path) -> dict[str, pd.Series]:
    """Mobilitätsindex ``date,fips,m50_index`` je Kreis als Zeitreihe."""
    frame = _read_csv(path, "Mobilitäts", dtype={"fips": str})
    if frame is None or frame.empty:
        return {}
    missing = {"date", "fips", "m50_index"} - set(frame.columns)
    if missing:
        raise IngestionError(f"Mobilitätsdatei {path}: Spalten fehlen {sorted(missing)}")
    frame = frame.copy()
    frame["fips"] = _normalize_fips(frame["fips"])
    frame["date"] = pd.to_datetime(frame["date"], format="%Y-%m-%d", errors="coerce")
    frame["m50_index"] = pd.to_numeric(frame["m50_index"], errors="coerce")
    frame = frame.dropna(subset=["fips", "date"])
    return {
        fips: group.drop_duplicates("date", keep="last").set_index("date")["m50_index"].sort_index()
        for fips, group in frame.groupby("fips", sort=True)
    }


def attach_mobility(series: Mapping[str, CountySeries], mobility: Mapping[str, pd.Series]):
    out = {}
    for fips, s in series.items():
        values = mobility.get(fips)
        if values is None:
            out[fips] = s
            continue
        aligned = values.reindex(pd.DatetimeIndex(s.dates)).to_numpy(dtype=float)
        out[fips] = replace(s, mobility_index=aligned)
    return out


# ---------------------------------------------------
# Bereinigung
# ---------------------------------------------------
def detect_dumps(values, cfg: DumpConfig) -> list[int]:
    """
    Tag d gilt als Nachmeldung, wenn der Wert größer ist als
    max(dump_abs_min, dump_ratio * Mittel der vorangehenden Tage).
    """
    values = np.asarray(values, dtype=float)
    dumps = []
    for d in range(len(values)):
        trailing = values[max(0, d - cfg.trailing_days):d]
        mean = float(trailing.mean()) if len(trailing) else 0.0
        if values[d] > max(cfg.dump_abs_min, cfg.dump_ratio * mean):
            dumps.append(d)
    return dumps


def spread_dumps(values, dumps: Iterable[int]) -> np.ndarray:
    """Verteilt den Wert jedes Nachmeldetags gleichmäßig auf sein Fenster."""
    values = np.asarray(values, dtype=float)
    out = values.copy()
    previous = -1
    for d in sorted(set(dumps)):
        lo = previous + 1
        share = values[d] / (d - lo + 1)
        out[lo:d + 1] += share
        out[d] -= values[d]
        previous = d
    return out


def _window_start(boundaries: Sequence[int], index: int) -> int:
    before = [b for b in boundaries if b < index]
    return before[-1] + 1 if before else 0


def fold_negatives(values, boundaries: Sequence[int] = ()) -> np.ndarray:
    """
    Negative Tageswerte (Korrekturen nach unten) werden mit dem Fenster seit
    der letzten Nachmeldung verrechnet: die positiven Werte des Fensters werden
    so skaliert, dass die Fenstersumme erhalten bleibt. Reicht die Summe nicht,
    wird das Fenster um das vorangehende erweitert.
    """
    out = np.asarray(values, dtype=float).copy()
    bounds = sorted(set(boundaries))
    for n in range(len(out)):
        if out[n] >= 0:
            continue
        lo = _window_start(bounds, n)
        total = float(out[lo:n + 1].sum())
        while total < 0 and lo > 0:
            lo = _window_start(bounds, lo - 1)
            total = float(out[lo:n + 1].sum())
        segment = np.clip(out[lo:n + 1], 0.0, None)
        positive = float(segment.sum())
        if total < 0 or positive == 0.0:
            if total < 0:
                logger.warning("Summe bis Tag %d negativ (%.1f), auf 0 gesetzt", n, total)
            out[lo:n + 1] = 0.0
            continue
        out[lo:n + 1] = segment * (total / positive)
    return out


def redistribute_dumps(
    series: CountySeries,
    threshold_cfg: DumpConfig,
    dump_days: Iterable[int] | None = None,
    channel: str = "daily_deaths",
) -> CountySeries:
    """
    Nachmeldungen gleichmäßig auf die Tage seit der vorherigen Nachmeldung
    (bzw. Reihenbeginn) verteilen, danach negative Werte einfalten.
    ``dump_days`` ersetzt die Erkennung.
    """
    values = getattr(series, channel)
    if len(values) == 0:
        return series
    dumps = detect_dumps(values, threshold_cfg) if dump_days is None else sorted(set(dump_days))
    if dumps:
        logger.debug("%s: %d Nachmeldetage in %s", series.fips, len(dumps), channel)
    cleaned = fold_negatives(spread_dumps(values, dumps), dumps)
    return replace(series, **{channel: cleaned})


def impute_mobility(series: CountySeries, default: float = 100.0) -> CountySeries:
    """Vorwärts auffüllen, Anfang rückwärts, ganz leer -> ``default``."""
    mobility = pd.Series(series.mobility_index, dtype=float)
    if mobility.isna().all():
        filled = np.full(len(mobility), float(default))
    else:
        filled = mobility.ffill().bfill().to_numpy(dtype=float)
    return replace(series, mobility_index=filled)


def clean_series(series: CountySeries, cfg: DumpConfig, mobility_default: float = 100.0) -> CountySeries:
    """Tote: Nachmeldungen + Korrekturen; Fälle: Korrekturen; Mobilität: auffüllen."""
    cleaned = redistribute_dumps(series, cfg)
    cleaned = replace(cleaned, daily_cases=fold_negatives(cleaned.daily_cases))
    return impute_mobility(cleaned, default=mobility_default)


def clean_all(series: Mapping[str, CountySeries], cfg: DumpConfig, mobility_default: float = 100.0):
    return {fips: clean_series(s, cfg, mobility_default) for fips, s in sorted(series.items())}


# ---------------------------------------------------
# Merkmale
# ---------------------------------------------------
def validate_lags(lags: Sequence[int], forecast_len: int) -> tuple:
    if forecast_len < 1:
        raise ConfigError(f"Prognoselänge muss >= 1 sein, erhalten: {forecast_len}")
    if not lags:
        raise ConfigError("Lag-Menge ist leer")
    too_short = [lag for lag in lags if lag < forecast_len + 1]
    if too_short:
        raise ConfigError(
            f"Lags {too_short} kürzer als Prognoselänge + 1 = {forecast_len + 1} "
            "(Zielwert würde in die Merkmale durchsickern)"
        )
    return tuple(sorted(int(lag) for lag in lags))


def _onehot(index: int, width: int) -> tuple:
    vector = [0.0] * width
    vector[index] = 1.0
    return tuple(vector)


@dataclass(frozen=True)
class FeatureLayout:
    """
    Feste Spaltenreihenfolge der Merkmalsmatrix. Das Kreis-Layout für die
    GBDT-Modelle lässt Bundesstaat, Cluster und statische Merkmale weg.
    """
    lags: tuple
    forecast_len: int
    states: tuple
    n_clusters: int = 6
    static_names: tuple = ()
    include_state: bool = True
    include_cluster: bool = True
    include_static: bool = True

    def county_level(self) -> "FeatureLayout":
        return replace(self, include_state=False, include_cluster=False, include_static=False)

    @property
    def columns(self) -> list[str]:
        cols = [f"deaths_lag_{lag}" for lag in self.lags]
        cols += [f"cases_lag_{lag}" for lag in self.lags]
        cols += [f"mobility_lag_{lag}" for lag in self.lags]
        cols += [f"weekday_{name}" for name in WEEKDAYS]
        if self.include_state:
            cols += [f"state_{name}" for name in self.states]
        if self.include_cluster:
            cols += [f"cluster_{i}" for i in range(self.n_clusters)]
        if self.include_static:
            cols += list(self.static_names)
        return cols

    def encode(self, row: FeatureRow) -> np.ndarray:
        parts = [row.lagged_deaths, row.lagged_cases, row.lagged_mobility, row.weekday_onehot]
        if self.include_state:
            parts.append(row.state_onehot)
        if self.include_cluster:
            parts.append(row.cluster_onehot)
        if self.include_static:
            parts.append(row.static)
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def matrix(self, rows: Sequence[FeatureRow]):
        """Merkmalsmatrix und Zielvektor (NaN für Zeilen ohne Ziel)."""
        width = len(self.columns)
        if not rows:
            return np.empty((0, width)), np.empty(0)
        X = np.vstack([self.encode(row) for row in rows])
        y = np.array([np.nan if row.target is None else row.target for row in rows], dtype=float)
        return X, y


def _make_row(series, target_index, target_day, horizon, layout, cluster_label, static_vector, target):
    lag_idx = [target_index - lag for lag in layout.lags]
    if series.state not in layout.states:
        raise ConfigError(f"{series.fips}: Bundesstaat '{series.state}' nicht im Layout")
    return FeatureRow(
        fips=series.fips,
        target_date=target_day,
        lagged_deaths=tuple(float(series.daily_deaths[i]) for i in lag_idx),
        lagged_cases=tuple(float(series.daily_cases[i]) for i in lag_idx),
        lagged_mobility=tuple(float(series.mobility_index[i]) for i in lag_idx),
        weekday_onehot=_onehot(target_day.weekday(), 7),
        state_onehot=_onehot(layout.states.index(series.state), len(layout.states)),
        cluster_onehot=_onehot(int(cluster_label), layout.n_clusters),
        days_into_forecast=int(horizon),
        static=static_vector,
        target=target,
    )


def _county_context(fips, static, clusters, layout):
    if fips not in clusters:
        raise DataError(f"Kein Cluster-Label für Kreis {fips}")
    features = static.get(fips)
    if features is None:
        logger.warning("Keine statischen Merkmale für Kreis %s, Nullen verwendet", fips)
        vector = (0.0,) * len(layout.static_names)
    else:
        vector = features.vector(layout.static_names)
    return clusters[fips], vector


def make_layout(series, lags, forecast_len, n_clusters=6, static_names=(), states=None) -> FeatureLayout:
    return FeatureLayout(
        lags=validate_lags(lags, forecast_len),
        forecast_len=int(forecast_len),
        states=tuple(states) if states is not None else tuple(sorted({s.state for s in series.values()})),
        n_clusters=int(n_clusters),
        static_names=tuple(static_names),
    )


def build_feature_rows(
    series: Mapping[str, CountySeries],
    static: Mapping[str, StaticFeatures],
    clusters: Mapping[str, int],
    lags: Sequence[int],
    forecast_len: int,
    *,
    layout: FeatureLayout | None = None,
    cutoff: date | None = None,
) -> list[FeatureRow]:
    """
    Eine Trainingszeile je (Kreis, Zieltag), sofern alle Lags vorhanden sind.
    Mit ``cutoff`` nur Zieltage bis einschließlich Stichtag.
    """
    validate_lags(lags, forecast_len)
    layout = layout or make_layout(series, lags, forecast_len)
    rows = []
    for fips in sorted(series):
        s = series[fips] if cutoff is None else series[fips].truncate(cutoff)
        label, vector = _county_context(fips, static, clusters, layout)
        for t in range(max(layout.lags), len(s)):
            rows.append(_make_row(
                s, t, s.day(t), forecast_len, layout, label, vector, float(s.daily_deaths[t]),
            ))
    return rows


def build_forecast_rows(
    series: Mapping[str, CountySeries],
    static: Mapping[str, StaticFeatures],
    clusters: Mapping[str, int],
    layout: FeatureLayout,
    cutoff: date,
) -> list[FeatureRow]:
    """Zeilen für die Tage cutoff+1 .. cutoff+L; Lags liegen alle vor dem Stichtag."""
    rows = []
    for fips in sorted(series):
        s = series[fips].truncate(cutoff)
        if len(s) == 0 or s.end != cutoff:
            logger.warning("Kreis %s: keine Daten bis Stichtag %s", fips, cutoff)
            continue
        label, vector = _county_context(fips, static, clusters, layout)
        last = len(s) - 1
        for h in range(1, layout.forecast_len + 1):
            t = last + h
            if t - max(layout.lags) < 0:
                continue
            rows.append(_make_row(
                s, t, cutoff + timedelta(days=h), h, layout, label, vector, None,
            ))
    return rows


# ---------------------------------------------------
# Prüfdateien
# ---------------------------------------------------
def write_cleaned(path, series: Mapping[str, CountySeries]) -> Path:
    frames = [
        pd.DataFrame({
            "fips": s.fips,
            "date": pd.DatetimeIndex(s.dates).strftime("%Y-%m-%d"),
            "daily_deaths": s.daily_deaths,
            "daily_cases": s.daily_cases,
            "m50_index": s.mobility_index,
        })
        for _, s in sorted(series.items())
    ]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=CLEANED_COLUMNS)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.6f")
    return path


def read_cleaned(path, counties: Mapping[str, tuple] | None = None) -> dict[str, CountySeries]:
    frame = _read_csv(path, "Bereinigungs", dtype={"fips": str})
    if frame is None or frame.empty:
        return {}
    missing = set(CLEANED_COLUMNS) - set(frame.columns)
    if missing:
        raise IngestionError(f"Datei {path}: Spalten fehlen {sorted(missing)}")
    frame["date"] = pd.to_datetime(frame["date"], format="%Y-%m-%d")
    counties = counties or {}
    out = {}
    for fips, group in frame.groupby("fips", sort=True):
        group = group.sort_values("date")
        state, name = counties.get(fips, ("", ""))
        out[fips] = CountySeries(
            fips=fips,
            state=state,
            county=name,
            dates=group["date"].values.astype("datetime64[D]"),
            daily_deaths=group["daily_deaths"].to_numpy(dtype=float),
            daily_cases=group["daily_cases"].to_numpy(dtype=float),
            mobility_index=group["m50_index"].to_numpy(dtype=float),
        )
    return out


def write_counties(path, series: Mapping[str, CountySeries]) -> Path:
    frame = pd.DataFrame(
        [(s.fips, s.state, s.county) for _, s in sorted(series.items())],
        columns=["fips", "state", "county"],
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def read_counties(path) -> dict[str, tuple]:
    frame = _read_csv(path, "Kreis", dtype={"fips": str, "state": str, "county": str})
    if frame is None:
        return {}
    frame = frame.fillna("")
    return {row.fips: (row.state, row.county) for row in frame.itertuples(index=False)}
