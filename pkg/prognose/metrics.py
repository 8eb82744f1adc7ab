"""
Bewertungsmaß: Pinball-Verlust je Quantil, je Kreis-Tag und über alle
Zellen eines Zeitraums, dazu RMSE auf dem Median.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .exceptions import EvaluationError, IngestionError

logger = logging.getLogger(__name__)

QUANTILE_LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
QUANTILE_COLUMNS = tuple(f"q{int(round(level * 100))}" for level in QUANTILE_LEVELS)
MEDIAN_INDEX = QUANTILE_LEVELS.index(0.5)


def monotonize(values) -> np.ndarray:
    """Sortiert einen Quantilvektor aufsteigend (entfernt Kreuzungen)."""
    return np.sort(np.asarray(values, dtype=float), axis=-1)


# ---------------------------------------------------
# Datentypen
# ---------------------------------------------------
@dataclass(frozen=True)
class QuantileForecast:
    """
    Neun Quantilschätzungen der Tagestoten für einen Kreis an einem Tag.
    Die Werte sind aufsteigend, endlich und nicht negativ.
    """
    fips: str
    date: date
    q_values: tuple

    def __post_init__(self):
        if len(self.q_values) != len(QUANTILE_LEVELS):
            raise ValueError(
                f"{len(QUANTILE_LEVELS)} Quantile erwartet, {len(self.q_values)} erhalten"
            )

    @classmethod
    def from_raw(cls, fips: str, day: date, values) -> "QuantileForecast":
        """Klemmt Rohausgaben auf >= 0 und sortiert sie."""
        arr = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"nicht-endliche Quantile für {fips}@{day}")
        arr = monotonize(np.clip(arr, 0.0, None))
        return cls(fips=fips, date=day, q_values=tuple(float(v) for v in arr))

    @property
    def median(self) -> float:
        return self.q_values[MEDIAN_INDEX]


@dataclass
class EvaluationReport:
    pinball: float
    rmse: float
    per_county_pinball: dict
    period: tuple
    n_cells: int = 0
    # Abdeckung: Kreise in Prognose, in Wahrheit, ausgewertet
    coverage: dict = field(default_factory=dict)


# ---------------------------------------------------
# Verlustfunktionen
# ---------------------------------------------------
def _check_level(q: float) -> None:
    if not 0.0 < q < 1.0:
        raise ValueError(f"Quantilniveau muss in (0, 1) liegen, erhalten: {q}")


def pinball_q(y: float, yhat: float, q: float) -> float:
    _check_level(q)
    if y >= yhat:
        return (y - yhat) * q
    return (yhat - y) * (1.0 - q)


def pinball_loss(y, yhat, q) -> np.ndarray:
    """Elementweiser Pinball-Verlust; ``q`` darf ein Vektor sein (broadcast)."""
    q_arr = np.asarray(q, dtype=float)
    if np.any((q_arr <= 0.0) | (q_arr >= 1.0)):
        raise ValueError("Quantilniveaus müssen in (0, 1) liegen")
    diff = np.asarray(y, dtype=float) - np.asarray(yhat, dtype=float)
    return np.where(diff >= 0, diff * q_arr, -diff * (1.0 - q_arr))


def pinball_county(y: float, qf) -> float:
    values = qf.q_values if isinstance(qf, QuantileForecast) else tuple(qf)
    if len(values) != len(QUANTILE_LEVELS):
        raise ValueError(
            f"{len(QUANTILE_LEVELS)} Quantile erwartet, {len(values)} erhalten"
        )
    return math.fsum(
        pinball_q(y, value, level) for value, level in zip(values, QUANTILE_LEVELS)
    ) / len(QUANTILE_LEVELS)


# ---------------------------------------------------
# Auswertung
# ---------------------------------------------------
def period_days(start: date, end: date) -> list[date]:
    return [start + timedelta(days=i) for i in range((end - start).days + 1)]


def evaluate(
    forecasts: Iterable[QuantileForecast],
    truth: Mapping[str, "CountySeries"],
    period: tuple,
) -> EvaluationReport:
    """
    Mittelt ``pinball_county`` über alle (Kreis, Tag)-Zellen des Zeitraums.
    Ausgewertet wird die Schnittmenge der Kreise aus Prognose und Wahrheit;
    fehlende Wahrheitstage zählen als 0 Tote.
    """
    start, end = period
    days = period_days(start, end)
    by_cell = {(f.fips, f.date): f for f in forecasts}
    forecast_fips = {fips for fips, _ in by_cell}
    evaluated = sorted(forecast_fips & set(truth))

    missing = [
        (fips, day) for fips in evaluated for day in days if (fips, day) not in by_cell
    ]
    if missing:
        raise EvaluationError(missing)

    per_county = {}
    losses = []
    squared = []
    for fips in evaluated:
        series = truth[fips]
        county_losses = []
        for day in days:
            y = series.value_at(day, default=0.0)
            qf = by_cell[(fips, day)]
            county_losses.append(pinball_county(y, qf))
            squared.append((y - qf.median) ** 2)
        per_county[fips] = math.fsum(county_losses) / len(county_losses)
        losses.extend(county_losses)

    coverage = {
        "forecast_counties": len(forecast_fips),
        "truth_counties": len(truth),
        "evaluated_counties": len(evaluated),
    }
    if len(evaluated) < len(forecast_fips):
        logger.warning(
            "%d Prognose-Kreise ohne Wahrheitsdaten, nicht ausgewertet",
            len(forecast_fips) - len(evaluated),
        )
    if not losses:
        logger.warning("Keine Zellen im Zeitraum %s bis %s auswertbar", start, end)
        return EvaluationReport(math.nan, math.nan, {}, (start, end), 0, coverage)

    return EvaluationReport(
        pinball=math.fsum(losses) / len(losses),
        rmse=math.sqrt(math.fsum(squared) / len(squared)),
        per_county_pinball=per_county,
        period=(start, end),
        n_cells=len(losses),
        coverage=coverage,
    )


def naive_zero_forecasts(fips_list: Iterable[str], days: Sequence[date]) -> list[QuantileForecast]:
    """Referenz: alle Quantile 0."""
    zeros = (0.0,) * len(QUANTILE_LEVELS)
    return [QuantileForecast(fips, day, zeros) for fips in fips_list for day in days]


# ---------------------------------------------------
# Dateiformate
# ---------------------------------------------------
def write_forecasts(path, forecasts: Iterable[QuantileForecast]) -> Path:
    rows = [
        (f.fips, f.date.isoformat(), *f.q_values)
        for f in sorted(forecasts, key=lambda f: (f.fips, f.date))
    ]
    frame = pd.DataFrame(rows, columns=["fips", "date", *QUANTILE_COLUMNS])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.6f")
    return path


def read_forecasts(path) -> list[QuantileForecast]:
    try:
        frame = pd.read_csv(path, dtype={"fips": str})
    except (OSError, pd.errors.ParserError) as exc:
        raise IngestionError(f"Prognosedatei {path} nicht lesbar: {exc}") from exc
    missing = {"fips", "date", *QUANTILE_COLUMNS} - set(frame.columns)
    if missing:
        raise IngestionError(f"Prognosedatei {path}: Spalten fehlen {sorted(missing)}")
    out = []
    for row in frame.itertuples(index=False):
        values = tuple(float(getattr(row, col)) for col in QUANTILE_COLUMNS)
        out.append(QuantileForecast(row.fips, date.fromisoformat(row.date), values))
    return out


def write_report_table(path, reports: Mapping[str, Mapping[str, EvaluationReport]]) -> Path:
    """
    Tabelle wie im Bericht: eine Zeile je Modell, je Zeitraum eine Spalte
    für Pinball-Verlust und eine für RMSE.
    """
    labels = []
    for per_period in reports.values():
        for label in per_period:
            if label not in labels:
                labels.append(label)
    rows = []
    for model_name, per_period in reports.items():
        row = {"model": model_name}
        for label in labels:
            report = per_period.get(label)
            row[f"{label}_pinball"] = report.pinball if report else math.nan
            row[f"{label}_rmse"] = report.rmse if report else math.nan
        rows.append(row)
    frame = pd.DataFrame(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.4f")
    return path


def write_per_county(path, reports: Mapping[str, Mapping[str, EvaluationReport]]) -> Path:
    rows = [
        (model_name, label, fips, loss)
        for model_name, per_period in reports.items()
        for label, report in per_period.items()
        for fips, loss in sorted(report.per_county_pinball.items())
    ]
    frame = pd.DataFrame(rows, columns=["model", "period", "fips", "pinball"])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.6f")
    return path
