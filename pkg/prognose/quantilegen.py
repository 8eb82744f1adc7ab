"""
Umwandlung von Mittelwertprognosen in Quantilprognosen über eine
Negativ-Binomialverteilung mit E[D] = mu, Var[D] = mu + mu^2/phi.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Sequence

import numpy as np
from scipy.stats import nbinom

from .metrics import QUANTILE_LEVELS, QuantileForecast

logger = logging.getLogger(__name__)

PHI_MIN = 0.1
PHI_MAX = 1e6
DEFAULT_WINDOW = 14


@dataclass(frozen=True)
class NbSpec:
    mu: float
    phi: float

    def __post_init__(self):
        if self.mu < 0 or not np.isfinite(self.mu):
            raise ValueError(f"mu muss endlich und >= 0 sein, erhalten: {self.mu}")
        if not (self.phi > 0 and np.isfinite(self.phi)):
            raise ValueError(f"phi muss endlich und > 0 sein, erhalten: {self.phi}")

    @property
    def variance(self) -> float:
        return self.mu + self.mu ** 2 / self.phi

    def scipy_args(self) -> tuple:
        """Standardparameter (n, p) mit n = phi, p = phi / (phi + mu)."""
        return self.phi, self.phi / (self.phi + self.mu)


def estimate_phi(recent_deaths, mu: float, phi_min: float = PHI_MIN, phi_max: float = PHI_MAX) -> float:
    """
    Momentenschätzung aus der Stichprobenvarianz des Fensters. Ohne
    Überdispersion (v <= mu) fällt die Schätzung auf ``phi_max`` zurück.
    """
    window = np.asarray(recent_deaths, dtype=float)
    if window.size < 2:
        raise ValueError(f"Fenster braucht mindestens 2 Werte, erhalten: {window.size}")
    variance = float(np.var(window, ddof=1))
    if variance > mu:
        phi = mu ** 2 / (variance - mu)
    else:
        phi = phi_max
    return float(np.clip(phi, phi_min, phi_max))


def nb_quantiles(spec: NbSpec, levels: Sequence[float] = QUANTILE_LEVELS, method: str = "exact", rng=None, n_samples: int = 10_000) -> np.ndarray:
    """
    Kleinstes k mit CDF(k) >= Niveau, über kumulierte Wahrscheinlichkeitsmasse.
    ``method="sample"`` zieht stattdessen Stichproben (nur für Vergleiche).
    """
    levels = np.asarray(levels, dtype=float)
    if np.any(np.diff(levels) <= 0) or levels[0] <= 0 or levels[-1] >= 1:
        raise ValueError("Niveaus müssen streng steigend in (0, 1) liegen")
    if spec.mu == 0:
        return np.zeros(len(levels))

    n, p = spec.scipy_args()
    if method == "sample":
        rng = rng if rng is not None else np.random.default_rng(0)
        draws = rng.negative_binomial(n, p, size=n_samples)
        return np.sort(np.quantile(draws, levels, method="inverted_cdf").astype(float))
    if method != "exact":
        raise ValueError(f"Unbekannte Methode: {method}")

    bound = int(np.ceil(spec.mu + 10.0 * np.sqrt(spec.variance) + 10.0))
    while nbinom.cdf(bound, n, p) < levels[-1]:
        bound *= 2
    cdf = np.cumsum(nbinom.pmf(np.arange(bound + 1), n, p))
    # Rundungsfehler der Summe dürfen die Suche nicht über das Ende schieben
    cdf[-1] = max(cdf[-1], levels[-1])
    return np.searchsorted(cdf, levels, side="left").astype(float)


def meanforecast_to_quantiles(
    means,
    history,
    window: int = DEFAULT_WINDOW,
    start: date | None = None,
    levels: Sequence[float] = QUANTILE_LEVELS,
) -> list[QuantileForecast]:
    """
    Eine Quantilprognose je Prognosetag. phi wird einmal je Kreis aus den
    letzten ``window`` Tagen geschätzt, mit dem Fenstermittel als mu.
    Leere Historie: phi = ``PHI_MAX``, ``start`` muss dann angegeben sein.
    """
    means = np.clip(np.asarray(means, dtype=float), 0.0, None)
    if start is None:
        if len(history) == 0:
            raise ValueError(f"{history.fips}: leere Historie, Prognosebeginn muss angegeben werden")
        start = history.end + timedelta(days=1)
    recent = history.daily_deaths[-window:] if window else history.daily_deaths
    if len(recent) >= 2:
        phi = estimate_phi(recent, float(np.mean(recent)))
    else:
        logger.debug("%s: Historie zu kurz, phi = %g", history.fips, PHI_MAX)
        phi = PHI_MAX
    out = []
    for offset, mu in enumerate(means):
        values = nb_quantiles(NbSpec(float(mu), phi), levels)
        out.append(QuantileForecast(history.fips, start + timedelta(days=offset), tuple(float(v) for v in values)))
    return out
