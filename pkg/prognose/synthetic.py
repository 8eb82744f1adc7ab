"""
Synthetische Epidemie-Welten für reproduzierbare Prüfläufe.

Je Kreis eine SEIR-QD-Trajektorie, darauf Meldeeffekte: Negativ-Binomial-
Rauschen, Wochentagsfaktoren und Nachmeldungen (Tote eines Fensters werden
gesammelt an einem Tag gemeldet). Ausgabe in den Eingabeformaten von
``prognose.data``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

from .seirqd import SeirQdParams, integrate

logger = logging.getLogger(__name__)

STATES = (("Colorado", 8), ("Iowa", 19), ("Oregon", 41), ("Vermont", 50))
# Untererfassung am Wochenende, Nachholeffekt am Montag
DEFAULT_WEEKDAY_FACTORS = (1.15, 1.05, 1.0, 1.0, 1.0, 0.85, 0.8)
DUMP_WINDOW = 7
MOBILITY_MISSING = 0.05


@dataclass
class SyntheticWorld:
    n_counties: int
    params: list
    populations: list
    fips: list
    states: list
    start_date: date = date(2020, 3, 1)
    # None = kein Beobachtungsrauschen
    noise_phi: float | None = 20.0
    dump_probability: float = 0.02
    weekday_factors: tuple = DEFAULT_WEEKDAY_FACTORS
    # feste Nachmeldetage je Kreis (Tagesindex)
    forced_dumps: dict = field(default_factory=dict)
    seed: int = 0


@dataclass
class SyntheticOutput:
    ground_truth: Path
    static: Path
    mobility: Path
    # beobachtete Tageswerte vor und nach Nachmeldungen, je Kreis
    daily_deaths: dict = field(default_factory=dict)
    daily_deaths_undumped: dict = field(default_factory=dict)
    daily_cases: dict = field(default_factory=dict)
    expected_deaths: dict = field(default_factory=dict)


def make_world(
    n_counties: int = 40,
    seed: int = 0,
    noise_phi: float | None = 20.0,
    dump_probability: float = 0.02,
    weekday_factors: tuple = DEFAULT_WEEKDAY_FACTORS,
    start_date: date = date(2020, 3, 1),
    forced_dumps: dict | None = None,
) -> SyntheticWorld:
    rng = np.random.default_rng(seed)
    params, populations, fips, states = [], [], [], []
    for i in range(n_counties):
        state_name, state_code = STATES[i % len(STATES)]
        population = float(np.exp(rng.uniform(np.log(5e4), np.log(1e6))))
        i0 = float(rng.uniform(5.0, 50.0))
        params.append(SeirQdParams(
            beta=float(rng.uniform(0.25, 0.45)),
            sigma=float(rng.uniform(0.15, 0.3)),
            q_rate=float(rng.uniform(0.12, 0.2)),
            gamma=float(rng.uniform(0.04, 0.08)),
            mu=float(rng.uniform(0.002, 0.01)),
            E0=2.0 * i0,
            I0=i0,
        ))
        populations.append(population)
        fips.append(f"{state_code:02d}{i + 1:03d}")
        states.append(state_name)
    return SyntheticWorld(
        n_counties=n_counties,
        params=params,
        populations=populations,
        fips=fips,
        states=states,
        start_date=start_date,
        noise_phi=noise_phi,
        dump_probability=dump_probability,
        weekday_factors=tuple(weekday_factors),
        forced_dumps=dict(forced_dumps or {}),
        seed=seed,
    )


def _observe(expected, phi, rng) -> np.ndarray:
    expected = np.clip(expected, 0.0, None)
    if phi is None:
        return np.rint(expected)
    observed = np.zeros_like(expected)
    positive = expected > 0
    observed[positive] = rng.negative_binomial(phi, phi / (phi + expected[positive]))
    return observed.astype(float)


def inject_dumps(values, dump_days) -> np.ndarray:
    """Tote der ``DUMP_WINDOW`` Tage bis einschließlich Tag d werden an Tag d gemeldet."""
    out = np.asarray(values, dtype=float).copy()
    for d in sorted(dump_days):
        lo = max(0, d - DUMP_WINDOW + 1)
        out[d] = out[lo:d + 1].sum()
        out[lo:d] = 0.0
    return out


def _draw_dump_days(n_days, probability, rng) -> list[int]:
    days, last = [], -DUMP_WINDOW
    for d in range(DUMP_WINDOW, n_days):
        if rng.random() < probability and d - last >= DUMP_WINDOW:
            days.append(d)
            last = d
    return days


def generate_synthetic(world: SyntheticWorld, days: int, out_dir) -> SyntheticOutput:
    """
    Schreibt ``ground_truth.csv`` (kumulativ, NYT-Schema), ``static.csv`` und
    ``mobility.csv`` nach ``out_dir``. Gleiche Welt, gleiche Dateien.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(world.seed + 1)
    dates = [world.start_date + timedelta(days=i) for i in range(days)]
    weekday = np.array([world.weekday_factors[d.weekday()] for d in dates])
    weekday = weekday / weekday.mean()

    truth_rows, mobility_rows, static_rows = [], [], []
    output = SyntheticOutput(out_dir / "ground_truth.csv", out_dir / "static.csv", out_dir / "mobility.csv")
    for fips, state, params, population in zip(world.fips, world.states, world.params, world.populations):
        trajectory = integrate(params, population, days - 1)
        confirmed = trajectory[:, 3] + trajectory[:, 4] + trajectory[:, 5]
        expected_cases = np.diff(confirmed, prepend=0.0)
        expected_deaths = np.diff(trajectory[:, 5], prepend=0.0)

        cases = _observe(expected_cases * weekday, world.noise_phi, rng)
        deaths = _observe(expected_deaths * weekday, world.noise_phi, rng)
        dump_days = list(world.forced_dumps.get(fips, ()))
        if not dump_days and world.dump_probability > 0:
            dump_days = _draw_dump_days(days, world.dump_probability, rng)
        dumped = inject_dumps(deaths, dump_days)

        output.daily_deaths[fips] = dumped
        output.daily_deaths_undumped[fips] = deaths
        output.daily_cases[fips] = cases
        output.expected_deaths[fips] = expected_deaths

        cum_cases, cum_deaths = np.cumsum(cases), np.cumsum(dumped)
        for day, c, d in zip(dates, cum_cases, cum_deaths):
            truth_rows.append((day.isoformat(), f"County {fips}", state, fips, int(c), int(d)))

        # Mobilität sinkt mit dem Anteil bestätigter Fälle
        mobility = 100.0 - 400.0 * confirmed / population + rng.normal(0.0, 3.0, size=days)
        gaps = rng.random(days) < MOBILITY_MISSING
        for day, value, gap in zip(dates, mobility, gaps):
            mobility_rows.append((day.isoformat(), fips, np.nan if gap else round(float(value), 2)))

        area = float(rng.uniform(200.0, 5000.0))
        static_rows.append((fips, round(population), round(population / area, 3), round(population * rng.uniform(1.5, 4.0) / 1000.0)))

    pd.DataFrame(truth_rows, columns=["date", "county", "state", "fips", "cases", "deaths"]).to_csv(
        output.ground_truth, index=False,
    )
    pd.DataFrame(static_rows, columns=["fips", "population", "population_density", "hospital_beds"]).to_csv(
        output.static, index=False,
    )
    pd.DataFrame(mobility_rows, columns=["date", "fips", "m50_index"]).to_csv(output.mobility, index=False)
    logger.info("Synthetische Welt: %d Kreise, %d Tage nach %s", world.n_counties, days, out_dir)
    return output
