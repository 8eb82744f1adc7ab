"""Kleine Testdaten-Bausteine."""
import json
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from prognose.data import CountySeries
from prognose.synthetic import generate_synthetic, make_world

START = date(2020, 3, 2)  # Montag

# schnelle Modellauswahl für Läufe über die ganze Pipeline
SMALL_MODELS = {
    "seirqd": {"enabled": False},
    "gp": {"enabled": False},
    "qnn": {"enabled": False},
    "forest_moving": {"enabled": False},
    "nn": {"max_epochs": 10, "hidden_dims": [8], "early_stop_patience": 3},
    "forest": {"n_trees": 5, "max_depth": 4},
    "gbdt": {"n_rounds": 5, "n_runs": 1, "max_depth": 2},
}
SMALL_ENSEMBLE = {"hidden_dims": [8], "max_epochs": 20, "early_stop_patience": 5}


def make_series(deaths, cases=None, fips="08001", state="Colorado", start=START, mobility=None):
    deaths = np.asarray(deaths, dtype=float)
    n = len(deaths)
    return CountySeries(
        fips=fips,
        state=state,
        dates=np.arange(np.datetime64(start, "D"), np.datetime64(start + timedelta(days=n), "D")),
        daily_deaths=deaths,
        daily_cases=np.asarray(cases if cases is not None else deaths * 10, dtype=float),
        mobility_index=mobility,
        county=f"County {fips}",
    )


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_small_world(directory, counties=6, days=70, forecast_len=14, seed=7, **overrides) -> Path:
    """
    Synthetische Welt plus ``config.json`` in ``directory``; der Prognosezeitraum
    beginnt nach ``days`` Historientagen. Rückgabe: Pfad der Konfiguration.
    """
    directory = Path(directory)
    world = make_world(counties, seed=seed)
    output = generate_synthetic(world, days + forecast_len, directory)
    config = {
        "config_version": "1.0",
        "seed": seed,
        "forecast_len": forecast_len,
        "data": {
            "ground_truth": output.ground_truth.name,
            "static": output.static.name,
            "mobility": output.mobility.name,
        },
        "periods": [{"label": "period1", "start": (world.start_date + timedelta(days=days)).isoformat()}],
        "output_dir": "run",
        "aggregation_days": 3,
        "clustering": {"k": 2},
        "models": SMALL_MODELS,
        "ensemble": SMALL_ENSEMBLE,
    }
    config.update(overrides)
    path = directory / "config.json"
    path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return path
