"""
SEIR-QD-Kompartimentmodell je Kreis.

Zustände: S (empfänglich), E (exponiert), I (infiziert), Q (in Quarantäne,
= bestätigter Fall), R (genesen), D (verstorben). Genesung und Tod führen
ausschließlich über Q. Gemeldete kumulative Fälle entsprechen Q+R+D.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from .exceptions import IntegrationError

logger = logging.getLogger(__name__)

STEPS_PER_DAY = 4
MIN_WINDOW_DAYS = 14
# Werte unterhalb dieser Schwelle gelten als Rundungsrauschen und werden auf 0 gesetzt
NEGATIVE_TOLERANCE = 1e-9
PARAM_NAMES = ("beta", "sigma", "q_rate", "gamma", "mu", "E0", "I0")
RATE_UPPER = {"beta": 3.0, "sigma": 1.0, "q_rate": 1.0, "gamma": 1.0, "mu": 0.5}
# Strafwert für Parameter, bei denen die Integration scheitert
FAILED_LOSS = 1e12


class SeirQdState(NamedTuple):
    S: float
    E: float
    I: float
    Q: float
    R: float
    D: float


@dataclass(frozen=True)
class SeirQdParams:
    beta: float
    sigma: float
    q_rate: float
    gamma: float
    mu: float
    E0: float
    I0: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values) -> "SeirQdParams":
        return cls(*(float(v) for v in values))

    def initial_state(self, N: float) -> SeirQdState:
        return SeirQdState(N - self.E0 - self.I0, self.E0, self.I0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class FitConfig:
    weight_cases: float = 0.8
    weight_deaths: float = 0.2
    severity_threshold: float = 50.0
    max_iters: int = 2000
    tolerance: float = 1e-8
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.weight_cases < 0 or self.weight_deaths < 0:
            raise ValueError("Gewichte müssen >= 0 sein")
        if self.weight_cases + self.weight_deaths <= 0:
            raise ValueError("weight_cases + weight_deaths muss > 0 sein")

    def effective_weights(self, cumulative_deaths: float) -> tuple:
        """
        Unterhalb der Schwelle zählen die Fälle stärker, darüber werden die
        Gewichte getauscht und die Toten bevorzugt.
        """
        low, high = sorted((self.weight_cases, self.weight_deaths))
        if cumulative_deaths < self.severity_threshold:
            return high, low
        return low, high


@dataclass
class SeirQdFit:
    fips: str
    params: SeirQdParams
    population: float
    start_state: SeirQdState
    end_state: SeirQdState
    window_days: int
    loss: float
    initial_loss: float
    converged: bool
    # bestes Zielfunktionsniveau je akzeptierter Iteration, über alle Neustarts
    trace: list = field(default_factory=list)


# ---------------------------------------------------
# Dynamik
# ---------------------------------------------------
def _rhs(x, beta, sigma, q_rate, gamma, mu, N):
    S, E, I, Q, _, _ = x
    infection = beta * S * I / N
    return (
        -infection,
        infection - sigma * E,
        sigma * E - q_rate * I,
        q_rate * I - gamma * Q - mu * Q,
        gamma * Q,
        mu * Q,
    )


def seirqd_rhs(state: SeirQdState, params: SeirQdParams, N: float) -> SeirQdState:
    if N <= 0:
        raise ValueError(f"Bevölkerung muss > 0 sein, erhalten: {N}")
    return SeirQdState(*_rhs(
        tuple(state), params.beta, params.sigma, params.q_rate, params.gamma, params.mu, N,
    ))


def integrate(
    params: SeirQdParams,
    N: float,
    days: int,
    initial: SeirQdState | None = None,
    steps_per_day: int = STEPS_PER_DAY,
) -> np.ndarray:
    """
    RK4 mit festem Schritt; Ausgabe je Tag, Zeile 0 = Anfangszustand.
    Rückgabe: Feld der Form (days + 1, 6).
    """
    if days < 1:
        raise ValueError(f"Horizont muss >= 1 Tag sein, erhalten: {days}")
    if N <= 0:
        raise ValueError(f"Bevölkerung muss > 0 sein, erhalten: {N}")

    rates = (params.beta, params.sigma, params.q_rate, params.gamma, params.mu, N)
    x = tuple(float(v) for v in (initial or params.initial_state(N)))
    dt = 1.0 / steps_per_day
    out = np.empty((days + 1, 6))
    out[0] = x
    step = 0
    for day in range(1, days + 1):
        for _ in range(steps_per_day):
            step += 1
            k1 = _rhs(x, *rates)
            k2 = _rhs(tuple(a + 0.5 * dt * b for a, b in zip(x, k1)), *rates)
            k3 = _rhs(tuple(a + 0.5 * dt * b for a, b in zip(x, k2)), *rates)
            k4 = _rhs(tuple(a + dt * b for a, b in zip(x, k3)), *rates)
            x = tuple(
                a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4)
            )
            if not all(math.isfinite(v) for v in x):
                raise IntegrationError(step)
            if min(x) < 0.0:
                if min(x) < -NEGATIVE_TOLERANCE * max(N, 1.0):
                    logger.debug("Negativer Zustand in Schritt %d auf 0 geklemmt: %s", step, x)
                x = tuple(max(v, 0.0) for v in x)
        out[day] = x
    return out


def modelled_cases(trajectory: np.ndarray) -> np.ndarray:
    """Kumulative bestätigte Fälle Q+R+D."""
    return trajectory[:, 3] + trajectory[:, 4] + trajectory[:, 5]


# ---------------------------------------------------
# Anpassung
# ---------------------------------------------------
def default_guess(active_cases: float) -> SeirQdParams:
    i0 = max(float(active_cases), 1.0)
    return SeirQdParams(beta=0.5, sigma=0.2, q_rate=0.1, gamma=0.05, mu=0.01, E0=2.0 * i0, I0=i0)


def parameter_bounds(N: float) -> list[tuple]:
    return [(0.0, RATE_UPPER[name]) for name in PARAM_NAMES[:5]] + [(0.0, N), (0.0, N)]


def training_window(series) -> tuple:
    """Kumulative Fälle/Tote ab dem ersten Tag mit gemeldetem Fall."""
    cum_cases = series.cumulative_cases
    cum_deaths = series.cumulative_deaths
    first = int(np.argmax(cum_cases > 0)) if np.any(cum_cases > 0) else len(cum_cases)
    return cum_cases[first:], cum_deaths[first:]


def _objective_factory(cum_cases, cum_deaths, N, start_q, start_d, weights, scale):
    wc, wd = weights
    norm_c = max(float(np.max(cum_cases)), 1.0) ** 2
    norm_d = max(float(np.max(cum_deaths)), 1.0) ** 2
    days = len(cum_cases) - 1

    def objective(z):
        params = SeirQdParams.from_array(np.asarray(z) * scale)
        s0 = N - params.E0 - params.I0 - start_q - start_d
        if s0 < 0:
            return FAILED_LOSS
        start = SeirQdState(s0, params.E0, params.I0, start_q, 0.0, start_d)
        try:
            trajectory = integrate(params, N, days, initial=start)
        except IntegrationError:
            return FAILED_LOSS
        sse_c = float(np.sum((modelled_cases(trajectory) - cum_cases) ** 2))
        sse_d = float(np.sum((trajectory[:, 5] - cum_deaths) ** 2))
        return wc * sse_c / norm_c + wd * sse_d / norm_d

    return objective


def _simplex(center, lower, upper, rng, spread):
    """Startsimplex um ``center``; Ecken innerhalb der Schranken."""
    n = len(center)
    vertices = [center]
    for i in range(n):
        vertex = center.copy()
        step = spread * (1.0 + rng.random()) if rng is not None else spread
        vertex[i] = vertex[i] * (1.0 + step) if vertex[i] != 0 else step
        vertices.append(np.clip(vertex, lower, upper))
    return np.array(vertices)


def fit(series, N: float, cfg: FitConfig | None = None, guess: SeirQdParams | None = None) -> SeirQdFit:
    """
    Gewichtete Kleinste-Quadrate-Anpassung an kumulative Fälle und Tote.
    Nelder-Mead mit Schranken in auf die Startwerte normierten Koordinaten;
    der erste Lauf startet an der Startschätzung, jeder weitere vom bisher
    besten Punkt mit gestreutem Simplex.
    """
    cfg = cfg or FitConfig()
    if N <= 0:
        raise ValueError(f"Bevölkerung muss > 0 sein, erhalten: {N}")
    cum_cases, cum_deaths = training_window(series)
    if len(cum_cases) < MIN_WINDOW_DAYS:
        raise ValueError(
            f"{series.fips}: {len(cum_cases)} Tage mit Fällen, mindestens {MIN_WINDOW_DAYS} nötig"
        )

    start_d = float(cum_deaths[0])
    start_q = max(float(cum_cases[0]) - start_d, 0.0)
    guess = guess or default_guess(start_q)
    weights = cfg.effective_weights(float(cum_deaths[-1]))

    scale = guess.as_array()
    scale[scale == 0] = 1.0
    bounds = parameter_bounds(N)
    lower = np.array([lo for lo, _ in bounds]) / scale
    upper = np.array([hi for _, hi in bounds]) / scale
    objective = _objective_factory(cum_cases, cum_deaths, N, start_q, start_d, weights, scale)

    z0 = np.clip(guess.as_array() / scale, lower, upper)
    initial_loss = objective(z0)
    best_z, best_loss = z0, initial_loss
    trace = [initial_loss]
    converged = False
    rng = np.random.default_rng(cfg.seed)

    def record(zk):
        trace.append(min(trace[-1], objective(zk)))

    for restart in range(max(int(cfg.restarts), 1)):
        simplex = _simplex(best_z, lower, upper, None if restart == 0 else rng, 0.05 if restart == 0 else 0.25)
        result = minimize(
            objective,
            best_z,
            method="Nelder-Mead",
            bounds=list(zip(lower, upper)),
            callback=record,
            options={
                "maxiter": int(cfg.max_iters),
                "initial_simplex": simplex,
                "fatol": cfg.tolerance,
                "xatol": 1e-7,
                "adaptive": True,
            },
        )
        converged = converged or bool(result.success)
        if result.fun < best_loss:
            best_z, best_loss = np.asarray(result.x), float(result.fun)

    params = SeirQdParams.from_array(best_z * scale)
    start = SeirQdState(N - params.E0 - params.I0 - start_q - start_d, params.E0, params.I0, start_q, 0.0, start_d)
    trajectory = integrate(params, N, len(cum_cases) - 1, initial=start)
    if not converged:
        logger.warning(
            "%s: SEIR-QD-Anpassung nach %d Iterationen nicht konvergiert (Verlust %.4g)",
            series.fips, cfg.max_iters, best_loss,
        )
    return SeirQdFit(
        fips=series.fips,
        params=params,
        population=float(N),
        start_state=start,
        end_state=SeirQdState(*trajectory[-1]),
        window_days=len(cum_cases),
        loss=float(best_loss),
        initial_loss=float(initial_loss),
        converged=converged,
        trace=trace,
    )


def predict_mean_deaths(
    params: SeirQdParams,
    N: float,
    forecast_len: int,
    start: SeirQdState | None = None,
) -> np.ndarray:
    """
    Tägliche Zuwächse von D über den Prognosezeitraum, fortgesetzt vom
    Endzustand des Trainingsfensters (``start``).
    """
    trajectory = integrate(params, N, forecast_len, initial=start)
    return np.clip(np.diff(trajectory[:, 5]), 0.0, None)


def write_params(path, fits: Sequence[SeirQdFit]) -> Path:
    rows = [
        (f.fips, *f.params.as_array(), f.converged, f.loss)
        for f in sorted(fits, key=lambda f: f.fips)
    ]
    frame = pd.DataFrame(rows, columns=["fips", *PARAM_NAMES, "converged", "loss"])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.8g")
    return path
