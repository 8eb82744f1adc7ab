"""
Gauß-Prozess-Regression je Kreis über dem Tagesindex mit Kern
Konstante + rational-quadratisch. Hyperparameter maximieren die marginale
Likelihood (L-BFGS-B im Log-Raum, Gradienten per zentraler Differenz).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize

from .exceptions import FactorizationError

logger = logging.getLogger(__name__)

PARAM_NAMES = ("const_value", "amplitude", "length_scale", "alpha_mix", "noise")
BOUNDS = {
    "const_value": (1e-4, 1e4),
    "amplitude": (1e-4, 1e4),
    "length_scale": (1.0, 200.0),
    "alpha_mix": (0.1, 100.0),
    "noise": (1e-6, 10.0),
}
JITTER_STEPS = (0.0, 1e-8, 1e-6, 1e-4)
GRADIENT_STEP = 1e-5
# negativer Log-Likelihood-Wert, wenn die Zerlegung scheitert
FAILED_OBJECTIVE = 1e10


@dataclass(frozen=True)
class RqKernelParams:
    const_value: float = 1.0
    amplitude: float = 1.0
    length_scale: float = 10.0
    alpha_mix: float = 1.0
    noise: float = 0.1

    def __post_init__(self):
        for name in PARAM_NAMES:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} muss > 0 sein")

    def to_log(self) -> np.ndarray:
        return np.log([getattr(self, name) for name in PARAM_NAMES])

    @classmethod
    def from_log(cls, theta) -> "RqKernelParams":
        return cls(*(float(v) for v in np.exp(theta)))


def log_bounds() -> list[tuple]:
    return [(math.log(BOUNDS[n][0]), math.log(BOUNDS[n][1])) for n in PARAM_NAMES]


def kernel_eval(params: RqKernelParams, x1: float, x2: float) -> float:
    d2 = (float(x1) - float(x2)) ** 2
    rq = (1.0 + d2 / (2.0 * params.alpha_mix * params.length_scale ** 2)) ** (-params.alpha_mix)
    return params.const_value + params.amplitude * rq


def kernel_matrix(params: RqKernelParams, xa, xb) -> np.ndarray:
    xa = np.asarray(xa, dtype=float).reshape(-1, 1)
    xb = np.asarray(xb, dtype=float).reshape(1, -1)
    d2 = (xa - xb) ** 2
    rq = (1.0 + d2 / (2.0 * params.alpha_mix * params.length_scale ** 2)) ** (-params.alpha_mix)
    return params.const_value + params.amplitude * rq


def factorize(params: RqKernelParams, xs, fips: str = ""):
    """
    Cholesky von K + noise*I; scheitert sie, wird Jitter schrittweise
    erhöht (1e-8, 1e-6, 1e-4).
    """
    K = kernel_matrix(params, xs, xs)
    n = len(K)
    for jitter in JITTER_STEPS:
        try:
            factor = cho_factor(K + (params.noise + jitter) * np.eye(n), lower=True)
        except LinAlgError:
            continue
        if np.all(np.isfinite(factor[0])):
            if jitter:
                logger.debug("%s: Zerlegung mit Jitter %g", fips or "?", jitter)
            return factor
    raise FactorizationError(fips)


def log_marginal_likelihood(params: RqKernelParams, xs, ys, fips: str = "") -> float:
    ys = np.asarray(ys, dtype=float)
    if len(ys) < 1:
        raise ValueError("Mindestens ein Trainingspunkt nötig")
    factor = factorize(params, xs, fips)
    alpha = cho_solve(factor, ys)
    log_det = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    n = len(ys)
    return float(-0.5 * ys @ alpha - 0.5 * log_det - 0.5 * n * math.log(2.0 * math.pi))


# ---------------------------------------------------
# Posterior
# ---------------------------------------------------
@dataclass
class GpPosterior:
    params: RqKernelParams
    xs: np.ndarray
    ys: np.ndarray
    factor: tuple
    alpha: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0
    fips: str = ""
    log_ml: float = float("nan")
    fallback: bool = False

    def mean(self, x_new) -> np.ndarray:
        k_star = kernel_matrix(self.params, x_new, self.xs)
        return (k_star @ self.alpha) * self.y_std + self.y_mean

    def variance(self, x_new) -> np.ndarray:
        """Posterior-Varianz der latenten Funktion in Zieleinheiten, >= 0."""
        x_new = np.asarray(x_new, dtype=float)
        k_star = kernel_matrix(self.params, x_new, self.xs)
        v = cho_solve(self.factor, k_star.T)
        prior = self.params.const_value + self.params.amplitude
        var = prior - np.sum(k_star * v.T, axis=1)
        return np.clip(var, 0.0, None) * self.y_std ** 2


def fit_posterior(params: RqKernelParams, xs, ys, fips: str = "", standardize: bool = False) -> GpPosterior:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    y_mean, y_std = 0.0, 1.0
    if standardize:
        y_mean = float(ys.mean())
        y_std = float(ys.std()) or 1.0
    scaled = (ys - y_mean) / y_std
    factor = factorize(params, xs, fips)
    return GpPosterior(
        params=params, xs=xs, ys=scaled, factor=factor,
        alpha=cho_solve(factor, scaled), y_mean=y_mean, y_std=y_std, fips=fips,
        log_ml=log_marginal_likelihood(params, xs, scaled, fips),
    )


def gp_predict_mean(posterior: GpPosterior, forecast_days) -> np.ndarray:
    return np.clip(posterior.mean(forecast_days), 0.0, None)


# ---------------------------------------------------
# Hyperparameter
# ---------------------------------------------------
@dataclass(frozen=True)
class GpConfig:
    restarts: int = 3
    seed: int = 0
    max_iter: int = 200
    # None = ganze bereinigte Reihe
    train_window: int | None = None


@dataclass
class HyperparamResult:
    params: RqKernelParams
    log_ml: float
    initial_log_ml: float
    fallback: bool = False
    # (Start-LML, End-LML) je Neustart
    restarts: list = field(default_factory=list)


def _numeric_gradient(fun, theta, h=GRADIENT_STEP):
    grad = np.zeros_like(theta)
    for i in range(len(theta)):
        step = np.zeros_like(theta)
        step[i] = h
        grad[i] = (fun(theta + step) - fun(theta - step)) / (2.0 * h)
    return grad


def optimize_hyperparams(xs, ys, init: RqKernelParams | None = None, cfg: GpConfig | None = None, fips: str = "") -> HyperparamResult:
    """
    Maximiert die marginale Likelihood über mehrere Starts: der erste an
    ``init``, weitere log-gleichverteilt in den Schranken. Jeder Lauf endet
    mindestens auf dem Niveau seines Starts.
    """
    cfg = cfg or GpConfig()
    init = init or RqKernelParams()
    bounds = log_bounds()
    lower = np.array([lo for lo, _ in bounds])
    upper = np.array([hi for _, hi in bounds])

    def objective(theta):
        try:
            value = -log_marginal_likelihood(RqKernelParams.from_log(theta), xs, ys, fips)
        except FactorizationError:
            return FAILED_OBJECTIVE
        return value if math.isfinite(value) else FAILED_OBJECTIVE

    rng = np.random.default_rng(cfg.seed)
    theta_init = np.clip(init.to_log(), lower, upper)
    initial_value = objective(theta_init)
    starts = [theta_init] + [rng.uniform(lower, upper) for _ in range(max(cfg.restarts, 1) - 1)]

    best_theta, best_value = theta_init, initial_value
    trace = []
    for theta0 in starts:
        start_value = objective(theta0)
        result = minimize(
            objective,
            theta0,
            jac=lambda t: _numeric_gradient(objective, t),
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": cfg.max_iter},
        )
        theta, value = np.asarray(result.x), float(result.fun)
        if not value <= start_value:
            theta, value = theta0, start_value
        trace.append((-start_value, -value))
        if value < best_value:
            best_theta, best_value = theta, value

    if best_value >= FAILED_OBJECTIVE:
        logger.warning("%s: alle GP-Starts ohne gültige Zerlegung, Startwerte beibehalten", fips or "?")
        return HyperparamResult(init, -initial_value, -initial_value, fallback=True, restarts=trace)
    return HyperparamResult(
        params=RqKernelParams.from_log(best_theta),
        log_ml=-best_value,
        initial_log_ml=-initial_value,
        restarts=trace,
    )


def fit_county_gp(fips: str, daily_deaths, cfg: GpConfig | None = None, init: RqKernelParams | None = None) -> GpPosterior:
    """
    GP auf den (ggf. gefensterten) Tageswerten; Eingaben sind Tagesindizes
    0..n-1 relativ zum Fensterbeginn, Ziele standardisiert.
    """
    cfg = cfg or GpConfig()
    ys = np.asarray(daily_deaths, dtype=float)
    if cfg.train_window:
        ys = ys[-cfg.train_window:]
    if len(ys) < 2:
        raise ValueError(f"{fips}: mindestens 2 Trainingstage nötig")
    xs = np.arange(len(ys), dtype=float)
    y_mean = float(ys.mean())
    y_std = float(ys.std()) or 1.0
    scaled = (ys - y_mean) / y_std
    result = optimize_hyperparams(xs, scaled, init, cfg, fips)
    posterior = fit_posterior(result.params, xs, ys, fips, standardize=True)
    posterior.fallback = result.fallback
    return posterior


def write_hyperparams(path, posteriors: Sequence[GpPosterior]) -> Path:
    rows = [
        (p.fips, *(getattr(p.params, n) for n in PARAM_NAMES), p.log_ml)
        for p in sorted(posteriors, key=lambda p: p.fips)
    ]
    frame = pd.DataFrame(rows, columns=["fips", *PARAM_NAMES, "log_marginal_likelihood"])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.8g")
    return path
