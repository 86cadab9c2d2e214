"""Half-sine clear-sky PV model with a single fittable peak power.

Generation between sunrise and sunset follows ``p * sin(pi * x)`` where
``x`` is the fraction of daylight elapsed; it is zero at night. The only
user-specific parameter is the peak power ``p`` (kW).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted


class DegenerateFit(ValueError):
    pass


@dataclass(frozen=True)
class PvFit:
    peak_power_kw: float
    residual_rms_kw: float


def _seconds(t: datetime | float) -> float:
    return t.timestamp() if isinstance(t, datetime) else float(t)


def _check_window(sunrise: float, sunset: float) -> None:
    if not sunset > sunrise:
        raise ValueError("sunset must be after sunrise")


def shape_value(t: datetime | float, sunrise: datetime | float, sunset: datetime | float) -> float:
    """Normalised clear-sky generation in [0, 1] at time ``t``."""
    t, t_r, t_s = _seconds(t), _seconds(sunrise), _seconds(sunset)
    _check_window(t_r, t_s)
    if t < t_r or t > t_s:
        return 0.0
    return max(0.0, math.sin(math.pi * (t - t_r) / (t_s - t_r)))


def shape_values(times: Iterable[datetime | float], sunrise, sunset) -> np.ndarray:
    return np.array([shape_value(t, sunrise, sunset) for t in times], dtype=float)


def fit_scale(shape: Sequence[float], measured: Sequence[float | None]) -> PvFit:
    """Least-squares ``p >= 0`` minimising ``sum((m - p*s)**2)`` over non-null points."""
    s = np.asarray(shape, dtype=float)
    m = np.array([np.nan if v is None else v for v in measured], dtype=float)
    if s.shape != m.shape:
        raise ValueError("shape and measurements differ in length")
    keep = ~np.isnan(m)
    s, m = s[keep], m[keep]
    denom = float(np.dot(s, s))
    if s.size == 0 or denom == 0.0:
        raise DegenerateFit("all measurements outside daylight window")
    p = max(0.0, float(np.dot(m, s)) / denom)
    residual = math.sqrt(float(np.sum((m - p * s) ** 2)) / s.size)
    return PvFit(p, residual)


def fit_peak_power(times: Sequence[datetime | float], measured: Sequence[float | None],
                   sunrise, sunset) -> PvFit:
    return fit_scale(shape_values(times, sunrise, sunset), measured)


def forecast(peak_power_kw: float, sunrise, sunset, times: Sequence[datetime | float]) -> list[float]:
    if peak_power_kw < 0 or not math.isfinite(peak_power_kw):
        raise ValueError("peak power must be a non-negative finite number")
    secs = [_seconds(t) for t in times]
    if any(b <= a for a, b in zip(secs, secs[1:])):
        raise ValueError("times must be strictly increasing")
    return [peak_power_kw * shape_value(t, sunrise, sunset) for t in secs]


class PeakPowerModel(RegressorMixin, BaseEstimator):
    """Estimator wrapper around the half-sine model.

    ``X`` holds POSIX timestamps (seconds), one column; ``y`` holds measured
    power in kW with NaN marking gaps.

    Parameters
    ----------
    sunrise, sunset : float or datetime
        Daylight window shared by all samples.
    """

    def __init__(self, sunrise=0.0, sunset=1.0):
        self.sunrise = sunrise
        self.sunset = sunset

    def _times(self, X) -> np.ndarray:
        X = check_array(X, ensure_2d=False, dtype=float)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValueError("X must have exactly one column of timestamps")
            X = X[:, 0]
        return X

    def fit(self, X, y):
        times = self._times(X)
        y = check_array(y, ensure_2d=False, dtype=float, ensure_all_finite="allow-nan")
        if y.shape != times.shape:
            raise ValueError("X and y differ in length")
        fit = fit_peak_power(times, y, self.sunrise, self.sunset)
        self.peak_power_kw_ = fit.peak_power_kw
        self.residual_rms_kw_ = fit.residual_rms_kw
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "peak_power_kw_")
        times = self._times(X)
        return self.peak_power_kw_ * shape_values(times, self.sunrise, self.sunset)
