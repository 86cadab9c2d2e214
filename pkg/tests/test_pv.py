import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esg.core import HandlerError
from esg.pv import (
    DegenerateFit,
    PeakPowerModel,
    fit_peak_power,
    fit_scale,
    forecast,
    shape_value,
    shape_values,
)
from esg.pv.service import FIT_INPUT, REQUEST_INPUT, handle_fit, handle_request
from esg.schema import validate

SUNRISE = datetime(2024, 6, 21, 6, tzinfo=timezone.utc)
SUNSET = datetime(2024, 6, 21, 18, tzinfo=timezone.utc)
NINE = datetime(2024, 6, 21, 9, tzinfo=timezone.utc)
NOON = datetime(2024, 6, 21, 12, tzinfo=timezone.utc)


def grid_minimizer(s, m, hi=10.0, step=1e-4):
    """Brute force: evaluate the SSE of every grid point and take the argmin."""
    grid = np.arange(0.0, hi + step / 2, step)
    s = np.asarray(s, dtype=float)
    m = np.asarray(m, dtype=float)
    sse = ((m[None, :] - grid[:, None] * s[None, :]) ** 2).sum(axis=1)
    return float(grid[int(np.argmin(sse))])


def sse(p, s, m):
    return sum((mi - p * si) ** 2 for si, mi in zip(s, m))


def test_shape_midpoint_and_edges():
    assert shape_value(NOON, SUNRISE, SUNSET) == 1.0
    assert shape_value(SUNRISE, SUNRISE, SUNSET) == 0.0
    assert shape_value(SUNRISE - timedelta(hours=1), SUNRISE, SUNSET) == 0.0
    assert shape_value(SUNSET + timedelta(seconds=1), SUNRISE, SUNSET) == 0.0


def test_shape_at_nine():
    # independent value of sin(pi/4); the double nearest to it is one ulp
    # above what math.sin returns, so compare at a 1e-15 tolerance
    expected = 0.7071067811865476
    assert shape_value(NINE, SUNRISE, SUNSET) == pytest.approx(expected, abs=1e-15)
    assert shape_value(NINE, SUNRISE, SUNSET) == pytest.approx(math.sqrt(0.5), abs=1e-15)


def test_shape_requires_window():
    with pytest.raises(ValueError):
        shape_value(NOON, SUNSET, SUNRISE)


def test_worked_example_is_exact():
    fit = fit_scale([0, 0.5, 1.0, 0.5], [0, 1.0, 2.0, 1.0])
    assert fit.peak_power_kw == 2.0
    assert fit.residual_rms_kw == 0.0
    assert grid_minimizer([0, 0.5, 1.0, 0.5], [0, 1.0, 2.0, 1.0]) == pytest.approx(2.0, abs=1e-9)


def test_zero_signal_fits_zero():
    assert fit_scale([0.2, 0.5, 1.0], [0, 0, 0]).peak_power_kw == 0.0


def test_negative_correlation_clamps_to_zero():
    assert fit_scale([0.5, 1.0], [-1.0, -2.0]).peak_power_kw == 0.0


def test_exact_data_at_97_times():
    times = [SUNRISE + timedelta(minutes=7.5 * i) for i in range(97)]
    s = shape_values(times, SUNRISE, SUNSET)
    fit = fit_peak_power(times, list(3 * s), SUNRISE, SUNSET)
    assert fit.peak_power_kw == pytest.approx(3.0, abs=1e-12)
    assert fit.residual_rms_kw <= 1e-12


def test_nulls_are_skipped():
    full = fit_scale([0.5, 1.0, 0.5], [1.0, 2.0, 1.0])
    gappy = fit_scale([0.5, 1.0, 0.7, 0.5], [1.0, 2.0, None, 1.0])
    assert gappy == full


def test_degenerate_fit():
    with pytest.raises(DegenerateFit):
        fit_scale([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(DegenerateFit):
        fit_scale([0.5], [None])


def test_grid_oracle_on_noisy_instances():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(5, 60))
        s = rng.uniform(0, 1, n)
        p_true = rng.uniform(0.5, 9.0)
        m = p_true * s + rng.normal(0, 0.3, n)
        assert fit_scale(s, m).peak_power_kw == pytest.approx(grid_minimizer(s, m), abs=1e-3)


@settings(max_examples=200)
@given(st.floats(0.01, 100.0), st.lists(st.floats(0.0, 24.0), min_size=1, max_size=40, unique=True))
def test_noiseless_recovery(p, hours):
    times = sorted({SUNRISE + timedelta(hours=h) for h in hours})
    s = shape_values(times, SUNRISE, SUNSET)
    if not s.any():
        return
    values = forecast(p, SUNRISE, SUNSET, times)
    fit = fit_peak_power(times, values, SUNRISE, SUNSET)
    assert fit.peak_power_kw == pytest.approx(p, rel=1e-9)


# physically meaningful magnitudes; subnormals lose relative precision
powers = st.just(0.0) | st.floats(1e-6, 50.0)
TIMES = [SUNRISE + timedelta(minutes=30 * i) for i in range(30)]


@given(powers, st.integers(-8, 8))
def test_scale_equivariance_exact_for_powers_of_two(p, e):
    k = 2.0**e
    base = forecast(p, SUNRISE, SUNSET, TIMES)
    assert forecast(k * p, SUNRISE, SUNSET, TIMES) == [k * v for v in base]


@given(powers, st.just(0.0) | st.floats(1e-6, 10.0))
def test_scale_equivariance(p, k):
    # (k*p)*s and k*(p*s) round differently; they agree to a couple of ulps
    base = forecast(p, SUNRISE, SUNSET, TIMES)
    scaled = forecast(k * p, SUNRISE, SUNSET, TIMES)
    assert scaled == pytest.approx([k * v for v in base], rel=4.5e-16, abs=0)


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(0.05, 1.0), st.floats(0.0, 10.0)), min_size=2, max_size=30))
def test_least_squares_stationarity(points):
    s = [a for a, _ in points]
    m = [b for _, b in points]
    p = fit_scale(s, m).peak_power_kw
    assert sse(p, s, m) <= sse(p + 1e-6, s, m) + 1e-12
    if p > 1e-6:
        assert sse(p, s, m) <= sse(p - 1e-6, s, m) + 1e-12


def test_forecast_examples():
    assert forecast(2.0, SUNRISE, SUNSET, [NOON]) == [2.0]
    assert forecast(2.0, SUNRISE, SUNSET, [SUNRISE - timedelta(hours=2)]) == [0.0]
    assert forecast(1.5, SUNRISE, SUNSET, [NINE])[0] == pytest.approx(1.0606601717798212, abs=1e-15)


def test_forecast_rejects_bad_input():
    with pytest.raises(ValueError):
        forecast(-1.0, SUNRISE, SUNSET, [NOON])
    with pytest.raises(ValueError):
        forecast(1.0, SUNRISE, SUNSET, [NOON, NINE])


def test_estimator_api():
    t0, t1 = SUNRISE.timestamp(), SUNSET.timestamp()
    X = np.linspace(t0, t1, 25).reshape(-1, 1)
    y = 4.0 * shape_values(X[:, 0], t0, t1)
    y[3] = np.nan
    model = PeakPowerModel(sunrise=t0, sunset=t1).fit(X, y)
    assert model.peak_power_kw_ == pytest.approx(4.0, rel=1e-12)
    assert model.residual_rms_kw_ == pytest.approx(0.0, abs=1e-12)
    keep = ~np.isnan(y)
    assert model.score(X[keep], y[keep]) == pytest.approx(1.0)
    assert model.get_params() == {"sunrise": t0, "sunset": t1}
    with pytest.raises(ValueError):
        PeakPowerModel(t0, t1).fit(np.zeros((3, 2)), np.zeros(3))


# -- service handlers ------------------------------------------------------

def _fit_payload():
    return {
        "position": {"latitude": 49.0, "longitude": 8.4},
        "sunrise": "2024-06-21T06:00:00Z",
        "sunset": "2024-06-21T18:00:00Z",
        "measurements": [
            {"time": "2024-06-21T09:00:00Z", "value": 1.5 * math.sqrt(0.5)},
            {"time": "2024-06-21T12:00:00Z", "value": 1.5},
            {"time": "2024-06-21T13:00:00Z", "value": None},
        ],
    }


def test_fit_handler():
    assert validate(FIT_INPUT, _fit_payload()) == []
    out = handle_fit(_fit_payload())
    assert out["parameters"]["peak_power_kw"] == pytest.approx(1.5, rel=1e-12)
    assert out["residual_rms_kw"] == pytest.approx(0.0, abs=1e-12)


def test_request_handler():
    payload = {
        "position": {"latitude": 49.0, "longitude": 8.4},
        "sunrise": "2024-06-21T06:00:00Z",
        "sunset": "2024-06-21T18:00:00Z",
        "parameters": {"peak_power_kw": 2.0},
        "times": ["2024-06-21T05:00:00Z", "2024-06-21T12:00:00Z"],
    }
    assert validate(REQUEST_INPUT, payload) == []
    out = handle_request(payload)
    assert out == {"forecast": [
        {"time": "2024-06-21T05:00:00.000Z", "value": 0.0},
        {"time": "2024-06-21T12:00:00.000Z", "value": 2.0},
    ]}


def test_handlers_report_domain_errors():
    bad = _fit_payload()
    bad["sunset"] = bad["sunrise"]
    with pytest.raises(HandlerError):
        handle_fit(bad)
    night = _fit_payload()
    night["measurements"] = [{"time": "2024-06-21T22:00:00Z", "value": 1.0}]
    with pytest.raises(HandlerError, match="daylight"):
        handle_fit(night)
