"""The ``pv-forecast`` reference service: data models and handlers."""

from __future__ import annotations

from esg.core import HandlerError, format_timestamp, parse_timestamp
from esg.pv.model import DegenerateFit, fit_peak_power, forecast
from esg.schema import (
    ArrayNode,
    NumberNode,
    ObjectNode,
    ServiceSpec,
    ServiceVersion,
    geographic_position,
    timestamp,
    value_message_list,
)

_SUNRISE = "2024-06-21T04:00:00.000Z"
_SUNSET = "2024-06-21T20:00:00.000Z"
_POSITION = {"latitude": 49.01, "longitude": 8.4}
_PARAMS = {"peak_power_kw": 4.2}

PV_PARAMETERS = ObjectNode(
    fields={
        "peak_power_kw": NumberNode(
            minimum=0, description="Fitted peak power of the PV system in kW.", example=4.2
        )
    },
    required={"peak_power_kw"},
    description="User specific parameters. Store them locally and send them with every request.",
    example=_PARAMS,
)

_DAYLIGHT = {
    "position": geographic_position("Location of the PV system. Validated, not used by the model."),
    "sunrise": timestamp("Sunrise of the day in question.", example=_SUNRISE),
    "sunset": timestamp("Sunset of the day in question.", example=_SUNSET),
}

FIT_INPUT = ObjectNode(
    fields={
        **_DAYLIGHT,
        "measurements": value_message_list(
            "Measured PV power in kW. Null values are skipped.", min_items=1,
            example=[
                {"time": "2024-06-21T08:00:00.000Z", "value": 2.9},
                {"time": "2024-06-21T12:00:00.000Z", "value": 4.3},
                {"time": "2024-06-21T13:00:00.000Z", "value": None},
            ],
        ),
    },
    required={"position", "sunrise", "sunset", "measurements"},
    description="Historic measurements to fit the peak power on.",
)

FIT_OUTPUT = ObjectNode(
    fields={
        "parameters": PV_PARAMETERS,
        "residual_rms_kw": NumberNode(minimum=0, description="RMS of the fit residuals in kW.",
                                      example=0.12),
    },
    required={"parameters", "residual_rms_kw"},
)

REQUEST_INPUT = ObjectNode(
    fields={
        **_DAYLIGHT,
        "parameters": PV_PARAMETERS,
        "times": ArrayNode(
            item=timestamp(),
            increasing_by="",
            min_items=1,
            description="Times to forecast for, strictly increasing.",
            example=["2024-06-21T10:00:00.000Z", "2024-06-21T11:00:00.000Z"],
        ),
    },
    required={"position", "sunrise", "sunset", "parameters", "times"},
    description="Forecast request.",
)

REQUEST_OUTPUT = ObjectNode(
    fields={"forecast": value_message_list("Forecast PV power in kW.")},
    required={"forecast"},
)


def _window(payload: dict):
    sunrise = parse_timestamp(payload["sunrise"])
    sunset = parse_timestamp(payload["sunset"])
    if not sunset > sunrise:
        raise HandlerError("sunset must be after sunrise")
    return sunrise, sunset


def handle_fit(payload: dict, progress=None) -> dict:
    sunrise, sunset = _window(payload)
    points = payload["measurements"]
    times = [parse_timestamp(p["time"]) for p in points]
    values = [p["value"] for p in points]
    try:
        fit = fit_peak_power(times, values, sunrise, sunset)
    except DegenerateFit as exc:
        raise HandlerError(str(exc)) from None
    return {
        "parameters": {"peak_power_kw": fit.peak_power_kw},
        "residual_rms_kw": fit.residual_rms_kw,
    }


def handle_request(payload: dict, progress=None) -> dict:
    sunrise, sunset = _window(payload)
    times = [parse_timestamp(t) for t in payload["times"]]
    values = forecast(payload["parameters"]["peak_power_kw"], sunrise, sunset, times)
    return {
        "forecast": [
            {"time": format_timestamp(t), "value": v} for t, v in zip(times, values)
        ]
    }


PV_V1 = ServiceVersion(
    request_input=REQUEST_INPUT,
    request_output=REQUEST_OUTPUT,
    request_handler=handle_request,
    fit_input=FIT_INPUT,
    fit_output=FIT_OUTPUT,
    fit_handler=handle_fit,
    description="Half-sine clear-sky forecast scaled by a fitted peak power.",
)

pv_service = ServiceSpec(
    name="pv-forecast",
    versions={"v1": PV_V1},
    description=(
        "Forecasts PV power generation. Fit the peak power on historic measurements via "
        "/fit-parameters/, keep the returned parameters, and send them with every /request/. "
        "The position is validated but the model only uses the sunrise/sunset window."
    ),
)
