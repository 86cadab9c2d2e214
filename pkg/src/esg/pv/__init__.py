from esg.pv.model import (
    DegenerateFit,
    PeakPowerModel,
    PvFit,
    fit_peak_power,
    fit_scale,
    forecast,
    shape_value,
    shape_values,
)
from esg.pv.service import pv_service

__all__ = [
    "DegenerateFit", "PeakPowerModel", "PvFit", "fit_peak_power", "fit_scale", "forecast",
    "shape_value", "shape_values", "pv_service",
]
