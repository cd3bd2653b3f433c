"""Benchmarking toolkit for PV-battery home energy management strategies."""

from .battery import (LINEAR, NONLINEAR, BatterySpec, EfficiencyModel, battery_for_pv,
                      clamp_power, replay_schedule, soc_step_linear, soc_step_nonlinear)
from .core import (HalfHourSeries, Schedule, SystemConfig, TouTariff, tariff_rate,
                   validate_schedule)

__version__ = "0.1.0"

__all__ = [
    "BatterySpec", "EfficiencyModel", "HalfHourSeries", "LINEAR", "NONLINEAR", "Schedule",
    "SystemConfig", "TouTariff", "battery_for_pv", "clamp_power", "replay_schedule",
    "soc_step_linear", "soc_step_nonlinear", "tariff_rate", "validate_schedule",
]
