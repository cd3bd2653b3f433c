from __future__ import annotations

import numpy as np
import pytest

from hemsbench.battery import RESU_6_5, BatterySpec
from hemsbench.core import SystemConfig, TouTariff


def sunny_day(pv_peak=4.0, base_load=0.6, seed=0):
    """One 48-slot day: half-sine PV between 06:00 and 18:00, noisy load."""
    rng = np.random.default_rng(seed)
    h = (np.arange(48) + 0.5) / 2.0
    pv = np.where((h > 6) & (h < 18), pv_peak * np.sin(np.pi * (h - 6) / 12), 0.0)
    demand = base_load + 0.8 * rng.random(48)
    demand[34:42] += 1.5  # evening peak
    return demand, pv


def days_of(n_days, **kw):
    parts = [sunny_day(seed=k, **kw) for k in range(n_days)]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


@pytest.fixture
def tariff():
    return TouTariff()


@pytest.fixture
def cfg4():
    return SystemConfig.for_pv(4.0)


@pytest.fixture
def resu():
    return RESU_6_5


@pytest.fixture
def toy_battery():
    return BatterySpec("toy", 2.0, 2.0, 4.2)


# ---------------------------------------------------------------- acceptance report

_VERDICTS: dict[int, tuple[str, str, str]] = {}


class _Criterion:
    def __init__(self, number: int, title: str):
        self.number, self.title, self.notes = number, title, []

    def note(self, text: str) -> None:
        self.notes.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        detail = "; ".join(self.notes)
        if exc_type is None:
            _VERDICTS[self.number] = ("PASS", self.title, detail)
        else:
            why = str(exc).splitlines()[0] if str(exc) else exc_type.__name__
            _VERDICTS[self.number] = ("FAIL", self.title, "; ".join(filter(None, [detail, why])))
        return False


@pytest.fixture
def criterion():
    """``with criterion(3, "title") as c:`` records PASS or FAIL for the summary."""
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        verdict, title, detail = _VERDICTS[n]
        line = f"criterion {n:2d}: {verdict}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
