import numpy as np
import pytest

from fccrate.cell_sim import (ChargingSample, LoadProfile, get_preset, run_charge)
from fccrate.crowd import ChargingEvent

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("] ")[1].split(".")[0])):
        terminalreporter.write_line(line)


@pytest.fixture
def gs3():
    return get_preset("gs3")


@pytest.fixture
def gs4():
    return get_preset("gs4")


def charge(preset, loss=0.0, kind="ac", i_sys=10.0, start_soc=0.0, **kw):
    cell = preset.cell(preset.fcc_new_mah * (1 - loss))
    return run_charge(cell, preset.charger(kind), preset.controller(),
                      LoadProfile.constant(i_sys), start_soc=start_soc, **kw)


def make_event(device_id, socs, seconds_per_pct, voltages, t0=1_000_000, model_id="M1",
               temp_c=25.0):
    """Hand-built charging event with a constant per-percent time."""
    samples = []
    t = t0
    for j, (soc, v) in enumerate(zip(socs, voltages)):
        if j:
            t += seconds_per_pct * (soc - socs[j - 1])
        samples.append(ChargingSample(int(round(t)), int(soc), float(v), temp_c, "ac", "good",
                                      0.0, device_id, model_id))
    deltas = (None,) + tuple(float(b.t - a.t) for a, b in zip(samples, samples[1:]))
    return ChargingEvent(device_id, model_id, tuple(samples), deltas)


def ramp_voltages(socs, cc_end, v_start=3700.0, v_max=4200.0):
    """Voltage rising linearly to v_max at cc_end, flat after."""
    socs = np.asarray(socs, dtype=float)
    v = v_start + (v_max - v_start) * (socs - socs[0]) / (cc_end - socs[0])
    return np.minimum(v, v_max)
