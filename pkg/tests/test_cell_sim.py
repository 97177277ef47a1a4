"""Simulator behaviour: current rules, charge conservation, CC/CV shape."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fccrate.cell_sim import (CellSpec, ChargerSpec, ChargingSample, ControllerSpec,
                              LoadProfile, battery_current, effective_charger_current,
                              get_preset, measure_fcc_by_discharge, run_charge,
                              simulate_charge, temp_factor)
from fccrate.estimator import c_rate_over_interval, curves_from_samples, detect_cc_end
from fccrate.exceptions import InvalidSpec, NonConvergence

from conftest import charge


class TestCurrentRules:
    @pytest.mark.parametrize("charger, controller, derating, expected", [
        (1000, 1560, 1.0, 1000),
        (2100, 650, 1.0, 650),    # Galaxy S2 on a 2.1 A charger
        (1000, 1560, 0.93, 930),  # Galaxy S4 on a 1.0 A charger
    ])
    def test_min_rule(self, charger, controller, derating, expected):
        got = effective_charger_current(ChargerSpec(charger), ControllerSpec(controller, derating))
        assert got == pytest.approx(expected)

    @pytest.mark.parametrize("i_chg, i_sys, expected", [(925, 0, 925), (925, 10, 915), (426, 600, -174)])
    def test_battery_current(self, i_chg, i_sys, expected):
        assert battery_current(i_chg, i_sys) == expected


class TestSpecs:
    def test_invalid_capacity(self):
        with pytest.raises(InvalidSpec):
            CellSpec(2100, 2400)
        with pytest.raises(InvalidSpec):
            CellSpec(2100, 0)

    def test_capacity_above_label_allowed(self):
        CellSpec(1650, 1748)

    def test_ocv_must_not_decrease(self):
        with pytest.raises(InvalidSpec):
            CellSpec(2100, 2100, ocv_curve=((0, 3600), (50, 3500), (100, 4100)))

    def test_ocv_above_vmax(self):
        with pytest.raises(InvalidSpec):
            CellSpec(2100, 2100, v_max_mv=4100)

    def test_bad_cutoff_and_resistance(self):
        with pytest.raises(InvalidSpec):
            CellSpec(2100, 2100, cutoff_c_rate=1.5)
        with pytest.raises(InvalidSpec):
            CellSpec(2100, 2100, r_internal_mohm=0)

    def test_bad_dt(self, gs3):
        with pytest.raises(InvalidSpec):
            run_charge(gs3.cell(), gs3.charger(), gs3.controller(), dt=120)

    def test_sample_invariants(self):
        with pytest.raises(ValueError):
            ChargingSample(0, 101, 4000)
        with pytest.raises(ValueError):
            ChargingSample(0, 50, 2000)

    def test_temp_factor(self):
        assert temp_factor(25) == 1.0
        assert temp_factor(21) == 1.0
        assert temp_factor(0) == pytest.approx(3.0)
        assert 1.0 < temp_factor(11) < 3.0


class TestGroundTruth:
    def test_discharge_oracle_is_identity(self):
        assert measure_fcc_by_discharge(CellSpec(2100, 1042)) == 1042
        assert measure_fcc_by_discharge(CellSpec(2600, 2464)) == 2464

    @pytest.mark.parametrize("model, loss", [("gs2", 0.0), ("gs3", 0.25), ("gs4", 0.6)])
    def test_coulomb_integral_matches_discharge(self, model, loss):
        p = get_preset(model)
        cell = p.cell(p.fcc_new_mah * (1 - loss))
        res = run_charge(cell, p.charger(), p.controller(), LoadProfile.constant(10), dt=5)
        assert res.delivered_mah == pytest.approx(measure_fcc_by_discharge(cell), rel=0.01)


class TestChargeShape:
    def test_one_sample_per_percent(self, gs3):
        samples = simulate_charge(gs3.cell(), gs3.charger(), gs3.controller())
        assert [s.soc for s in samples] == list(range(0, 101))

    def test_cc_rate_new_gs3(self, gs3):
        res = charge(gs3)
        cc = [s for s in res.samples if s.soc <= 85]
        rate = c_rate_over_interval(cc[2].soc, cc[-1].soc, cc[2].t, cc[-1].t)
        assert rate == pytest.approx(0.44, abs=0.01)

    def test_cc_end_soc_matches_measured(self):
        # CC-phase ends reported for new Galaxy S2 / S3 / S4 batteries
        for model, expected in (("gs2", 74), ("gs3", 85), ("gs4", 76)):
            volts, _, _ = curves_from_samples(charge(get_preset(model)).samples)
            assert detect_cc_end(volts, 4200, 50) == expected

    def test_halved_capacity_doubles_rate(self, gs3):
        rates = []
        for fcc in (2100, 1050):
            cell = CellSpec(2100, fcc, r_internal_mohm=gs3.r_internal_mohm, r_aging_exponent=0)
            s = simulate_charge(cell, gs3.charger(), gs3.controller(), LoadProfile.constant(10))
            rates.append(c_rate_over_interval(10, 40, s[10].t, s[40].t))
        assert rates[1] / rates[0] == pytest.approx(2.0, rel=0.01)

    def test_cv_phase(self, gs3):
        res = charge(gs3, loss=0.3, record=True)
        traj = res.trajectory
        cv = traj[traj[:, 4] == 1]
        assert len(cv) > 10
        assert np.all(np.diff(cv[:, 2]) < 0)
        assert np.allclose(cv[:, 3], 4200.0)

    def test_cc_voltage_nondecreasing(self, gs4):
        res = charge(gs4, loss=0.2)
        v = [s.voltage_mv for s in res.samples]
        assert np.all(np.diff(v) >= 0)

    def test_system_load_lowers_rate(self, gs4):
        idle = charge(gs4, i_sys=0).samples
        busy = charge(gs4, i_sys=250).samples
        r_idle = c_rate_over_interval(10, 60, idle[10].t, idle[60].t)
        r_busy = c_rate_over_interval(10, 60, busy[10].t, busy[60].t)
        assert r_busy < r_idle

    def test_load_exceeding_charger_does_not_converge(self, gs3):
        with pytest.raises(NonConvergence):
            run_charge(gs3.cell(), gs3.charger("usb"), gs3.controller(),
                       LoadProfile.constant(600), start_soc=50, dt=10, stall_s=3600)

    def test_unplug_early(self, gs3):
        res = charge(gs3, stop_soc=60)
        assert res.samples[-1].soc == 60
        assert res.terminated_by == "unplugged"

    def test_jitter_is_seeded(self, gs3):
        a = charge(gs3, jitter_s=5, rng=np.random.default_rng(4)).samples
        b = charge(gs3, jitter_s=5, rng=np.random.default_rng(4)).samples
        c = charge(gs3).samples
        assert a == b
        assert a != c
        assert max(abs(x.t - y.t) for x, y in zip(a, c)) <= 6

    def test_cold_charge_raises_voltage(self, gs3):
        warm = charge(gs3, temp_c=25).samples
        cold = charge(gs3, temp_c=5).samples
        assert cold[40].voltage_mv > warm[40].voltage_mv


@settings(max_examples=15, deadline=None)
@given(r_small=st.floats(40, 150), extra=st.floats(1, 150))
def test_cc_end_nonincreasing_in_resistance(r_small, extra):
    socs = []
    for r in (r_small, r_small + extra):
        res = run_charge(CellSpec(2100, 2100, r_internal_mohm=r), ChargerSpec(1000),
                         ControllerSpec(925), dt=5)
        socs.append(res.cc_end_soc)
    assert socs[1] <= socs[0]
