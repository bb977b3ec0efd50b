from dataclasses import replace
from datetime import datetime, timedelta

import numpy as np
import pytest

from fisvvc.errors import ConvergenceError, InvalidAction, PlantError, TapOutOfRange
from fisvvc.plant import (
    NOOP, ControlAction, LoadProfilePoint, PlantConfig, PlantState, capacitor_mvar, load_power,
    power_factor, quantize, round_half_away, secondary_voltage, solve, step,
)

CFG = PlantConfig()
T0 = datetime(2014, 4, 23)


def point(**kw):
    return LoadProfilePoint(T0, **kw)


def test_no_load_nominal():
    assert secondary_voltage(66.0, 0, (0, 0), CFG) == pytest.approx(20.0, abs=1e-12)
    assert secondary_voltage(66.0, 0, (0, 0), replace(CFG, no_load_factor=1.05)) == pytest.approx(21.0)


def test_one_tap_step():
    up = secondary_voltage(66.0, 1, (0, 0), CFG) - 20.0
    assert up == pytest.approx(20.0 / (1 - 0.0146) - 20.0, rel=1e-12)
    assert up == pytest.approx(0.292, abs=0.005)


def test_tap_out_of_range():
    with pytest.raises(TapOutOfRange):
        secondary_voltage(66.0, 16, (0, 0), CFG)
    with pytest.raises(TapOutOfRange):
        secondary_voltage(66.0, -7, (0, 0), CFG)


def test_voltage_monotone_in_tap():
    vs = [secondary_voltage(66.0, t, (15, 3), CFG) for t in range(CFG.tap_min, CFG.tap_max + 1)]
    assert all(b > a for a, b in zip(vs, vs[1:]))


def test_zip_laws():
    assert load_power(point(pz_mw=10), 0.95)[0] == pytest.approx(9.025)
    assert load_power(point(pi_mw=10), 0.95)[0] == pytest.approx(9.5)
    assert load_power(point(pp_mw=10), 0.95)[0] == pytest.approx(10.0)


def test_load_guard_range():
    with pytest.raises(PlantError):
        load_power(point(pz_mw=1), 0.4)
    with pytest.raises(PlantError):
        load_power(point(pz_mw=1), 1.6)


def test_constant_energy_backlog():
    cfg = replace(CFG, ce_rated_mw=1.0)
    cap = cfg.step_h * 1000.0  # kWh deliverable in one step at 1 pu
    p, _, delta = load_power(point(pe_kwh=2 * cap), 1.0, 0.0, cfg)
    assert p == pytest.approx(1.0) and delta == pytest.approx(cap)
    p, _, delta = load_power(point(pe_kwh=0), 1.0, 0.5 * cap, cfg)
    assert p == pytest.approx(0.5) and delta == pytest.approx(-0.5 * cap)


def _constant_energy_day(v_pu: float):
    cfg = replace(CFG, ce_rated_mw=2.0)
    n = 21600
    # morning and evening bursts above the rated capacity
    hours = np.arange(n) * cfg.step_h
    demand_mw = 1.0 + 1.6 * np.exp(-((hours - 8) / 1.5) ** 2) + 1.8 * np.exp(-((hours - 20) / 1.5) ** 2)
    backlog = delivered = 0.0
    active = 0
    for mw in demand_mw:
        p, _, d = load_power(point(pe_kwh=mw * cfg.step_h * 1000), v_pu, backlog, cfg)
        delivered += p * cfg.step_h * 1000
        backlog = max(backlog + d, 0.0)
        active += p >= 2.0 * v_pu ** 2 - 1e-9
    return demand_mw.sum() * cfg.step_h * 1000, delivered, backlog, active


def test_constant_energy_conserved_under_undervoltage():
    sched, nominal, backlog_n, busy_n = _constant_energy_day(1.0)
    sched2, reduced, backlog_r, busy_r = _constant_energy_day(0.95)
    assert backlog_n == pytest.approx(0, abs=1e-9) and backlog_r == pytest.approx(0, abs=1e-9)
    assert nominal == pytest.approx(sched, rel=1e-9)
    assert abs(reduced - nominal) / nominal < 1e-3
    assert busy_r > busy_n  # longer delivery at saturated power


def test_capacitor_constant_impedance():
    assert capacitor_mvar(21.0, True, CFG) == pytest.approx(4.2)
    assert capacitor_mvar(21.0 * 0.95, True, CFG) == pytest.approx(4.2 * 0.95 ** 2)
    assert capacitor_mvar(21.0, False, CFG) == 0.0


def test_solve_is_fixed_point():
    pt = point(pz_mw=6, pz_mvar=2, pi_mw=3, pi_mvar=0.5, pp_mw=6, pp_mvar=1.5)
    op = solve(pt, 66.5, 4, True, CFG)
    p, q, _ = load_power(pt, op.v2_kv / CFG.load_ref_kv, 0.0, CFG)
    qc = capacitor_mvar(op.v2_kv, True, CFG)
    assert op.v2_kv == pytest.approx(secondary_voltage(66.5, 4, (p, q - qc), CFG), abs=1e-4)
    assert op.q_mvar == pytest.approx(q - qc, abs=1e-6)


def test_nonconvergence_reported():
    cfg = replace(CFG, max_iter=2, damping=0.1)
    with pytest.raises(ConvergenceError):
        solve(point(pz_mw=15, pz_mvar=5), 66.0, 4, True, cfg)


@pytest.mark.parametrize("x, res, expected", [
    (21053, 100, 21100), (21049, 100, 21000), (21050, 100, 21100), (-21050, 100, -21100),
    (17207.5, 10, 17210), (17204.9, 10, 17200), (-5, 10, -10), (4.9999, 10, 0.0),
])
def test_round_half_away(x, res, expected):
    assert round_half_away(x, res) == expected


def test_quantize_examples():
    s = quantize(T0, 21.053, 17.2075, -0.7811, 4, True)
    assert (s.voltage_v, s.p_kw, s.q_kvar) == (21100, 17210, -780)
    assert s.pf < 0
    assert quantize(T0, 21.049, 0, 0, 0, False).voltage_v == 21000


@pytest.mark.parametrize("p, q, expected", [(10, 0, 1.0), (10, 10, 0.7071), (10, -3.95, -0.9300)])
def test_power_factor(p, q, expected):
    # Q = -3.95 is the 2-decimal rounding of the exact -3.9522 that gives 0.93 leading
    assert power_factor(p, q) == pytest.approx(expected, abs=1e-4)


def test_power_factor_leading_093_exact():
    q = -10 * np.tan(np.arccos(0.93))
    assert power_factor(10, q) == pytest.approx(-0.93, abs=1e-12)


def test_power_factor_undefined():
    with pytest.raises(PlantError):
        power_factor(0, 0)


def _steady_point():
    return point(pz_mw=5, pz_mvar=1.5, pi_mw=2, pi_mvar=0.4, pp_mw=6, pp_mvar=2.0)


def test_noop_steady_state():
    st = PlantState.initial(CFG, 4, True)
    st, first = step(st, NOOP, _steady_point(), CFG, 66.0)
    st, second = step(st, NOOP, replace(_steady_point(), timestamp=T0 + timedelta(seconds=4)), CFG, 66.0)
    assert (first.voltage_v, first.p_kw, first.q_kvar) == (second.voltage_v, second.p_kw, second.q_kvar)


def test_connect_capacitor_lowers_q_by_bank_output():
    pt = point(pp_mw=12, pp_mvar=4)
    st = PlantState.initial(CFG, 4, False)
    st, _ = step(st, NOOP, pt, CFG, 66.0)
    q_before = st.q_mvar
    st2, tel = step(st, ControlAction(0, "connect"), pt, CFG, 66.0)
    assert st2.breaker_closed and st2.breaker_ops == 1 and tel.breaker_closed
    assert q_before - st2.q_mvar == pytest.approx(4.2 * (st2.v2_kv / 21.0) ** 2, rel=1e-9)


def test_tap_up_under_constant_power():
    pt = point(pp_mw=8, pp_mvar=2)
    st = PlantState.initial(CFG, 3, False)
    st, t0 = step(st, NOOP, pt, CFG, 66.0)
    st, t1 = step(st, ControlAction(1), pt, CFG, 66.0)
    expected = t0.voltage_kv * 0.0146 / (1 - 0.0146 * 4) * 1.0  # one step at the new ratio
    assert abs((t1.voltage_v - t0.voltage_v) / 1000 - expected) <= 0.1 + 1e-9
    assert st.tap == 4 and st.tap_ops == 1


def test_multi_step_order_queues():
    pt = _steady_point()
    st = PlantState.initial(CFG, 3, True)
    st, _ = step(st, ControlAction(2), pt, CFG, 66.0)
    assert (st.tap, st.tap_pending) == (4, 1)
    st, _ = step(st, NOOP, pt, CFG, 66.0)
    assert (st.tap, st.tap_pending, st.tap_ops) == (5, 0, 2)


def test_invalid_actions():
    st = PlantState.initial(CFG, 15, True)
    with pytest.raises(InvalidAction):
        step(st, ControlAction(0, "connect"), _steady_point(), CFG)
    with pytest.raises(InvalidAction):
        step(st, ControlAction(1), _steady_point(), CFG)
    with pytest.raises(InvalidAction):
        ControlAction(0, "toggle")


def test_counters_match_applied_actions():
    rng = np.random.default_rng(3)
    st = PlantState.initial(CFG, 4, True)
    taps = breaks = 0
    for k in range(300):
        tap = int(rng.integers(-1, 2)) if st.tap_pending == 0 else 0
        if not CFG.tap_min <= st.tap + tap <= CFG.tap_max:
            tap = 0
        cap = "hold"
        if rng.random() < 0.05:
            cap = "disconnect" if st.breaker_closed else "connect"
        taps += abs(tap)
        breaks += cap != "hold"
        st, _ = step(st, ControlAction(tap, cap), _steady_point(), CFG, 66.0)
    assert st.tap_ops == taps and st.breaker_ops == breaks


def test_dither_only_with_rng():
    st = PlantState.initial(CFG, 4, True)
    a = step(st, NOOP, _steady_point(), CFG, 66.0, rng=np.random.default_rng(1))[1]
    b = step(st, NOOP, _steady_point(), CFG, 66.0, rng=np.random.default_rng(1))[1]
    exact = step(st, NOOP, _steady_point(), CFG, 66.0)[0].v2_kv
    assert a == b
    assert abs(a.voltage_kv - exact) <= 0.05 + 0.05 + 1e-9
