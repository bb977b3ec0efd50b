"""Discrete-time model of the 66/20 kV substation.

One OLTC transformer, one capacitor bank behind a single breaker, a ZIP plus
constant-energy load on the secondary bus, and the SCADA view of it all
(100 V / 10 kW / 10 kVAr / 1 tap resolution, 4 s refresh).

Sign convention: consumer convention, Q > 0 is reactive import (lagging pf),
Q < 0 is export (leading pf).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from datetime import datetime

import numpy as np

from .errors import ConvergenceError, InvalidAction, PlantError, TapOutOfRange


@dataclass(frozen=True)
class PlantConfig:
    rated_mva: float = 50.0
    hv_nominal_kv: float = 66.0
    nominal_kv: float = 20.0
    # scales the no-load secondary voltage; 1.0 gives exactly nominal at tap 0
    no_load_factor: float = 1.0
    tap_min: int = -6
    tap_max: int = 15
    tap_step: float = 0.0146
    desired_kv: float = 21.0
    v_low_kv: float = 20.3
    v_high_kv: float = 21.6
    cap_mvar: float = 4.2
    cap_rated_kv: float = 21.0
    # loads and the capacitor are specified in per-unit of this voltage
    load_ref_kv: float = 21.0
    # series impedance of source plus transformer, per-unit on rated_mva
    r_pu: float = 0.02
    x_pu: float = 0.30
    # constant reactive consumption of the transformer seen at the HV winding
    q_loss_mvar: float = 0.0
    # constant-energy class: aggregate element rating at load_ref_kv
    ce_rated_mw: float = 3.0
    step_s: float = 4.0
    damping: float = 0.8
    tol_pu: float = 1e-6
    max_iter: int = 50
    # uniform pre-quantization dither amplitude (V), only used when noise is on
    noise_v: float = 50.0

    def __post_init__(self):
        if self.tap_min > self.tap_max:
            raise PlantError("tap_min above tap_max")
        if self.tap_step * max(abs(self.tap_min), abs(self.tap_max)) >= 1.0:
            raise PlantError("tap range reaches a non-positive ratio")
        if not 0.0 < self.damping <= 1.0:
            raise PlantError("damping must be in (0, 1]")

    @property
    def ratio0(self) -> float:
        return self.hv_nominal_kv / self.nominal_kv

    @property
    def step_h(self) -> float:
        return self.step_s / 3600.0


@dataclass(frozen=True)
class LoadProfilePoint:
    """Per-class demand at the load reference voltage.

    ``pe_kwh`` is the constant-energy demand arriving during one simulation step.
    """

    timestamp: datetime
    pz_mw: float = 0.0
    pz_mvar: float = 0.0
    pi_mw: float = 0.0
    pi_mvar: float = 0.0
    pp_mw: float = 0.0
    pp_mvar: float = 0.0
    pe_kwh: float = 0.0

    def __post_init__(self):
        for name in ("pz_mw", "pi_mw", "pp_mw", "pe_kwh"):
            if getattr(self, name) < 0:
                raise PlantError(f"{name} must be >= 0 at {self.timestamp}")


@dataclass(frozen=True)
class ControlAction:
    tap_delta: int = 0
    capacitor: str = "hold"  # "connect" | "disconnect" | "hold"

    def __post_init__(self):
        if self.capacitor not in ("connect", "disconnect", "hold"):
            raise InvalidAction(f"unknown capacitor order {self.capacitor!r}")
        if not isinstance(self.tap_delta, (int, np.integer)):
            raise InvalidAction("tap delta must be an integer")

    @property
    def is_noop(self) -> bool:
        return self.tap_delta == 0 and self.capacitor == "hold"


NOOP = ControlAction()


@dataclass(frozen=True)
class PlantState:
    time: datetime | None
    tap: int
    breaker_closed: bool
    hv_kv: float
    v2_kv: float
    p_mw: float = 0.0
    q_mvar: float = 0.0
    ce_power_mw: float = 0.0
    ce_backlog_kwh: float = 0.0
    ce_delivered_kwh: float = 0.0
    ce_scheduled_kwh: float = 0.0
    tap_pending: int = 0
    tap_ops: int = 0
    breaker_ops: int = 0

    @classmethod
    def initial(cls, cfg: PlantConfig, tap: int = 0, breaker_closed: bool = True,
                hv_kv: float | None = None) -> "PlantState":
        if not cfg.tap_min <= tap <= cfg.tap_max:
            raise TapOutOfRange(f"initial tap {tap} outside [{cfg.tap_min}, {cfg.tap_max}]")
        return cls(time=None, tap=tap, breaker_closed=breaker_closed,
                   hv_kv=cfg.hv_nominal_kv if hv_kv is None else hv_kv, v2_kv=cfg.desired_kv)


@dataclass(frozen=True)
class TelemetrySample:
    """What SCADA reports: voltage in V, powers in kW / kVAr, all on their grids."""

    timestamp: datetime | None
    voltage_v: int
    p_kw: int
    q_kvar: int
    tap: int
    breaker_closed: bool
    pf: float

    @property
    def voltage_kv(self) -> float:
        return self.voltage_v / 1000.0

    @property
    def p_mw(self) -> float:
        return self.p_kw / 1000.0

    @property
    def q_mvar(self) -> float:
        return self.q_kvar / 1000.0


def secondary_voltage(hv_kv: float, tap: int, loading: tuple[float, float],
                      cfg: PlantConfig = PlantConfig()) -> float:
    """Secondary bus voltage (kV) for HV voltage, tap position and net secondary load.

    ``loading`` is (P MW, Q MVAr) drawn from the secondary bus, capacitor included.
    Each tap step changes the HV turns by ``tap_step`` of nominal; the drop is
    linear in the load through the series impedance.
    """
    if not cfg.tap_min <= tap <= cfg.tap_max:
        raise TapOutOfRange(f"tap {tap} outside [{cfg.tap_min}, {cfg.tap_max}]")
    p, q = loading
    open_circuit = cfg.no_load_factor * hv_kv / (cfg.ratio0 * (1.0 - cfg.tap_step * tap))
    drop = cfg.nominal_kv * (cfg.r_pu * p + cfg.x_pu * q) / cfg.rated_mva
    return open_circuit - drop


def load_power(point: LoadProfilePoint, v_pu: float, backlog_kwh: float = 0.0,
               cfg: PlantConfig = PlantConfig()) -> tuple[float, float, float]:
    """(P MW, Q MVAr, backlog delta kWh) drawn by the load classes at ``v_pu``.

    The constant-energy class is an aggregate of thermostatic elements: it draws
    up to ``ce_rated_mw * v_pu**2`` and whatever it cannot deliver this step stays
    in the backlog for later steps.
    """
    if not 0.5 <= v_pu <= 1.5:
        raise PlantError(f"per-unit voltage {v_pu:.4f} outside the load model range [0.5, 1.5]")
    pending = backlog_kwh + point.pe_kwh
    capacity_kwh = cfg.ce_rated_mw * v_pu ** 2 * cfg.step_h * 1000.0
    delivered = min(pending, capacity_kwh)
    p_e = delivered / (cfg.step_h * 1000.0)
    p = point.pz_mw * v_pu ** 2 + point.pi_mw * v_pu + point.pp_mw + p_e
    q = point.pz_mvar * v_pu ** 2 + point.pi_mvar * v_pu + point.pp_mvar
    return p, q, point.pe_kwh - delivered


def capacitor_mvar(v2_kv: float, closed: bool, cfg: PlantConfig = PlantConfig()) -> float:
    if not closed:
        return 0.0
    return cfg.cap_mvar * (v2_kv / cfg.cap_rated_kv) ** 2


@dataclass(frozen=True)
class OperatingPoint:
    v2_kv: float
    p_mw: float
    q_mvar: float  # at the HV winding
    ce_power_mw: float
    backlog_delta_kwh: float
    iterations: int


def solve(point: LoadProfilePoint, hv_kv: float, tap: int, breaker_closed: bool,
          cfg: PlantConfig = PlantConfig(), backlog_kwh: float = 0.0,
          v_start: float | None = None) -> OperatingPoint:
    """Steady state of the secondary bus by damped fixed-point iteration."""
    v = cfg.desired_kv if v_start is None else v_start
    for it in range(1, cfg.max_iter + 1):
        p, q, _ = load_power(point, v / cfg.load_ref_kv, backlog_kwh, cfg)
        v_new = secondary_voltage(hv_kv, tap, (p, q - capacitor_mvar(v, breaker_closed, cfg)), cfg)
        if abs(v_new - v) / cfg.nominal_kv < cfg.tol_pu:
            v = v_new
            break
        v = v + cfg.damping * (v_new - v)
    else:
        raise ConvergenceError(
            f"voltage/load iteration did not converge in {cfg.max_iter} iterations "
            f"(last {v:.6f} kV)")
    p, q, backlog_delta = load_power(point, v / cfg.load_ref_kv, backlog_kwh, cfg)
    pending = backlog_kwh + point.pe_kwh
    ce_power = (pending - (backlog_kwh + backlog_delta)) / (cfg.step_h * 1000.0)
    q_hv = q - capacitor_mvar(v, breaker_closed, cfg) + cfg.q_loss_mvar
    return OperatingPoint(v, p, q_hv, ce_power, backlog_delta, it)


def round_half_away(x: float, resolution: float) -> float:
    n = abs(x) / resolution
    # strip binary representation noise before deciding the half
    n = math.floor(round(n, 9) + 0.5)
    return math.copysign(n, x) * resolution if n else 0.0


def power_factor(p_mw: float, q_mvar: float) -> float:
    """Signed power factor: negative when leading (Q < 0)."""
    if p_mw == 0 and q_mvar == 0:
        raise PlantError("power factor undefined for P = Q = 0")
    mag = abs(p_mw) / math.hypot(p_mw, q_mvar)
    return -mag if q_mvar < 0 else mag


def quantize(timestamp: datetime | None, v2_kv: float, p_mw: float, q_mvar: float,
             tap: int, breaker_closed: bool) -> TelemetrySample:
    voltage_v = int(round_half_away(v2_kv * 1000.0, 100.0))
    p_kw = int(round_half_away(p_mw * 1000.0, 10.0))
    q_kvar = int(round_half_away(q_mvar * 1000.0, 10.0))
    pf = power_factor(p_kw, q_kvar) if (p_kw or q_kvar) else math.nan
    return TelemetrySample(timestamp, voltage_v, p_kw, q_kvar, int(tap), bool(breaker_closed), pf)


def requantize(sample: TelemetrySample) -> TelemetrySample:
    return quantize(sample.timestamp, sample.voltage_kv, sample.p_mw, sample.q_mvar,
                    sample.tap, sample.breaker_closed)


def check_action(state: PlantState, action: ControlAction, cfg: PlantConfig) -> None:
    if action.capacitor == "connect" and state.breaker_closed:
        raise InvalidAction("connect ordered while the breaker is already closed")
    if action.capacitor == "disconnect" and not state.breaker_closed:
        raise InvalidAction("disconnect ordered while the breaker is already open")
    target = state.tap + state.tap_pending + action.tap_delta
    if not cfg.tap_min <= target <= cfg.tap_max:
        raise InvalidAction(f"tap order {action.tap_delta:+d} drives tap to {target}, "
                            f"outside [{cfg.tap_min}, {cfg.tap_max}]")


def step(state: PlantState, action: ControlAction, point: LoadProfilePoint,
         cfg: PlantConfig, hv_kv: float | None = None,
         rng: np.random.Generator | None = None) -> tuple[PlantState, TelemetrySample]:
    """Apply ``action``, advance one step with ``point`` and report telemetry.

    The OLTC moves at most one position per step; larger orders are queued in
    ``tap_pending``. ``rng`` turns on the voltage dither.
    """
    check_action(state, action, cfg)
    hv = state.hv_kv if hv_kv is None else hv_kv
    pending = state.tap_pending + action.tap_delta
    tap, tap_ops = state.tap, state.tap_ops
    if pending:
        move = 1 if pending > 0 else -1
        tap += move
        pending -= move
        tap_ops += 1
    closed, breaker_ops = state.breaker_closed, state.breaker_ops
    if action.capacitor != "hold":
        closed = action.capacitor == "connect"
        breaker_ops += 1

    op = solve(point, hv, tap, closed, cfg, state.ce_backlog_kwh, v_start=state.v2_kv)
    delivered = op.ce_power_mw * cfg.step_h * 1000.0
    new_state = replace(
        state,
        time=point.timestamp,
        tap=tap,
        tap_pending=pending,
        breaker_closed=closed,
        hv_kv=hv,
        v2_kv=op.v2_kv,
        p_mw=op.p_mw,
        q_mvar=op.q_mvar,
        ce_power_mw=op.ce_power_mw,
        ce_backlog_kwh=max(state.ce_backlog_kwh + op.backlog_delta_kwh, 0.0),
        ce_delivered_kwh=state.ce_delivered_kwh + delivered,
        ce_scheduled_kwh=state.ce_scheduled_kwh + point.pe_kwh,
        tap_ops=tap_ops,
        breaker_ops=breaker_ops,
    )
    v_meas = op.v2_kv
    if rng is not None and cfg.noise_v > 0:
        v_meas += rng.uniform(-cfg.noise_v, cfg.noise_v) / 1000.0
    telemetry = quantize(point.timestamp, v_meas, op.p_mw, op.q_mvar, tap, closed)
    return new_state, telemetry
