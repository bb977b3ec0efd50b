"""Closed-loop decision layer.

``FisController`` turns telemetry into OLTC/capacitor orders straight from the
fuzzy inference result. Two baselines are provided for comparison: a
conventional deadband AVR and a slow one-step-lookahead optimizer that mimics a
centralized OPF automation (hourly-ish decisions, capacitor left in overnight).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, datetime, time
from typing import Callable, Mapping

from .errors import ConfigError
from .fis import RuleBase, infer
from .plant import NOOP, ControlAction, TelemetrySample

# fuzzy outputs within this band of the +/-0.5 thresholds count as "no action"
_EPS = 1e-9


def _parse_hhmm(text: str) -> time:
    try:
        hh, mm = text.strip().split(":")
        return time(int(hh), int(mm))
    except (ValueError, TypeError):
        raise ConfigError(f"bad HH:MM time {text!r}", token=str(text)) from None


def _in_window(t: time, start: time, end: time) -> bool:
    if start <= end:
        return start <= t < end
    return t >= start or t < end


@dataclass(frozen=True)
class OnPeakSchedule:
    """Daily on-peak windows, e.g. ``["10:00-14:00", "18:00-22:00"]``; windows may wrap midnight."""

    windows: tuple[tuple[time, time], ...] = ()

    @classmethod
    def parse(cls, specs: list[str]) -> "OnPeakSchedule":
        windows = []
        for spec in specs:
            try:
                a, b = spec.split("-")
            except ValueError:
                raise ConfigError(f"on-peak window must be HH:MM-HH:MM, got {spec!r}", token=spec) from None
            windows.append((_parse_hhmm(a), _parse_hhmm(b)))
        return cls(tuple(windows))

    def is_on_peak(self, when: datetime) -> bool:
        t = when.time()
        return any(_in_window(t, a, b) for a, b in self.windows)

    def to_json(self) -> list[str]:
        return [f"{a:%H:%M}-{b:%H:%M}" for a, b in self.windows]


@dataclass
class ControllerEventLog:
    """Append-only record of decisions, degradations and budget events."""

    events: list[dict] = field(default_factory=list)

    def append(self, when: datetime | None, kind: str, **detail) -> None:
        self.events.append({"timestamp": when.isoformat() if when else None, "kind": kind, **detail})

    def __iter__(self):
        return iter(list(self.events))

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["kind"] == kind]


@dataclass
class SwitchingBudget:
    """Daily operation limits; counters reset at midnight."""

    oltc_max: int = 30
    capacitor_max: int = 6
    oltc_used: int = 0
    capacitor_used: int = 0
    day: date | None = None

    def roll(self, when: datetime | None) -> None:
        if when is None:
            return
        if self.day != when.date():
            self.day = when.date()
            self.oltc_used = 0
            self.capacitor_used = 0

    @property
    def oltc_left(self) -> int:
        return max(self.oltc_max - self.oltc_used, 0)

    @property
    def capacitor_left(self) -> int:
        return max(self.capacitor_max - self.capacitor_used, 0)

    def enforce(self, action: ControlAction, when: datetime | None = None,
                log: ControllerEventLog | None = None) -> ControlAction:
        """Trim ``action`` to the remaining budget and charge what is left of it."""
        self.roll(when)
        tap = action.tap_delta
        cap = action.capacitor
        if tap and abs(tap) > self.oltc_left:
            trimmed = int(math.copysign(self.oltc_left, tap)) if self.oltc_left else 0
            if log is not None:
                log.append(when, "budget_exhausted", device="oltc", ordered=int(tap),
                           applied=trimmed, used=self.oltc_used, limit=self.oltc_max)
            tap = trimmed
        if cap != "hold" and self.capacitor_left == 0:
            if log is not None:
                log.append(when, "budget_exhausted", device="capacitor", ordered=cap,
                           applied="hold", used=self.capacitor_used, limit=self.capacitor_max)
            cap = "hold"
        self.oltc_used += abs(tap)
        self.capacitor_used += cap != "hold"
        return ControlAction(tap, cap)


def _round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def crisp_to_action(taps: float, capacitor: float) -> ControlAction:
    """Map defuzzified outputs to a discrete order (+/-0.5 deadband on both)."""
    tap_delta = 0 if abs(taps) <= 0.5 + _EPS else _round_half_away(taps)
    if capacitor > 0.5 + _EPS:
        cap = "connect"
    elif capacitor < -0.5 - _EPS:
        cap = "disconnect"
    else:
        cap = "hold"
    return ControlAction(tap_delta, cap)


def degrade(action: ControlAction, telemetry: TelemetrySample, tap_min: int, tap_max: int,
            log: ControllerEventLog | None = None, pending: int = 0) -> ControlAction:
    """Drop orders that are redundant with the breaker state or leave the tap range."""
    cap = action.capacitor
    if (cap == "connect" and telemetry.breaker_closed) or (cap == "disconnect" and not telemetry.breaker_closed):
        if log is not None:
            log.append(telemetry.timestamp, "degraded", device="capacitor", ordered=cap, applied="hold",
                       reason="redundant with breaker state")
        cap = "hold"
    base = telemetry.tap + pending
    target = min(max(base + action.tap_delta, tap_min), tap_max)
    tap = target - base
    if tap != action.tap_delta and log is not None:
        log.append(telemetry.timestamp, "degraded", device="oltc", ordered=int(action.tap_delta),
                   applied=int(tap), reason="tap limit")
    return ControlAction(int(tap), cap)


# -- FIS controller ----------------------------------------------------------

@dataclass(frozen=True)
class FisParams:
    settle_samples: int = 3
    # the rulebase's voltage sets are drawn around this value
    design_ref_kv: float = 21.0
    ref_kv: float = 21.0
    tap_min: int = -6
    tap_max: int = 15


def fis_inputs(telemetry: TelemetrySample, schedule: OnPeakSchedule, params: FisParams = FisParams()) -> dict:
    on_peak = telemetry.timestamp is not None and schedule.is_on_peak(telemetry.timestamp)
    return {
        "Voltage": telemetry.voltage_kv + (params.design_ref_kv - params.ref_kv),
        "Reactive_power": telemetry.q_mvar,
        "Tap": float(telemetry.tap),
        "Shunt": 1.0 if telemetry.breaker_closed else 0.0,
        "Period": 1.0 if on_peak else 0.0,
    }


def _outputs(rb: RuleBase, inputs: Mapping[str, float], cache: dict | None) -> dict[str, float]:
    key = tuple(inputs.get(name, math.nan) for name in sorted(inputs))
    if cache is not None and key in cache:
        return cache[key]
    out = infer(rb, inputs)
    if cache is not None:
        cache[key] = out
    return out


def fis_decide(telemetry: TelemetrySample, schedule: OnPeakSchedule, rb: RuleBase,
               budget: SwitchingBudget, params: FisParams = FisParams(),
               log: ControllerEventLog | None = None, cache: dict | None = None,
               pending: int = 0) -> ControlAction:
    """One FIS decision: infer, discretize, drop redundant orders, then apply the budget."""
    outputs = _outputs(rb, fis_inputs(telemetry, schedule, params), cache)
    taps = outputs.get("Taps", 0.0)
    cap = outputs.get("Capacitor", 0.0)
    action = degrade(crisp_to_action(taps, cap), telemetry, params.tap_min, params.tap_max, log, pending)
    action = budget.enforce(action, telemetry.timestamp, log)
    if log is not None and not action.is_noop:
        log.append(telemetry.timestamp, "action", controller="fis", tap_delta=int(action.tap_delta),
                   capacitor=action.capacitor, raw_taps=round(taps, 6), raw_capacitor=round(cap, 6))
    return action


class FisController:
    name = "fis"

    def __init__(self, rb: RuleBase, schedule: OnPeakSchedule = OnPeakSchedule(),
                 budget: SwitchingBudget | None = None, params: FisParams = FisParams()):
        self.rb = rb
        self.schedule = schedule
        self.budget = budget if budget is not None else SwitchingBudget()
        self.params = params
        self.log = ControllerEventLog()
        self._hold = 0
        self._cache: dict = {}

    def decide(self, telemetry: TelemetrySample, model=None) -> ControlAction:
        self.budget.roll(telemetry.timestamp)
        if self._hold > 0:
            self._hold -= 1
            return NOOP
        action = fis_decide(telemetry, self.schedule, self.rb, self.budget, self.params,
                            self.log, self._cache)
        if action.tap_delta:
            # the OLTC executes one step per sample; wait for it, then settle
            self._hold = self.params.settle_samples + abs(action.tap_delta) - 1
        return action


# -- deadband AVR ------------------------------------------------------------

@dataclass(frozen=True)
class DeadbandParams:
    ref_kv: float = 21.0
    deadband_kv: float = 0.3
    delay_samples: int = 15
    tap_min: int = -6
    tap_max: int = 15


@dataclass
class DeadbandState:
    below: int = 0
    above: int = 0


def deadband_decide(telemetry: TelemetrySample, params: DeadbandParams,
                    state: DeadbandState) -> ControlAction:
    """Tap up/down after ``delay_samples`` consecutive samples outside ref +/- deadband."""
    v = telemetry.voltage_kv
    low = params.ref_kv - params.deadband_kv
    high = params.ref_kv + params.deadband_kv
    state.below = state.below + 1 if v < low - _EPS else 0
    state.above = state.above + 1 if v > high + _EPS else 0
    if state.below >= params.delay_samples and telemetry.tap < params.tap_max:
        state.below = 0
        return ControlAction(1, "hold")
    if state.above >= params.delay_samples and telemetry.tap > params.tap_min:
        state.above = 0
        return ControlAction(-1, "hold")
    return NOOP


class DeadbandController:
    name = "deadband"

    def __init__(self, params: DeadbandParams = DeadbandParams()):
        self.params = params
        self.state = DeadbandState()
        self.log = ControllerEventLog()

    def decide(self, telemetry: TelemetrySample, model=None) -> ControlAction:
        action = deadband_decide(telemetry, self.params, self.state)
        if not action.is_noop:
            self.log.append(telemetry.timestamp, "action", controller="deadband",
                            tap_delta=int(action.tap_delta), capacitor=action.capacitor)
        return action


# -- OPF-like proxy ----------------------------------------------------------

# model(tap, breaker_closed) -> (secondary kV, HV-side MVAr) at the current load
PlantModel = Callable[[int, bool], tuple[float, float]]


@dataclass(frozen=True)
class OpfParams:
    period_steps: int = 225  # 15 min at 4 s
    ref_kv: float = 21.0
    w_v: float = 1.0
    w_q: float = 0.01
    improvement: float = 0.16
    overnight_hold: bool = True
    hold_start: str = "22:00"
    hold_end: str = "09:00"
    v_low_kv: float = 20.3
    v_high_kv: float = 21.6
    tap_min: int = -6
    tap_max: int = 15


def opf_objective(v2_kv: float, q_mvar: float, params: OpfParams) -> float:
    return params.w_v * (v2_kv - params.ref_kv) ** 2 + params.w_q * q_mvar ** 2


@dataclass(frozen=True)
class OpfDecision:
    action: ControlAction
    candidates: tuple[tuple[int, bool, float], ...]  # (tap, closed, objective)
    chosen: tuple[int, bool]


def opf_candidates(telemetry: TelemetrySample, params: OpfParams) -> list[tuple[int, bool]]:
    taps = [t for t in (telemetry.tap - 1, telemetry.tap, telemetry.tap + 1)
            if params.tap_min <= t <= params.tap_max]
    return [(t, closed) for t in taps for closed in (True, False)]


def opf_proxy_decide(telemetry: TelemetrySample, model: PlantModel, params: OpfParams = OpfParams(),
                     log: ControllerEventLog | None = None) -> OpfDecision:
    """Evaluate the 6 one-step candidates on the model and move to the best one
    if it beats the incumbent by more than ``params.improvement``."""
    incumbent = (telemetry.tap, telemetry.breaker_closed)
    scored = []
    for tap, closed in opf_candidates(telemetry, params):
        v2, q = model(tap, closed)
        scored.append((tap, closed, opf_objective(v2, q, params)))

    allowed = scored
    v = telemetry.voltage_kv
    within_limits = params.v_low_kv <= v <= params.v_high_kv
    if (params.overnight_hold and telemetry.breaker_closed and within_limits
            and telemetry.timestamp is not None
            and _in_window(telemetry.timestamp.time(), _parse_hhmm(params.hold_start),
                           _parse_hhmm(params.hold_end))):
        allowed = [c for c in scored if c[1]]

    inc_obj = next(obj for tap, closed, obj in scored if (tap, closed) == incumbent)
    best = (incumbent[0], incumbent[1], inc_obj)
    for cand in allowed:
        if cand[2] < best[2]:
            best = cand
    action = NOOP
    if inc_obj - best[2] > params.improvement:
        cap = "hold"
        if best[1] != incumbent[1]:
            cap = "connect" if best[1] else "disconnect"
        action = ControlAction(best[0] - incumbent[0], cap)
        if log is not None:
            log.append(telemetry.timestamp, "action", controller="opf_proxy",
                       tap_delta=int(action.tap_delta), capacitor=cap,
                       objective_before=round(inc_obj, 6), objective_after=round(best[2], 6))
    return OpfDecision(action, tuple(scored), (best[0], best[1]))


class OpfProxyController:
    name = "opf_proxy"

    def __init__(self, params: OpfParams = OpfParams()):
        self.params = params
        self.log = ControllerEventLog()
        self._tick = 0

    def decide(self, telemetry: TelemetrySample, model: PlantModel | None = None) -> ControlAction:
        tick = self._tick
        self._tick += 1
        if tick % self.params.period_steps or model is None:
            return NOOP
        return opf_proxy_decide(telemetry, model, self.params, self.log).action
