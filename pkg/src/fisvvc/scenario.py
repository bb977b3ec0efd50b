"""Scenario files, the closed-loop runner and run-directory I/O.

A scenario is a JSON document; relative paths inside it are resolved against
the scenario file's directory::

    {
      "name": "reference-day",
      "start": "2014-04-23T00:00:00",
      "end": "2014-04-24T00:00:00",
      "seed": 0,
      "noise": false,
      "ref_kv": 21.0,
      "plant": {"initial_tap": 4, "initial_breaker_closed": false, "x_pu": 0.30},
      "rulebase": {"declarations": "declarations.json", "rules": "rules.fis"},
      "load_profile": "load_profile.csv",
      "hv_profile": "hv_profile.csv",
      "controller": {
        "type": "fis",
        "on_peak": ["10:00-14:00", "18:00-22:00"],
        "budget": {"oltc": 30, "capacitor": 6},
        "fis": {"settle_samples": 3},
        "deadband": {"deadband_kv": 0.3, "delay_samples": 15},
        "opf_proxy": {"period_steps": 225, "w_v": 1.0, "w_q": 0.01, "improvement": 0.16}
      }
    }

``hv_profile`` may be replaced by a constant ``"hv_kv": 66.0``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from os import PathLike
from pathlib import Path

import numpy as np

from .controllers import (
    ControllerEventLog,
    DeadbandController,
    DeadbandParams,
    FisController,
    FisParams,
    OnPeakSchedule,
    OpfParams,
    OpfProxyController,
    SwitchingBudget,
)
from .errors import ConfigError, FisVvcError, RuleBaseError
from .fis import RuleBase
from .metrics import RunData, voltage_stats
from .plant import NOOP, ControlAction, LoadProfilePoint, PlantConfig, PlantState, TelemetrySample, capacitor_mvar, power_factor, solve, step
from .profiles import load_points, read_hv_profile, read_load_profile, step_times
from .rules import parse_declarations, load_rulebase

CONTROLLERS = ("fis", "deadband", "opf_proxy")
_PLANT_FIELDS = {f.name for f in dataclasses.fields(PlantConfig)}


@dataclass
class Scenario:
    name: str
    path: Path | None
    start: datetime
    end: datetime
    plant: PlantConfig
    initial_tap: int
    initial_breaker_closed: bool
    rulebase: RuleBase | None
    load_profile: object
    hv_profile: object | None
    hv_kv: float | None
    controller: str
    schedule: OnPeakSchedule
    budget: dict
    fis: dict
    deadband: dict
    opf_proxy: dict
    seed: int = 0
    noise: bool = False
    ref_kv: float = 21.0

    @property
    def times(self) -> list[datetime]:
        return step_times(self.start, self.end, self.plant.step_s)


def _dataclass_overrides(cls, values: dict, what: str, errors: list) -> dict:
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    for key in unknown:
        errors.append(ConfigError(f"unknown {what} parameter {key!r}", token=key))
    return {k: v for k, v in values.items() if k in names}


def load_scenario(path: str | PathLike) -> tuple[Scenario | None, list[ConfigError]]:
    """Load and cross-check a scenario file, collecting every error found."""
    path = Path(path)
    errors: list[ConfigError] = []

    def err(msg: str, **kw) -> None:
        errors.append(ConfigError(msg, source=kw.pop("source", str(path)), **kw))

    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        return None, [ConfigError(f"scenario file not found: {path}", source=str(path))]
    except json.JSONDecodeError as exc:
        return None, [ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno, col=exc.colno, source=str(path))]
    if not isinstance(doc, dict):
        return None, [ConfigError("scenario must be a JSON object", source=str(path))]
    base = path.parent

    def ref(key: str, obj: dict | None = None) -> Path | None:
        value = (obj if obj is not None else doc).get(key)
        if value is None:
            return None
        p = base / value
        if not p.is_file():
            err(f"{key}: file not found: {p}", token=str(value))
            return None
        return p

    try:
        start = datetime.fromisoformat(doc["start"])
        end = datetime.fromisoformat(doc["end"])
        if end <= start:
            err("end must be after start")
    except (KeyError, TypeError, ValueError):
        err("start/end must be ISO-8601 timestamps")
        start = end = None

    plant_doc = dict(doc.get("plant") or {})
    initial_tap = plant_doc.pop("initial_tap", 0)
    initial_closed = bool(plant_doc.pop("initial_breaker_closed", True))
    plant = PlantConfig()
    try:
        plant = PlantConfig(**_dataclass_overrides(PlantConfig, plant_doc, "plant", errors))
    except (TypeError, FisVvcError) as exc:
        err(f"plant: {exc}")
    if not isinstance(initial_tap, int) or not plant.tap_min <= initial_tap <= plant.tap_max:
        err(f"plant.initial_tap {initial_tap!r} outside [{plant.tap_min}, {plant.tap_max}]")
        initial_tap = 0

    rb = None
    rb_doc = doc.get("rulebase") or {}
    decl_path, rules_path = ref("declarations", rb_doc), ref("rules", rb_doc)
    ctrl = dict(doc.get("controller") or {})
    ctype = ctrl.get("type", "fis")
    if ctype not in CONTROLLERS:
        err(f"controller.type must be one of {', '.join(CONTROLLERS)}", token=str(ctype))
    if decl_path and rules_path:
        try:
            decls = parse_declarations(decl_path.read_text(encoding="utf-8"), source=str(decl_path))
            rb = load_rulebase(decls, rules_path.read_text(encoding="utf-8"), source=str(rules_path))
        except RuleBaseError as exc:
            errors.extend(exc.errors)
        except ConfigError as exc:
            errors.append(exc)
    elif not rb_doc and ctype == "fis":
        err("rulebase: declarations and rules are required for the fis controller")

    load_profile = hv_profile = None
    lp = ref("load_profile")
    if lp is None and "load_profile" not in doc:
        err("load_profile is required")
    if lp is not None:
        try:
            load_profile = read_load_profile(lp)
        except ConfigError as exc:
            errors.append(exc)
    hv_kv = doc.get("hv_kv")
    if "hv_profile" in doc:
        hp = ref("hv_profile")
        if hp is not None:
            try:
                hv_profile = read_hv_profile(hp)
            except ConfigError as exc:
                errors.append(exc)
    elif hv_kv is None:
        hv_kv = plant.hv_nominal_kv

    schedule = OnPeakSchedule()
    try:
        schedule = OnPeakSchedule.parse(ctrl.get("on_peak", []))
    except ConfigError as exc:
        exc.source = str(path)
        errors.append(exc)
    budget = dict(ctrl.get("budget") or {})
    for key in set(budget) - {"oltc", "capacitor"}:
        err(f"unknown budget key {key!r}", token=key)
    fis = _dataclass_overrides(FisParams, dict(ctrl.get("fis") or {}), "fis", errors)
    deadband = _dataclass_overrides(DeadbandParams, dict(ctrl.get("deadband") or {}), "deadband", errors)
    opf = _dataclass_overrides(OpfParams, dict(ctrl.get("opf_proxy") or {}), "opf_proxy", errors)

    for e in errors:
        e.source = e.source or str(path)
    if start is not None and end is not None and not errors:
        times = step_times(start, end, plant.step_s)
        for prof, label in ((load_profile, "load_profile"), (hv_profile, "hv_profile")):
            if prof is not None and (prof.times[0] > times[0] or prof.times[-1] < times[-1]):
                err(f"{label} does not cover {start.isoformat()} .. {times[-1].isoformat()}")
    if errors:
        return None, errors
    return Scenario(
        name=str(doc.get("name", path.stem)), path=path, start=start, end=end, plant=plant,
        initial_tap=initial_tap, initial_breaker_closed=initial_closed, rulebase=rb,
        load_profile=load_profile, hv_profile=hv_profile, hv_kv=hv_kv, controller=ctype,
        schedule=schedule, budget=budget, fis=fis, deadband=deadband, opf_proxy=opf,
        seed=int(doc.get("seed", 0)), noise=bool(doc.get("noise", False)),
        ref_kv=float(doc.get("ref_kv", 21.0)),
    ), []


def read_scenario(path: str | PathLike) -> Scenario:
    scn, errors = load_scenario(path)
    if errors:
        raise RuleBaseError(errors)
    return scn


def default_scenario_path() -> Path:
    return Path(__file__).resolve().parent / "data" / "reference_day.json"


# -- running -------------------------------------------------------------------

@dataclass
class RunResult:
    scenario: str
    controller: str
    seed: int
    ref_kv: float
    plant: PlantConfig
    telemetry: list[TelemetrySample]
    actions: list[tuple[datetime, ControlAction]]
    log: ControllerEventLog
    v2_kv: np.ndarray
    p_mw: np.ndarray
    q_mvar: np.ndarray
    breaker: np.ndarray
    tap: np.ndarray
    ce_power_mw: np.ndarray
    final_state: PlantState
    metrics: dict = field(default_factory=dict)

    @property
    def timestamps(self) -> list[datetime]:
        return [t.timestamp for t in self.telemetry]

    def pf_exact(self) -> np.ndarray:
        return np.array([power_factor(p, q) for p, q in zip(self.p_mw, self.q_mvar)])

    def pf_alternative(self) -> np.ndarray:
        """Power factor each sample would have had with the breaker in the other position."""
        out = np.empty(len(self.p_mw))
        for i, (v, p, q, closed) in enumerate(zip(self.v2_kv, self.p_mw, self.q_mvar, self.breaker)):
            qc = capacitor_mvar(v, True, self.plant)
            out[i] = power_factor(p, q + qc if closed else q - qc)
        return out

    def to_run_data(self, name: str | None = None) -> RunData:
        return RunData(
            name=name or f"{self.scenario}:{self.controller}",
            timestamps=self.timestamps,
            voltage_kv=[t.voltage_kv for t in self.telemetry],
            p_mw=[t.p_mw for t in self.telemetry],
            q_mvar=[t.q_mvar for t in self.telemetry],
            pf=[t.pf for t in self.telemetry],
            tap_ops=self.final_state.tap_ops,
            capacitor_ops=self.final_state.breaker_ops,
        )


def build_controller(scn: Scenario, kind: str, ref_kv: float):
    cfg = scn.plant
    limits = {"tap_min": cfg.tap_min, "tap_max": cfg.tap_max}
    if kind == "fis":
        if scn.rulebase is None:
            raise ConfigError("fis controller needs a rulebase")
        budget = SwitchingBudget(oltc_max=int(scn.budget.get("oltc", 30)),
                                 capacitor_max=int(scn.budget.get("capacitor", 6)))
        params = FisParams(**{**scn.fis, **limits, "ref_kv": ref_kv})
        return FisController(scn.rulebase, scn.schedule, budget, params)
    if kind == "deadband":
        return DeadbandController(DeadbandParams(**{**scn.deadband, **limits, "ref_kv": ref_kv}))
    if kind == "opf_proxy":
        return OpfProxyController(OpfParams(**{**scn.opf_proxy, **limits, "ref_kv": ref_kv,
                                               "v_low_kv": cfg.v_low_kv, "v_high_kv": cfg.v_high_kv}))
    raise ConfigError(f"unknown controller {kind!r}")


def run_scenario(scn: Scenario, controller: str | None = None, seed: int | None = None,
                 ref_kv: float | None = None) -> RunResult:
    """Run the closed loop over the scenario horizon.

    The decision taken on sample k's telemetry is applied at step k + 1.
    """
    kind = controller or scn.controller
    seed = scn.seed if seed is None else seed
    ref_kv = scn.ref_kv if ref_kv is None else ref_kv
    cfg = scn.plant
    times = scn.times
    points = load_points(scn.load_profile, times)
    if scn.hv_profile is not None:
        hv = scn.hv_profile.resample(times)[:, 0]
    else:
        hv = np.full(len(times), float(scn.hv_kv))
    ctrl = build_controller(scn, kind, ref_kv)
    rng = np.random.default_rng(seed) if scn.noise else None

    n = len(times)
    v2, p, q, ce = (np.empty(n) for _ in range(4))
    breaker = np.empty(n, dtype=bool)
    tap = np.empty(n, dtype=int)
    telemetry: list[TelemetrySample] = []
    actions: list[tuple[datetime, ControlAction]] = []

    state = PlantState.initial(cfg, scn.initial_tap, scn.initial_breaker_closed, hv_kv=float(hv[0]))
    action = NOOP
    for k in range(n):
        state, tel = step(state, action, points[k], cfg, float(hv[k]), rng)
        telemetry.append(tel)
        v2[k], p[k], q[k], ce[k] = state.v2_kv, state.p_mw, state.q_mvar, state.ce_power_mw
        breaker[k], tap[k] = state.breaker_closed, state.tap
        if k + 1 == n:
            break
        model = _model(points[k], float(hv[k]), state, cfg)
        action = ctrl.decide(tel, model)
        if state.tap_pending and action.tap_delta:
            # the OLTC is still executing an earlier order
            action = ControlAction(0, action.capacitor)
        if not action.is_noop:
            actions.append((tel.timestamp, action))

    result = RunResult(scn.name, kind, seed, ref_kv, cfg, telemetry, actions, ctrl.log,
                       v2, p, q, breaker, tap, ce, state)
    result.metrics = run_metrics(result)
    return result


def _model(point: LoadProfilePoint, hv_kv: float, state: PlantState, cfg: PlantConfig):
    def predict(tap: int, closed: bool) -> tuple[float, float]:
        op = solve(point, hv_kv, tap, closed, cfg, state.ce_backlog_kwh, v_start=state.v2_kv)
        return op.v2_kv, op.q_mvar
    return predict


def run_metrics(run: RunResult) -> dict:
    vs = voltage_stats([t.voltage_kv for t in run.telemetry], run.ref_kv)
    pf = np.abs(np.array([t.pf for t in run.telemetry]))
    st = run.final_state
    return {
        "scenario": run.scenario,
        "controller": run.controller,
        "seed": run.seed,
        "ref_kv": run.ref_kv,
        "samples": len(run.telemetry),
        "mean_kv": vs.mean_kv,
        "max_dev_kv": vs.max_dev_kv,
        "mean_dev_kv": vs.mean_dev_kv,
        "v_min_kv": min(t.voltage_kv for t in run.telemetry),
        "v_max_kv": max(t.voltage_kv for t in run.telemetry),
        "p_mean_mw": float(np.mean([t.p_mw for t in run.telemetry])),
        "q_mean_mvar": float(np.mean([t.q_mvar for t in run.telemetry])),
        "energy_mwh": float(run.p_mw.sum() * run.plant.step_h),
        "pf_ge_098": float(np.mean(pf >= 0.98 - 1e-12)),
        "pf_ge_099": float(np.mean(pf >= 0.99 - 1e-12)),
        "tap_ops": st.tap_ops,
        "capacitor_ops": st.breaker_ops,
        "ce_scheduled_kwh": st.ce_scheduled_kwh,
        "ce_delivered_kwh": st.ce_delivered_kwh,
        "ce_backlog_kwh": st.ce_backlog_kwh,
        "ce_peak_mw": float(run.ce_power_mw.max()),
    }


# -- run directory -----------------------------------------------------------

TELEMETRY_COLUMNS = ("timestamp", "voltage_kv", "p_mw", "q_mvar", "tap", "breaker", "pf")
MARKER = "INCOMPLETE"


def _fmt(x: float, places: int | None = None) -> str:
    """Fixed decimals, or the shortest exact round-trip form when ``places`` is None."""
    if math.isnan(x):
        return "nan"
    return repr(float(x)) if places is None else f"{x:.{places}f}"


def write_run(run: RunResult, out: str | PathLike) -> Path:
    out = Path(out)
    (out / "profiles").mkdir(parents=True, exist_ok=True)
    with (out / "telemetry.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TELEMETRY_COLUMNS)
        for t in run.telemetry:
            w.writerow([t.timestamp.isoformat(), f"{t.voltage_kv:.1f}", f"{t.p_mw:.2f}", f"{t.q_mvar:.2f}",
                        t.tap, int(t.breaker_closed), _fmt(t.pf)])
    with (out / "actions.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("timestamp", "tap_delta", "capacitor"))
        for when, a in run.actions:
            w.writerow([when.isoformat(), a.tap_delta, a.capacitor])
    with (out / "events.jsonl").open("w", encoding="utf-8") as fh:
        for e in run.log:
            fh.write(json.dumps(e, sort_keys=True) + "\n")
    (out / "metrics.json").write_text(json.dumps(run.metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    stamps = [t.isoformat() for t in run.timestamps]
    series = {
        "voltage_kv": [_fmt(t.voltage_kv, 1) for t in run.telemetry],
        "pf": [_fmt(t.pf) for t in run.telemetry],
        "p_mw": [f"{t.p_mw:.2f}" for t in run.telemetry],
        "q_mvar": [f"{t.q_mvar:.2f}" for t in run.telemetry],
        "ce_power_mw": [f"{x:.6f}" for x in run.ce_power_mw],
    }
    for name, values in series.items():
        with (out / "profiles" / f"{name}.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("timestamp", "value"))
            w.writerows(zip(stamps, values))
    return out


def read_telemetry(path: str | PathLike) -> list[TelemetrySample]:
    path = Path(path)
    samples = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TELEMETRY_COLUMNS:
            raise ConfigError(f"header must be {','.join(TELEMETRY_COLUMNS)}", line=1, source=str(path))
        for lineno, row in enumerate(reader, start=2):
            try:
                ts, v, pm, qm, tp, br, pf = row
                samples.append(TelemetrySample(
                    datetime.fromisoformat(ts), int(round(float(v) * 1000)), int(round(float(pm) * 1000)),
                    int(round(float(qm) * 1000)), int(tp), br == "1", float(pf)))
            except ValueError:
                raise ConfigError("malformed telemetry row", line=lineno, source=str(path)) from None
    return samples


def read_run(run_dir: str | PathLike, name: str | None = None) -> RunData:
    run_dir = Path(run_dir)
    if (run_dir / MARKER).exists():
        raise ConfigError(f"run directory {run_dir} holds a partial run", source=str(run_dir))
    tel = read_telemetry(run_dir / "telemetry.csv")
    metrics = json.loads((run_dir / "metrics.json").read_text(encoding="utf-8"))
    return RunData(
        name=name or run_dir.name,
        timestamps=[t.timestamp for t in tel],
        voltage_kv=[t.voltage_kv for t in tel],
        p_mw=[t.p_mw for t in tel],
        q_mvar=[t.q_mvar for t in tel],
        pf=[t.pf for t in tel],
        tap_ops=int(metrics.get("tap_ops", 0)),
        capacitor_ops=int(metrics.get("capacitor_ops", 0)),
    )
