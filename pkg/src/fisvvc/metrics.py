"""Voltage-deviation statistics, Joule-loss ratios and CVR savings arithmetic."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, time
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MetricsError


@dataclass(frozen=True)
class SeriesSample:
    timestamp: datetime
    value: float


def _values(series) -> np.ndarray:
    if len(series) and isinstance(series[0], SeriesSample):
        stamps = [s.timestamp for s in series]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise MetricsError("timestamps must be strictly increasing")
        return np.array([s.value for s in series], dtype=float)
    return np.asarray(series, dtype=float)


@dataclass(frozen=True)
class VoltageStats:
    mean_kv: float
    max_dev_kv: float
    mean_dev_kv: float
    ref_kv: float = 21.0


def voltage_stats(series, ref_kv: float = 21.0) -> VoltageStats:
    """Average, maximum |U - ref| and mean |U - ref| of a voltage series (kV)."""
    u = _values(series)
    if u.size == 0:
        raise MetricsError("voltage series is empty")
    dev = np.abs(u - ref_kv)
    return VoltageStats(float(u.mean()), float(dev.max()), float(dev.mean()), ref_kv)


def _pf_magnitude(pf: float) -> float:
    mag = abs(pf)
    if not 0.0 < mag <= 1.0:
        raise MetricsError(f"power factor magnitude {pf} outside (0, 1]")
    return mag


def loss_ratio(pf_a: float, pf_b: float) -> float:
    """Joule losses of regime b relative to regime a at equal active power: (|pf_a| / |pf_b|)^2."""
    return (_pf_magnitude(pf_a) / _pf_magnitude(pf_b)) ** 2


def loss_reduction(ratio: float) -> float:
    """Percentage loss reduction implied by a loss ratio."""
    return (1.0 - ratio) * 100.0


def average_loss_ratio(pf_series_a, pf_series_b) -> float:
    """Mean of the instantaneous loss ratios of two aligned pf series."""
    if len(pf_series_a) != len(pf_series_b):
        raise MetricsError(f"series lengths differ ({len(pf_series_a)} vs {len(pf_series_b)})")
    if len(pf_series_a) == 0:
        raise MetricsError("pf series are empty")
    if isinstance(pf_series_a[0], SeriesSample) and isinstance(pf_series_b[0], SeriesSample):
        if any(x.timestamp != y.timestamp for x, y in zip(pf_series_a, pf_series_b)):
            raise MetricsError("pf series are not aligned in time")
    a = np.abs(_values(pf_series_a))
    b = np.abs(_values(pf_series_b))
    if np.any((a <= 0) | (a > 1)) or np.any((b <= 0) | (b > 1)):
        raise MetricsError("power factor magnitude outside (0, 1]")
    return float(np.mean((a / b) ** 2))


@dataclass(frozen=True)
class CvrFactors:
    kwh: float = 0.69
    kw: float = 0.78
    kvar: float = 3.45
    per_class: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if min(self.kwh, self.kw, self.kvar) < 0 or any(v < 0 for v in self.per_class.values()):
            raise MetricsError("CVR factors must be >= 0")


# average feeder, with the customer-class kWh factors from the same field trials
FIELD_TRIAL_FACTORS = CvrFactors(0.69, 0.78, 3.45,
                                 {"domestic": 0.76, "commercial": 0.99, "industrial": 0.41})


def cvr_savings(delta_v_percent: float, factors: CvrFactors = FIELD_TRIAL_FACTORS) -> tuple[float, float, float]:
    """Expected (kWh %, kW %, kVAr %) reductions for a voltage reduction of ``delta_v_percent``."""
    if delta_v_percent < 0:
        raise MetricsError("voltage reduction must be >= 0")
    return (factors.kwh * delta_v_percent, factors.kw * delta_v_percent, factors.kvar * delta_v_percent)


def cvr_factor(delta_e_percent: float, delta_v_percent: float) -> float:
    if delta_v_percent == 0:
        raise MetricsError("voltage reduction is zero")
    return delta_e_percent / delta_v_percent


def percent_reduction(before: float, after: float) -> float:
    if before == 0:
        raise MetricsError("reference value is zero")
    return (before - after) / before * 100.0


def truncate(x: float, places: int = 2) -> float:
    """Truncate toward zero, ignoring float noise below 1e-9 of the last place."""
    scale = 10 ** places
    return math.copysign(math.floor(abs(x) * scale + 1e-9) / scale, x)


# -- comparison report ---------------------------------------------------------

@dataclass
class RunData:
    """The series a report needs from one run (aligned samples)."""

    name: str
    timestamps: list[datetime]
    voltage_kv: Sequence[float]
    p_mw: Sequence[float]
    q_mvar: Sequence[float]
    pf: Sequence[float]
    tap_ops: int = 0
    capacitor_ops: int = 0


@dataclass(frozen=True)
class RunSummary:
    name: str
    samples: int
    mean_kv: float
    max_dev_kv: float
    mean_dev_kv: float
    p_mean_mw: float
    q_mean_mvar: float
    pf_ge_098: float
    pf_ge_099: float
    tap_ops: int
    capacitor_ops: int


@dataclass(frozen=True)
class PairSummary:
    baseline: str
    candidate: str
    phi_bar: float
    loss_reduction_pct: float
    window_phi_bar: dict[str, float]
    window_loss_reduction_pct: dict[str, float]
    mean_dev_reduction_pct: float | None
    mean_dev_residual_pct: float | None
    max_dev_reduction_kv: float
    delta_v_pct: float
    cvr_savings_pct: dict[str, float]


@dataclass(frozen=True)
class MetricsReport:
    ref_kv: float
    runs: list[RunSummary]
    pairs: list[PairSummary]

    def to_json(self) -> dict:
        return {"ref_kv": self.ref_kv, "runs": [asdict(r) for r in self.runs],
                "pairs": [asdict(p) for p in self.pairs]}

    def to_text(self) -> str:
        return format_report(self)


def parse_window(spec: str) -> tuple[time, time]:
    """``HH:MM[:SS]-HH:MM[:SS]``; may wrap midnight."""
    try:
        a, b = spec.split("-")
        return time.fromisoformat(a.strip()), time.fromisoformat(b.strip())
    except ValueError:
        raise MetricsError(f"bad window {spec!r}, expected HH:MM:SS-HH:MM:SS") from None


def window_mask(timestamps: Sequence[datetime], window: tuple[time, time]) -> np.ndarray:
    start, end = window
    t = [ts.time() for ts in timestamps]
    if start <= end:
        return np.array([start <= x < end for x in t])
    return np.array([x >= start or x < end for x in t])


def summarize_run(run: RunData, ref_kv: float = 21.0) -> RunSummary:
    vs = voltage_stats(run.voltage_kv, ref_kv)
    pf = np.abs(np.asarray(run.pf, dtype=float))
    valid = pf[~np.isnan(pf)]
    return RunSummary(
        name=run.name,
        samples=len(run.voltage_kv),
        mean_kv=vs.mean_kv,
        max_dev_kv=vs.max_dev_kv,
        mean_dev_kv=vs.mean_dev_kv,
        p_mean_mw=float(np.mean(run.p_mw)),
        q_mean_mvar=float(np.mean(run.q_mvar)),
        pf_ge_098=float(np.mean(valid >= 0.98 - 1e-12)) if valid.size else math.nan,
        pf_ge_099=float(np.mean(valid >= 0.99 - 1e-12)) if valid.size else math.nan,
        tap_ops=run.tap_ops,
        capacitor_ops=run.capacitor_ops,
    )


def compare_pair(base: RunData, cand: RunData, ref_kv: float = 21.0,
                 windows: Iterable[str] = (), factors: CvrFactors = FIELD_TRIAL_FACTORS) -> PairSummary:
    if len(base.pf) != len(cand.pf):
        raise MetricsError(f"runs {base.name} and {cand.name} have different horizons")
    sb, sc = summarize_run(base, ref_kv), summarize_run(cand, ref_kv)
    phi = average_loss_ratio(list(base.pf), list(cand.pf))
    w_phi, w_red = {}, {}
    for spec in windows:
        mask = window_mask(base.timestamps, parse_window(spec))
        if not mask.any():
            raise MetricsError(f"window {spec} selects no samples")
        val = average_loss_ratio(np.asarray(base.pf)[mask], np.asarray(cand.pf)[mask])
        w_phi[spec] = val
        w_red[spec] = loss_reduction(val)
    dm_red = dm_res = None
    if sb.mean_dev_kv > 0:
        dm_res = sc.mean_dev_kv / sb.mean_dev_kv * 100.0
        dm_red = 100.0 - dm_res
    dv = max(percent_reduction(sb.mean_kv, sc.mean_kv), 0.0)
    kwh, kw, kvar = cvr_savings(dv, factors)
    return PairSummary(
        baseline=base.name, candidate=cand.name,
        phi_bar=phi, loss_reduction_pct=loss_reduction(phi),
        window_phi_bar=w_phi, window_loss_reduction_pct=w_red,
        mean_dev_reduction_pct=dm_red, mean_dev_residual_pct=dm_res,
        max_dev_reduction_kv=sb.max_dev_kv - sc.max_dev_kv,
        delta_v_pct=dv,
        cvr_savings_pct={"kwh": kwh, "kw": kw, "kvar": kvar},
    )


def comparison_report(runs: Sequence[RunData], ref_kv: float = 21.0, baseline: int = 0,
                      windows: Iterable[str] = (), factors: CvrFactors = FIELD_TRIAL_FACTORS) -> MetricsReport:
    """Per-run statistics plus baseline-vs-other pairwise loss and CVR figures."""
    if not runs:
        raise MetricsError("no runs to report")
    windows = list(windows)
    summaries = [summarize_run(r, ref_kv) for r in runs]
    pairs = [compare_pair(runs[baseline], r, ref_kv, windows, factors)
             for i, r in enumerate(runs) if i != baseline]
    return MetricsReport(ref_kv, summaries, pairs)


def format_report(report: MetricsReport) -> str:
    """Aligned-column text: 4 decimals for kV / ratios, 2 for percentages."""
    lines = [f"reference voltage: {report.ref_kv:.4f} kV", ""]
    names = [r.name for r in report.runs]
    width = max(12, *(len(n) + 2 for n in names))
    head = f"{'':<16}" + "".join(f"{n:>{width}}" for n in names)
    lines.append(head)
    rows = [
        ("U mean [kV]", lambda r: f"{r.mean_kv:.4f}"),
        ("D_M [kV]", lambda r: f"{r.max_dev_kv:.4f}"),
        ("D_m [kV]", lambda r: f"{r.mean_dev_kv:.4f}"),
        ("P mean [MW]", lambda r: f"{r.p_mean_mw:.4f}"),
        ("Q mean [MVAr]", lambda r: f"{r.q_mean_mvar:.4f}"),
        ("pf>=0.98 [%]", lambda r: f"{r.pf_ge_098 * 100:.2f}"),
        ("pf>=0.99 [%]", lambda r: f"{r.pf_ge_099 * 100:.2f}"),
        ("tap ops", lambda r: f"{r.tap_ops}"),
        ("capacitor ops", lambda r: f"{r.capacitor_ops}"),
    ]
    for label, fmt in rows:
        lines.append(f"{label:<16}" + "".join(f"{fmt(r):>{width}}" for r in report.runs))
    for p in report.pairs:
        lines += ["", f"{p.candidate} vs {p.baseline}"]
        lines.append(f"  average losses ratio        {p.phi_bar:.4f}")
        lines.append(f"  loss reduction              {p.loss_reduction_pct:.2f} %")
        for spec, val in p.window_phi_bar.items():
            lines.append(f"  window {spec:<20} {val:.4f}  ({p.window_loss_reduction_pct[spec]:.2f} %)")
        if p.mean_dev_reduction_pct is not None:
            lines.append(f"  mean deviation reduction    {p.mean_dev_reduction_pct:.2f} %")
            lines.append(f"  mean deviation residual     {p.mean_dev_residual_pct:.2f} %")
        lines.append(f"  max deviation reduction     {p.max_dev_reduction_kv:.4f} kV")
        lines.append(f"  voltage reduction           {p.delta_v_pct:.2f} %")
        s = p.cvr_savings_pct
        lines.append(f"  expected CVR savings        {truncate(s['kwh']):.2f} % kWh, "
                     f"{truncate(s['kw']):.2f} % kW, {truncate(s['kvar']):.2f} % kVAr")
    return "\n".join(lines) + "\n"
