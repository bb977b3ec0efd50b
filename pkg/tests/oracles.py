"""Independent reference computations used by the tests.

Nothing here imports the package's inference or statistics code paths: the
grid oracle re-implements Mamdani inference from the rulebase's raw breakpoints,
and the fixture builders construct series whose statistics are known by
construction (checked again with plain numpy).

Run ``python3 tests/oracles.py`` to rebuild the frozen fixtures.
"""

from __future__ import annotations

import json
import math
import random
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

FIXTURES = Path(__file__).resolve().parent / "fixtures"
GRID_POINTS = 1_000_000


# -- Mamdani grid oracle -----------------------------------------------------

def _trap(xs: np.ndarray, a: float, b: float, c: float, d: float) -> np.ndarray:
    up = np.ones_like(xs) if b == a else np.clip((xs - a) / (b - a), 0.0, 1.0)
    down = np.ones_like(xs) if d == c else np.clip((d - xs) / (d - c), 0.0, 1.0)
    out = np.minimum(up, down)
    out[(xs < a) | (xs > d)] = 0.0
    return out


def _trap_scalar(x: float, a: float, b: float, c: float, d: float) -> float:
    return float(_trap(np.array([x]), a, b, c, d)[0])


def grid_infer(rb, inputs: dict[str, float], points: int = GRID_POINTS) -> dict[str, float]:
    """Mamdani inference with every step done by hand on a dense uniform grid."""
    degree: dict[tuple[str, str], float] = {}
    for var in rb.inputs.values():
        x = inputs[var.name]
        x = min(max(x, var.universe[0]), var.universe[1])
        for name, mf in var.sets.items():
            dval = _trap_scalar(x, mf.a, mf.b, mf.c, mf.d)
            for label in (var.name, *var.aliases):
                degree[(label, name)] = dval

    def out_var(label):
        for var in rb.outputs.values():
            if label == var.name or label in var.aliases:
                return var
        raise KeyError(label)

    strengths = []
    for rule in rb.rules:
        s = 1.0
        for cl in rule.antecedents:
            dval = degree[(cl.variable, cl.term)]
            s = min(s, 1.0 - dval if cl.negated else dval)
        strengths.append(s)

    result = {}
    for var in rb.outputs.values():
        lo, hi = var.universe
        xs = np.linspace(lo, hi, points)
        agg = np.zeros(points)
        for rule, s in zip(rb.rules, strengths):
            if s <= 0:
                continue
            for cl in rule.consequents:
                if out_var(cl.variable) is var:
                    mf = var.sets[cl.term]
                    agg = np.maximum(agg, np.minimum(s, _trap(xs, mf.a, mf.b, mf.c, mf.d)))
        w = np.full(points, xs[1] - xs[0])
        w[0] = w[-1] = 0.5 * w[0]
        area = float(np.dot(w, agg))
        if area <= 0.0:
            result[var.name] = var.neutral_value
        else:
            result[var.name] = float(np.dot(w, agg * xs) / area)
    return result


def random_rulebase(rng: random.Random):
    """A random but valid rulebase together with one crisp input vector."""
    from fisvvc.fis import Clause, LinguisticVariable, MembershipFunction, Rule, RuleBase

    def sets_for(lo: float, hi: float, count: int, prefix: str, min_width: float):
        sets = {}
        for k in range(count):
            while True:
                pts = sorted(rng.uniform(lo, hi) for _ in range(4))
                if rng.random() < 0.3:
                    pts[2] = pts[1]  # triangle
                if rng.random() < 0.15:
                    pts[0] = pts[1] = lo  # left shoulder
                if rng.random() < 0.15:
                    pts[2] = pts[3] = hi  # right shoulder
                pts = sorted(pts)
                if pts[3] - pts[0] >= min_width:
                    break
            sets[f"{prefix}{k}"] = MembershipFunction(*pts)
        return sets

    inputs, outputs = {}, {}
    for i in range(rng.randint(1, 3)):
        lo = rng.uniform(-10, 10)
        hi = lo + rng.uniform(0.5, 20)
        inputs[f"in{i}"] = LinguisticVariable(f"in{i}", (lo, hi), sets_for(lo, hi, rng.randint(2, 5), "s", 0.0))
    for j in range(rng.randint(1, 2)):
        lo = rng.uniform(-5, 0)
        hi = lo + rng.uniform(1, 10)
        outputs[f"out{j}"] = LinguisticVariable(f"out{j}", (lo, hi),
                                                sets_for(lo, hi, rng.randint(2, 5), "o", 0.05 * (hi - lo)),
                                                role="output", neutral=lo + 0.5 * (hi - lo))
    rules = []
    for _ in range(rng.randint(1, 8)):
        ante = []
        for name in rng.sample(sorted(inputs), rng.randint(1, len(inputs))):
            ante.append(Clause(name, rng.choice(sorted(inputs[name].sets)), rng.random() < 0.25))
        cons = [Clause(name, rng.choice(sorted(outputs[name].sets)))
                for name in rng.sample(sorted(outputs), rng.randint(1, len(outputs)))]
        rules.append(Rule(tuple(ante), tuple(cons)))
    crisp = {}
    for name, var in inputs.items():
        lo, hi = var.universe
        span = hi - lo
        crisp[name] = rng.uniform(lo - 0.05 * span, hi + 0.05 * span)
    return RuleBase(inputs, outputs, tuple(rules)), crisp


# -- constructive fixtures ---------------------------------------------------

DAY = datetime(2014, 4, 23)
N_DAY = 21600
STEP = timedelta(seconds=4)


def day_stamps(day: datetime, n: int = N_DAY) -> list[datetime]:
    return [day + k * STEP for k in range(n)]


def voltage_counts(n: int, mean_kv: float, max_dev_kv: float, mean_dev_kv: float,
                   ref_kv: float = 21.0, quantum: float = 0.1) -> dict[int, int]:
    """Counts per grid offset k (U = ref + k * quantum) with the three target statistics.

    Brute force over the integer sums compatible with 4-decimal rounding of the
    targets; the first feasible composition wins.
    """
    kmax = round(max_dev_kv / quantum)
    s_target = (mean_kv - ref_kv) / quantum * n
    a_target = mean_dev_kv / quantum * n
    s_range = sorted(range(math.floor(s_target) - 3, math.ceil(s_target) + 4), key=lambda s: abs(s - s_target))
    a_range = sorted(range(math.floor(a_target) - 3, math.ceil(a_target) + 4), key=lambda a: abs(a - a_target))
    for s in s_range:
        for a in a_range:
            if (a + s) % 2:
                continue
            counts = _compose(n, kmax, (a + s) // 2, (a - s) // 2)
            if counts is None:
                continue
            u = np.repeat([ref_kv + k * quantum for k in counts], list(counts.values()))
            dev = np.abs(u - ref_kv)
            if (round(u.mean(), 4) == round(mean_kv, 4) and round(dev.max(), 4) == round(max_dev_kv, 4)
                    and round(dev.mean(), 4) == round(mean_dev_kv, 4)):
                return counts
    raise ValueError("no composition reaches the targets")


def _compose(n: int, kmax: int, pos: int, neg: int) -> dict[int, int] | None:
    """One +kmax sample, ``neg`` spread as -1 steps, ``pos - kmax`` as near-uniform positives."""
    rest = n - 1 - neg
    q = pos - kmax
    if rest < 0 or q < 0:
        return None
    counts = {kmax: 1, -1: neg}
    if q <= rest:
        counts[1] = counts.get(1, 0) + q
        counts[0] = rest - q
    else:
        c = q // rest
        hi = q - c * rest
        if c + 1 > kmax:
            return None
        counts[c + 1] = counts.get(c + 1, 0) + hi
        counts[c] = counts.get(c, 0) + rest - hi
    return {k: v for k, v in sorted(counts.items()) if v}


def voltage_series(counts: dict[int, int], seed: int, ref_kv: float = 21.0, quantum: float = 0.1) -> list[float]:
    values = [round(ref_kv + k * quantum, 1) for k, c in counts.items() for _ in range(c)]
    random.Random(seed).shuffle(values)
    return values


def sum_exact_series(n: int, mean: float, amplitude: float, resolution: float, seed: int) -> list[float]:
    """A daily-shaped series on ``resolution`` whose integer sum matches ``mean * n`` exactly."""
    t = np.arange(n) / n
    shape = mean + amplitude * (np.sin(2 * np.pi * (t - 0.3)) + 0.3 * np.sin(4 * np.pi * t + seed))
    ticks = np.round(shape / resolution).astype(int)
    target = round(mean * n / resolution)
    diff = target - int(ticks.sum())
    order = np.random.default_rng(seed).permutation(n)
    for idx in order[:abs(diff)]:
        ticks[idx] += 1 if diff > 0 else -1
    return [int(k) for k in ticks]


def pf_pair(n: int, window_mask: np.ndarray, window_phi: float, day_phi: float,
            min_phi: float) -> tuple[np.ndarray, np.ndarray]:
    """(reference pf, candidate pf) whose squared ratios average to the targets.

    The reference regime (capacitor left in overnight) runs leading inside the window.
    """
    k_in = int(window_mask.sum())
    k_out = n - k_in
    out_phi = (day_phi * n - window_phi * k_in) / k_out
    ratio = np.empty(n)
    idx_in = np.nonzero(window_mask)[0]
    idx_out = np.nonzero(~window_mask)[0]
    amp_in = window_phi - min_phi
    ratio[idx_in] = window_phi - amp_in * np.cos(2 * np.pi * np.arange(k_in) / k_in)
    ratio[idx_out] = out_phi + 0.01 * np.sin(2 * np.pi * np.arange(k_out) / k_out)
    cand = np.where(window_mask, 0.998, 0.990)
    ref = cand * np.sqrt(ratio)
    ref = np.where(window_mask, -ref, ref)
    return ref, cand


FIELD_DAYS = {
    "opf_apr16": {"mean": 21.1914, "dmax": 0.5, "dmean": 0.2192,
                  "p": 17.2075, "q": -0.7811},
    "opf_apr22": {"mean": 21.2178, "dmax": 0.5, "dmean": 0.2251,
                  "p": 16.7620, "q": -0.1583},
    "fis_apr23": {"mean": 21.0537, "dmax": 0.3, "dmean": 0.0792,
                  "p": 14.8236, "q": 0.2622},
}
WINDOW = "23:55:30-08:13:19"


def _window(stamps: list[datetime]) -> np.ndarray:
    from datetime import time
    a, b = time(23, 55, 30), time(8, 13, 19)
    return np.array([s.time() >= a or s.time() < b for s in stamps])


def build_table_fixtures(root: Path = FIXTURES / "table_runs") -> None:
    """Write one run directory per field-trial day.

    Telemetry rows carry the stored SCADA pf; P and Q are independent
    digitizations, so pf is not recomputed from them.
    """
    stamps = day_stamps(DAY)
    mask = _window(stamps)
    pf_opf, pf_fis = pf_pair(N_DAY, mask, 0.9312, 0.9750, 0.8660)
    for seed, (name, spec) in enumerate(FIELD_DAYS.items()):
        counts = voltage_counts(N_DAY, spec["mean"], spec["dmax"], spec["dmean"])
        volts = voltage_series(counts, seed)
        p = sum_exact_series(N_DAY, spec["p"], 3.0, 0.01, seed)
        q = sum_exact_series(N_DAY, spec["q"], 2.5, 0.01, seed + 10)
        pf = pf_fis if name.startswith("fis") else pf_opf
        run = root / name
        run.mkdir(parents=True, exist_ok=True)
        rows = ["timestamp,voltage_kv,p_mw,q_mvar,tap,breaker,pf"]
        for ts, v, pk, qk, f in zip(stamps, volts, p, q, pf):
            rows.append(f"{ts.isoformat()},{v:.1f},{pk / 100:.2f},{qk / 100:.2f},4,1,{f:.6f}")
        (run / "telemetry.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
        meta = {"scenario": name, "controller": name.split("_")[0], "tap_ops": 0, "capacitor_ops": 0}
        (run / "metrics.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


if __name__ == "__main__":
    build_table_fixtures()
