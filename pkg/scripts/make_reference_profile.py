"""Regenerate the synthetic reference day shipped in ``fisvvc/data``.

Hourly anchor values are interpolated onto a 5 minute table. The shape has a
night valley around 04:00, a morning ramp, a midday plateau and an evening
peak around 20:00. Reactive demand is low enough at night that the capacitor
bank drives the power factor leading, which is what the controllers react to.
"""

from __future__ import annotations

import argparse
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from fisvvc.plant import LoadProfilePoint, PlantConfig
from fisvvc.profiles import write_hv_profile, write_load_profile

HOURS = np.arange(25.0)
# total active demand at the reference voltage (MW), constant-energy share included
P_TOTAL = [13.5, 12.0, 11.0, 10.4, 10.2, 10.5, 11.5, 13.0, 15.0, 16.5, 17.3, 17.6, 17.8,
           17.5, 17.0, 16.6, 16.5, 17.0, 18.3, 19.8, 20.8, 20.5, 18.5, 16.0, 13.5]
Q_TOTAL = [1.8, 1.5, 1.2, 1.0, 0.95, 1.0, 1.3, 1.6, 2.1, 3.2, 4.0, 4.3, 4.4,
           4.2, 4.0, 3.9, 3.9, 4.3, 5.2, 6.2, 6.8, 6.5, 4.8, 2.9, 1.8]
# constant-energy (thermostatic) demand expressed as average MW
P_ENERGY = [1.2, 0.8, 0.8, 0.8, 0.8, 0.8, 1.5, 3.2, 3.4, 2.5, 1.5, 1.5, 1.5,
            1.5, 1.5, 1.5, 1.5, 2.0, 3.0, 3.6, 3.8, 3.4, 2.4, 1.6, 1.2]
HV_KV = [66.9, 67.2, 67.4, 67.5, 67.5, 67.3, 66.9, 66.5, 66.2, 66.0, 65.9, 65.8, 65.8,
         65.9, 66.0, 66.0, 66.0, 65.8, 65.5, 65.3, 65.2, 65.4, 65.9, 66.4, 66.9]

ZIP_P = (0.4, 0.2, 0.4)
ZIP_Q = (0.5, 0.1, 0.4)


def build(day: datetime, table_min: int = 5, cfg: PlantConfig = PlantConfig()):
    n = 24 * 60 // table_min + 1
    times = [day + timedelta(minutes=k * table_min) for k in range(n)]
    h = np.array([k * table_min / 60.0 for k in range(n)])
    p_tot, q_tot, p_e, hv = (np.interp(h, HOURS, a) for a in (P_TOTAL, Q_TOTAL, P_ENERGY, HV_KV))
    p_zip = p_tot - p_e
    points = [
        LoadProfilePoint(
            t,
            pz_mw=ZIP_P[0] * pz, pz_mvar=ZIP_Q[0] * q,
            pi_mw=ZIP_P[1] * pz, pi_mvar=ZIP_Q[1] * q,
            pp_mw=ZIP_P[2] * pz, pp_mvar=ZIP_Q[2] * q,
            pe_kwh=e * cfg.step_h * 1000.0,
        )
        for t, pz, q, e in zip(times, p_zip, q_tot, p_e)
    ]
    return times, points, hv


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "src" / "fisvvc" / "data")
    ap.add_argument("--day", default="2014-04-23")
    args = ap.parse_args(argv)
    times, points, hv = build(datetime.fromisoformat(args.day))
    write_load_profile(args.out / "load_profile.csv", points)
    write_hv_profile(args.out / "hv_profile.csv", times, list(hv))


if __name__ == "__main__":
    main()
