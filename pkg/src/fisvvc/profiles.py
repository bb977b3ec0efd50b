"""CSV load and HV-voltage profiles, resampled onto the simulation clock."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta
from os import PathLike
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .plant import LoadProfilePoint

LOAD_COLUMNS = ("timestamp", "pz_mw", "pz_mvar", "pi_mw", "pi_mvar", "pp_mw", "pp_mvar", "pe_kwh")
HV_COLUMNS = ("timestamp", "kv")


def _read_table(path: str | PathLike, columns: tuple[str, ...]) -> tuple[list[datetime], np.ndarray]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError("empty profile", source=str(path)) from None
        if tuple(h.strip() for h in header) != columns:
            raise ConfigError(f"header must be {','.join(columns)}", line=1, source=str(path))
        times, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != len(columns):
                raise ConfigError(f"expected {len(columns)} fields, got {len(row)}",
                                  line=lineno, source=str(path))
            try:
                ts = datetime.fromisoformat(row[0].strip())
            except ValueError:
                raise ConfigError("bad ISO-8601 timestamp", line=lineno, token=row[0],
                                  source=str(path)) from None
            try:
                values = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise ConfigError(f"bad number: {exc}", line=lineno, source=str(path)) from None
            if times and ts <= times[-1]:
                raise ConfigError("timestamps must be strictly increasing", line=lineno,
                                  token=row[0], source=str(path))
            times.append(ts)
            rows.append(values)
    if not times:
        raise ConfigError("profile has no rows", source=str(path))
    return times, np.asarray(rows, dtype=float)


@dataclass(frozen=True)
class Profile:
    """Tabulated series; ``values`` has one column per non-timestamp field."""

    times: tuple[datetime, ...]
    values: np.ndarray
    columns: tuple[str, ...]

    def resample(self, times: list[datetime]) -> np.ndarray:
        """Linearly interpolate every column at ``times`` (which must lie inside the table)."""
        t0 = self.times[0]
        src = np.array([(t - t0).total_seconds() for t in self.times])
        dst = np.array([(t - t0).total_seconds() for t in times])
        if len(dst) and (dst[0] < src[0] or dst[-1] > src[-1]):
            raise ConfigError(
                f"profile covers {self.times[0].isoformat()} .. {self.times[-1].isoformat()}, "
                f"simulation needs {times[0].isoformat()} .. {times[-1].isoformat()}")
        if len(src) == 1:
            return np.repeat(self.values, len(dst), axis=0)
        return np.column_stack([np.interp(dst, src, self.values[:, j])
                                for j in range(self.values.shape[1])])


def read_load_profile(path: str | PathLike) -> Profile:
    times, values = _read_table(path, LOAD_COLUMNS)
    for col in (0, 2, 4, 6):
        bad = np.nonzero(values[:, col] < 0)[0]
        if len(bad):
            raise ConfigError(f"{LOAD_COLUMNS[col + 1]} must be >= 0", line=int(bad[0]) + 2,
                              source=str(path))
    return Profile(tuple(times), values, LOAD_COLUMNS[1:])


def read_hv_profile(path: str | PathLike) -> Profile:
    times, values = _read_table(path, HV_COLUMNS)
    if np.any(values <= 0):
        raise ConfigError("HV voltage must be positive", source=str(path))
    return Profile(tuple(times), values, HV_COLUMNS[1:])


def step_times(start: datetime, end: datetime, step_s: float) -> list[datetime]:
    """Sample instants in ``[start, end)``."""
    if end <= start:
        raise ConfigError("end must be after start")
    n = int(round((end - start).total_seconds() / step_s))
    return [start + timedelta(seconds=k * step_s) for k in range(n)]


def load_points(profile: Profile, times: list[datetime]) -> list[LoadProfilePoint]:
    table = profile.resample(times)
    return [LoadProfilePoint(t, *map(float, row)) for t, row in zip(times, table)]


def write_load_profile(path: str | PathLike, points: list[LoadProfilePoint]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOAD_COLUMNS)
        for p in points:
            w.writerow([p.timestamp.isoformat(), *(f"{getattr(p, c):.6g}" for c in LOAD_COLUMNS[1:])])


def write_hv_profile(path: str | PathLike, times: list[datetime], kv: list[float]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HV_COLUMNS)
        for t, v in zip(times, kv):
            w.writerow([t.isoformat(), f"{v:.4f}"])
