"""Centroid-distance impact timing and the IMU threshold baseline."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EvImpactError, NoImpactDetectedError, NoMeasurableFramesError, ParseError
from .losses import BALL, BAT, ProbStack

MASS_MIN = 1.0


def weighted_centroid(channel, mass_min: float = MASS_MIN):
    """Probability-weighted mean pixel position ``(x, y)``; ``None`` below ``mass_min``.

    ``x`` is the column index and ``y`` the row index of the pixel centre.
    """
    P = np.asarray(channel, dtype=np.float64)
    mass = P.sum()
    if not mass >= mass_min:
        return None
    cx = float(P.sum(axis=0) @ np.arange(P.shape[1])) / mass
    cy = float(P.sum(axis=1) @ np.arange(P.shape[0])) / mass
    return (cx, cy)


@dataclass
class FrameMeasure:
    k: int  # 1-based frame number, t_k = k * dt
    ball: tuple[float, float] | None
    bat: tuple[float, float] | None

    @property
    def valid(self) -> bool:
        return self.ball is not None and self.bat is not None

    @property
    def d(self) -> float | None:
        if not self.valid:
            return None
        return math.hypot(self.ball[0] - self.bat[0], self.ball[1] - self.bat[1])


@dataclass
class ImpactResult:
    dt: int
    frames: list[FrameMeasure]
    frame_index: int | None = None
    t_impact_us: int | None = None
    clip_id: str = ""
    invalid_frames: list[int] = field(default_factory=list)

    def distances(self) -> list[float | None]:
        return [f.d for f in self.frames]

    @property
    def t_impact_ms(self) -> float | None:
        return None if self.t_impact_us is None else self.t_impact_us / 1000.0

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "t_impact_ms": self.t_impact_ms,
            "frame_index": self.frame_index,
            "dt_us": self.dt,
            "per_frame": [
                {"k": f.k, "valid": f.valid, "d_px": f.d,
                 "ball": list(f.ball) if f.ball else None,
                 "bat": list(f.bat) if f.bat else None}
                for f in self.frames
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ImpactResult":
        frames = [FrameMeasure(f["k"], tuple(f["ball"]) if f["ball"] else None,
                               tuple(f["bat"]) if f["bat"] else None) for f in d["per_frame"]]
        dt = int(d.get("dt_us", 100))
        k = d["frame_index"]
        return cls(dt, frames, k, None if k is None else k * dt, d.get("clip_id", ""))


def distance_series(stack: ProbStack, dt: int, invalid_frames: Sequence[int] = (),
                    mass_min: float = MASS_MIN) -> ImpactResult:
    """Per-frame ball/bat centroids and their distance, plus the argmin estimate.

    ``invalid_frames`` holds 0-based stack indices forced invalid upstream
    (e.g. both coarse directions dropped).
    """
    forced = set(int(i) for i in invalid_frames)
    frames = []
    for i in range(stack.k_count):
        if i in forced:
            frames.append(FrameMeasure(i + 1, None, None))
            continue
        frames.append(FrameMeasure(i + 1, weighted_centroid(stack.values[i, BALL], mass_min),
                                   weighted_centroid(stack.values[i, BAT], mass_min)))
    if not any(f.valid for f in frames):
        raise NoMeasurableFramesError("no measurable frames")
    result = ImpactResult(dt, frames, invalid_frames=sorted(forced))
    result.t_impact_us, result.frame_index = estimate_impact(result.distances(), dt)
    return result


def estimate_impact(d_series, dt: int) -> tuple[int, int]:
    """Earliest frame of minimal distance.  ``d_series[i]`` is frame ``k = i + 1``.

    Returns ``(t_impact_us, k)``; ``None`` entries are invalid frames.
    """
    if isinstance(d_series, ImpactResult):
        d_series = d_series.distances()
    best_k, best_d = None, math.inf
    for i, d in enumerate(d_series):
        if d is not None and d < best_d:
            best_k, best_d = i + 1, d
    if best_k is None:
        raise NoMeasurableFramesError("all frames invalid")
    return best_k * dt, best_k


@dataclass
class ImuTrace:
    samples: np.ndarray  # n x 3 (ax, ay, az)
    rate_hz: float = 1000.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1, 3)
        if not self.rate_hz > 0:
            raise EvImpactError("rate_hz must be positive")


def read_imu_csv(path, rate_hz: float = 1000.0) -> ImuTrace:
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["ax", "ay", "az"]:
            raise ParseError("expected header ax,ay,az", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ParseError(f"non-numeric field in {row!r}", line=lineno) from None
    return ImuTrace(np.array(rows, dtype=np.float64).reshape(-1, 3), rate_hz)


def imu_detect(trace: ImuTrace) -> int:
    """First sample whose squared acceleration norm exceeds twice the previous one."""
    e = (trace.samples ** 2).sum(axis=1)
    if len(e) < 2:
        raise EvImpactError("need at least 2 IMU samples")
    hits = np.flatnonzero(e[1:] > 2.0 * e[:-1])
    if not len(hits):
        raise NoImpactDetectedError("no impact detected")
    return int(hits[0]) + 1


def imu_detect_time_ms(trace: ImuTrace) -> float:
    return imu_detect(trace) / trace.rate_hz * 1000.0


def latency_stats(lags_ms) -> dict:
    """Mean, population std, min and max of IMU-vs-GT lags."""
    a = np.asarray(list(lags_ms), dtype=np.float64)
    if a.size == 0:
        raise EvImpactError("latency_stats needs at least one lag")
    return {"mean": float(a.mean()), "std": float(a.std()), "min": float(a.min()),
            "max": float(a.max()), "n": int(a.size)}
