"""Event streams and dense event-frame synthesis.

Events are kept as parallel numpy arrays (``t``, ``x``, ``y``, ``p``) rather
than per-event objects; :class:`Event` exists for construction and iteration
convenience.  Timestamps are integer microseconds since clip start.

Frame ``k`` (``k = 1..K``) sits at nominal time ``t_k = k * dt`` and counts the
positive-polarity events with ``t`` in ``[t_k - window_frames * dt, t_k)``.
Counts are clipped at ``saturation`` and divided by it, so frames live in
``[0, 1]``.  Negative events are dropped before counting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import BoundsError, ConfigError, EvImpactError, ParseError

CSV_HEADER = ("t_us", "x", "y", "p")


class Event(NamedTuple):
    t: int
    x: int
    y: int
    p: int


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class EventStream:
    """Time-sorted events on a ``width x height`` sensor.

    The constructor validates geometry and polarity and stable-sorts by
    timestamp, so equal timestamps keep their input order.
    """

    __slots__ = ("width", "height", "t", "x", "y", "p", "duration")

    def __init__(self, width, height, t, x, y, p, duration=None):
        if width < 1 or height < 1:
            raise ConfigError("geometry", f"invalid sensor size {width}x{height}")
        t = np.asarray(t, dtype=np.int64).ravel()
        x = np.asarray(x, dtype=np.int32).ravel()
        y = np.asarray(y, dtype=np.int32).ravel()
        p = np.asarray(p, dtype=np.int8).ravel()
        if not (len(t) == len(x) == len(y) == len(p)):
            raise EvImpactError("event field arrays differ in length")
        if len(t):
            if t.min() < 0:
                raise BoundsError("negative timestamp")
            if x.min() < 0 or x.max() >= width or y.min() < 0 or y.max() >= height:
                raise BoundsError(f"event outside {width}x{height} geometry")
            if not np.all((p == 1) | (p == -1)):
                raise ParseError("polarity must be +1 or -1")
        order = np.argsort(t, kind="stable")
        if np.any(order != np.arange(len(t))):
            t, x, y, p = t[order], x[order], y[order], p[order]
        tmax = int(t[-1]) if len(t) else 0
        if duration is None:
            duration = tmax
        elif duration < tmax:
            raise EvImpactError(f"declared duration {duration} us precedes last event at {tmax} us")
        self.width = int(width)
        self.height = int(height)
        self.t = _frozen(t)
        self.x = _frozen(x)
        self.y = _frozen(y)
        self.p = _frozen(p)
        self.duration = int(duration)

    @classmethod
    def from_events(cls, width: int, height: int, events: Iterable[Event], duration=None):
        evs = list(events)
        cols = np.array(evs, dtype=np.int64).reshape(-1, 4)
        return cls(width, height, cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3], duration)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for row in zip(self.t.tolist(), self.x.tolist(), self.y.tolist(), self.p.tolist()):
            yield Event(*row)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            (self.width, self.height, self.duration) == (other.width, other.height, other.duration)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    def __repr__(self) -> str:
        return f"EventStream({self.width}x{self.height}, n={len(self)}, duration={self.duration}us)"

    def shifted(self, offset_us: int) -> "EventStream":
        return EventStream(self.width, self.height, self.t + offset_us, self.x, self.y, self.p,
                           self.duration + offset_us)


@dataclass(frozen=True)
class AccumConfig:
    dt: int = 100  # frame interval, us
    window_frames: int = 10  # T_win = window_frames * dt
    saturation: int = 3

    def __post_init__(self):
        for name in ("dt", "window_frames", "saturation"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(name, f"must be an integer >= 1, got {v!r}")

    @property
    def window_us(self) -> int:
        return self.dt * self.window_frames


class FrameStack:
    """``K x H x W`` float32 frames in [0, 1]; frame index 0 holds ``t_1 = dt``."""

    __slots__ = ("values", "dt")

    def __init__(self, values, dt: int):
        values = np.asarray(values, dtype=np.float32)
        if values.ndim != 3:
            raise EvImpactError(f"frame stack must be 3-D, got shape {values.shape}")
        if values.size and (np.isnan(values).any() or values.min() < 0 or values.max() > 1):
            raise EvImpactError("frame values must lie in [0, 1]")
        if dt < 1:
            raise ConfigError("dt", "must be >= 1")
        self.values = _frozen(values)
        self.dt = int(dt)

    @property
    def k_count(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def times(self) -> np.ndarray:
        """Nominal frame times ``k * dt`` in microseconds."""
        return np.arange(1, self.k_count + 1, dtype=np.int64) * self.dt

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrameStack):
            return NotImplemented
        return (self.dt == other.dt and self.values.shape == other.values.shape
                and self.values.tobytes() == other.values.tobytes())

    def __repr__(self) -> str:
        return f"FrameStack(K={self.k_count}, {self.height}x{self.width}, dt={self.dt}us)"


def read_events_csv(path, width: int, height: int) -> EventStream:
    """Load a ``t_us,x,y,p`` CSV (polarity stored as 0/1)."""
    path = Path(path)
    rows: list[tuple[int, int, int, int]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"expected header {','.join(CSV_HEADER)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line=lineno)
            try:
                t, x, y, praw = (int(v) for v in row)
            except ValueError:
                raise ParseError(f"non-integer field in {row!r}", line=lineno) from None
            if t < 0:
                raise ParseError(f"negative timestamp {t}", line=lineno)
            if praw not in (0, 1):
                raise ParseError(f"polarity must be 0 or 1, got {praw}", line=lineno)
            if not (0 <= x < width and 0 <= y < height):
                raise BoundsError(f"({x}, {y}) outside {width}x{height}", line=lineno)
            rows.append((t, x, y, 1 if praw else -1))
    return EventStream.from_events(width, height, rows)


def write_events_csv(stream: EventStream, path) -> None:
    path = Path(path)
    pol = (stream.p > 0).astype(np.int64)
    table = np.column_stack([stream.t, stream.x, stream.y, pol])
    with path.open("w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        if len(table):
            np.savetxt(fh, table, fmt="%d", delimiter=",")


def frame_count(duration: int, dt: int) -> int:
    if duration < dt:
        raise EvImpactError("clip shorter than one frame")
    return duration // dt


def window_counts(stream: EventStream, cfg: AccumConfig) -> np.ndarray:
    """Raw positive-event counts per frame window, ``K x H x W`` int32."""
    K = frame_count(stream.duration, cfg.dt)
    H, W = stream.height, stream.width
    pos = stream.p > 0
    t = stream.t[pos]
    flat = stream.y[pos].astype(np.int64) * W + stream.x[pos]
    # bin j = floor(t/dt) feeds frames j+1 .. j+window_frames
    edges = np.searchsorted(t, np.arange(K + 1, dtype=np.int64) * cfg.dt, side="left")

    out = np.zeros((K, H * W), dtype=np.int32)
    running = np.zeros(H * W, dtype=np.int32)
    for k in range(1, K + 1):
        j = k - 1
        np.add.at(running, flat[edges[j]:edges[j + 1]], 1)
        j_old = k - 1 - cfg.window_frames
        if j_old >= 0:
            np.subtract.at(running, flat[edges[j_old]:edges[j_old + 1]], 1)
        out[k - 1] = running
    return out.reshape(K, H, W)


def normalize_counts(counts: np.ndarray, saturation: int) -> np.ndarray:
    return (np.minimum(counts, saturation) / saturation).astype(np.float32)


def accumulate(stream: EventStream, cfg: AccumConfig = AccumConfig()) -> FrameStack:
    """Sliding-window accumulation of positive events into dense frames."""
    counts = window_counts(stream, cfg)
    return FrameStack(normalize_counts(counts, cfg.saturation), cfg.dt)
