"""Synthetic bat/ball clips with exact ground truth.

Geometry uses pixel-centre coordinates: pixel ``(x, y)`` is column ``x``,
row ``y`` and is covered when its centre lies inside a shape.  Times in the
config are microseconds; speeds are px/ms and angular rates rad/ms (and
rad/ms^2), matching the scale of a swing filmed at 10 kHz.

The ball moves in a straight line until it first touches the bat capsule,
then bounces off the bat surface.  The bounce uses the relative normal
velocity at the contact point, so the ball always leaves faster than the
bat surface chases it.  Only the first contact is modelled.

Events come from occupancy changes of the union of both objects, sampled
every ``micro_step`` microseconds: uncovered -> covered emits ``+1``,
covered -> uncovered emits ``-1``, with a uniform random timestamp inside
the step.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DegenerateSceneError, EvImpactError
from .events import EventStream, read_events_csv, write_events_csv
from .formats import read_prm, write_prm
from .losses import BALL, BAT, N_CLASSES

CONTACT_CLEARANCE_PX = 0.5


@dataclass(frozen=True)
class SceneConfig:
    width: int = 346
    height: int = 260
    ball_radius: float = 4.0
    ball_speed: float = 2.5  # px/ms
    ball_start: tuple[float, float] = (168.37, 152.951)
    ball_direction: tuple[float, float] = (-0.84233, 0.538961)
    bat_pivot: tuple[float, float] = (150.0, 230.0)
    bat_length: float = 110.0
    bat_half_width: float = 3.0
    bat_angle0: float = -2.94  # rad, image coordinates (y down)
    bat_omega: float = 0.04  # rad/ms
    bat_alpha: float = 0.0  # rad/ms^2
    restitution: float = 0.5
    noise_rate: float = 0.1  # events / pixel / s
    micro_step: int = 10  # us
    seed: int = 0
    clip_duration: int = 40_000  # us

    def __post_init__(self):
        for name in ("ball_start", "ball_direction", "bat_pivot"):
            v = tuple(float(c) for c in getattr(self, name))
            if len(v) != 2:
                raise ConfigError(name, "expected an (x, y) pair")
            object.__setattr__(self, name, v)
        if self.width < 1 or self.height < 1:
            raise ConfigError("width", "canvas must be at least 1x1")
        if not self.ball_radius >= 1:
            raise ConfigError("ball_radius", "must be >= 1")
        if self.ball_speed < 0:
            raise ConfigError("ball_speed", "must be >= 0")
        if self.bat_length < 0 or self.bat_half_width <= 0:
            raise ConfigError("bat_length", "bat needs length >= 0 and half width > 0")
        if not 0 < self.restitution <= 1:
            raise ConfigError("restitution", "must be in (0, 1]")
        if self.noise_rate < 0:
            raise ConfigError("noise_rate", "must be >= 0")
        if int(self.micro_step) != self.micro_step or self.micro_step < 1:
            raise ConfigError("micro_step", "must be an integer >= 1")
        if int(self.clip_duration) != self.clip_duration or self.clip_duration < 1:
            raise ConfigError("clip_duration", "must be a positive integer (us)")
        if self.ball_speed > 0 and math.hypot(*self.ball_direction) == 0:
            raise ConfigError("ball_direction", "zero direction with nonzero speed")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown scene field")
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


@dataclass(frozen=True)
class DegradeConfig:
    jitter_sigma: float = 2.0
    dropout_prob: float = 0.1
    morph_range: tuple[int, ...] = (-1, 0, 1, 2)
    blur_radius: int = 1
    merge_window: int = 5
    merge_dilate: int = 2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "morph_range", tuple(int(r) for r in self.morph_range))
        if not self.morph_range:
            raise ConfigError("morph_range", "must list at least one radius")
        if not 0 <= self.dropout_prob <= 1:
            raise ConfigError("dropout_prob", "must be in [0, 1]")
        if self.jitter_sigma < 0:
            raise ConfigError("jitter_sigma", "must be >= 0")
        for name in ("blur_radius", "merge_window", "merge_dilate"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be >= 0")

    @classmethod
    def identity(cls, seed: int = 0) -> "DegradeConfig":
        return cls(jitter_sigma=0.0, dropout_prob=0.0, morph_range=(0,), blur_radius=0,
                   merge_window=0, merge_dilate=0, seed=seed)

    def check_radii(self, height: int, width: int) -> None:
        limit = min(height, width) / 4
        radii = [abs(r) for r in self.morph_range] + [self.blur_radius, self.merge_dilate]
        if max(radii) > limit:
            raise ConfigError("morph_range", f"radius {max(radii)} exceeds min(H, W)/4 = {limit}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DegradeConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown degrade field")
        return cls(**d)


# -- kinematics ---------------------------------------------------------------


def bat_angle(cfg: SceneConfig, t_us):
    t = np.asarray(t_us, dtype=np.float64) / 1000.0
    return cfg.bat_angle0 + cfg.bat_omega * t + 0.5 * cfg.bat_alpha * t * t


def bat_segment(cfg: SceneConfig, t_us):
    """Endpoints (pivot, tip) of the bat axis at time ``t_us``."""
    th = bat_angle(cfg, t_us)
    px, py = cfg.bat_pivot
    return (px, py), (px + cfg.bat_length * np.cos(th), py + cfg.bat_length * np.sin(th))


def _unit(v):
    n = math.hypot(*v)
    return (v[0] / n, v[1] / n) if n > 0 else (0.0, 0.0)


def _segment_distance(cx, cy, ax, ay, bx, by):
    """Distance from points (cx, cy) to segments [a, b]; all broadcast."""
    ex, ey = bx - ax, by - ay
    ll = ex * ex + ey * ey
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(ll > 0, ((cx - ax) * ex + (cy - ay) * ey) / np.where(ll > 0, ll, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    qx, qy = ax + s * ex, ay + s * ey
    return np.hypot(cx - qx, cy - qy), qx, qy


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear ball path: free flight, then one bounce at ``t_contact``."""

    p0: tuple[float, float]
    v0: tuple[float, float]  # px/us
    t_contact: float | None = None
    p_contact: tuple[float, float] | None = None
    v1: tuple[float, float] | None = None

    def center(self, t_us):
        t = np.asarray(t_us, dtype=np.float64)
        x = self.p0[0] + self.v0[0] * t
        y = self.p0[1] + self.v0[1] * t
        if self.t_contact is not None:
            after = t > self.t_contact
            dt = t - self.t_contact
            x = np.where(after, self.p_contact[0] + self.v1[0] * dt, x)
            y = np.where(after, self.p_contact[1] + self.v1[1] * dt, y)
        return x, y


def _clearance_free(cfg, p0, v0, t):
    cx = p0[0] + v0[0] * t
    cy = p0[1] + v0[1] * t
    (ax, ay), (bx, by) = bat_segment(cfg, t)
    d, _, _ = _segment_distance(cx, cy, ax, ay, bx, by)
    return d - cfg.ball_radius - cfg.bat_half_width


def ball_trajectory(cfg: SceneConfig) -> Trajectory:
    speed = cfg.ball_speed / 1000.0
    u = _unit(cfg.ball_direction)
    p0 = cfg.ball_start
    v0 = (u[0] * speed, u[1] * speed)
    h = cfg.micro_step / 10.0
    ts = np.arange(0, int(cfg.clip_duration / h) + 1) * h
    clr = _clearance_free(cfg, p0, v0, ts)
    hit = np.flatnonzero(clr <= 0)
    if not len(hit):
        return Trajectory(p0, v0)
    i = hit[0]
    if i == 0:
        tc = 0.0
    else:
        lo, hi = ts[i - 1], ts[i]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _clearance_free(cfg, p0, v0, mid) <= 0:
                hi = mid
            else:
                lo = mid
        tc = hi
    cx, cy = p0[0] + v0[0] * tc, p0[1] + v0[1] * tc
    (ax, ay), (bx, by) = bat_segment(cfg, tc)
    d, qx, qy = _segment_distance(cx, cy, ax, ay, bx, by)
    qx, qy, d = float(qx), float(qy), float(d)
    th = float(bat_angle(cfg, tc))
    if d > 0:
        n = ((cx - qx) / d, (cy - qy) / d)
    else:
        n = (-math.sin(th), math.cos(th))
    # surface velocity of the bat at the contact point, px/us
    rate = (cfg.bat_omega + cfg.bat_alpha * tc / 1000.0) / 1000.0
    rx, ry = qx - cfg.bat_pivot[0], qy - cfg.bat_pivot[1]
    vb = (-rate * ry, rate * rx)
    vrel = (v0[0] - vb[0], v0[1] - vb[1])
    vn = vrel[0] * n[0] + vrel[1] * n[1]
    if vn < 0:
        k = (1.0 + cfg.restitution) * vn
        v1 = (float(v0[0] - k * n[0]), float(v0[1] - k * n[1]))
    else:
        v1 = v0
    return Trajectory(p0, v0, float(tc), (float(cx), float(cy)), v1)


def clearance(cfg: SceneConfig, t_us, traj: Trajectory | None = None):
    """Signed surface-to-surface gap between ball and bat, px."""
    traj = traj or ball_trajectory(cfg)
    t = np.asarray(t_us, dtype=np.float64)
    cx, cy = traj.center(t)
    (ax, ay), (bx, by) = bat_segment(cfg, t)
    d, _, _ = _segment_distance(cx, cy, ax, ay, bx, by)
    return d - cfg.ball_radius - cfg.bat_half_width


def compute_gt_impact(cfg: SceneConfig) -> float | None:
    """Contact time in microseconds, or ``None`` if the objects never touch.

    Clearance is sampled every ``micro_step / 10`` us; the earliest sample of
    minimal clearance is the impact if that clearance is at most 0.5 px.
    """
    h = cfg.micro_step / 10.0
    ts = np.arange(0, int(cfg.clip_duration / h) + 1) * h
    ts = ts[ts <= cfg.clip_duration]
    clr = clearance(cfg, ts)
    i = int(np.argmin(clr))
    if clr[i] <= CONTACT_CLEARANCE_PX:
        return float(ts[i])
    return None


# -- rasterisation ------------------------------------------------------------


def _box(cx0, cy0, cx1, cy1, pad, width, height):
    x0 = max(int(math.floor(min(cx0, cx1) - pad)), 0)
    x1 = min(int(math.ceil(max(cx0, cx1) + pad)) + 1, width)
    y0 = max(int(math.floor(min(cy0, cy1) - pad)), 0)
    y1 = min(int(math.ceil(max(cy0, cy1) + pad)) + 1, height)
    return x0, x1, y0, y1


def _ball_pixels(cfg, cx, cy):
    x0, x1, y0, y1 = _box(cx, cy, cx, cy, cfg.ball_radius, cfg.width, cfg.height)
    if x0 >= x1 or y0 >= y1:
        return np.empty(0, dtype=np.int64)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= cfg.ball_radius ** 2
    return (ys[inside].astype(np.int64) * cfg.width + xs[inside])


def _bat_pixels(cfg, a, b):
    x0, x1, y0, y1 = _box(a[0], a[1], b[0], b[1], cfg.bat_half_width, cfg.width, cfg.height)
    if x0 >= x1 or y0 >= y1:
        return np.empty(0, dtype=np.int64)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    d, _, _ = _segment_distance(xs.astype(np.float64), ys.astype(np.float64), a[0], a[1], b[0], b[1])
    inside = d <= cfg.bat_half_width
    return (ys[inside].astype(np.int64) * cfg.width + xs[inside])


def object_pixels(cfg: SceneConfig, t_us: float, traj: Trajectory | None = None):
    """Flat (row-major) indices of ball and bat pixels at ``t_us``."""
    traj = traj or ball_trajectory(cfg)
    cx, cy = traj.center(t_us)
    a, b = bat_segment(cfg, t_us)
    return (_ball_pixels(cfg, float(cx), float(cy)),
            _bat_pixels(cfg, (float(a[0]), float(a[1])), (float(b[0]), float(b[1]))))


def occupancy(cfg: SceneConfig, t_us: float, traj: Trajectory | None = None) -> np.ndarray:
    """Sorted flat indices of pixels covered by either object."""
    ball, bat = object_pixels(cfg, t_us, traj)
    return np.union1d(ball, bat)


def label_map(cfg: SceneConfig, t_us: float, traj: Trajectory | None = None) -> np.ndarray:
    """``H x W`` uint8 labels: 0 background, 1 bat, 2 ball (ball wins overlaps)."""
    ball, bat = object_pixels(cfg, t_us, traj)
    lab = np.zeros(cfg.height * cfg.width, dtype=np.uint8)
    lab[bat] = BAT
    lab[ball] = BALL
    return lab.reshape(cfg.height, cfg.width)


# -- clips --------------------------------------------------------------------


@dataclass
class ClipBundle:
    stream: EventStream
    gt_masks: np.ndarray  # K x H x W uint8 labels at t_k = k * dt
    gt_impact_us: float | None
    config: SceneConfig
    dt: int = 100
    meta: dict = field(default_factory=dict)

    @property
    def gt_impact_ms(self) -> float | None:
        return None if self.gt_impact_us is None else self.gt_impact_us / 1000.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClipBundle):
            return NotImplemented
        return (self.stream == other.stream and self.config == other.config
                and self.dt == other.dt and self.gt_impact_us == other.gt_impact_us
                and self.gt_masks.shape == other.gt_masks.shape
                and self.gt_masks.tobytes() == other.gt_masks.tobytes()
                and self.meta == other.meta)


def transition_events(cfg: SceneConfig, rng: np.random.Generator, traj: Trajectory | None = None):
    """Occupancy-change events (t, flat index, polarity) before sorting."""
    traj = traj or ball_trajectory(cfg)
    step = int(cfg.micro_step)
    n_steps = int(cfg.clip_duration) // step
    prev = occupancy(cfg, 0.0, traj)
    ts, idx, pol = [], [], []
    for j in range(1, n_steps + 1):
        cur = occupancy(cfg, float(j * step), traj)
        on = np.setdiff1d(cur, prev, assume_unique=True)
        off = np.setdiff1d(prev, cur, assume_unique=True)
        lo = (j - 1) * step
        if len(on):
            ts.append(rng.integers(lo, lo + step, size=len(on)))
            idx.append(on)
            pol.append(np.ones(len(on), dtype=np.int8))
        if len(off):
            ts.append(rng.integers(lo, lo + step, size=len(off)))
            idx.append(off)
            pol.append(-np.ones(len(off), dtype=np.int8))
        prev = cur
    if not ts:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int8)
    return np.concatenate(ts), np.concatenate(idx), np.concatenate(pol)


def noise_events(cfg: SceneConfig, rng: np.random.Generator):
    lam = cfg.noise_rate * cfg.width * cfg.height * cfg.clip_duration * 1e-6
    n = int(rng.poisson(lam)) if lam > 0 else 0
    t = rng.integers(0, cfg.clip_duration, size=n)
    flat = rng.integers(0, cfg.width * cfg.height, size=n)
    p = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    return t.astype(np.int64), flat.astype(np.int64), p


def simulate_clip(cfg: SceneConfig, dt: int = 100) -> ClipBundle:
    """Render events, per-frame labels and the contact time for one scene."""
    traj = ball_trajectory(cfg)
    ball0, bat0 = object_pixels(cfg, 0.0, traj)
    cx0, cy0 = cfg.ball_start
    inside = 0 <= cx0 < cfg.width and 0 <= cy0 < cfg.height
    pvx, pvy = cfg.bat_pivot
    if not (len(ball0) or len(bat0)) or not inside or not (0 <= pvx < cfg.width and 0 <= pvy < cfg.height):
        raise DegenerateSceneError("degenerate scene: objects do not start inside the canvas")

    rng = np.random.default_rng(cfg.seed)
    t1, f1, p1 = transition_events(cfg, rng, traj)
    t2, f2, p2 = noise_events(cfg, rng)
    t = np.concatenate([t1, t2])
    flat = np.concatenate([f1, f2])
    p = np.concatenate([p1, p2])
    stream = EventStream(cfg.width, cfg.height, t, flat % cfg.width, flat // cfg.width, p,
                         duration=cfg.clip_duration)

    K = cfg.clip_duration // dt
    if K < 1:
        raise EvImpactError("clip shorter than one frame")
    masks = np.stack([label_map(cfg, float(k * dt), traj) for k in range(1, K + 1)])
    return ClipBundle(stream, masks, compute_gt_impact(cfg), cfg, dt)


def contact_scene(
    width: int = 128,
    height: int = 128,
    clip_duration: int = 8000,
    t_contact_us: float = 4000.0,
    bat_pivot: tuple[float, float] = (40.0, 112.0),
    bat_length: float = 50.0,
    contact_angle: float = -2.0,
    contact_frac: float = 0.5,
    bat_omega: float = 0.08,
    bat_alpha: float = 0.0,
    approach_offset: float = 0.0,
    ball_speed: float = 3.0,
    ball_radius: float = 4.0,
    bat_half_width: float = 3.0,
    restitution: float = 0.5,
    noise_rate: float = 0.1,
    micro_step: int = 10,
    seed: int = 0,
) -> SceneConfig:
    """Build a scene whose free-flight ball touches the bat at ``t_contact_us``.

    The bat sits at ``contact_angle`` at the contact instant; the ball meets
    it on the leading side, ``contact_frac`` of the way from pivot to tip,
    arriving along the inward normal rotated by ``approach_offset`` radians.
    """
    tc = t_contact_us / 1000.0
    theta0 = contact_angle - bat_omega * tc - 0.5 * bat_alpha * tc * tc
    u = (math.cos(contact_angle), math.sin(contact_angle))
    n_lead = (-u[1], u[0])
    s = contact_frac * bat_length
    gap = ball_radius + bat_half_width
    cx = bat_pivot[0] + s * u[0] + gap * n_lead[0]
    cy = bat_pivot[1] + s * u[1] + gap * n_lead[1]
    ca, sa = math.cos(approach_offset), math.sin(approach_offset)
    d = (-(ca * n_lead[0] - sa * n_lead[1]), -(sa * n_lead[0] + ca * n_lead[1]))
    travel = ball_speed * tc
    start = (cx - d[0] * travel, cy - d[1] * travel)
    return SceneConfig(
        width=width, height=height, ball_radius=ball_radius, ball_speed=ball_speed,
        ball_start=start, ball_direction=d, bat_pivot=bat_pivot, bat_length=bat_length,
        bat_half_width=bat_half_width, bat_angle0=theta0, bat_omega=bat_omega,
        bat_alpha=bat_alpha, restitution=restitution, noise_rate=noise_rate,
        micro_step=micro_step, seed=seed, clip_duration=clip_duration,
    )


def random_scene(seed: int, width: int = 128, height: int = 128, clip_duration: int = 8000,
                 noise_rate: float = 0.1, micro_step: int = 10, speed_range=(2.0, 4.0)) -> SceneConfig:
    """Draw a contact scene whose objects stay inside the canvas for the whole clip."""
    rng = np.random.default_rng([seed, 0x5CE7E])
    scale = min(width, height) / 128.0
    for _ in range(200):
        cfg = contact_scene(
            width=width, height=height, clip_duration=clip_duration,
            t_contact_us=float(rng.uniform(0.4, 0.6) * clip_duration),
            bat_pivot=(float(rng.uniform(0.25, 0.4) * width), float(rng.uniform(0.8, 0.9) * height)),
            bat_length=float(rng.uniform(45, 55) * scale),
            contact_angle=float(rng.uniform(-2.3, -1.4)),
            contact_frac=float(rng.uniform(0.45, 0.55)),
            bat_omega=float(rng.uniform(0.05, 0.1)),
            bat_alpha=float(rng.uniform(-0.004, 0.004)),
            approach_offset=float(rng.uniform(-0.25, 0.25)),
            ball_speed=float(rng.uniform(*speed_range)),
            noise_rate=noise_rate, micro_step=micro_step, seed=seed,
        )
        if _stays_inside(cfg):
            return cfg
    raise DegenerateSceneError(f"could not place a scene inside {width}x{height}")


def _stays_inside(cfg: SceneConfig, margin: float = 2.0) -> bool:
    ts = np.linspace(0, cfg.clip_duration, 41)
    traj = ball_trajectory(cfg)
    cx, cy = traj.center(ts)
    (ax, ay), (bx, by) = bat_segment(cfg, ts)
    lo = cfg.ball_radius + margin
    ok_ball = (cx >= lo).all() and (cx <= cfg.width - 1 - lo).all() and \
        (cy >= lo).all() and (cy <= cfg.height - 1 - lo).all()
    lo = cfg.bat_half_width + margin
    ok_bat = all(bool((np.asarray(v) >= lo).all() and (np.asarray(v) <= lim - 1 - lo).all())
                 for v, lim in ((ax, cfg.width), (bx, cfg.width), (ay, cfg.height), (by, cfg.height)))
    return bool(ok_ball and ok_bat and traj.t_contact is not None)


# -- coarse-mask degradation --------------------------------------------------


def _disk(r: int) -> np.ndarray:
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return xx * xx + yy * yy <= r * r


def _shift(mask: np.ndarray, dx: int, dy: int) -> np.ndarray:
    out = np.zeros_like(mask)
    H, W = mask.shape
    if abs(dx) >= W or abs(dy) >= H:
        return out
    src = mask[max(0, -dy):H - max(0, dy), max(0, -dx):W - max(0, dx)]
    out[max(0, dy):max(0, dy) + src.shape[0], max(0, dx):max(0, dx) + src.shape[1]] = src
    return out


def _morph(mask: np.ndarray, r: int) -> np.ndarray:
    if r > 0:
        return ndimage.binary_dilation(mask, structure=_disk(r))
    if r < 0:
        return ndimage.binary_erosion(mask, structure=_disk(-r), border_value=0)
    return mask


def impact_frame_index(gt_impact_us: float | None, dt: int, k_count: int) -> int | None:
    """0-based stack index of the frame nearest the contact time."""
    if gt_impact_us is None:
        return None
    return int(min(max(round(gt_impact_us / dt) - 1, 0), k_count - 1))


def degrade_coarse(gt_masks: np.ndarray, dcfg: DegradeConfig, direction: str,
                   impact_index: int | None = None) -> np.ndarray:
    """Corrupt GT labels into soft coarse masks, ``K x 2 x H x W`` (ball, bat).

    Per frame and object: integer translation jitter, dropout, a random
    dilation/erosion, extra dilation within ``merge_window`` frames of the
    impact frame, and a final box blur.  ``fwd`` and ``bwd`` draw from
    separate RNG streams.
    """
    if direction not in ("fwd", "bwd"):
        raise ValueError(f"direction must be 'fwd' or 'bwd', got {direction!r}")
    gt_masks = np.asarray(gt_masks)
    K, H, W = gt_masks.shape
    dcfg.check_radii(H, W)
    rng = np.random.default_rng([dcfg.seed, 0 if direction == "fwd" else 1])
    out = np.zeros((K, 2, H, W), dtype=np.float32)
    morph = np.asarray(dcfg.morph_range)
    for k in range(K):
        near_impact = impact_index is not None and abs(k - impact_index) <= dcfg.merge_window
        for c, label in enumerate((BALL, BAT)):
            jx, jy = rng.normal(0.0, 1.0, size=2) * dcfg.jitter_sigma
            drop = rng.random() < dcfg.dropout_prob
            r = int(morph[rng.integers(len(morph))])
            if drop:
                continue
            m = _shift(gt_masks[k] == label, int(round(jx)), int(round(jy)))
            m = _morph(m, r)
            if near_impact and dcfg.merge_dilate:
                m = _morph(m, dcfg.merge_dilate)
            soft = m.astype(np.float64)
            if dcfg.blur_radius:
                soft = ndimage.uniform_filter(soft, size=2 * dcfg.blur_radius + 1, mode="constant")
            out[k, c] = np.clip(soft, 0.0, 1.0)
    return out


# -- persistence ----------------------------------------------------------------

EVENTS_FILE = "events.csv"
GT_FILE = "gt_masks.prm"
SIDECAR_FILE = "clip.json"


def save_clip(bundle: ClipBundle, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_events_csv(bundle.stream, d / EVENTS_FILE)
    onehot = np.stack([bundle.gt_masks == c for c in range(N_CLASSES)], axis=1).astype(np.float32)
    write_prm(onehot, d / GT_FILE)
    side = {"gt_impact_us": bundle.gt_impact_us, "dt_us": bundle.dt,
            "config": bundle.config.to_dict(), **bundle.meta}
    (d / SIDECAR_FILE).write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")


def load_sidecar(directory) -> dict:
    path = Path(directory) / SIDECAR_FILE
    if not path.exists():
        raise FileNotFoundError(f"missing clip sidecar: {path}")
    return json.loads(path.read_text())


def load_clip(directory) -> ClipBundle:
    d = Path(directory)
    side = load_sidecar(d)
    cfg = SceneConfig.from_dict(side.pop("config"))
    for name in (EVENTS_FILE, GT_FILE):
        if not (d / name).exists():
            raise FileNotFoundError(f"missing clip artifact: {d / name}")
    stream = read_events_csv(d / EVENTS_FILE, cfg.width, cfg.height)
    stream = EventStream(cfg.width, cfg.height, stream.t, stream.x, stream.y, stream.p,
                         duration=cfg.clip_duration)
    onehot = read_prm(d / GT_FILE)
    gt = np.argmax(onehot, axis=1).astype(np.uint8)
    gt_us = side.pop("gt_impact_us")
    dt = side.pop("dt_us")
    return ClipBundle(stream, gt, gt_us, cfg, dt, meta=side)


def with_seed(cfg, seed: int):
    return replace(cfg, seed=seed)
