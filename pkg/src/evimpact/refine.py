"""Bidirectional coarse-mask fusion and training-free mask refinement.

Each frame is refined on its own by gradient descent on per-pixel logits
``theta`` (``P = softmax(theta)`` over the class axis) against

    E(theta) = lambda_fid * CE_soft(P, Q) + lambda_smooth * TV_aniso(P)
               + lambda_circ * Circ(P_ball)

where ``Q`` are the fused coarse targets.  Every term carries a ``1/N``
pixel normalisation, so the descent step is taken on ``N * E`` and
``step`` reads as a per-pixel rate.  A step that raises the energy is
halved, at most ten times; after that the frame stops.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError, ShapeError
from .losses import (BACKGROUND, BALL, BAT, N_CLASSES, LossWeights, ProbStack, ce_soft,
                     ce_soft_grad, circ, circ_grad, smooth, smooth_grad)

MAX_HALVINGS = 10
# coarse channel order on disk and in memory: (ball, bat)
COARSE_BALL, COARSE_BAT = 0, 1


@dataclass(frozen=True)
class RefinerConfig:
    lambda_fid: float = 1.0
    lambda_smooth: float = 0.1
    lambda_circ: float = 0.05
    step: float = 0.5
    max_iters: int = 200
    rel_tol: float = 1e-6
    mass_tau: float = 0.2

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigError("step", "must be > 0")
        if int(self.max_iters) != self.max_iters or self.max_iters < 0:
            raise ConfigError("max_iters", "must be a non-negative integer")
        if not self.rel_tol > 0:
            raise ConfigError("rel_tol", "must be > 0")
        if not 0 < self.mass_tau < 1:
            raise ConfigError("mass_tau", "must be in (0, 1)")
        for name in ("lambda_fid", "lambda_smooth", "lambda_circ"):
            if not getattr(self, name) >= 0:
                raise ConfigError(name, "must be >= 0")

    @classmethod
    def from_weights(cls, w: LossWeights, **kw) -> "RefinerConfig":
        return cls(lambda_smooth=w.lambda_smooth, lambda_circ=w.lambda_circ, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RefinerConfig":
        known = {f.name for f in fields(cls)}
        bad = set(d) - known
        if bad:
            raise ConfigError(sorted(bad)[0], "unknown refiner field")
        return cls(**d)


@dataclass
class RefineInput:
    """Per-clip refiner input: event frames plus forward/backward coarse masks.

    ``events`` is ``K x H x W``; ``fwd`` and ``bwd`` are ``K x 2 x H x W``
    with channels (ball, bat).  ``frame(k)`` gives the 5-channel stack
    (event, fwd ball, fwd bat, bwd ball, bwd bat) for one frame.
    """

    events: np.ndarray
    fwd: np.ndarray
    bwd: np.ndarray

    def __post_init__(self):
        self.events = np.asarray(self.events, dtype=np.float32)
        self.fwd = np.asarray(self.fwd, dtype=np.float32)
        self.bwd = np.asarray(self.bwd, dtype=np.float32)
        K, H, W = self.events.shape
        for name in ("fwd", "bwd"):
            if getattr(self, name).shape != (K, 2, H, W):
                raise ShapeError(f"{name} masks {getattr(self, name).shape} do not match "
                                 f"event frames {self.events.shape}")
        for name in ("events", "fwd", "bwd"):
            a = getattr(self, name)
            if a.size and (np.isnan(a).any() or a.min() < 0 or a.max() > 1):
                raise ConfigError(name, "channel values must lie in [0, 1]")

    def __len__(self) -> int:
        return self.events.shape[0]

    def frame(self, k: int) -> np.ndarray:
        return np.concatenate([self.events[k][None], self.fwd[k], self.bwd[k]])


@dataclass
class FusedTargets:
    q: np.ndarray  # K x 3 x H x W soft targets (bg, bat, ball)
    flagged: np.ndarray  # K bool: some object dropped in both directions
    source: np.ndarray  # K x 2 (ball, bat): 'f', 'b', 'a'(verage) or '-'


def fuse_bidirectional(m_fwd, m_bwd, mass_tau: float = 0.2) -> FusedTargets:
    """Merge forward/backward coarse masks into per-pixel soft class targets.

    A direction counts as dropped on a frame when its mask mass falls below
    ``mass_tau`` times that direction's median mass over the clip.  Healthy
    pairs are averaged, a lone healthy direction is used as is, and frames
    where both directions dropped an object are flagged.
    """
    m_fwd = np.asarray(m_fwd, dtype=np.float64)
    m_bwd = np.asarray(m_bwd, dtype=np.float64)
    if m_fwd.shape != m_bwd.shape or m_fwd.ndim != 4 or m_fwd.shape[1] != 2:
        raise ShapeError(f"coarse stacks must both be K x 2 x H x W, got {m_fwd.shape} and {m_bwd.shape}")
    K, _, H, W = m_fwd.shape
    mass_f = m_fwd.sum(axis=(2, 3))
    mass_b = m_bwd.sum(axis=(2, 3))
    ok_f = mass_f >= mass_tau * np.median(mass_f, axis=0)
    ok_b = mass_b >= mass_tau * np.median(mass_b, axis=0)

    fused = np.zeros((K, 2, H, W))
    source = np.full((K, 2), "-", dtype="<U1")
    both = ok_f & ok_b
    fused[both] = 0.5 * (m_fwd[both] + m_bwd[both])
    source[both] = "a"
    only_f = ok_f & ~ok_b
    fused[only_f] = m_fwd[only_f]
    source[only_f] = "f"
    only_b = ok_b & ~ok_f
    fused[only_b] = m_bwd[only_b]
    source[only_b] = "b"
    flagged = (~ok_f & ~ok_b).any(axis=1)

    q = np.empty((K, N_CLASSES, H, W))
    q[:, BALL] = fused[:, COARSE_BALL]
    q[:, BAT] = fused[:, COARSE_BAT]
    q[:, BACKGROUND] = np.clip(1.0 - q[:, BALL] - q[:, BAT], 0.0, 1.0)
    q /= q.sum(axis=1, keepdims=True)
    return FusedTargets(q, flagged, source)


def softmax(theta: np.ndarray) -> np.ndarray:
    z = theta - theta.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def frame_energy(P, Q, cfg: RefinerConfig, w: LossWeights) -> float:
    e = cfg.lambda_fid * ce_soft(P, Q, w.eps_log)
    if cfg.lambda_smooth:
        e += cfg.lambda_smooth * smooth(P)
    if cfg.lambda_circ:
        e += cfg.lambda_circ * circ(P[BALL], w)
    return float(e)


def frame_energy_grad(P, Q, cfg: RefinerConfig, w: LossWeights) -> np.ndarray:
    """Gradient of :func:`frame_energy` with respect to the logits."""
    g = cfg.lambda_fid * ce_soft_grad(P, Q, w.eps_log)
    if cfg.lambda_smooth:
        g = g + cfg.lambda_smooth * smooth_grad(P)
    if cfg.lambda_circ:
        g[BALL] += cfg.lambda_circ * circ_grad(P[BALL], w)
    # softmax Jacobian-vector product
    return P * (g - (P * g).sum(axis=0, keepdims=True))


def refine_frame(Q, cfg: RefinerConfig = RefinerConfig(), w: LossWeights = LossWeights()):
    """Refine one frame of soft targets; returns ``(P, energy_history)``."""
    Q = np.asarray(Q, dtype=np.float64)
    n = Q.shape[1] * Q.shape[2]
    theta = np.log(Q + w.eps_log)
    P = softmax(theta)
    E = frame_energy(P, Q, cfg, w)
    history = [E]
    step = cfg.step
    for _ in range(cfg.max_iters):
        g = frame_energy_grad(P, Q, cfg, w) * n
        for _ in range(MAX_HALVINGS + 1):
            cand = theta - step * g
            P_new = softmax(cand)
            E_new = frame_energy(P_new, Q, cfg, w)
            if E_new <= E:
                break
            step *= 0.5
        else:
            break
        decrease = E - E_new
        theta, P, E = cand, P_new, E_new
        history.append(E)
        if E == 0 or decrease < cfg.rel_tol * abs(history[-2]):
            break
    return P, history


@dataclass
class RefineResult:
    probs: ProbStack
    invalid_frames: list[int]  # 0-based stack indices
    energies: list[float]  # final energy per frame (NaN for invalid)
    histories: list[list[float]] = field(default_factory=list)

    def sidecar(self) -> dict:
        return {"invalid_frames": self.invalid_frames,
                "final_energies": [None if np.isnan(e) else e for e in self.energies]}


def uniform_frame(H: int, W: int) -> np.ndarray:
    return np.full((N_CLASSES, H, W), 1.0 / N_CLASSES)


def refine_targets(fused: FusedTargets, cfg: RefinerConfig = RefinerConfig(),
                   w: LossWeights = LossWeights(), frame_order=None) -> RefineResult:
    K, _, H, W = fused.q.shape
    out = np.empty((K, N_CLASSES, H, W), dtype=np.float32)
    energies = [float("nan")] * K
    histories: list[list[float]] = [[] for _ in range(K)]
    order = range(K) if frame_order is None else frame_order
    for k in order:
        if fused.flagged[k]:
            out[k] = uniform_frame(H, W)
            continue
        P, hist = refine_frame(fused.q[k], cfg, w)
        out[k] = P
        energies[k] = hist[-1]
        histories[k] = hist
    invalid = [int(k) for k in np.flatnonzero(fused.flagged)]
    return RefineResult(ProbStack(out), invalid, energies, histories)


def refine_clip(inputs: RefineInput, cfg: RefinerConfig = RefinerConfig(),
                w: LossWeights = LossWeights()) -> RefineResult:
    """Fuse both coarse directions, then refine every frame independently.

    Frames where an object is missing from both directions come back as
    uniform ``1/3`` maps and are listed in ``invalid_frames``.
    """
    fused = fuse_bidirectional(inputs.fwd, inputs.bwd, cfg.mass_tau)
    return refine_targets(fused, cfg, w)


def unrefined(fused: FusedTargets) -> RefineResult:
    """Fused targets passed straight through (the no-refinement ablation)."""
    K, _, H, W = fused.q.shape
    out = fused.q.astype(np.float32)
    for k in np.flatnonzero(fused.flagged):
        out[k] = uniform_frame(H, W)
    invalid = [int(k) for k in np.flatnonzero(fused.flagged)]
    return RefineResult(ProbStack(out), invalid, [float("nan")] * K)
