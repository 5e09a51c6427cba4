"""Segmentation loss terms on per-pixel class probability maps.

A single frame ``P`` is a ``3 x H x W`` array with channel order
background (0), bat (1), ball (2).  Label maps ``G`` are ``H x W`` integer
arrays over the same classes.  ``N = H * W`` throughout.

composite = lambda_ce * CE_w + lambda_dice * Dice + lambda_smooth * TV_aniso
            + lambda_circ * Circ(P_ball)

The smoothness and circularity terms come with analytic gradients with
respect to the probabilities; these are what the refiner descends on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EvImpactError, ShapeError

BACKGROUND, BAT, BALL = 0, 1, 2
N_CLASSES = 3
SIMPLEX_TOL = 1e-5


@dataclass(frozen=True)
class LossWeights:
    lambda_ce: float = 0.5
    lambda_dice: float = 1.0
    lambda_smooth: float = 0.1
    lambda_circ: float = 0.05
    class_weights: tuple[float, float, float] = (0.5, 1.0, 13.0)  # bg, bat, ball
    eps_circ: float = 1e-6
    eps_log: float = 1e-7
    dice_smooth: float = 1.0
    eps_grad: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))
        for name in ("lambda_ce", "lambda_dice", "lambda_smooth", "lambda_circ"):
            if not getattr(self, name) >= 0:
                raise ConfigError(name, "must be >= 0")
        if len(self.class_weights) != N_CLASSES or min(self.class_weights) <= 0:
            raise ConfigError("class_weights", "need three positive weights (bg, bat, ball)")
        for name in ("eps_circ", "eps_log", "eps_grad"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be > 0")
        if not self.dice_smooth >= 0:
            raise ConfigError("dice_smooth", "must be >= 0")


class ProbStack:
    """``K x 3 x H x W`` float32 class probabilities, one simplex per pixel."""

    __slots__ = ("values",)

    def __init__(self, values, check: bool = True):
        values = np.asarray(values, dtype=np.float32)
        if values.ndim != 4 or values.shape[1] != N_CLASSES:
            raise ShapeError(f"ProbStack must be K x 3 x H x W, got {values.shape}")
        if check and values.size:
            if np.isnan(values).any() or values.min() < 0 or values.max() > 1:
                raise EvImpactError("probabilities must lie in [0, 1]")
            dev = np.abs(values.astype(np.float64).sum(axis=1) - 1.0).max()
            if dev > SIMPLEX_TOL:
                raise EvImpactError(f"class probabilities do not sum to 1 (max deviation {dev:.2e})")
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        self.values = values

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "ProbStack":
        labels = np.asarray(labels)
        return cls(np.stack([labels == c for c in range(N_CLASSES)], axis=1).astype(np.float32))

    @property
    def k_count(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[2]

    @property
    def width(self) -> int:
        return self.values.shape[3]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProbStack):
            return NotImplemented
        return self.values.shape == other.values.shape and self.values.tobytes() == other.values.tobytes()


def one_hot(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    return np.stack([(labels == c) for c in range(N_CLASSES)]).astype(np.float64)


def _check_frame(P, G=None):
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 3 or P.shape[0] != N_CLASSES:
        raise ShapeError(f"expected a 3 x H x W frame, got {P.shape}")
    if G is not None:
        G = np.asarray(G)
        if G.shape != P.shape[1:] and G.shape != P.shape:
            raise ShapeError(f"target shape {G.shape} does not match frame {P.shape}")
    return P, G


def ce_weighted(P, G, w: LossWeights = LossWeights()) -> float:
    """Class-weighted cross-entropy against a label map, averaged over pixels."""
    P, G = _check_frame(P, G)
    if G.shape != P.shape[1:]:
        raise ShapeError("ce_weighted expects an H x W label map")
    G = G.astype(np.intp)
    p_true = np.take_along_axis(P, G[None], axis=0)[0]
    cw = np.asarray(w.class_weights)[G]
    return float(-(cw * np.log(np.maximum(p_true, w.eps_log))).sum() / G.size)


def dice(P, G_onehot, w: LossWeights = LossWeights()) -> float:
    P, G = _check_frame(P, G_onehot)
    if G.shape != P.shape:
        raise ShapeError("dice expects a one-hot 3 x H x W target")
    G = G.astype(np.float64)
    s = w.dice_smooth
    inter = (P * G).sum(axis=(1, 2))
    denom = P.sum(axis=(1, 2)) + G.sum(axis=(1, 2)) + s
    return float(np.mean(1.0 - (2.0 * inter + s) / denom))


def ce_soft(P, Q, eps_log: float = 1e-7) -> float:
    """Cross-entropy against soft targets ``Q`` (same shape as ``P``)."""
    P, Q = _check_frame(P, Q)
    n = P.shape[1] * P.shape[2]
    return float(-(Q * np.log(np.maximum(P, eps_log))).sum() / n)


def ce_soft_grad(P, Q, eps_log: float = 1e-7) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[-1] * P.shape[-2]
    return np.where(P > eps_log, -Q / np.maximum(P, eps_log), 0.0) / n


def _channels(P):
    P = np.asarray(P, dtype=np.float64)
    if P.ndim == 2:
        return P[None], True
    if P.ndim == 3:
        return P, False
    raise ShapeError(f"expected H x W or C x H x W, got {P.shape}")


def smooth(P) -> float:
    """Anisotropic TV: mean absolute forward difference, averaged over channels.

    Accepts a single ``H x W`` channel or a ``C x H x W`` frame.
    """
    X, _ = _channels(P)
    n = X.shape[1] * X.shape[2]
    per_channel = (np.abs(np.diff(X, axis=2)).sum(axis=(1, 2))
                   + np.abs(np.diff(X, axis=1)).sum(axis=(1, 2))) / n
    return float(per_channel.mean())


def smooth_grad(P) -> np.ndarray:
    """Subgradient of :func:`smooth` with ``sign(0) = 0``."""
    X, single = _channels(P)
    C, H, W = X.shape
    sx = np.sign(np.diff(X, axis=2))
    sy = np.sign(np.diff(X, axis=1))
    g = np.zeros_like(X)
    g[:, :, 1:] += sx
    g[:, :, :-1] -= sx
    g[:, 1:, :] += sy
    g[:, :-1, :] -= sy
    g /= C * H * W
    return g[0] if single else g


def _forward_diffs(B):
    dx = np.zeros_like(B)
    dy = np.zeros_like(B)
    dx[:, :-1] = B[:, 1:] - B[:, :-1]
    dy[:-1, :] = B[1:, :] - B[:-1, :]
    return dx, dy


def _check_channel(P_ball):
    B = np.asarray(P_ball, dtype=np.float64)
    if B.ndim != 2:
        raise ShapeError(f"circularity acts on a single H x W channel, got {B.shape}")
    return B


def perimeter_area(P_ball, eps_grad: float = 1e-8) -> tuple[float, float]:
    """Soft perimeter ``sum |grad P|`` (smoothed l2) and area ``sum P``."""
    B = _check_channel(P_ball)
    dx, dy = _forward_diffs(B)
    return float(np.sqrt(dx * dx + dy * dy + eps_grad).sum()), float(B.sum())


def circ(P_ball, w: LossWeights = LossWeights()) -> float:
    """Isoperimetric ratio ``C^2 / (4 pi A + eps)``, divided by the pixel count."""
    B = _check_channel(P_ball)
    C, A = perimeter_area(B, w.eps_grad)
    return C * C / (4.0 * np.pi * A + w.eps_circ) / B.size


def circ_grad(P_ball, w: LossWeights = LossWeights()) -> np.ndarray:
    B = _check_channel(P_ball)
    dx, dy = _forward_diffs(B)
    mag = np.sqrt(dx * dx + dy * dy + w.eps_grad)
    C = mag.sum()
    A = B.sum()
    denom = 4.0 * np.pi * A + w.eps_circ
    ux = dx / mag
    uy = dy / mag
    dC = np.zeros_like(B)
    # dx[i, j] = B[i, j+1] - B[i, j] for j < W-1 (zero column at the border)
    dC[:, 1:] += ux[:, :-1]
    dC[:, :-1] -= ux[:, :-1]
    dC[1:, :] += uy[:-1, :]
    dC[:-1, :] -= uy[:-1, :]
    return (2.0 * C / denom * dC - C * C * 4.0 * np.pi / denom ** 2) / B.size


def composite(P, G, w: LossWeights = LossWeights()) -> float:
    """Weighted sum of the four terms; circularity on the ball channel only."""
    P, G = _check_frame(P, G)
    total = 0.0
    if w.lambda_ce:
        total += w.lambda_ce * ce_weighted(P, G, w)
    if w.lambda_dice:
        total += w.lambda_dice * dice(P, one_hot(G), w)
    if w.lambda_smooth:
        total += w.lambda_smooth * smooth(P)
    if w.lambda_circ:
        total += w.lambda_circ * circ(P[BALL], w)
    return total


def composite_stack(stack: ProbStack, labels: np.ndarray, w: LossWeights = LossWeights()) -> float:
    """Mean composite loss over the frames of a stack (fixed frame order)."""
    labels = np.asarray(labels)
    if labels.shape != (stack.k_count, stack.height, stack.width):
        raise ShapeError(f"labels {labels.shape} do not match stack {stack.values.shape}")
    vals = [composite(stack.values[k], labels[k], w) for k in range(stack.k_count)]
    return float(np.mean(vals)) if vals else 0.0
