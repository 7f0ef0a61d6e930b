"""Pose parameters for the contralateral patch and the affine transform
mapping canonical patch coordinates into image coordinates.

The transform is the product of a rescale-and-place matrix R (canonical
grid onto the expanded search patch) and a scale/rotate/translate matrix A
built from the predicted pose parameters:

    R = [ (w''-1)/(w0-1)      0          x'' ]      A = [ sx*cos  -sy*sin  tx ]
        [      0         (h''-1)/(h0-1)  y'' ]          [ sx*sin   sy*cos  ty ]
                                                        [   0        0      1 ]

Canonical coordinates are the destination grid; the composed transform
yields the image location each canonical point is sampled from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import BoundingBox, Point2


@dataclass(frozen=True)
class StnParams:
    """Patch pose: anisotropic scales, translation (canonical units), rotation."""

    s_x: float = 1.0
    s_y: float = 1.0
    t_x: float = 0.0
    t_y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.s_x, self.s_y, self.t_x, self.t_y, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"pose parameters must be finite, got {vals}")
        if self.s_x <= 0 or self.s_y <= 0:
            raise ValueError(f"scales must be positive, got s_x={self.s_x}, s_y={self.s_y}")

    @classmethod
    def identity(cls) -> "StnParams":
        return cls()

    @classmethod
    def from_raw(cls, raw) -> "StnParams":
        """Map unconstrained regressor outputs to valid parameters; the two
        scale entries pass through exp() so positivity always holds."""
        r = np.asarray(raw, dtype=float).reshape(-1)
        if r.size != 5:
            raise ValueError(f"expected 5 raw values, got {r.size}")
        return cls(math.exp(r[0]), math.exp(r[1]), r[2], r[3], r[4])

    def as_array(self) -> np.ndarray:
        return np.array([self.s_x, self.s_y, self.t_x, self.t_y, self.theta], dtype=float)

    def to_text(self) -> str:
        """Serialize as 5 whitespace-separated decimals: s_x s_y t_x t_y theta."""
        return " ".join(repr(v) for v in self.as_array())

    @classmethod
    def from_text(cls, text: str) -> "StnParams":
        parts = text.split()
        if len(parts) != 5:
            raise ValueError(f"expected 5 whitespace-separated decimals, got {len(parts)}")
        s_x, s_y, t_x, t_y, theta = (float(p) for p in parts)
        return cls(s_x, s_y, t_x, t_y, theta)


@dataclass(frozen=True)
class CanonicalSize:
    w0: int = 64
    h0: int = 64

    def __post_init__(self) -> None:
        if self.w0 < 2 or self.h0 < 2:
            raise ValueError(f"canonical size must be >= 2, got {self.w0}x{self.h0}")


@dataclass(frozen=True)
class AffineTransform:
    """2x3 matrix mapping homogeneous (u, v, 1) to (x, y)."""

    m00: float
    m01: float
    m02: float
    m10: float
    m11: float
    m12: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in self.as_matrix().ravel()):
            raise ValueError("transform entries must be finite")

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    @classmethod
    def from_matrix(cls, m) -> "AffineTransform":
        m = np.asarray(m, dtype=float)
        if m.shape != (2, 3):
            raise ValueError(f"expected a 2x3 matrix, got shape {m.shape}")
        return cls(*m.ravel())

    def as_matrix(self) -> np.ndarray:
        return np.array(
            [[self.m00, self.m01, self.m02], [self.m10, self.m11, self.m12]], dtype=float
        )

    def determinant(self) -> float:
        return self.m00 * self.m11 - self.m01 * self.m10

    def inverse(self) -> "AffineTransform":
        det = self.determinant()
        if abs(det) <= 1e-12:
            raise ValueError(f"transform is not invertible (|det| = {abs(det)})")
        a, b, c, d, e, f = self.m00, self.m01, self.m02, self.m10, self.m11, self.m12
        return AffineTransform(
            e / det,
            -b / det,
            (b * f - c * e) / det,
            -d / det,
            a / det,
            (c * d - a * f) / det,
        )


def compose_transform(
    expanded: BoundingBox, params: StnParams, canon: CanonicalSize = CanonicalSize()
) -> AffineTransform:
    """Compose the canonical-to-image transform for an expanded search patch."""
    rw = (expanded.w - 1.0) / (canon.w0 - 1.0)
    rh = (expanded.h - 1.0) / (canon.h0 - 1.0)
    cos_t, sin_t = math.cos(params.theta), math.sin(params.theta)
    return AffineTransform(
        rw * params.s_x * cos_t,
        -rw * params.s_y * sin_t,
        rw * params.t_x + expanded.x,
        rh * params.s_x * sin_t,
        rh * params.s_y * cos_t,
        rh * params.t_y + expanded.y,
    )


def map_point(t: AffineTransform, p) -> Point2:
    u, v = float(p[0]), float(p[1])
    return Point2(t.m00 * u + t.m01 * v + t.m02, t.m10 * u + t.m11 * v + t.m12)


def grad_transform(
    expanded: BoundingBox, params: StnParams, canon: CanonicalSize, p
) -> np.ndarray:
    """Jacobian of the mapped image point with respect to the 5 pose
    parameters, ordered (s_x, s_y, t_x, t_y, theta); shape (2, 5)."""
    u, v = float(p[0]), float(p[1])
    rw = (expanded.w - 1.0) / (canon.w0 - 1.0)
    rh = (expanded.h - 1.0) / (canon.h0 - 1.0)
    cos_t, sin_t = math.cos(params.theta), math.sin(params.theta)
    return np.array(
        [
            [
                rw * cos_t * u,
                -rw * sin_t * v,
                rw,
                0.0,
                rw * (-params.s_x * sin_t * u - params.s_y * cos_t * v),
            ],
            [
                rh * sin_t * u,
                rh * cos_t * v,
                0.0,
                rh,
                rh * (params.s_x * cos_t * u - params.s_y * sin_t * v),
            ],
        ],
        dtype=float,
    )


class IdentityStn:
    """Pose predictor that always returns the identity pose (the expanded
    mirror patch is used as-is)."""

    def predict(self, proposal_patch: np.ndarray, mirror_patch: np.ndarray) -> StnParams:
        return StnParams.identity()


class LinearStn:
    """Linear pose regressor over the two flattened canonical patches.

    Input is the concatenation of the channel-reduced proposal patch and
    mirror patch, each h0 x w0, flattened to length 2*h0*w0. Raw outputs go
    through :meth:`StnParams.from_raw`, so zero weights predict the
    identity pose.
    """

    def __init__(self, canon: CanonicalSize = CanonicalSize(), seed: int = 0, init_scale: float = 0.0):
        self.canon = canon
        n_in = 2 * canon.h0 * canon.w0
        rng = np.random.default_rng(seed)
        self.weights = rng.uniform(-init_scale, init_scale, size=(5, n_in)) if init_scale > 0 else np.zeros((5, n_in))
        self.bias = np.zeros(5)

    def _stack(self, proposal_patch: np.ndarray, mirror_patch: np.ndarray) -> np.ndarray:
        a = np.asarray(proposal_patch, dtype=float)
        b = np.asarray(mirror_patch, dtype=float)
        expected = (self.canon.h0, self.canon.w0)
        if a.shape != expected or b.shape != expected:
            raise ValueError(f"patches must be {expected}, got {a.shape} and {b.shape}")
        return np.concatenate([a.ravel(), b.ravel()])

    def raw(self, proposal_patch: np.ndarray, mirror_patch: np.ndarray) -> np.ndarray:
        return self.weights @ self._stack(proposal_patch, mirror_patch) + self.bias

    def predict(self, proposal_patch: np.ndarray, mirror_patch: np.ndarray) -> StnParams:
        return StnParams.from_raw(self.raw(proposal_patch, mirror_patch))

    def apply_param_gradient(
        self,
        grad_params: np.ndarray,
        proposal_patch: np.ndarray,
        mirror_patch: np.ndarray,
        lr: float,
    ) -> None:
        """One SGD step from gradients in parameter space; the scale entries
        are chained through the exp() reparameterization."""
        x = self._stack(proposal_patch, mirror_patch)
        params = StnParams.from_raw(self.weights @ x + self.bias)
        grad_raw = np.asarray(grad_params, dtype=float).copy()
        grad_raw[0] *= params.s_x
        grad_raw[1] *= params.s_y
        self.weights -= lr * np.outer(grad_raw, x)
        self.bias -= lr * grad_raw
