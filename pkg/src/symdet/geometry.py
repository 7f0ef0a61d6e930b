"""Spine-axis geometry: convex hulls, minimum-area enclosing rectangles,
the spine symmetry line, and mirrored / expanded proposal boxes.

Coordinates are image pixels, x to the right and y down. A box
``(x, y, w, h)`` covers the closed span ``[x, x+w-1] x [y, y+h-1]``, so its
center is ``(x + (w-1)/2, y + (h-1)/2)``. Mask pixels are treated as points
at their integer coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with strictly positive width and height."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"box fields must be finite, got {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box needs w > 0 and h > 0, got w={self.w}, h={self.h}")

    @property
    def center(self) -> Point2:
        return Point2(self.x + (self.w - 1.0) / 2.0, self.y + (self.h - 1.0) / 2.0)


@dataclass(frozen=True)
class SpineLine:
    """Line a*x + b*y + c = 0 with a^2 + b^2 = 1, sign-canonicalized so that
    a >= 0 (and b >= 0 when a == 0)."""

    a: float
    b: float
    c: float

    def __post_init__(self) -> None:
        norm = self.a * self.a + self.b * self.b
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"line coefficients not normalized: a^2+b^2 = {norm}")
        if self.a < 0 or (self.a == 0 and self.b < 0):
            raise ValueError("line sign not canonical (need a >= 0, b >= 0 when a == 0)")

    @classmethod
    def from_coefficients(cls, a: float, b: float, c: float) -> "SpineLine":
        """Normalize and canonicalize arbitrary (a, b, c) coefficients."""
        norm = math.hypot(a, b)
        if norm < 1e-12:
            raise ValueError("degenerate line: a and b are both zero")
        a, b, c = a / norm, b / norm, c / norm
        if a < 0 or (a == 0 and b < 0):
            a, b, c = -a, -b, -c
        return cls(a + 0.0, b + 0.0, c + 0.0)

    def signed_distance(self, p: Point2) -> float:
        return self.a * p.x + self.b * p.y + self.c

    def reflect_point(self, p: Point2) -> Point2:
        d = self.signed_distance(p)
        return Point2(p.x - 2.0 * d * self.a, p.y - 2.0 * d * self.b)


@dataclass(frozen=True)
class RotatedRect:
    """Rectangle with center, side lengths and rotation angle in [-pi/2, pi/2).

    ``width`` is the extent along direction (cos angle, sin angle) and
    ``height`` the extent along the perpendicular (-sin angle, cos angle).
    """

    center: Point2
    width: float
    height: float
    angle: float

    @property
    def area(self) -> float:
        return self.width * self.height

    def corners(self) -> list[Point2]:
        ca, sa = math.cos(self.angle), math.sin(self.angle)
        hw, hh = self.width / 2.0, self.height / 2.0
        out = []
        for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
            u, v = su * hw, sv * hh
            out.append(Point2(self.center.x + u * ca - v * sa, self.center.y + u * sa + v * ca))
        return out


class BinaryMask:
    """Boolean mask over a width x height pixel grid, True = foreground."""

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data)
        if arr.ndim != 2:
            raise ValueError(f"mask data must be 2-D (height, width), got shape {arr.shape}")
        self.data = arr.astype(bool)

    @classmethod
    def from_flat(cls, width: int, height: int, flat: Iterable[bool]) -> "BinaryMask":
        arr = np.fromiter((bool(v) for v in flat), dtype=bool)
        if arr.size != width * height:
            raise ValueError(f"expected {width * height} values, got {arr.size}")
        return cls(arr.reshape(height, width))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def count(self) -> int:
        return int(self.data.sum())


def _cross(o: tuple, a: tuple, b: tuple) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Sequence) -> list[Point2]:
    """Counter-clockwise convex hull via the monotone chain, dropping
    collinear vertices. Degenerates to one or two points for degenerate
    inputs."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if not pts:
        raise ValueError("no foreground points")
    if len(pts) == 1:
        return [Point2(*pts[0])]

    def build(seq):
        chain: list[tuple] = []
        for p in seq:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower = build(pts)
    upper = build(reversed(pts))
    hull = lower[:-1] + upper[:-1]
    return [Point2(*p) for p in hull]


def min_area_rect(points: Sequence) -> RotatedRect:
    """Minimum-area enclosing rectangle of a point set.

    Rotating-calipers style: the optimum has a side parallel to some convex
    hull edge, so every hull-edge direction is tried and the smallest
    bounding box wins. Single points and collinear sets yield rectangles
    with zero width or height.
    """
    hull = convex_hull(points)
    if len(hull) == 1:
        return RotatedRect(hull[0], 0.0, 0.0, 0.0)

    xy = np.array(hull, dtype=float)
    best = None
    n = len(hull)
    for i in range(n):
        dx = xy[(i + 1) % n, 0] - xy[i, 0]
        dy = xy[(i + 1) % n, 1] - xy[i, 1]
        length = math.hypot(dx, dy)
        if length < 1e-12:
            continue
        ca, sa = dx / length, dy / length
        u = xy[:, 0] * ca + xy[:, 1] * sa
        v = -xy[:, 0] * sa + xy[:, 1] * ca
        area = (u.max() - u.min()) * (v.max() - v.min())
        if best is None or area < best[0] - 1e-15:
            best = (area, ca, sa, u.min(), u.max(), v.min(), v.max())

    area, ca, sa, umin, umax, vmin, vmax = best
    cu, cv = (umin + umax) / 2.0, (vmin + vmax) / 2.0
    center = Point2(cu * ca - cv * sa, cu * sa + cv * ca)
    angle = math.atan2(sa, ca)
    # Fold the edge direction into [-pi/2, pi/2); extents are direction-sign
    # independent so width/height stay put.
    angle = math.remainder(angle, math.pi)
    if angle >= math.pi / 2.0:
        angle -= math.pi
    elif angle < -math.pi / 2.0:
        angle += math.pi
    return RotatedRect(center, umax - umin, vmax - vmin, angle)


def _largest_component_points(mask: BinaryMask) -> list[Point2]:
    labels, n = ndimage.label(mask.data)  # default structure = 4-connectivity
    if n == 0:
        raise ValueError("empty spine mask")
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    keep = int(counts.argmax())
    rows, cols = np.nonzero(labels == keep)
    return [Point2(float(cx), float(cy)) for cx, cy in zip(cols, rows)]


def spine_line(mask: BinaryMask) -> SpineLine:
    """Symmetry axis of a spine mask.

    The largest 4-connected foreground component is enclosed in its
    minimum-area rectangle; the axis is the line through the midpoints of
    the two shorter opposite edges (the long axis of the rectangle). For a
    square rectangle, the direction closer to vertical is used.
    """
    pts = _largest_component_points(mask)
    rect = min_area_rect(pts)
    ca, sa = math.cos(rect.angle), math.sin(rect.angle)
    along = (ca, sa)
    across = (-sa, ca)
    if rect.width > rect.height:
        direction = along
    elif rect.height > rect.width:
        direction = across
    else:
        direction = along if abs(along[1]) >= abs(across[1]) else across
    # Normal to the direction, passing through the rectangle center.
    a, b = direction[1], -direction[0]
    c = -(a * rect.center.x + b * rect.center.y)
    return SpineLine.from_coefficients(a, b, c)


def reflect_box(box: BoundingBox, line: SpineLine) -> BoundingBox:
    """Mirror a box across the spine line, preserving width and height.

    The reflected center satisfies the two constraints exactly: the
    midpoint of the original and mirrored centers lies on the line, and
    their displacement is parallel to the line normal.
    """
    cx, cy = box.center
    d = line.a * cx + line.b * cy + line.c
    rx = cx - 2.0 * d * line.a
    ry = cy - 2.0 * d * line.b
    return BoundingBox(rx - (box.w - 1.0) / 2.0, ry - (box.h - 1.0) / 2.0, box.w, box.h)


def expand_patch(box: BoundingBox) -> BoundingBox:
    """Grow a box by a quarter of its size on every side (1.5x total).

    The result may extend beyond the image; out-of-bounds regions are
    handled by zero padding at sampling time.
    """
    return BoundingBox(
        box.x - 0.25 * box.w,
        box.y - 0.25 * box.h,
        1.5 * box.w,
        1.5 * box.h,
    )
