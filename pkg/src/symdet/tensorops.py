"""Differentiable feature-map operations: bilinear sampling, affine patch
extraction with analytic gradients, and max RoI pooling to a fixed grid.

Image coordinates are converted to feature-map coordinates by dividing by
the stride, with no half-pixel offset. Samples outside the feature grid
read zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BoundingBox
from .transform import AffineTransform, CanonicalSize, StnParams, compose_transform, grad_transform

ROI_BINS = 7

# A flat feature vector is a plain 1-D float array.
FeatureVector = np.ndarray


@dataclass
class FeatureMap:
    """Channel-major (C, H, W) tensor at a known stride in image pixels."""

    data: np.ndarray
    stride: int = 1

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 3:
            raise ValueError(f"feature data must be (channels, height, width), got {arr.shape}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if not np.isfinite(arr).all():
            raise ValueError("feature data contains non-finite values")
        self.data = arr

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def _gather(plane: np.ndarray, iy: np.ndarray, ix: np.ndarray) -> np.ndarray:
    """Read plane[iy, ix] with zeros outside the valid index range."""
    h, w = plane.shape
    valid = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
    out = np.zeros(iy.shape, dtype=float)
    out[valid] = plane[iy[valid], ix[valid]]
    return out


def _bilinear_weights(fx: np.ndarray, fy: np.ndarray):
    x0 = np.floor(fx).astype(int)
    y0 = np.floor(fy).astype(int)
    wx = fx - x0
    wy = fy - y0
    return x0, y0, wx, wy


def bilinear_sample(fmap: FeatureMap, x: float, y: float, channel: int) -> float:
    """Bilinearly interpolated value at image coordinates (x, y)."""
    if channel < 0 or channel >= fmap.channels:
        raise ValueError(f"channel {channel} out of range for {fmap.channels}-channel map")
    fx = np.asarray([x], dtype=float) / fmap.stride
    fy = np.asarray([y], dtype=float) / fmap.stride
    x0, y0, wx, wy = _bilinear_weights(fx, fy)
    plane = fmap.data[channel]
    v00 = _gather(plane, y0, x0)
    v01 = _gather(plane, y0, x0 + 1)
    v10 = _gather(plane, y0 + 1, x0)
    v11 = _gather(plane, y0 + 1, x0 + 1)
    top = v00 * (1 - wx) + v01 * wx
    bot = v10 * (1 - wx) + v11 * wx
    return float(top * (1 - wy) + bot * wy)


def _canonical_grid(out_w: int, out_h: int, canon: CanonicalSize | None):
    """Output-grid coordinates mapped proportionally onto the canonical grid.

    With canon=None the output grid is taken to be the canonical grid
    itself (no rescaling).
    """
    us = np.arange(out_w, dtype=float)
    vs = np.arange(out_h, dtype=float)
    if canon is not None:
        us = us * ((canon.w0 - 1.0) / (out_w - 1.0)) if out_w > 1 else us
        vs = vs * ((canon.h0 - 1.0) / (out_h - 1.0)) if out_h > 1 else vs
    return np.meshgrid(us, vs)


def _sample_grid(fmap: FeatureMap, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample every channel at image coordinates (xs, ys); returns (C, *shape)."""
    fx = xs / fmap.stride
    fy = ys / fmap.stride
    x0, y0, wx, wy = _bilinear_weights(fx, fy)
    out = np.empty((fmap.channels,) + xs.shape, dtype=float)
    for c in range(fmap.channels):
        plane = fmap.data[c]
        v00 = _gather(plane, y0, x0)
        v01 = _gather(plane, y0, x0 + 1)
        v10 = _gather(plane, y0 + 1, x0)
        v11 = _gather(plane, y0 + 1, x0 + 1)
        out[c] = (v00 * (1 - wx) + v01 * wx) * (1 - wy) + (v10 * (1 - wx) + v11 * wx) * wy
    return out


def sample_patch(
    fmap: FeatureMap,
    transform: AffineTransform,
    out_w: int,
    out_h: int,
    canon: CanonicalSize | None = None,
) -> FeatureMap:
    """Warp a patch out of a feature map through an affine transform.

    Output cell (u, v) samples the image location the transform assigns to
    the matching canonical coordinate. The result is a stride-1 map in
    patch-local coordinates.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be >= 1, got {out_w}x{out_h}")
    uu, vv = _canonical_grid(out_w, out_h, canon)
    xs = transform.m00 * uu + transform.m01 * vv + transform.m02
    ys = transform.m10 * uu + transform.m11 * vv + transform.m12
    return FeatureMap(_sample_grid(fmap, xs, ys), stride=1)


def sample_patch_grad(
    fmap: FeatureMap,
    expanded: BoundingBox,
    params: StnParams,
    canon: CanonicalSize,
    upstream: np.ndarray,
    out_canon: CanonicalSize | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Backward pass of :func:`sample_patch` for a transform built by
    :func:`compose_transform`.

    ``upstream`` has the output shape (C, out_h, out_w); ``out_canon``
    mirrors the ``canon`` argument given to the forward call. Returns the
    gradient with respect to (s_x, s_y, t_x, t_y, theta) and with respect
    to the feature map data.
    """
    upstream = np.asarray(upstream, dtype=float)
    if upstream.ndim != 3 or upstream.shape[0] != fmap.channels:
        raise ValueError(
            f"upstream gradient must be (channels, out_h, out_w) with "
            f"{fmap.channels} channels, got {upstream.shape}"
        )
    out_h, out_w = upstream.shape[1], upstream.shape[2]
    transform = compose_transform(expanded, params, canon)
    uu, vv = _canonical_grid(out_w, out_h, out_canon)
    xs = transform.m00 * uu + transform.m01 * vv + transform.m02
    ys = transform.m10 * uu + transform.m11 * vv + transform.m12

    stride = float(fmap.stride)
    x0, y0, wx, wy = _bilinear_weights(xs / stride, ys / stride)

    grad_f = np.zeros_like(fmap.data)
    grad_x = np.zeros((out_h, out_w), dtype=float)  # sum_c upstream * dval/dx
    grad_y = np.zeros((out_h, out_w), dtype=float)
    h, w = fmap.height, fmap.width
    corners = ((y0, x0, (1 - wx) * (1 - wy)), (y0, x0 + 1, wx * (1 - wy)),
               (y0 + 1, x0, (1 - wx) * wy), (y0 + 1, x0 + 1, wx * wy))
    for c in range(fmap.channels):
        plane = fmap.data[c]
        up = upstream[c]
        for iy, ix, weight in corners:
            valid = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
            np.add.at(grad_f[c], (iy[valid], ix[valid]), (up * weight)[valid])
        v00 = _gather(plane, y0, x0)
        v01 = _gather(plane, y0, x0 + 1)
        v10 = _gather(plane, y0 + 1, x0)
        v11 = _gather(plane, y0 + 1, x0 + 1)
        dval_dfx = (v01 - v00) * (1 - wy) + (v11 - v10) * wy
        dval_dfy = (v10 - v00) * (1 - wx) + (v11 - v01) * wx
        grad_x += up * dval_dfx / stride
        grad_y += up * dval_dfy / stride

    grad_params = np.zeros(5, dtype=float)
    rw = (expanded.w - 1.0) / (canon.w0 - 1.0)
    rh = (expanded.h - 1.0) / (canon.h0 - 1.0)
    cos_t, sin_t = np.cos(params.theta), np.sin(params.theta)
    # Same entries as grad_transform, accumulated over the whole grid.
    grad_params[0] = np.sum(grad_x * rw * cos_t * uu + grad_y * rh * sin_t * uu)
    grad_params[1] = np.sum(grad_x * (-rw * sin_t * vv) + grad_y * rh * cos_t * vv)
    grad_params[2] = np.sum(grad_x * rw)
    grad_params[3] = np.sum(grad_y * rh)
    grad_params[4] = np.sum(
        grad_x * rw * (-params.s_x * sin_t * uu - params.s_y * cos_t * vv)
        + grad_y * rh * (params.s_x * cos_t * uu - params.s_y * sin_t * vv)
    )
    return grad_params, grad_f


def roi_pool(fmap: FeatureMap, box: BoundingBox, bins: int = ROI_BINS) -> FeatureVector:
    """Max-pool a box into a bins x bins grid and flatten channel-major.

    The box span [x, x+w-1] is divided by the stride and rounded to cell
    indices; bin boundaries use floor/ceil splits of the covered cell
    range. Bins that fall outside the map contribute zeros.
    """
    x1f = box.x / fmap.stride
    y1f = box.y / fmap.stride
    x2f = (box.x + box.w - 1.0) / fmap.stride
    y2f = (box.y + box.h - 1.0) / fmap.stride
    x1 = int(np.floor(x1f + 0.5))
    y1 = int(np.floor(y1f + 0.5))
    x2 = max(int(np.floor(x2f + 0.5)), x1)
    y2 = max(int(np.floor(y2f + 0.5)), y1)
    if x2 < 0 or x1 > fmap.width - 1 or y2 < 0 or y1 > fmap.height - 1:
        raise ValueError("empty RoI")

    roi_w = x2 - x1 + 1
    roi_h = y2 - y1 + 1
    out = np.zeros((fmap.channels, bins, bins), dtype=float)
    for by in range(bins):
        ys = y1 + int(np.floor(by * roi_h / bins))
        ye = y1 + int(np.ceil((by + 1) * roi_h / bins))
        ys, ye = max(ys, 0), min(ye, fmap.height)
        if ys >= ye:
            continue
        for bx in range(bins):
            xs = x1 + int(np.floor(bx * roi_w / bins))
            xe = x1 + int(np.ceil((bx + 1) * roi_w / bins))
            xs, xe = max(xs, 0), min(xe, fmap.width)
            if xs >= xe:
                continue
            out[:, by, bx] = fmap.data[:, ys:ye, xs:xe].max(axis=(1, 2))
    return out.ravel()
