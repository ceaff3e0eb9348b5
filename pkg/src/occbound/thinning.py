"""Boundary-map thinning and testing-phase orientation adjustment.

Non-maximum suppression keeps a pixel only if it is (within a small
multiplicative tolerance) at least as strong as the bilinear samples one
pixel away on both sides along the local edge normal, estimated from
central-difference gradients of a triangle-filtered copy of the map.

Tangent directions come from the principal axis of boundary-pixel
coordinates inside a square window; orientation adjustment snaps each
predicted angle to whichever tangent sense (t or t+pi) it is closer to.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .angles import angle_from_vector, angular_distance, fold_angle, fold_half, vector_from_angle
from .errors import ParameterError, ValidationError
from .maps import validate_binary_map, validate_map, validate_probability_map


@dataclass(frozen=True)
class NmsParams:
    """smooth_radius: triangle-filter radius for normal estimation;
    tolerance: multiplicative survival slack (>= 1);
    border: pixels zeroed at the image edge."""

    smooth_radius: int = 4
    tolerance: float = 1.01
    border: int = 1

    def __post_init__(self):
        if not self.smooth_radius >= 1:
            raise ParameterError(f"smooth_radius must be >= 1, got {self.smooth_radius}")
        if not self.tolerance >= 1.0:
            raise ParameterError(f"tolerance must be >= 1, got {self.tolerance}")
        if not self.border >= 0:
            raise ParameterError(f"border must be >= 0, got {self.border}")


def triangle_filter(m, radius):
    """Separable triangle smoothing with reflected borders."""
    if radius < 1:
        return np.asarray(m, dtype=np.float64)
    kernel = np.array(
        list(range(1, radius + 1)) + [radius + 1] + list(range(radius, 0, -1)),
        dtype=np.float64)
    kernel /= (radius + 1) ** 2
    out = ndimage.correlate1d(np.asarray(m, dtype=np.float64), kernel, axis=0, mode="reflect")
    return ndimage.correlate1d(out, kernel, axis=1, mode="reflect")


def _bilinear(img, rows, cols):
    """Sample img at float coordinates, clamped to the image rectangle."""
    h, w = img.shape
    r = np.clip(rows, 0.0, h - 1.0)
    c = np.clip(cols, 0.0, w - 1.0)
    r0 = np.minimum(np.floor(r).astype(np.intp), max(h - 2, 0))
    c0 = np.minimum(np.floor(c).astype(np.intp), max(w - 2, 0))
    fr = r - r0
    fc = c - c0
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    return ((1 - fr) * (1 - fc) * img[r0, c0] + (1 - fr) * fc * img[r0, c1]
            + fr * (1 - fc) * img[r1, c0] + fr * fc * img[r1, c1])


def _normal_field(p64, smooth_radius):
    """Edge-normal angle per pixel, in (-pi/2, pi/2]; 0 where the gradient vanishes."""
    sm = triangle_filter(p64, smooth_radius)
    grow, gcol = np.gradient(sm)
    return fold_half(angle_from_vector(gcol, grow))


def estimate_normals(p, smooth_radius=4):
    """Per-pixel edge-normal angles of a probability map, range (-pi/2, pi/2]."""
    p = validate_probability_map(p)
    if smooth_radius < 1:
        raise ParameterError(f"smooth_radius must be >= 1, got {smooth_radius}")
    return _normal_field(np.asarray(p, dtype=np.float64), smooth_radius).astype(np.float32)


def nms_thin(p, params: NmsParams | None = None, normals=None):
    """Suppress non-maxima along the edge normal; output <= input pointwise.

    A pixel keeps its value iff value * tolerance is >= both bilinear
    samples at +-1 pixel along its normal; everything else (and a
    `border`-wide frame) becomes 0.

    Normals default to estimates from the input map itself. Re-thinning
    a thinned map with the *original* map's normals changes nothing
    (thinning is a projection); with re-estimated normals the directions
    can rotate and exact idempotence is not guaranteed.
    """
    params = params or NmsParams()
    p = validate_probability_map(p)
    p64 = np.asarray(p, dtype=np.float64)
    h, w = p64.shape
    if normals is not None:
        phi = np.asarray(normals, dtype=np.float64)
        if phi.shape != p64.shape:
            raise ValidationError(
                f"normals shape {phi.shape} differs from map {p64.shape}")
    else:
        phi = _normal_field(p64, params.smooth_radius)
    dx, drow = vector_from_angle(phi)
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    ahead = _bilinear(p64, rows + drow, cols + dx)
    behind = _bilinear(p64, rows - drow, cols - dx)
    slack = p64 * params.tolerance
    keep = (p64 > 0) & (slack >= ahead) & (slack >= behind)
    out = np.where(keep, p64, 0.0)
    b = params.border
    if b > 0:
        out[:b, :] = 0.0
        out[h - b:, :] = 0.0
        out[:, :b] = 0.0
        out[:, w - b:] = 0.0
    return out.astype(np.float32)


class TangentEstimate(NamedTuple):
    angle: float
    confident: bool


def _principal_angle(n, sx, srow, sxx, sxrow, srowrow):
    """Major-axis angle from raw coordinate sums (exact integer moments)."""
    m2xx = n * sxx - sx * sx
    m2yy = n * srowrow - srow * srow
    m2xy = -(n * sxrow - sx * srow)  # stored rows grow downward
    return 0.5 * np.arctan2(2.0 * m2xy, m2xx - m2yy), (m2xx - m2yy) ** 2 + 4.0 * m2xy**2


def local_tangent(b, pixel, radius=2):
    """Principal direction of boundary pixels around `pixel`, in (-pi/2, pi/2].

    Degenerate windows (isotropic point sets, e.g. an isolated pixel)
    report angle 0 with ``confident=False``.
    """
    b = validate_binary_map(b, "boundary map")
    if radius < 1:
        raise ParameterError(f"radius must be >= 1, got {radius}")
    r, c = pixel
    h, w = b.shape
    if not (0 <= r < h and 0 <= c < w) or b[r, c] != 1.0:
        raise ParameterError(f"pixel {pixel!r} is not a boundary pixel")
    win = np.asarray(b)[max(r - radius, 0):r + radius + 1,
                        max(c - radius, 0):c + radius + 1]
    rows, cols = np.nonzero(win == 1.0)
    rows = rows.astype(np.float64) + max(r - radius, 0)
    cols = cols.astype(np.float64) + max(c - radius, 0)
    angle, energy = _principal_angle(
        float(len(rows)), cols.sum(), rows.sum(),
        (cols * cols).sum(), (cols * rows).sum(), (rows * rows).sum())
    if energy == 0.0:
        return TangentEstimate(0.0, False)
    return TangentEstimate(float(angle), True)


def tangent_field(b, radius=2):
    """Vectorized local_tangent over every pixel; float64 angles.

    Windows are clipped at the image edge exactly as in local_tangent.
    """
    b = validate_binary_map(b, "boundary map")
    mask = (np.asarray(b) == 1.0).astype(np.float64)
    h, w = mask.shape
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    kernel = np.ones((2 * radius + 1, 2 * radius + 1))

    def acc(img):
        return ndimage.correlate(img, kernel, mode="constant", cval=0.0)

    n = acc(mask)
    sx = acc(mask * cols)
    srow = acc(mask * rows)
    sxx = acc(mask * cols * cols)
    sxrow = acc(mask * cols * rows)
    srowrow = acc(mask * rows * rows)
    angle, _ = _principal_angle(n, sx, srow, sxx, sxrow, srowrow)
    return angle


def adjust_orientations(thinned_b, pred_o, radius=2):
    """Snap predicted orientations to the local tangent line.

    At each boundary pixel the output is whichever of {tangent,
    tangent + pi} (folded into (-pi, pi]) is angularly closer to the
    prediction; ties keep the (-pi/2, pi/2] representative. Non-boundary
    pixels are 0.
    """
    b = validate_binary_map(thinned_b, "thinned boundary")
    pred_o = validate_map(pred_o, "pred orientation")
    if np.asarray(pred_o).shape != np.asarray(b).shape:
        raise ValidationError(
            f"orientation shape {np.asarray(pred_o).shape} differs from boundary "
            f"{np.asarray(b).shape}")
    t = tangent_field(b, radius)
    flipped = fold_angle(t + np.pi)
    po = np.asarray(pred_o, dtype=np.float64)
    keep_t = angular_distance(t, po) <= angular_distance(flipped, po)
    out = np.where(keep_t, t, flipped)
    out = np.where(np.asarray(b) == 1.0, out, 0.0)
    return out.astype(np.float32)
