"""Synthetic occlusion scenes with exact boundary and orientation ground truth.

Scenes are stacks of filled disks; depth order equals generation order
(later disks are nearer and occlude earlier ones and the background).
Ground-truth boundary pixels are those whose center lies within 0.5 px
of a *visible* contour segment; the orientation there is the analytic
tangent of the occluding disk, signed so the disk interior lies on the
left of the walking direction (see :mod:`occbound.angles`).

Disks keep ground truth exact: visibility reduces to circular-arc
interval arithmetic and tangents are analytic. Polygons are a possible
extension point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .angles import angle_from_vector, fold_angle
from .errors import ParameterError
from .maps import GroundTruth, ManifestRecord, save_map, save_pgm, write_manifest


@dataclass(frozen=True)
class Disk:
    """cx/cy in column/row units; drawn later = nearer."""

    cx: float
    cy: float
    radius: float
    intensity: float


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    n_shapes: int
    radius_range: tuple
    intensity_range: tuple
    noise_sigma: float
    seed: int

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ParameterError(f"scene must be at least 8x8, got {self.width}x{self.height}")
        if self.n_shapes < 1:
            raise ParameterError(f"n_shapes must be >= 1, got {self.n_shapes}")
        rmin, rmax = self.radius_range
        if not 1.0 <= rmin <= rmax:
            raise ParameterError(f"radius_range must satisfy 1 <= min <= max, got {self.radius_range}")
        ilo, ihi = self.intensity_range
        if not 0.0 <= ilo <= ihi <= 1.0:
            raise ParameterError(
                f"intensity_range must be ordered within [0, 1], got {self.intensity_range}")
        if self.noise_sigma < 0:
            raise ParameterError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        # a shape of the largest radius must fit with >= 1 px margin
        if min(self.width, self.height) < 2 * rmax + 3:
            raise ParameterError(
                f"shapes of radius {rmax} cannot fit a {self.width}x{self.height} image "
                f"with margin >= 1")

    @classmethod
    def default(cls, seed=0, width=64, height=64):
        """Moderate clutter; boundary fraction stays below 5% at 64x64."""
        return cls(width=width, height=height, n_shapes=3, radius_range=(5.0, 12.0),
                   intensity_range=(0.25, 0.95), noise_sigma=0.05, seed=seed)

    @classmethod
    def sparse(cls, seed=0, width=64, height=64):
        """Single small disk; targets <= 1% boundary pixels at 64x64,
        mirroring the extreme imbalance of natural images."""
        return cls(width=width, height=height, n_shapes=1, radius_range=(4.0, 6.0),
                   intensity_range=(0.25, 0.95), noise_sigma=0.05, seed=seed)


def draw_disks(spec: SceneSpec):
    """Sample the disk stack for a scene; deterministic for a fixed seed.

    Draw order per shape is (radius, cx, cy, intensity); changing it
    would break byte-compatibility of regenerated datasets.
    """
    rng = np.random.default_rng(spec.seed)
    rmin, rmax = spec.radius_range
    ilo, ihi = spec.intensity_range
    disks = []
    for _ in range(spec.n_shapes):
        r = float(rng.uniform(rmin, rmax))
        cx = float(rng.uniform(r + 1.0, spec.width - 2.0 - r))
        cy = float(rng.uniform(r + 1.0, spec.height - 2.0 - r))
        intensity = float(rng.uniform(ilo, ihi))
        disks.append(Disk(cx, cy, r, intensity))
    return disks, rng


def shape_index_at(disks, x, y):
    """Index of the nearest (front-most) disk containing (x, y); -1 = background."""
    for i in range(len(disks) - 1, -1, -1):
        d = disks[i]
        if (x - d.cx) ** 2 + (y - d.cy) ** 2 <= d.radius**2:
            return i
    return -1


def junction_points(disks):
    """All pairwise circle-circle intersection points, as (x, y) tuples."""
    pts = []
    for i in range(len(disks)):
        for j in range(i + 1, len(disks)):
            a, b = disks[i], disks[j]
            dx, dy = b.cx - a.cx, b.cy - a.cy
            dist = math.hypot(dx, dy)
            if dist == 0.0 or dist > a.radius + b.radius or dist < abs(a.radius - b.radius):
                continue
            # standard two-circle intersection
            along = (a.radius**2 - b.radius**2 + dist**2) / (2 * dist)
            h2 = a.radius**2 - along**2
            if h2 < 0:
                continue
            h = math.sqrt(h2)
            mx, my = a.cx + along * dx / dist, a.cy + along * dy / dist
            pts.append((mx + h * dy / dist, my - h * dx / dist))
            if h > 0:
                pts.append((mx - h * dy / dist, my + h * dx / dist))
    return pts


def _hidden_state(disk, nearer):
    """Occlusion of `disk`'s contour by each nearer disk.

    Returns (fully_hidden, intervals) where intervals are (psi, delta)
    pairs: the contour arc with polar angle within delta of psi lies
    strictly inside that nearer disk.
    """
    intervals = []
    for other in nearer:
        dx, dy = other.cx - disk.cx, other.cy - disk.cy
        dist = math.hypot(dx, dy)
        if dist + disk.radius < other.radius:
            return True, []
        if dist == 0.0:
            if other.radius > disk.radius:
                return True, []
            continue
        kappa = (disk.radius**2 + dist**2 - other.radius**2) / (2 * disk.radius * dist)
        if kappa >= 1.0:
            continue
        if kappa <= -1.0:
            return True, []
        intervals.append((math.atan2(dy, dx), math.acos(kappa), other))
    return False, intervals


def _contour_orientation(disk, px, py):
    """Left-rule orientation at contour point (px, py) of `disk`."""
    nx, nrow = px - disk.cx, py - disk.cy
    return fold_angle(angle_from_vector(nx, nrow) + 0.5 * np.pi)


def _break_thick_blocks(boundary, orientation, best_dist):
    """Keep boundary maps thin: no 2x2 all-ones block may survive.

    Two visible contours running within a pixel of each other can stack
    their bands into 2x2 blocks; repeatedly drop the block pixel lying
    farthest from its contour (ties to the bottom-right) until thin.
    """
    while True:
        quad = (boundary[:-1, :-1] + boundary[1:, :-1]
                + boundary[:-1, 1:] + boundary[1:, 1:])
        blocks = np.argwhere(quad == 4.0)
        if len(blocks) == 0:
            return
        r, c = blocks[0]
        cells = [(r + dr, c + dc) for dr in (0, 1) for dc in (0, 1)]
        worst = max(cells, key=lambda p: (best_dist[p], p))
        boundary[worst] = 0.0
        orientation[worst] = 0.0


def render_disks(width, height, disks):
    """Rasterize a disk stack; returns (noise-free image, GroundTruth).

    Image pixels take the intensity of the front-most disk containing
    their center (background 0). Junction pixels near several visible
    contours keep the closest one, ties going to the nearer disk.
    """
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    image = np.zeros((height, width), dtype=np.float64)
    for d in disks:
        inside = (xs - d.cx) ** 2 + (ys - d.cy) ** 2 <= d.radius**2
        image[inside] = d.intensity

    boundary = np.zeros((height, width), dtype=np.float32)
    orientation = np.zeros((height, width), dtype=np.float32)
    best_dist = np.full((height, width), np.inf)

    for i, d in enumerate(disks):
        nearer = disks[i + 1:]
        fully_hidden, intervals = _hidden_state(d, nearer)
        if fully_hidden:
            continue
        radial = np.hypot(xs - d.cx, ys - d.cy)
        band_dist = np.abs(radial - d.radius)
        cand = band_dist <= 0.5
        if not cand.any():
            continue
        rr, cc = np.nonzero(cand)
        phi = np.arctan2(ys[rr, cc] - d.cy, xs[rr, cc] - d.cx)
        nx = d.cx + d.radius * np.cos(phi)
        ny = d.cy + d.radius * np.sin(phi)
        visible = np.ones(len(rr), dtype=bool)
        for other in nearer:
            visible &= (nx - other.cx) ** 2 + (ny - other.cy) ** 2 >= other.radius**2

        # visible union endpoints: interval ends not strictly inside any
        # other nearer disk; pixels whose nearest contour point is hidden
        # may still sit within 0.5 px of such a junction
        endpoints = []
        for psi, delta, owner in intervals:
            for ang in (psi - delta, psi + delta):
                ex = d.cx + d.radius * math.cos(ang)
                ey = d.cy + d.radius * math.sin(ang)
                blocked = any(
                    o is not owner
                    and (ex - o.cx) ** 2 + (ey - o.cy) ** 2 < o.radius**2
                    for o in nearer)
                if not blocked:
                    endpoints.append((ex, ey))

        for k in range(len(rr)):
            r_px, c_px = int(rr[k]), int(cc[k])
            if visible[k]:
                dist = band_dist[r_px, c_px]
                point = (nx[k], ny[k])
            elif endpoints:
                dists = [math.hypot(xs[r_px, c_px] - ex, ys[r_px, c_px] - ey)
                         for ex, ey in endpoints]
                kk = int(np.argmin(dists))
                dist = dists[kk]
                point = endpoints[kk]
                if dist > 0.5:
                    continue
            else:
                continue
            if dist <= 0.5 and dist <= best_dist[r_px, c_px]:
                best_dist[r_px, c_px] = dist
                boundary[r_px, c_px] = 1.0
                orientation[r_px, c_px] = _contour_orientation(d, point[0], point[1])

    _break_thick_blocks(boundary, orientation, best_dist)
    orientation[boundary == 0.0] = 0.0
    return image, GroundTruth(boundary, orientation)


def generate_scene(spec: SceneSpec):
    """Render a random scene; returns (image, GroundTruth), both float32."""
    disks, rng = draw_disks(spec)
    image, gt = render_disks(spec.width, spec.height, disks)
    if spec.noise_sigma > 0:
        image = image + rng.normal(0.0, spec.noise_sigma, image.shape)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return image, gt


def generate_dataset(n, spec: SceneSpec, out_dir):
    """Write n scenes (seeded spec.seed + index) and a manifest.

    Regenerating with identical arguments produces a byte-identical
    tree. Images are also exported as PGM for quick inspection.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(n):
        image, gt = generate_scene(replace(spec, seed=spec.seed + i))
        stem = f"scene_{i:05d}"
        image_path = out_dir / f"{stem}_image.occm"
        boundary_path = out_dir / f"{stem}_boundary.occm"
        orient_path = out_dir / f"{stem}_orient.occm"
        save_map(image, image_path)
        save_map(gt.boundary, boundary_path)
        save_map(gt.orientation, orient_path)
        save_pgm(image, out_dir / f"{stem}.pgm")
        records.append(ManifestRecord(image_path, boundary_path, orient_path))
    write_manifest(records, out_dir / "manifest.txt")
    return records
