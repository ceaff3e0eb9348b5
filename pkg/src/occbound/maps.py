"""Grid data types and their on-disk formats.

A map is a 2-D ``numpy`` array of shape ``(height, width)``, row-major
with row 0 at the top and column 0 at the left. The library's native
dtype is ``float32``; the roles below are value-range constraints on the
same representation:

* probability map  -- values in [0, 1]
* binary boundary map -- values in {0, 1}
* orientation map  -- radians in (-pi, pi] where the paired boundary map
  is 1; stored as 0 (meaningless) elsewhere

OCCM map file layout (all little-endian)::

    b"OCCM" | version u8 = 1 | dtype u8 = 0 (f32) | width u32 | height u32
    | width*height f32 values, row-major

Manifest files are UTF-8 text: one record per line, three tab-separated
paths (image, boundary, orientation) relative to the manifest's own
directory; lines starting with '#' are comments.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .angles import ANGLE_SLACK
from .errors import FormatError, ParameterError, ValidationError

OCCM_MAGIC = b"OCCM"
OCCM_VERSION = 1
OCCM_DTYPE_F32 = 0
_HEADER = struct.Struct("<4sBBII")


def validate_map(m, name="map"):
    """Check the base scalar-map invariants; return the array unchanged."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValidationError(f"{name}: expected a 2-D array, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValidationError(f"{name}: empty dimension in shape {m.shape}")
    bad = ~np.isfinite(m)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValidationError(f"{name}: non-finite value at pixel ({r}, {c})")
    return m


def validate_probability_map(m, name="probability map"):
    m = validate_map(m, name)
    bad = (m < 0.0) | (m > 1.0)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValidationError(
            f"{name}: value {m[r, c]} outside [0, 1] at pixel ({r}, {c})")
    return m


def validate_binary_map(m, name="boundary map"):
    m = validate_map(m, name)
    bad = (m != 0.0) & (m != 1.0)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValidationError(
            f"{name}: value {m[r, c]} not in {{0, 1}} at pixel ({r}, {c})")
    return m


def validate_orientation_map(orient, boundary, name="orientation map"):
    """Check (-pi, pi] on boundary pixels and 0 elsewhere.

    A small slack around pi absorbs float32 rounding of exact pi.
    """
    orient = validate_map(orient, name)
    boundary = np.asarray(boundary)
    if orient.shape != boundary.shape:
        raise ValidationError(
            f"{name}: shape {orient.shape} differs from boundary {boundary.shape}")
    on = boundary != 0.0
    hi = np.pi + ANGLE_SLACK
    bad = on & ((orient <= -hi) | (orient > hi))
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValidationError(
            f"{name}: value {orient[r, c]} outside (-pi, pi] at boundary pixel ({r}, {c})")
    bad = ~on & (orient != 0.0)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValidationError(
            f"{name}: nonzero value {orient[r, c]} at non-boundary pixel ({r}, {c})")
    return orient


@dataclass(frozen=True)
class GroundTruth:
    """Binary boundary map paired with a left-rule orientation map."""

    boundary: np.ndarray
    orientation: np.ndarray

    def validate(self):
        validate_binary_map(self.boundary, "gt boundary")
        validate_orientation_map(self.orientation, self.boundary, "gt orientation")
        return self


def validate_pair(pred, gt: GroundTruth):
    """Validate a (probability, orientation) prediction against ground truth.

    All four maps must share dimensions. The predicted orientation map is
    range-checked everywhere since any pixel may become a boundary under
    some threshold.
    """
    prob, orient = pred
    prob = validate_probability_map(prob, "pred probability")
    gt.validate()
    if prob.shape != gt.boundary.shape:
        raise ValidationError(
            f"pred probability shape {prob.shape} differs from gt {gt.boundary.shape}")
    orient = validate_map(orient, "pred orientation")
    if orient.shape != prob.shape:
        raise ValidationError(
            f"pred orientation shape {orient.shape} differs from pred probability {prob.shape}")
    hi = np.pi + ANGLE_SLACK
    bad = (orient <= -hi) | (orient > hi)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValidationError(
            f"pred orientation: value {orient[r, c]} outside (-pi, pi] at pixel ({r}, {c})")


def threshold_map(p, t):
    """Binarize a probability map: 1 exactly where p >= t.

    Values equal to the threshold count as boundary, which makes a sweep
    over quantized probabilities exhaustive.
    """
    if not (isinstance(t, (int, float)) and 0.0 < t < 1.0):
        raise ParameterError(f"threshold must lie in (0, 1), got {t!r}")
    p = validate_probability_map(p)
    return (p >= t).astype(np.float32)


def save_map(m, path):
    """Write a map in OCCM format.

    The payload is float32; pass float32 data to guarantee a bit-exact
    round-trip through :func:`load_map`.
    """
    m = validate_map(m, "map")
    m32 = np.ascontiguousarray(m, dtype=np.float32)
    validate_map(m32, "map (as float32)")
    h, w = m32.shape
    header = _HEADER.pack(OCCM_MAGIC, OCCM_VERSION, OCCM_DTYPE_F32, w, h)
    data = m32.tobytes() if m32.dtype.byteorder in ("<", "=") else m32.byteswap().tobytes()
    path = Path(path)
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(data)
    except OSError as e:
        raise OSError(e.errno, f"cannot write map: {e.strerror}", str(path)) from e


def load_map(path):
    """Read an OCCM map file; returns a float32 array of shape (h, w)."""
    path = Path(path)
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, dtype, w, h = _HEADER.unpack_from(raw)
    if magic != OCCM_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != OCCM_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != OCCM_DTYPE_F32:
        raise FormatError(f"{path}: unsupported dtype byte {dtype}")
    if w < 1 or h < 1:
        raise FormatError(f"{path}: zero dimension {w}x{h}")
    payload = raw[_HEADER.size:]
    expected = 4 * w * h
    if len(payload) < expected:
        raise FormatError(
            f"{path}: truncated payload ({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise FormatError(
            f"{path}: trailing bytes after payload ({len(payload) - expected})")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(h, w)
    bad = ~np.isfinite(values)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise FormatError(f"{path}: non-finite payload value at pixel ({r}, {c})")
    return values


def save_pgm(m, path):
    """Export a [0, 1] map as an 8-bit binary PGM (P5) for inspection."""
    m = validate_map(m, "map")
    h, w = m.shape
    levels = np.clip(np.rint(np.asarray(m, dtype=np.float64) * 255.0), 0, 255)
    body = levels.astype(np.uint8).tobytes()
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(body)


@dataclass(frozen=True)
class ManifestRecord:
    image: Path
    boundary: Path
    orientation: Path


def read_manifest(path):
    """Parse a manifest file into records with paths resolved."""
    path = Path(path)
    base = path.parent
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(
                    f"{path}:{lineno}: expected 3 tab-separated paths, got {len(parts)}")
            records.append(ManifestRecord(*(base / p for p in parts)))
    return records


def write_manifest(records, path):
    """Write records with paths stored relative to the manifest file."""
    path = Path(path)
    base = path.parent
    lines = []
    for rec in records:
        fields = (rec.image, rec.boundary, rec.orientation)
        rel = [os.path.relpath(Path(p), base) for p in fields]
        lines.append("\t".join(rel))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_record(rec: ManifestRecord):
    """Load one record's maps; returns (image, GroundTruth), validated."""
    image = load_map(rec.image)
    gt = GroundTruth(load_map(rec.boundary), load_map(rec.orientation))
    gt.validate()
    if image.shape != gt.boundary.shape:
        raise ValidationError(
            f"{rec.image}: image shape {image.shape} differs from gt {gt.boundary.shape}")
    return image, gt


def map_dimensions_match(*maps):
    shapes = {np.asarray(m).shape for m in maps}
    return len(shapes) == 1


def image_diagonal(shape):
    h, w = shape
    return math.hypot(w, h)
