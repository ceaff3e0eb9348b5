"""Shared angle convention.

Grids are stored row-major with row 0 at the top, so the stored y axis
points down. Angles are measured the way they look on screen: counter-
clockwise from +x (rightward), meaning theta = pi/2 points up, i.e.
toward decreasing row index. A direction `theta` therefore maps to the
pixel step (dx, drow) = (cos theta, -sin theta).

Walking along a boundary in its orientation direction, the occluding
(foreground) region lies on the left, which is the `theta + pi/2` side.
"""

import numpy as np

# float32 storage can round pi up by ~1 ulp; range checks allow this slack
ANGLE_SLACK = 1e-5


def fold_angle(a):
    """Wrap angle(s) into (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    out = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    out = np.where(out == -np.pi, np.pi, out)
    return float(out) if out.ndim == 0 else out


def fold_half(a):
    """Wrap angle(s) into (-pi/2, pi/2], identifying theta with theta+pi."""
    a = np.asarray(a, dtype=np.float64)
    out = np.mod(a + 0.5 * np.pi, np.pi) - 0.5 * np.pi
    out = np.where(out == -0.5 * np.pi, 0.5 * np.pi, out)
    return float(out) if out.ndim == 0 else out


def angular_distance(a, b):
    """Absolute difference of two angles modulo 2*pi, in [0, pi]."""
    return np.abs(fold_angle(np.asarray(a, dtype=np.float64) - b))


def angle_from_vector(dx, drow):
    """Angle of a pixel-step vector (dx = +col, drow = +row)."""
    return np.arctan2(-np.asarray(drow, dtype=np.float64), dx)


def vector_from_angle(theta):
    """Pixel-step unit vector (dx, drow) of direction `theta`."""
    theta = np.asarray(theta, dtype=np.float64)
    return np.cos(theta), -np.sin(theta)


def left_unit(theta):
    """Unit step (dx, drow) toward the left side of direction `theta`."""
    return vector_from_angle(np.asarray(theta, dtype=np.float64) + 0.5 * np.pi)


def right_unit(theta):
    """Unit step (dx, drow) toward the right side of direction `theta`."""
    return vector_from_angle(np.asarray(theta, dtype=np.float64) - 0.5 * np.pi)
