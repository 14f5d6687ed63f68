"""Planar rigid-body poses and angle arithmetic.

Angles are always normalized to the half-open interval (-pi, pi]. The same
normalization sequence is used here, in the vectorized helpers and in the
compiled kernels so every code path agrees bit-for-bit on wrapped values.
"""

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Normalize an angle (radians) to (-pi, pi]."""
    r = math.fmod(theta + math.pi, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    r -= math.pi
    if r <= -math.pi:
        r += TWO_PI
    return r


def wrap_angles(theta):
    """Vectorized :func:`wrap_angle` for ndarray input."""
    r = np.mod(np.asarray(theta, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.where(r <= -math.pi, r + TWO_PI, r)


@dataclass(frozen=True)
class PlanarPose:
    """An SE(2) pose: translation (x, y) in meters, heading theta in radians.

    theta is normalized to (-pi, pi] on construction, so composing poses
    never produces an out-of-range heading.
    """

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def compose(self, other):
        """Return self * other (apply ``other`` in this pose's frame)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return PlanarPose(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self):
        c, s = math.cos(self.theta), math.sin(self.theta)
        return PlanarPose(-(c * self.x + s * self.y), -(-s * self.x + c * self.y), -self.theta)

    def relative_to(self, other):
        """Return other^-1 * self: this pose expressed in ``other``'s frame."""
        return other.inverse().compose(self)

    def as_array(self):
        return np.array([self.x, self.y, self.theta], dtype=float)

    @staticmethod
    def from_array(a):
        a = np.asarray(a, dtype=float)
        if a.shape != (3,):
            raise ValueError(f"pose array must have shape (3,), got {a.shape}")
        return PlanarPose(a[0], a[1], a[2])
