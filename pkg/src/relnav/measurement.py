"""Line-of-sight measurement synthesis and noise model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from relnav.errors import DegenerateGeometryError


@dataclass(frozen=True)
class LosMeasurement:
    los: np.ndarray
    epoch_index: int
    epoch_time: float

    def __post_init__(self):
        los = np.asarray(self.los, dtype=float).reshape(3)
        if abs(np.linalg.norm(los) - 1.0) > 1e-12:
            raise ValueError("LOS must be a unit vector")
        object.__setattr__(self, "los", los)


@dataclass(frozen=True)
class NoiseModel:
    sigma_theta: float  # rad
    seed: int = 0

    def __post_init__(self):
        if self.sigma_theta < 0:
            raise ValueError("sigma_theta must be non-negative")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def los_from_state(x) -> np.ndarray:
    r = np.asarray(x, dtype=float)[:3]
    rn = np.linalg.norm(r)
    if rn == 0.0:
        raise DegenerateGeometryError("LOS undefined at zero relative position")
    return r / rn


def angles_from_los(los) -> tuple[float, float]:
    """Azimuth ``atan2(y, x)`` and elevation ``asin(z)``; azimuth is 0 at the poles.

    The elevation is evaluated as ``atan2(z, hypot(x, y))``, which equals
    ``asin(z)`` for unit vectors and stays accurate near the poles.
    """
    x, y, z = np.asarray(los, dtype=float)
    el = math.atan2(z, math.hypot(x, y))
    az = 0.0 if x == 0.0 and y == 0.0 else math.atan2(y, x)
    return az, el


def los_from_angles(az: float, el: float) -> np.ndarray:
    return np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])


def random_tangent_axis(los: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Unit vector uniformly distributed on the circle orthogonal to ``los``."""
    while True:
        w = rng.standard_normal(3)
        w -= (w @ los) * los
        wn = np.linalg.norm(w)
        if wn > 1e-8:
            return w / wn


def rotate_about(los: np.ndarray, axis: np.ndarray, theta: float) -> np.ndarray:
    # Rodrigues with axis orthogonal to los: the (axis . los) term vanishes
    out = los * math.cos(theta) + np.cross(axis, los) * math.sin(theta)
    return out / np.linalg.norm(out)


def perturb_los(true_los, sigma_theta: float, rng: np.random.Generator) -> np.ndarray:
    """Rotate ``true_los`` by ``theta ~ N(0, sigma^2)`` about a random tangent axis."""
    los = np.asarray(true_los, dtype=float)
    if sigma_theta == 0.0:
        return los.copy()
    axis = random_tangent_axis(los, rng)
    theta = rng.normal(0.0, sigma_theta)
    return rotate_about(los, axis, theta)


def measure(x, model: NoiseModel, rng: np.random.Generator, epoch_index: int = 0,
            epoch_time: float = 0.0) -> LosMeasurement:
    return LosMeasurement(perturb_los(los_from_state(x), model.sigma_theta, rng),
                          epoch_index, epoch_time)


def measurement_covariance(los, sigma_theta: float) -> np.ndarray:
    """Tangent-plane covariance ``sigma^2 (I - l l^T)`` of a unit LOS vector."""
    l = np.asarray(los, dtype=float)
    return sigma_theta**2 * (np.eye(3) - np.outer(l, l))
