"""Spatial-resolution model for a camera mounted on a vehicle.

For a camera at height d (meters) whose bottom field-of-view ray makes angle
alpha with the vertical, the ground stripe imaged by one pixel row at angular
position dtheta into the FOV spans

    d * tan(alpha + dtheta + theta/m) - d * tan(alpha + dtheta)

meters, where theta is the vertical FOV and m the vertical pixel count.  The
reciprocal, in pixels per centimeter, is the spatial resolution at that image
row.  Rays at or beyond the horizon (angle >= 90 degrees from vertical) image
no ground at all and report a resolution of exactly 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError


@dataclass(frozen=True)
class MountConfig:
    camera_height_m: float
    tilt_alpha_deg: float
    fov_theta_deg: float
    vertical_pixels: int

    def validate(self) -> "MountConfig":
        if self.camera_height_m <= 0:
            raise ConfigurationError(f"camera height must be > 0 m, got {self.camera_height_m}")
        if not 0 < self.fov_theta_deg < 180:
            raise ConfigurationError(f"FOV must lie in (0, 180) deg, got {self.fov_theta_deg}")
        if self.vertical_pixels < 1:
            raise ConfigurationError(f"vertical pixel count must be >= 1, got {self.vertical_pixels}")
        if not 0 <= self.tilt_alpha_deg < 90:
            raise ConfigurationError(f"tilt must lie in [0, 90) deg, got {self.tilt_alpha_deg}")
        return self


# GoPro Hero 7 Black at 1920x1080: vertical FOV 69.5 deg.  Rear mount: 1.0 m
# high, camera axis 45 deg down -> alpha = 45 - 69.5/2.  Front mount: 1.5 m,
# horizontal axis -> alpha = 90 - 69.5/2.
REAR_MOUNT = MountConfig(1.0, 10.25, 69.5, 1080)
FRONT_MOUNT = MountConfig(1.5, 55.25, 69.5, 1080)


@dataclass(frozen=True)
class ProfileRow:
    fov_fraction: float
    resolution_px_per_cm: float
    reachable: bool


@dataclass(frozen=True)
class ResolutionProfile:
    config: MountConfig
    rows: tuple[ProfileRow, ...]


def spatial_resolution(config: MountConfig, fov_fraction: float) -> float:
    """Pixels per centimeter of ground at a fractional position in the FOV.

    Returns exactly 0.0 when the upper pixel ray reaches angle >= 90 deg
    (at or beyond the horizon).
    """
    config.validate()
    if not 0.0 <= fov_fraction <= 1.0:
        raise ConfigurationError(f"fov_fraction must lie in [0, 1], got {fov_fraction}")
    lower = config.tilt_alpha_deg + fov_fraction * config.fov_theta_deg
    upper = lower + config.fov_theta_deg / config.vertical_pixels
    if upper >= 90.0:
        return 0.0
    span_m = config.camera_height_m * (math.tan(math.radians(upper)) - math.tan(math.radians(lower)))
    return 1.0 / (100.0 * span_m)


def is_reachable(config: MountConfig, fov_fraction: float) -> bool:
    """False when the pixel's lower ray is at or beyond the horizon."""
    return config.tilt_alpha_deg + fov_fraction * config.fov_theta_deg < 90.0


def resolution_profile(config: MountConfig, fractions: list[float]) -> ResolutionProfile:
    """One resolution row per FOV fraction; fractions must be sorted ascending."""
    config.validate()
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ConfigurationError("fractions must be strictly increasing")
    rows = tuple(
        ProfileRow(f, spatial_resolution(config, f), is_reachable(config, f))
        for f in fractions
    )
    return ResolutionProfile(config, rows)


def profile_csv(profile: ResolutionProfile) -> str:
    lines = ["fraction,resolution_px_per_cm,reachable"]
    for row in profile.rows:
        lines.append(f"{row.fov_fraction:g},{row.resolution_px_per_cm:.2f},{str(row.reachable).lower()}")
    return "\n".join(lines) + "\n"
