"""Point-source field models and the simulated sensing chain.

Two field laws cover the survey proxy and the real thing: a scalar magnetic
dipole magnitude falling off as d^-3 (hall sensor + wall magnets) and an
attenuated inverse-square law d^-2 * exp(-mu d) for a gamma point source.
Distances are true 3D distances between the sensor on the centerline and the
source's wall point, so bends shape the profile correctly.

Readings are pure functions of an explicit numpy Generator; callers own
stream splitting (``np.random.SeedSequence(seed).spawn`` works well).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .route import PipeRoute

MAGNETIC_DIPOLE = "magnetic_dipole"
GAMMA_POINT = "gamma_point"
SOURCE_KINDS = (MAGNETIC_DIPOLE, GAMMA_POINT)

HALL = "hall"
COUNTER = "counter"
SENSOR_KINDS = (HALL, COUNTER)

DEFAULT_DISTANCE_FLOOR = 1e-3


@dataclass(frozen=True)
class Source:
    """A planted field source at arc position ``s``.

    ``lateral_offset`` is the radial distance from the centerline to the
    source; None means "on the pipe wall", resolved to bore/2 at ``s`` when a
    route is available.
    """

    s: float
    strength: float
    kind: str = MAGNETIC_DIPOLE
    lateral_offset: float | None = None

    def __post_init__(self) -> None:
        if not self.strength > 0.0:
            raise ValueError(f"source strength must be positive, got {self.strength}")
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"source kind must be one of {SOURCE_KINDS}, got '{self.kind}'")
        if self.lateral_offset is not None and self.lateral_offset < 0.0:
            raise ValueError(f"lateral_offset must be >= 0, got {self.lateral_offset}")


@dataclass(frozen=True)
class SensorConfig:
    """Sensing chain parameters.

    A hall sensor reads baseline + fields + Gaussian noise, optionally pushed
    through an ADC (``adc_bits`` None means the raw value is logged).  A
    counter draws Poisson counts over ``dwell_time`` at the local rate.
    ``distance_floor`` guards the field singularity: sensor and source have
    finite size.
    """

    kind: str = HALL
    baseline: float = 0.0
    gaussian_sigma: float = 0.0
    adc_bits: int | None = None
    adc_range: tuple[float, float] = (0.0, 1.0)
    dwell_time: float = 1.0
    distance_floor: float = DEFAULT_DISTANCE_FLOOR

    def __post_init__(self) -> None:
        if self.kind not in SENSOR_KINDS:
            raise ValueError(f"sensor kind must be one of {SENSOR_KINDS}, got '{self.kind}'")
        if self.gaussian_sigma < 0.0:
            raise ValueError(f"gaussian_sigma must be >= 0, got {self.gaussian_sigma}")
        if self.adc_bits is not None and not (1 <= self.adc_bits <= 32):
            raise ValueError(f"adc_bits must be in [1, 32], got {self.adc_bits}")
        if not self.adc_range[0] < self.adc_range[1]:
            raise ValueError(f"adc_range min must be < max, got {self.adc_range}")
        if not self.dwell_time > 0.0:
            raise ValueError(f"dwell_time must be positive, got {self.dwell_time}")
        if not self.distance_floor > 0.0:
            raise ValueError(f"distance_floor must be positive, got {self.distance_floor}")


def dipole_kernel(distance, floor: float = DEFAULT_DISTANCE_FLOOR):
    """Unit-strength dipole magnitude, d^-3 with a floored distance."""
    d = np.maximum(distance, floor)
    return 1.0 / (d * d * d)


def gamma_kernel(distance, mu: float = 0.0, floor: float = DEFAULT_DISTANCE_FLOOR):
    """Unit-activity attenuated inverse-square intensity."""
    d = np.maximum(distance, floor)
    return np.exp(-mu * d) / (d * d)


def kernel(kind: str, distance, mu: float = 0.0, floor: float = DEFAULT_DISTANCE_FLOOR):
    if kind == MAGNETIC_DIPOLE:
        return dipole_kernel(distance, floor)
    if kind == GAMMA_POINT:
        return gamma_kernel(distance, mu, floor)
    raise ValueError(f"unknown field kind '{kind}'")


def field_at(source: Source, distance: float, mu: float = 0.0,
             floor: float = DEFAULT_DISTANCE_FLOOR) -> float:
    """Field contribution of one source at a given separation (mu ignored for dipoles)."""
    if distance < 0.0:
        raise ValueError(f"distance must be >= 0, got {distance}")
    return float(source.strength * kernel(source.kind, distance, mu, floor))


def resolve_offset(route: PipeRoute, s: float, lateral_offset: float | None) -> float:
    """Default wall placement: half the local bore."""
    if lateral_offset is not None:
        return lateral_offset
    return route.bore_at(min(max(s, 0.0), route.total_length)) / 2.0


def wall_point(route: PipeRoute, s: float, lateral_offset: float | None = None) -> np.ndarray:
    """3D point of an object mounted on the pipe wall at arc position ``s``."""
    offset = resolve_offset(route, s, lateral_offset)
    pose = route.pose_at(s)
    return pose.position + offset * pose.normal


def sensor_points(route: PipeRoute, sensor_s: np.ndarray) -> np.ndarray:
    """3D sensor positions for arc coordinates, negative values extrapolating
    straight back along the entry tangent (the sensor is still outside)."""
    sensor_s = np.asarray(sensor_s, dtype=float)
    pts = np.empty((len(sensor_s), 3))
    inside = sensor_s >= 0.0
    if np.any(inside):
        clipped = np.minimum(sensor_s[inside], route.total_length)
        pts[inside] = route.poses_at(clipped)[0]
    if np.any(~inside):
        entry = route.entry
        pts[~inside] = entry.position + sensor_s[~inside, None] * entry.tangent
    return pts


def ideal_reading(sources: list[Source], sensor_s: float, route: PipeRoute,
                  mu: float = 0.0, baseline: float = 0.0,
                  floor: float = DEFAULT_DISTANCE_FLOOR) -> float:
    """Noiseless, unquantized reading: baseline plus superposed fields."""
    total = baseline
    if not sources:
        return total
    point = sensor_points(route, np.asarray([sensor_s]))[0]
    for src in sources:
        if not (0.0 <= src.s <= route.total_length + 1e-9):
            raise ValueError(
                f"source at s={src.s:.6g} outside route [0, {route.total_length:.6g}]"
            )
        d = float(np.linalg.norm(point - wall_point(route, src.s, src.lateral_offset)))
        total += field_at(src, d, mu, floor)
    return total


def reading(sources: list[Source], sensor_s: float, route: PipeRoute,
            cfg: SensorConfig, mu: float = 0.0,
            rng: np.random.Generator | None = None):
    """One sensor sample.

    hall: quantize(baseline + fields + Gaussian noise) when an ADC is
    configured, the raw float otherwise.  counter: Poisson count over the
    dwell window.  Identical generators give bit-identical results.
    """
    value = ideal_reading(sources, sensor_s, route, mu, cfg.baseline, cfg.distance_floor)
    if cfg.kind == HALL:
        if cfg.gaussian_sigma > 0.0:
            if rng is None:
                raise ValueError("hall sensor with noise needs an rng")
            value += float(rng.normal(0.0, cfg.gaussian_sigma))
        if cfg.adc_bits is None:
            return value
        return quantize(value, cfg.adc_bits, cfg.adc_range)
    if rng is None:
        raise ValueError("counter sensor needs an rng")
    rate = max(value, 0.0)
    return int(rng.poisson(cfg.dwell_time * rate))


def quantize(value, bits: int, adc_range: tuple[float, float]):
    """Clamp into range, map linearly onto [0, 2^bits - 1], round half away
    from zero.  Accepts scalars or arrays; scalar in, int out."""
    if not (1 <= bits <= 32):
        raise ValueError(f"bits must be in [1, 32], got {bits}")
    lo, hi = adc_range
    if not lo < hi:
        raise ValueError(f"adc range min must be < max, got {adc_range}")
    clamped = np.clip(value, lo, hi)
    scaled = (clamped - lo) / (hi - lo) * (2**bits - 1)
    code = np.floor(scaled + 0.5).astype(np.int64)
    if np.isscalar(value) or np.ndim(value) == 0:
        return int(code)
    return code


def unquantize(code, bits: int, adc_range: tuple[float, float]):
    """Representative reading for an ADC code; affine inverse of quantize."""
    if not (1 <= bits <= 32):
        raise ValueError(f"bits must be in [1, 32], got {bits}")
    lo, hi = adc_range
    if not lo < hi:
        raise ValueError(f"adc range min must be < max, got {adc_range}")
    return lo + np.asarray(code, dtype=float) * (hi - lo) / (2**bits - 1)


def snr_db(peak_signal: float, sigma: float) -> float:
    """Amplitude signal-to-noise ratio in dB; convenience for scene design."""
    if sigma <= 0.0:
        return math.inf
    return 20.0 * math.log10(peak_signal / sigma)
