"""Synthetic survey runs.

A run cranks the drum at constant tip speed from zero extension up to the
reachable maximum, sampling the encoder and the sensor at a fixed rate.
Recorded ticks are the quantized measurement; the sensor reading is taken at
the true (unquantized) tail position, which is what the physical chain does.
"""
from __future__ import annotations

import math
import os
from datetime import datetime, timezone

import numpy as np

from .acquisition import Sample, Trace
from .kinematics import DrumConfig, RobotProfile, max_extension
from .route import PipeRoute
from .sensors import COUNTER, HALL, SensorConfig, Source, kernel, quantize, sensor_points, wall_point

DEFAULT_SAMPLE_RATE_HZ = 100.0
DEFAULT_CRANK_SPEED_MPS = 0.05


def created_stamp() -> str:
    """Deterministic by default: honors SOURCE_DATE_EPOCH, else the epoch.

    Wall-clock stamps would break the byte-identical re-run contract, so the
    reproducible-builds convention is used instead.
    """
    epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def crank_schedule(target_extension: float, crank_speed: float,
                   sample_rate_hz: float) -> tuple[np.ndarray, np.ndarray]:
    """Sample times (ms) and tip extensions for a constant-speed crank.

    Runs until the first sample at or beyond the target extension, inclusive,
    so the final state is always recorded.
    """
    if not crank_speed > 0.0:
        raise ValueError(f"crank_speed must be positive, got {crank_speed}")
    if not 0.0 < sample_rate_hz <= 1000.0:
        raise ValueError(
            f"sample_rate_hz must be in (0, 1000] for integer-ms timestamps, "
            f"got {sample_rate_hz}"
        )
    n_steps = math.ceil(target_extension / crank_speed * sample_rate_hz)
    k = np.arange(n_steps + 1)
    t_ms = np.rint(1000.0 * k / sample_rate_hz).astype(np.int64)
    extension = np.minimum(crank_speed * k / sample_rate_hz, target_extension)
    return t_ms, extension


def simulate_trace(route: PipeRoute, robot: RobotProfile, drum: DrumConfig,
                   sources: list[Source], sensor: SensorConfig, *,
                   seed: int,
                   sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
                   crank_speed: float = DEFAULT_CRANK_SPEED_MPS,
                   cap_extension: float | None = None,
                   mu: float = 0.0,
                   meta: dict[str, str] | None = None) -> Trace:
    """Simulate one extension run and return the resulting trace.

    ``cap_extension`` truncates the run early (e.g. at a feasibility
    blocker).  All randomness flows from ``seed`` through one generator, so
    identical inputs give identical traces.
    """
    for src in sources:
        if not (0.0 <= src.s <= route.total_length):
            raise ValueError(
                f"source at s={src.s:.6g} outside route [0, {route.total_length:.6g}]"
            )
    if sensor.kind == HALL and sensor.adc_bits is None:
        raise ValueError("trace simulation needs an ADC on the hall sensor "
                         "(sensor_raw is an integer)")
    target = max_extension(robot, route)
    if cap_extension is not None:
        target = min(target, cap_extension)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    t_ms, extension = crank_schedule(target, crank_speed, sample_rate_hz)
    ticks = np.rint(
        extension * drum.payout_ratio * drum.ticks_per_rev / (2.0 * math.pi * drum.drum_radius)
    ).astype(np.int64)

    sensor_s = 2.0 * extension - robot.sleeve_length
    points = sensor_points(route, sensor_s)
    ideal = np.full(len(points), float(sensor.baseline))
    for src in sources:
        wall = wall_point(route, src.s, src.lateral_offset)
        d = np.linalg.norm(points - wall, axis=1)
        ideal += src.strength * np.asarray(kernel(src.kind, d, mu, sensor.distance_floor))

    if sensor.kind == HALL:
        values = ideal
        if sensor.gaussian_sigma > 0.0:
            values = values + rng.normal(0.0, sensor.gaussian_sigma, size=len(values))
        raw = quantize(values, sensor.adc_bits, sensor.adc_range)
    else:  # counter
        raw = rng.poisson(sensor.dwell_time * np.maximum(ideal, 0.0)).astype(np.int64)

    full_meta = {
        "seed": str(seed),
        "created": created_stamp(),
    }
    if meta:
        full_meta.update(meta)
    samples = [Sample(int(t), int(n), int(v)) for t, n, v in zip(t_ms, ticks, raw)]
    return Trace(samples=samples, meta=full_meta)
