"""Eversion growth kinematics and the drum/encoder odometry chain.

The sleeve everts from the tip: everted material lies still against the pipe
wall while fresh material feeds through the inside.  Conservation splits the
sleeve length into outer wall (= extension), the doubled-back inner run, and
whatever still hangs outside the entrance.  The sealed end that carries the
sensor therefore moves at twice the tip speed and only enters the pipe once
half the sleeve has everted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .route import PipeRoute

FABRIC = "fabric"
PLASTIC = "plastic"
MATERIALS = (FABRIC, PLASTIC)


@dataclass(frozen=True)
class RobotProfile:
    """One physical sleeve: total material length, inflated diameter, material."""

    sleeve_length: float
    flat_diameter: float
    material: str

    def __post_init__(self) -> None:
        if not self.sleeve_length > 0.0:
            raise ValueError(f"sleeve_length must be positive, got {self.sleeve_length}")
        if not self.flat_diameter > 0.0:
            raise ValueError(f"flat_diameter must be positive, got {self.flat_diameter}")
        if self.material not in MATERIALS:
            raise ValueError(f"material must be one of {MATERIALS}, got '{self.material}'")


@dataclass(frozen=True)
class DrumConfig:
    """Tendon drum with shaft encoder.

    The tendon pays out ``payout_ratio`` meters per meter of tip extension
    (2 by material conservation: the sealed end leads the tip by the doubled
    inner run).  Single-layer winding; no spiral growth correction.
    """

    drum_radius: float
    ticks_per_rev: int
    payout_ratio: float = 2.0

    def __post_init__(self) -> None:
        if not self.drum_radius > 0.0:
            raise ValueError(f"drum_radius must be positive, got {self.drum_radius}")
        if self.ticks_per_rev < 1:
            raise ValueError(f"ticks_per_rev must be >= 1, got {self.ticks_per_rev}")
        if not self.payout_ratio > 0.0:
            raise ValueError(f"payout_ratio must be positive, got {self.payout_ratio}")

    @property
    def extension_per_tick(self) -> float:
        return (2.0 * math.pi * self.drum_radius / self.ticks_per_rev) / self.payout_ratio


@dataclass(frozen=True)
class KinematicState:
    """Snapshot of the growth state at one instant."""

    extension: float
    encoder_ticks: int
    sensor_s: float


class MaterialBudget(NamedTuple):
    outer: float
    inner: float
    tail: float


def extension_from_ticks(drum: DrumConfig, ticks: int) -> float:
    """Tip extension implied by a signed encoder count (no clamping here)."""
    return (2.0 * math.pi * drum.drum_radius * ticks / drum.ticks_per_rev) / drum.payout_ratio


def _check_extension(profile: RobotProfile, extension: float) -> None:
    if not (0.0 <= extension <= profile.sleeve_length):
        raise ValueError(
            f"extension {extension:.6g} outside [0, {profile.sleeve_length:.6g}]"
        )


def sensor_position(profile: RobotProfile, extension: float) -> float:
    """Arc position of the sealed-end sensor; negative while still outside.

    The sensor crosses the entrance at extension = sleeve_length / 2 and
    reaches the tip at full eversion.
    """
    _check_extension(profile, extension)
    return 2.0 * extension - profile.sleeve_length


def material_budget(profile: RobotProfile, extension: float) -> MaterialBudget:
    """Split the sleeve into outer wall / inner run / outside tail; sums exactly."""
    _check_extension(profile, extension)
    s_total = profile.sleeve_length
    outer = extension
    inner = min(extension, s_total - extension)
    tail = max(0.0, s_total - 2.0 * extension)
    return MaterialBudget(outer=outer, inner=inner, tail=tail)


def max_extension(profile: RobotProfile, route: PipeRoute) -> float:
    """The tip stops at the end of the pipe or when the sleeve runs out."""
    return min(profile.sleeve_length, route.total_length)


def discrete_material_oracle(profile: RobotProfile, extension: float, n_elements: int = 10_000) -> float:
    """Element-feed simulation of eversion, used to cross-check sensor_position.

    The sleeve is cut into ``n_elements`` equal elements queued behind the
    tip, sealed end last.  Each step everts one element: the tip advances one
    element length and the element leaves the queue for the pipe wall.  The
    sealed end trails the tip by the material still queued.  Agreement with
    the closed form is within one element length.
    """
    if n_elements < 100:
        raise ValueError(f"n_elements must be >= 100, got {n_elements}")
    _check_extension(profile, extension)
    h = profile.sleeve_length / n_elements
    steps = round(extension / h)
    tip = 0.0
    queued = n_elements
    for _ in range(steps):
        tip += h
        queued -= 1
    return tip - queued * h


def state_from_ticks(profile: RobotProfile, drum: DrumConfig, ticks: int) -> KinematicState:
    """Decode an encoder count into a kinematic state.

    Counts that would put the tip outside [0, sleeve_length] are clamped:
    the physical sleeve cannot go further, only the drum can slip or round.
    """
    extension = extension_from_ticks(drum, ticks)
    extension = min(max(extension, 0.0), profile.sleeve_length)
    return KinematicState(
        extension=extension,
        encoder_ticks=ticks,
        sensor_s=sensor_position(profile, extension),
    )
