"""Route traversal prediction.

Encodes the observed pass/fail behaviour of each sleeve material as two
thresholds: the largest sharp miter angle it can evert through and the
smallest bore-to-diameter ratio it can squeeze past.  Swept bends always
pass.  The thresholds are config-overridable; the defaults are the loosest
round values consistent with the observed outcomes (fabric stalls at sharp
45s, plastic clears everything down to 40 mm bores in 55 mm pipe).
"""
from __future__ import annotations

from dataclasses import dataclass

from .kinematics import FABRIC, PLASTIC, RobotProfile
from .route import BEND, PipeRoute


class MaterialMismatchError(ValueError):
    """Rules and robot disagree about the sleeve material."""


@dataclass(frozen=True)
class MaterialRules:
    material: str
    max_sharp_bend_deg: float
    min_bore_ratio: float
    notes: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.max_sharp_bend_deg <= 180.0:
            raise ValueError(
                f"max_sharp_bend_deg must be in [0, 180], got {self.max_sharp_bend_deg}"
            )
        if not self.min_bore_ratio > 0.0:
            raise ValueError(f"min_bore_ratio must be positive, got {self.min_bore_ratio}")


DEFAULT_RULES = {
    FABRIC: MaterialRules(
        material=FABRIC,
        max_sharp_bend_deg=30.0,
        min_bore_ratio=0.6,
        notes="seams leak and the sealed hems stiffen the wall",
    ),
    PLASTIC: MaterialRules(
        material=PLASTIC,
        max_sharp_bend_deg=90.0,
        min_bore_ratio=0.7,
        notes="airtight lay-flat tubing, undersized for the pipe",
    ),
}


@dataclass(frozen=True)
class Blocker:
    s: float
    kind: str
    reason: str


@dataclass(frozen=True)
class TraversalVerdict:
    feasible: bool
    blocker: Blocker | None = None


def can_traverse(robot: RobotProfile, rules: MaterialRules, route: PipeRoute) -> TraversalVerdict:
    """Walk the route in arc order and stop at the first violation.

    Sharp bends fail above the angle threshold; any segment bore below
    min_bore_ratio * flat_diameter fails; swept bends pass unconditionally.
    The reported blocker is the violation with the smallest arc position.
    """
    if rules.material != robot.material:
        raise MaterialMismatchError(
            f"rules are for {rules.material}, robot is {robot.material}"
        )
    min_bore = rules.min_bore_ratio * robot.flat_diameter
    for seg, start in zip(route.segments, route.cumulative_s):
        if seg.kind == BEND and seg.bend_style == "sharp":
            if seg.bend_angle_deg > rules.max_sharp_bend_deg:
                return TraversalVerdict(False, Blocker(
                    s=start,
                    kind="sharp_bend",
                    reason=(
                        f"sharp bend of {seg.bend_angle_deg:g} deg exceeds the "
                        f"{rules.max_sharp_bend_deg:g} deg limit for {rules.material}"
                    ),
                ))
        if seg.bore < min_bore:
            kind = "constriction" if seg.kind == "constriction" else "narrow_bore"
            return TraversalVerdict(False, Blocker(
                s=start,
                kind=kind,
                reason=(
                    f"bore {seg.bore:g} m is below {rules.min_bore_ratio:g} x "
                    f"robot diameter ({min_bore:g} m)"
                ),
            ))
    return TraversalVerdict(True, None)
