"""Pipe course geometry.

A route is an ordered run of segments (straight / bend / constriction)
parameterized by arc length ``s`` measured along the centerline from the
entry.  Bends are either swept circular arcs or zero-length sharp miters.
The centerline position is continuous in ``s``; the tangent may jump at a
miter, where the downstream segment wins all tie-breaks.

Poses carry a full moving frame (position, tangent, normal) so callers can
place objects on the pipe wall: wall point = position + offset * normal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

STRAIGHT = "straight"
BEND = "bend"
CONSTRICTION = "constriction"
SEGMENT_KINDS = (STRAIGHT, BEND, CONSTRICTION)


class RouteRangeError(ValueError):
    """Arc position outside [0, total_length]."""


@dataclass(frozen=True)
class Segment:
    """One piece of pipe.

    ``length`` applies to straights and constrictions.  A bend is swept when
    ``bend_radius > 0`` (arc length = radius * angle) and a sharp zero-length
    miter when ``bend_radius == 0``.  ``roll_deg`` tilts the turn plane about
    the incoming tangent, letting courses leave the plane.
    """

    kind: str
    bore: float
    length: float = 0.0
    bend_radius: float = 0.0
    bend_angle_deg: float = 0.0
    roll_deg: float = 0.0

    @property
    def bend_style(self) -> str:
        return "sharp" if self.bend_radius == 0.0 else "swept"

    @property
    def arc_length(self) -> float:
        if self.kind == BEND:
            return self.bend_radius * math.radians(self.bend_angle_deg)
        return self.length


@dataclass(frozen=True)
class Pose:
    """Centerline frame at one arc position."""

    position: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class Feature:
    """A bend or constriction, keyed by its start arc length."""

    s: float
    kind: str  # sharp_bend | swept_bend | constriction
    segment: Segment


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("zero-length direction vector")
    return v / n


DEFAULT_ENTRY = Pose(
    position=np.zeros(3),
    tangent=np.array([1.0, 0.0, 0.0]),
    normal=np.array([0.0, 1.0, 0.0]),
)


@dataclass(frozen=True)
class PipeRoute:
    """Immutable piecewise centerline; safe for concurrent reads.

    ``cumulative_s[i]`` is the start arc length of segment ``i``.  The frame
    arrays hold each segment's entry frame plus the final exit frame, and
    ``turn_normals[i]`` is the (rolled) in-plane turn direction of bend ``i``.
    """

    segments: tuple[Segment, ...]
    entry: Pose
    cumulative_s: tuple[float, ...]
    total_length: float
    _starts: np.ndarray
    _positions: np.ndarray  # (n+1, 3)
    _tangents: np.ndarray  # (n+1, 3)
    _normals: np.ndarray  # (n+1, 3)
    _turn_normals: np.ndarray  # (n, 3), NaN rows for non-bends

    def pose_at(self, s: float) -> Pose:
        p, t, n = self.poses_at(np.asarray([s], dtype=float))
        return Pose(position=p[0], tangent=t[0], normal=n[0])

    def poses_at(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized frames at arc positions ``s`` (shape (m,))."""
        s = np.asarray(s, dtype=float)
        tol = 1e-9
        if np.any(s < -tol) or np.any(s > self.total_length + tol):
            bad = float(s[(s < -tol) | (s > self.total_length + tol)][0])
            raise RouteRangeError(
                f"arc position {bad:.6g} outside [0, {self.total_length:.6g}]"
            )
        s = np.clip(s, 0.0, self.total_length)
        # segment with start <= s; at a shared boundary the downstream one wins
        idx = np.searchsorted(self._starts, s, side="right") - 1
        idx = np.clip(idx, 0, len(self.segments) - 1)

        pos = np.empty((len(s), 3))
        tan = np.empty((len(s), 3))
        nor = np.empty((len(s), 3))
        for i in np.unique(idx):
            seg = self.segments[i]
            mask = idx == i
            u = np.clip(s[mask] - self._starts[i], 0.0, max(seg.arc_length, 0.0))
            p0, t0, n0 = self._positions[i], self._tangents[i], self._normals[i]
            if seg.kind == BEND and seg.arc_length == 0.0:
                # sharp miter: joint point, downstream (exit) frame
                pos[mask] = p0
                tan[mask] = self._tangents[i + 1]
                nor[mask] = self._normals[i + 1]
            elif seg.kind == BEND:
                m0 = self._turn_normals[i]
                phi = (u / seg.bend_radius)[:, None]
                r = seg.bend_radius
                pos[mask] = p0 + r * np.sin(phi) * t0 + r * (1.0 - np.cos(phi)) * m0
                tan[mask] = np.cos(phi) * t0 + np.sin(phi) * m0
                nor[mask] = -np.sin(phi) * t0 + np.cos(phi) * m0
            else:
                pos[mask] = p0 + u[:, None] * t0
                tan[mask] = t0
                nor[mask] = n0
        return pos, tan, nor

    def bore_at(self, s: float) -> float:
        if not (-1e-9 <= s <= self.total_length + 1e-9):
            raise RouteRangeError(
                f"arc position {s:.6g} outside [0, {self.total_length:.6g}]"
            )
        s = min(max(s, 0.0), self.total_length)
        idx = int(np.searchsorted(self._starts, s, side="right")) - 1
        idx = min(max(idx, 0), len(self.segments) - 1)
        return self.segments[idx].bore

    def features(self) -> list[Feature]:
        """Bends and constrictions at their start arc lengths, in route order."""
        out: list[Feature] = []
        for seg, start in zip(self.segments, self.cumulative_s):
            if seg.kind == BEND:
                kind = "sharp_bend" if seg.bend_style == "sharp" else "swept_bend"
                out.append(Feature(s=start, kind=kind, segment=seg))
            elif seg.kind == CONSTRICTION:
                out.append(Feature(s=start, kind="constriction", segment=seg))
        return out


def _validate_segment(i: int, seg: Segment) -> None:
    if seg.kind not in SEGMENT_KINDS:
        raise ValueError(f"segment {i}: unknown kind '{seg.kind}'")
    if not seg.bore > 0.0:
        raise ValueError(f"segment {i}: bore must be positive, got {seg.bore}")
    if seg.length < 0.0:
        raise ValueError(f"segment {i}: negative length {seg.length}")
    if seg.kind == BEND:
        if seg.bend_radius < 0.0:
            raise ValueError(f"segment {i}: negative bend radius {seg.bend_radius}")
        if seg.bend_angle_deg < 0.0:
            raise ValueError(f"segment {i}: negative bend angle {seg.bend_angle_deg}")


def _roll(tangent: np.ndarray, normal: np.ndarray, roll_deg: float) -> np.ndarray:
    if roll_deg == 0.0:
        return normal
    rho = math.radians(roll_deg)
    binormal = np.cross(tangent, normal)
    return math.cos(rho) * normal + math.sin(rho) * binormal


def build_route(segments: list[Segment] | tuple[Segment, ...], entry: Pose | None = None) -> PipeRoute:
    """Assemble segments into a route, propagating the centerline frame.

    Raises ValueError for an empty segment list, non-positive bores, or
    negative lengths/radii/angles.
    """
    if not segments:
        raise ValueError("route needs at least one segment")
    for i, seg in enumerate(segments):
        _validate_segment(i, seg)
    entry = entry or DEFAULT_ENTRY
    t = _unit(np.asarray(entry.tangent, dtype=float))
    n = _unit(np.asarray(entry.normal, dtype=float))
    n = n - np.dot(n, t) * t  # keep the frame orthonormal
    n = _unit(n)
    p = np.asarray(entry.position, dtype=float)

    count = len(segments)
    starts = np.zeros(count)
    positions = np.zeros((count + 1, 3))
    tangents = np.zeros((count + 1, 3))
    normals = np.zeros((count + 1, 3))
    turn_normals = np.full((count, 3), np.nan)

    s = 0.0
    for i, seg in enumerate(segments):
        starts[i] = s
        positions[i], tangents[i], normals[i] = p, t, n
        if seg.kind == BEND:
            m = _roll(t, n, seg.roll_deg)
            turn_normals[i] = m
            theta = math.radians(seg.bend_angle_deg)
            r = seg.bend_radius
            if r > 0.0:
                p = p + r * math.sin(theta) * t + r * (1.0 - math.cos(theta)) * m
            t, n = (
                math.cos(theta) * t + math.sin(theta) * m,
                -math.sin(theta) * t + math.cos(theta) * m,
            )
        else:
            p = p + seg.arc_length * t
        s += seg.arc_length
    positions[count], tangents[count], normals[count] = p, t, n

    return PipeRoute(
        segments=tuple(segments),
        entry=Pose(position=positions[0].copy(), tangent=tangents[0].copy(), normal=normals[0].copy()),
        cumulative_s=tuple(float(v) for v in starts),
        total_length=float(s),
        _starts=starts,
        _positions=positions,
        _tangents=tangents,
        _normals=normals,
        _turn_normals=turn_normals,
    )


# module-level conveniences mirroring the method API
def pose_at(route: PipeRoute, s: float) -> Pose:
    return route.pose_at(s)


def bore_at(route: PipeRoute, s: float) -> float:
    return route.bore_at(s)


def features(route: PipeRoute) -> list[Feature]:
    return route.features()


def total_length(route: PipeRoute) -> float:
    return route.total_length
