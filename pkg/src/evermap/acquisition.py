"""Trace ingestion and profile binning.

A trace is the raw log of the encoder + sensor chain: one integer triple
(t_ms, encoder_ticks, sensor_raw) per sample, with ``# key=value`` metadata
up front.  The CSV form is canonical and byte-exact: parse and write are
inverse bijections on valid files.

Profiles re-bin readings against the sensor's arc position decoded from the
encoder, not against time.  Retraction samples are flagged by tick direction
and excluded by default: a buckling sleeve makes tail odometry untrustworthy
on the way back.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .kinematics import DrumConfig, RobotProfile, extension_from_ticks, sensor_position

TRACE_HEADER = "t_ms,encoder_ticks,sensor_raw"

_ROW_RE = re.compile(r"^(\d+),(-?\d+),(-?\d+)$")
_META_RE = re.compile(r"^# ([A-Za-z0-9_.\-]+)=(.*)$")

EXTEND = "extend"
RETRACT = "retract"
MIXED = "mixed"


class TraceFormatError(Exception):
    """Malformed trace text, annotated with a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.message = message
        self.line = line

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        return f"line {self.line}: {self.message}"


class FrameError(Exception):
    """One corrupt record on the live feed; the decoder keeps going."""


class NoInPipeSamplesError(Exception):
    """The trace never puts the sensor inside the pipe."""


@dataclass(frozen=True)
class Sample:
    t_ms: int
    encoder_ticks: int
    sensor_raw: int

    def __post_init__(self) -> None:
        if self.t_ms < 0:
            raise ValueError(f"t_ms must be >= 0, got {self.t_ms}")


@dataclass
class Trace:
    """Time-ordered samples plus free-form string metadata."""

    samples: list[Sample]
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for prev, cur in zip(self.samples, self.samples[1:]):
            if cur.t_ms <= prev.t_ms:
                raise ValueError(
                    f"t_ms must be strictly increasing ({prev.t_ms} then {cur.t_ms})"
                )


def parse_trace_csv(text: str) -> Trace:
    """Parse canonical trace CSV; strict so that write(parse(x)) == x.

    Leading ``# key=value`` lines become metadata.  The header must read
    exactly ``t_ms,encoder_ticks,sensor_raw``.  Every error names its line.
    """
    if not text.endswith("\n"):
        raise TraceFormatError("missing final newline")
    lines = text.split("\n")[:-1]
    meta: dict[str, str] = {}
    samples: list[Sample] = []
    lineno = 0
    header_seen = False
    for lineno, line in enumerate(lines, start=1):
        if not header_seen:
            if line.startswith("#"):
                m = _META_RE.match(line)
                if not m:
                    raise TraceFormatError(
                        "metadata lines must read '# key=value'", lineno
                    )
                key, value = m.group(1), m.group(2)
                if key in meta:
                    raise TraceFormatError(f"duplicate metadata key '{key}'", lineno)
                meta[key] = value
                continue
            if line != TRACE_HEADER:
                raise TraceFormatError(
                    f"expected header '{TRACE_HEADER}', got '{line}'", lineno
                )
            header_seen = True
            continue
        m = _ROW_RE.match(line)
        if not m:
            raise TraceFormatError(f"malformed sample row '{line}'", lineno)
        sample = Sample(int(m.group(1)), int(m.group(2)), int(m.group(3)))
        if samples and sample.t_ms <= samples[-1].t_ms:
            raise TraceFormatError(
                f"t_ms not strictly increasing ({samples[-1].t_ms} then {sample.t_ms})",
                lineno,
            )
        samples.append(sample)
    if not header_seen:
        raise TraceFormatError(f"expected header '{TRACE_HEADER}'", lineno + 1)
    return Trace(samples=samples, meta=meta)


def write_trace_csv(trace: Trace) -> str:
    """Canonical CSV text: metadata comments, header, integer rows, LF endings."""
    out: list[str] = []
    for key, value in trace.meta.items():
        if not _META_RE.match(f"# {key}={value}") or "\n" in value:
            raise ValueError(f"metadata entry {key!r}={value!r} is not writable")
        out.append(f"# {key}={value}")
    out.append(TRACE_HEADER)
    for s in trace.samples:
        out.append(f"{s.t_ms},{s.encoder_ticks},{s.sensor_raw}")
    return "\n".join(out) + "\n"


def stream_decode(line: str) -> Sample:
    """Decode one newline-framed record; '\\r\\n' tolerated.

    Raises FrameError on a malformed frame.  The caller resynchronizes by
    moving on to the next newline.
    """
    body = line.rstrip("\n").rstrip("\r")
    m = _ROW_RE.match(body)
    if not m:
        raise FrameError(f"malformed frame {body!r}")
    return Sample(int(m.group(1)), int(m.group(2)), int(m.group(3)))


class StreamDecoder:
    """Incremental decoder for the newline-delimited wire format.

    Feed arbitrary text chunks; complete frames come back as samples while
    corrupt frames are recorded in ``errors`` and skipped (one error per bad
    frame, decoding resumes at the next newline).
    """

    def __init__(self) -> None:
        self._buffer = ""
        self.errors: list[FrameError] = []

    def feed(self, chunk: str) -> list[Sample]:
        self._buffer += chunk
        samples: list[Sample] = []
        while "\n" in self._buffer:
            line, _, self._buffer = self._buffer.partition("\n")
            try:
                samples.append(stream_decode(line))
            except FrameError as err:
                self.errors.append(err)
        return samples


@dataclass(frozen=True)
class ProfileBin:
    s_center: float
    mean_reading: float
    n: int
    phase: str


@dataclass
class Profile:
    """Binned reading vs sensor arc position; bin centers sit on the
    bin_width grid."""

    bin_width: float
    bins: list[ProfileBin]

    def s_centers(self) -> np.ndarray:
        return np.array([b.s_center for b in self.bins])

    def readings(self) -> np.ndarray:
        return np.array([b.mean_reading for b in self.bins])

    def span(self) -> tuple[float, float]:
        centers = self.s_centers()
        return float(centers.min()), float(centers.max())


def sample_phases(ticks: list[int]) -> list[str]:
    """Per-sample extend/retract flags from tick direction.

    A sample is 'extend' when ticks are non-decreasing across the 3-sample
    window centered on it (ties count as extend), 'retract' otherwise.
    """
    n = len(ticks)
    if n <= 1:
        return [EXTEND] * n
    diffs = [ticks[i + 1] - ticks[i] for i in range(n - 1)]
    phases = []
    for i in range(n):
        window = diffs[max(i - 1, 0):i + 1]
        phases.append(EXTEND if all(d >= 0 for d in window) else RETRACT)
    return phases


def build_profile(trace: Trace, drum: DrumConfig, robot: RobotProfile,
                  bin_width: float = 0.01, include_retract: bool = False) -> Profile:
    """Bin a trace into a reading-vs-arc-length profile.

    Arc position comes purely from the encoder: extension_from_ticks, clamped
    into the sleeve's physical range, then the tail-sensor map.  Samples with
    the sensor still outside (sensor_s < 0) are dropped, as are
    retract-flagged samples unless ``include_retract``.
    """
    if not bin_width > 0.0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    phases = sample_phases([s.encoder_ticks for s in trace.samples])
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    bin_phases: dict[int, set[str]] = {}
    for sample, phase in zip(trace.samples, phases):
        if phase == RETRACT and not include_retract:
            continue
        extension = extension_from_ticks(drum, sample.encoder_ticks)
        extension = min(max(extension, 0.0), robot.sleeve_length)
        sensor_s = sensor_position(robot, extension)
        if sensor_s < 0.0:
            continue
        idx = math.floor(sensor_s / bin_width)
        sums[idx] = sums.get(idx, 0.0) + sample.sensor_raw
        counts[idx] = counts.get(idx, 0) + 1
        bin_phases.setdefault(idx, set()).add(phase)
    if not counts:
        raise NoInPipeSamplesError(
            "no usable samples: the sensor never entered the pipe"
        )
    bins = []
    for idx in sorted(counts):
        kinds = bin_phases[idx]
        phase = kinds.pop() if len(kinds) == 1 else MIXED
        bins.append(ProfileBin(
            s_center=(idx + 0.5) * bin_width,
            mean_reading=sums[idx] / counts[idx],
            n=counts[idx],
            phase=phase,
        ))
    return Profile(bin_width=bin_width, bins=bins)
