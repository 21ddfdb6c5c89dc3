"""File loaders for the three config formats (route, robot, sources).

All three share the sectioned key-value syntax from :mod:`evermap.configio`.
Bare filenames that do not exist are resolved against ``$EVERMAP_CONFIG_DIR``
and then against the configs bundled with the package.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .configio import ConfigError, Section, parse_sections
from .feasibility import DEFAULT_RULES, MaterialRules
from .kinematics import MATERIALS, DrumConfig, RobotProfile
from .route import BEND, CONSTRICTION, STRAIGHT, PipeRoute, Segment, build_route
from .sensors import SENSOR_KINDS, SOURCE_KINDS, SensorConfig, Source

BUNDLED_CONFIG_DIR = Path(__file__).parent / "configs"


def resolve_config_path(name: str | os.PathLike[str]) -> Path:
    """Literal path first, then $EVERMAP_CONFIG_DIR, then bundled configs."""
    path = Path(name)
    if path.exists():
        return path
    env_dir = os.environ.get("EVERMAP_CONFIG_DIR")
    if env_dir:
        candidate = Path(env_dir) / path
        if candidate.exists():
            return candidate
    candidate = BUNDLED_CONFIG_DIR / path
    if candidate.exists():
        return candidate
    raise ConfigError(f"config file not found: {name}", path=str(name))


def _read(name: str | os.PathLike[str]) -> tuple[str, str]:
    path = resolve_config_path(name)
    return path.read_text(encoding="utf-8"), str(path)


def parse_route_config(text: str, path: str | None = None) -> PipeRoute:
    segments: list[Segment] = []
    for section in parse_sections(text, path):
        if section.name != "segment":
            raise ConfigError(
                f"route files only hold [segment] sections, got [{section.name}]",
                path, section.line,
            )
        kind = section.get_choice("kind", (STRAIGHT, BEND, CONSTRICTION))
        if kind == BEND:
            section.reject_unknown(("kind", "bore_m", "bend_radius_m", "bend_angle_deg", "roll_deg"))
            seg = Segment(
                kind=BEND,
                bore=section.get_float("bore_m"),
                bend_radius=section.get_float("bend_radius_m", 0.0),
                bend_angle_deg=section.get_float("bend_angle_deg"),
                roll_deg=section.get_float("roll_deg", 0.0),
            )
        else:
            section.reject_unknown(("kind", "length_m", "bore_m"))
            seg = Segment(
                kind=kind,
                bore=section.get_float("bore_m"),
                length=section.get_float("length_m"),
            )
        segments.append(seg)
    if not segments:
        raise ConfigError("route file defines no [segment] sections", path)
    try:
        return build_route(segments)
    except ValueError as err:
        raise ConfigError(str(err), path) from err


def load_route(name: str | os.PathLike[str]) -> PipeRoute:
    text, path = _read(name)
    return parse_route_config(text, path)


@dataclass(frozen=True)
class RobotSetup:
    profile: RobotProfile
    drum: DrumConfig
    rules: MaterialRules


def parse_robot_config(text: str, path: str | None = None) -> RobotSetup:
    sections: dict[str, Section] = {}
    for s in parse_sections(text, path):
        if s.name not in ("robot", "drum", "rules"):
            raise ConfigError(f"unknown section [{s.name}] in robot file", path, s.line)
        if s.name in sections:
            raise ConfigError(f"duplicate section [{s.name}] in robot file", path, s.line)
        sections[s.name] = s
    if "robot" not in sections:
        raise ConfigError("robot file needs a [robot] section", path)
    robot_sec = sections["robot"]
    robot_sec.reject_unknown(("sleeve_length_m", "flat_diameter_m", "material"))
    material = robot_sec.get_choice("material", MATERIALS)
    try:
        profile = RobotProfile(
            sleeve_length=robot_sec.get_float("sleeve_length_m"),
            flat_diameter=robot_sec.get_float("flat_diameter_m"),
            material=material,
        )
    except ValueError as err:
        raise ConfigError(str(err), path, robot_sec.line) from err

    if "drum" not in sections:
        raise ConfigError("robot file needs a [drum] section", path)
    drum_sec = sections["drum"]
    drum_sec.reject_unknown(("drum_radius_m", "ticks_per_rev", "payout_ratio"))
    try:
        drum = DrumConfig(
            drum_radius=drum_sec.get_float("drum_radius_m"),
            ticks_per_rev=drum_sec.get_int("ticks_per_rev"),
            payout_ratio=drum_sec.get_float("payout_ratio", 2.0),
        )
    except ValueError as err:
        raise ConfigError(str(err), path, drum_sec.line) from err

    defaults = DEFAULT_RULES[material]
    rules = defaults
    if "rules" in sections:
        rules_sec = sections["rules"]
        rules_sec.reject_unknown(("max_sharp_bend_deg", "min_bore_ratio", "notes"))
        try:
            rules = MaterialRules(
                material=material,
                max_sharp_bend_deg=rules_sec.get_float(
                    "max_sharp_bend_deg", defaults.max_sharp_bend_deg
                ),
                min_bore_ratio=rules_sec.get_float("min_bore_ratio", defaults.min_bore_ratio),
                notes=rules_sec.get("notes", defaults.notes),
            )
        except ValueError as err:
            raise ConfigError(str(err), path, rules_sec.line) from err
    return RobotSetup(profile=profile, drum=drum, rules=rules)


def load_robot(name: str | os.PathLike[str]) -> RobotSetup:
    text, path = _read(name)
    return parse_robot_config(text, path)


@dataclass(frozen=True)
class SourceScene:
    sources: list[Source]
    sensor: SensorConfig
    mu: float


def parse_sources_config(text: str, path: str | None = None) -> SourceScene:
    sources: list[Source] = []
    sensor = SensorConfig()
    mu = 0.0
    for section in parse_sections(text, path):
        if section.name == "source":
            section.reject_unknown(("s_m", "strength", "kind", "lateral_offset_m"))
            offset_raw = section.get("lateral_offset_m", "wall")
            offset = None if offset_raw == "wall" else section.get_float("lateral_offset_m")
            try:
                sources.append(Source(
                    s=section.get_float("s_m"),
                    strength=section.get_float("strength"),
                    kind=section.get_choice("kind", SOURCE_KINDS, "magnetic_dipole"),
                    lateral_offset=offset,
                ))
            except ValueError as err:
                raise ConfigError(str(err), path, section.line) from err
        elif section.name == "sensor":
            section.reject_unknown((
                "kind", "baseline", "sigma", "adc_bits", "adc_min", "adc_max",
                "dwell_s", "distance_floor_m", "mu_per_m",
            ))
            bits = section.get("adc_bits", "none")
            try:
                sensor = SensorConfig(
                    kind=section.get_choice("kind", SENSOR_KINDS, "hall"),
                    baseline=section.get_float("baseline", 0.0),
                    gaussian_sigma=section.get_float("sigma", 0.0),
                    adc_bits=None if bits == "none" else section.get_int("adc_bits"),
                    adc_range=(
                        section.get_float("adc_min", 0.0),
                        section.get_float("adc_max", 1.0),
                    ),
                    dwell_time=section.get_float("dwell_s", 1.0),
                    distance_floor=section.get_float("distance_floor_m", 1e-3),
                )
            except ValueError as err:
                raise ConfigError(str(err), path, section.line) from err
            mu = section.get_float("mu_per_m", 0.0)
        else:
            raise ConfigError(
                f"unknown section [{section.name}] in sources file", path, section.line
            )
    return SourceScene(sources=sources, sensor=sensor, mu=mu)


def load_sources(name: str | os.PathLike[str]) -> SourceScene:
    text, path = _read(name)
    return parse_sources_config(text, path)
