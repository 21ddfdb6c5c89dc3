"""Sectioned key-value files, the on-disk format shared by all evermap configs.

The format is deliberately dumb:

    # comment
    [section]
    key = value

Sections may repeat (a route file holds one ``[segment]`` section per
segment), which rules out :mod:`configparser`.  Every parse error carries a
1-based line number.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class ConfigError(Exception):
    """Malformed config content, annotated with file path and line number."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        super().__init__(message)
        self.message = message
        self.path = path
        self.line = line

    def __str__(self) -> str:
        loc = ""
        if self.path is not None:
            loc += f"{self.path}:"
        if self.line is not None:
            loc += f"{self.line}:"
        return f"{loc} {self.message}" if loc else self.message


@dataclass
class Section:
    """One ``[name]`` block: raw string values plus the line each key sits on."""

    name: str
    line: int
    path: str | None = None
    values: dict[str, str] = field(default_factory=dict)
    key_lines: dict[str, int] = field(default_factory=dict)

    def _fail(self, message: str, key: str | None = None) -> ConfigError:
        line = self.key_lines.get(key, self.line) if key else self.line
        return ConfigError(message, path=self.path, line=line)

    def get(self, key: str, default: str | None = None) -> str:
        if key in self.values:
            return self.values[key]
        if default is None:
            raise self._fail(f"[{self.name}] is missing required key '{key}'")
        return default

    def get_float(self, key: str, default: float | None = None) -> float:
        if key not in self.values:
            if default is None:
                raise self._fail(f"[{self.name}] is missing required key '{key}'")
            return default
        raw = self.values[key]
        try:
            return float(raw)
        except ValueError:
            raise self._fail(f"key '{key}': expected a number, got '{raw}'", key) from None

    def get_int(self, key: str, default: int | None = None) -> int:
        if key not in self.values:
            if default is None:
                raise self._fail(f"[{self.name}] is missing required key '{key}'")
            return default
        raw = self.values[key]
        try:
            return int(raw)
        except ValueError:
            raise self._fail(f"key '{key}': expected an integer, got '{raw}'", key) from None

    def get_choice(self, key: str, choices: tuple[str, ...], default: str | None = None) -> str:
        value = self.get(key, default)
        if value not in choices:
            raise self._fail(
                f"key '{key}': expected one of {', '.join(choices)}, got '{value}'", key
            )
        return value

    def reject_unknown(self, allowed: tuple[str, ...]) -> None:
        for key in self.values:
            if key not in allowed:
                raise self._fail(f"[{self.name}] has unknown key '{key}'", key)


def parse_sections(text: str, path: str | None = None) -> list[Section]:
    """Parse config text into an ordered list of sections."""
    sections: list[Section] = []
    current: Section | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r").strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header '{line}'", path, lineno)
            name = line[1:-1].strip()
            if not _KEY_RE.match(name):
                raise ConfigError(f"invalid section name '{name}'", path, lineno)
            current = Section(name=name, line=lineno, path=path)
            sections.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got '{line}'", path, lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"invalid key '{key}'", path, lineno)
        if current is None:
            raise ConfigError(f"key '{key}' appears before any [section] header", path, lineno)
        if key in current.values:
            raise ConfigError(
                f"duplicate key '{key}' in [{current.name}] "
                f"(first set on line {current.key_lines[key]})",
                path,
                lineno,
            )
        current.values[key] = value
        current.key_lines[key] = lineno
    return sections


def emit_sections(sections: list[tuple[str, dict[str, str]]]) -> str:
    """Render sections back to text; inverse-ish of :func:`parse_sections`."""
    blocks = []
    for name, values in sections:
        lines = [f"[{name}]"]
        lines.extend(f"{key} = {value}" for key, value in values.items())
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
