"""Experiment configuration files.

INI-style, one ``key = value`` per line, ``;`` or ``#`` comments, sections
in brackets. ``[metric]`` (and ``[metric2]`` for ``compose``) describe
fields; every verb reads its own section plus ``[run]``. Vectors are
whitespace separated. A field component is a number, an expression over
``x1..xn`` or ``@path`` to a tabulated grid file relative to the config.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DimensionError, ExpressionParseError
from ..expr import FieldExpression, variable_names
from ..fields import Box, RandersField, TabulatedComponent

VERBS = ("validate", "eval", "tensors", "connections", "average", "flow", "spectrum",
         "compose", "report")


@dataclass
class ExperimentConfig:
    path: Path | None
    text: str
    sections: dict[str, dict[str, str]]
    seed: int = 0
    samples: int = 100
    _fields: dict = field(default_factory=dict, repr=False)

    # ---- raw access ---------------------------------------------------

    def section(self, name: str) -> dict[str, str]:
        return dict(self.sections.get(name, {}))

    def line_of(self, section: str, key: str) -> int:
        """1-based line number of ``key`` inside ``[section]`` (1 if not found)."""
        current = None
        for lineno, raw in enumerate(self.text.splitlines(), start=1):
            line = raw.strip()
            m = re.match(r"^\[([^\]]+)\]$", line)
            if m:
                current = m.group(1).strip()
                continue
            if current == section and re.match(rf"^{re.escape(key)}\s*[=:]", line, re.IGNORECASE):
                return lineno
        return 1

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def get_float(self, section: str, key: str, default: float | None = None) -> float:
        raw = self.get(section, key)
        if raw is None:
            if default is None:
                raise ConfigError(f"[{section}] {key} is required (line {self.line_of(section, key)})")
            return float(default)
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: not a number: {raw!r} "
                              f"(line {self.line_of(section, key)})") from exc

    def get_int(self, section: str, key: str, default: int | None = None) -> int:
        value = self.get_float(section, key, default)
        if value != int(value):
            raise ConfigError(f"[{section}] {key} must be an integer")
        return int(value)

    def get_vector(self, section: str, key: str, n: int | None = None, default=None) -> np.ndarray:
        raw = self.get(section, key)
        if raw is None:
            if default is None:
                raise ConfigError(f"[{section}] {key} is required")
            return np.asarray(default, dtype=float)
        try:
            v = np.array([float(t) for t in raw.replace(",", " ").split()])
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: bad vector {raw!r} "
                              f"(line {self.line_of(section, key)})") from exc
        if n is not None and v.size != n:
            raise DimensionError(f"[{section}] {key} has {v.size} components, expected {n} "
                                 f"(line {self.line_of(section, key)})")
        return v

    def get_str(self, section: str, key: str, default: str | None = None, choices=None) -> str:
        raw = self.get(section, key, default)
        if raw is None:
            raise ConfigError(f"[{section}] {key} is required")
        if choices is not None and raw not in choices:
            raise ConfigError(f"[{section}] {key} must be one of {', '.join(choices)}, got {raw!r}")
        return raw

    def parse_expression(self, section: str, key: str, variables: tuple[str, ...]) -> FieldExpression:
        source = self.get(section, key)
        try:
            return FieldExpression.parse(source, variables, line=self.line_of(section, key))
        except ExpressionParseError as exc:
            col_offset = self._value_column(section, key)
            raise ExpressionParseError(f"[{section}] {key}: " + str(exc).split(": ", 1)[1],
                                       exc.line, exc.column + col_offset, source) from None

    def _value_column(self, section: str, key: str) -> int:
        line = self.text.splitlines()[self.line_of(section, key) - 1] if self.text else ""
        m = re.match(r"^(\s*[^=:]+[=:]\s*)", line)
        return len(m.group(1)) if m else 0

    # ---- fields -------------------------------------------------------

    def field(self, section: str = "metric") -> RandersField:
        if section not in self._fields:
            self._fields[section] = self._build_field(section)
        return self._fields[section]

    def _component(self, section: str, key: str, names):
        raw = self.get(section, key)
        if raw is None:
            return None
        raw = raw.strip()
        if raw.startswith("@"):
            base = self.path.parent if self.path else Path.cwd()
            return TabulatedComponent.load(base / raw[1:].strip())
        try:
            return float(raw)
        except ValueError:
            return self.parse_expression(section, key, names)

    def _build_field(self, section: str) -> RandersField:
        if section not in self.sections:
            raise ConfigError(f"missing [{section}] section")
        n = self.get_int(section, "dim")
        if n < 1:
            raise ConfigError(f"[{section}] dim must be positive")
        names = variable_names("x", n)
        lo = self.get_vector(section, "lo", n, default=[-1.0] * n)
        hi = self.get_vector(section, "hi", n, default=[1.0] * n)
        per_raw = self.get(section, "periodic", " ".join(["no"] * n)).split()
        if len(per_raw) != n:
            raise DimensionError(f"[{section}] periodic needs {n} flags")
        periodic = tuple(t.lower() in ("yes", "true", "1") for t in per_raw)
        margin = self.get_float(section, "margin", 1e-6)
        a = [[0.0] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                comp = self._component(section, f"a{i + 1}{j + 1}", names)
                if comp is None:
                    comp = self._component(section, f"a{j + 1}{i + 1}", names)
                if comp is None:
                    comp = 1.0 if i == j else 0.0
                a[i][j] = a[j][i] = comp
        beta = []
        for i in range(n):
            comp = self._component(section, f"b{i + 1}", names)
            beta.append(0.0 if comp is None else comp)
        known = {"dim", "lo", "hi", "periodic", "margin", "label"}
        known |= {f"a{i + 1}{j + 1}" for i in range(n) for j in range(n)}
        known |= {f"b{i + 1}" for i in range(n)}
        extra = set(self.sections[section]) - known
        if extra:
            bad = sorted(extra)[0]
            raise DimensionError(f"[{section}] unknown key {bad!r} for a {n}-dimensional field "
                                 f"(line {self.line_of(section, bad)})")
        return RandersField.from_components(a, beta, Box(tuple(lo), tuple(hi), periodic), margin,
                                            label=self.get(section, "label", section))

    # ---- hashing ------------------------------------------------------

    def content_hash(self, verb: str, extra: dict | None = None) -> str:
        """Hash of the verb, its parameters and the field sources it touches."""
        fields = {}
        for name in ("metric", "metric2"):
            if name in self.sections:
                try:
                    fields[name] = self.field(name).fingerprint()
                except Exception:  # noqa: BLE001 - broken fields still get a stable key
                    fields[name] = json.dumps(self.sections[name], sort_keys=True)
        payload = {
            "verb": verb,
            "params": self.sections.get(verb, {}),
            "run": self.sections.get("run", {}),
            "fields": fields,
            "seed": self.seed,
            "samples": self.samples,
            "extra": extra or {},
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def load_config(path: str | Path | None = None, text: str | None = None) -> ExperimentConfig:
    if text is None:
        if path is None:
            raise ConfigError("either a config path or config text is required")
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    sections = {name: dict(parser.items(name)) for name in parser.sections()}
    cfg = ExperimentConfig(Path(path) if path else None, text, sections)
    cfg.seed = cfg.get_int("run", "seed", 0)
    cfg.samples = cfg.get_int("run", "samples", 100)
    return cfg
