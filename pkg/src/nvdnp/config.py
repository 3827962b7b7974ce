"""Experiment configuration: parsing, validation, defaults and rendering.

The text grammar is INI (``[section]`` headers, ``key = value`` lines, ``#``
comments). JSON with the same section/key layout is accepted too. Physical
quantities carry a mandatory unit suffix, e.g. ``field = 17.6 mT``; values
are stored in SI base units (T, Hz, K, s, W, 1/s) or mW/mm2 for laser
density.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from decimal import Decimal
from dataclasses import dataclass, field
from typing import Any

from . import constants as C
from .errors import ConfigError

KINDS = ("spectrum", "power-sweep", "multitone", "laser-model", "estimate")

# unit suffix -> (dimension, factor to the stored unit)
UNITS = {
    "T": ("field", 1.0), "mT": ("field", 1e-3), "uT": ("field", 1e-6),
    "Hz": ("frequency", 1.0), "kHz": ("frequency", 1e3), "MHz": ("frequency", 1e6),
    "GHz": ("frequency", 1e9),
    "K": ("temperature", 1.0),
    "s": ("time", 1.0), "ms": ("time", 1e-3), "us": ("time", 1e-6), "ns": ("time", 1e-9),
    "W": ("power", 1.0), "mW": ("power", 1e-3),
    "/s": ("rate", 1.0), "1/s": ("rate", 1.0),
    "mW/mm2": ("density", 1.0), "W/cm2": ("density", 10.0),
    "Hz/T": ("gyromagnetic", 1.0), "MHz/T": ("gyromagnetic", 1e6),
    "K/(mW/mm2)": ("heating", 1.0),
    "/(mW/mm2)": ("inverse_density", 1.0),
}
# canonical suffix used when rendering each dimension
CANONICAL = {
    "field": "T", "frequency": "Hz", "temperature": "K", "time": "s", "power": "W",
    "rate": "/s", "density": "mW/mm2", "gyromagnetic": "Hz/T", "heating": "K/(mW/mm2)",
    "inverse_density": "/(mW/mm2)",
}

_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_QUANTITY = re.compile(rf"^\s*({_NUMBER})\s*(\S+)?\s*$")


@dataclass(frozen=True)
class Key:
    """Schema entry: ``kind`` is a dimension name, or one of
    ``float int bool str choice quantity list``."""

    kind: str
    default: Any = None
    choices: tuple = ()
    item: str | None = None  # element dimension for ``list``
    positive: bool = False
    required: bool = False


_SWEEP = {
    "start": Key("quantity", required=True),
    "stop": Key("quantity", required=True),
    "points": Key("int", 61, positive=True),
    "spacing": Key("choice", "linear", ("linear", "geometric")),
}

SCHEMA: dict[str, dict[str, Key]] = {
    "run": {
        "kind": Key("choice", None, KINDS, required=True),
        "seed": Key("int", 0),
    },
    "system": {
        "nitrogen": Key("bool", True),
        "carbon": Key("bool", True),
        "field": Key("field", C.FIELD_DNP, positive=True),
        "zfs": Key("frequency", C.ZFS_DNP, positive=True),
        "a_n": Key("frequency", C.A_ZZ_14N),
        "a_zz_c": Key("frequency", C.A_ZZ_13C),
        "a_zx_c": Key("frequency", C.A_ZX_13C),
        "temperature": Key("temperature", C.ROOM_TEMPERATURE, positive=True),
    },
    "dissipators": {
        "pump": Key("rate", C.PUMP_RATE),
        "electron_t1": Key("rate", C.ELECTRON_T1_RATE),
        "electron_t2": Key("rate", C.ELECTRON_T2_RATE),
        "nuclear_t1": Key("rate", C.NUCLEAR_T1_RATE),
    },
    "drive": {
        "transition": Key("choice", "-1", ("-1", "+1")),
        "rabi": Key("frequency", C.SPECTRUM_RABI),
        "frequency": Key("frequency", None, positive=True),
        "lobe_sign": Key("choice", "+1", ("+1", "-1")),
    },
    "sweep": _SWEEP,
    "protocol": {
        "mode": Key("choice", "steady_state", ("steady_state", "evolve")),
        "duration": Key("time", None, positive=True),
    },
    "multitone": {
        "tones": Key("list", (), item="frequency"),
        "subsets": Key("str", ""),
        "method": Key("choice", "floquet", ("floquet", "secular")),
    },
    "laser": {
        "alpha": Key("heating", 3.4, positive=True),
        "beta": Key("inverse_density", 1e-3, positive=True),
        "c": Key("temperature", 1.0, positive=True),
        "base_temperature": Key("temperature", 300.0, positive=True),
    },
    "estimate": {
        "s_hyper": Key("float", None),
        "s_thermal": Key("float", None),
        "b_sm": Key("field", C.FIELD_NMR, positive=True),
        "b_em": Key("field", C.FIELD_DNP, positive=True),
        "t_l": Key("temperature", C.ROOM_TEMPERATURE, positive=True),
        "t_r": Key("temperature", C.ROOM_TEMPERATURE, positive=True),
        "gamma_n": Key("gyromagnetic", C.GAMMA_13C, positive=True),
    },
    "thermometry": {
        "f_minus": Key("frequency", None, positive=True),
        "f_plus": Key("frequency", None, positive=True),
        "d_ref": Key("frequency", C.ZFS_ROOM, positive=True),
        "t_ref": Key("temperature", C.ZFS_ROOM_TEMPERATURE, positive=True),
        "odmr_file": Key("str", ""),
    },
    "output": {
        "prefix": Key("str", ""),
        "plotdata": Key("bool", True),
    },
}

SECTIONS_BY_KIND = {
    "spectrum": ("run", "system", "dissipators", "drive", "sweep", "protocol", "output"),
    "power-sweep": ("run", "system", "dissipators", "drive", "sweep", "protocol", "output"),
    "multitone": ("run", "system", "dissipators", "drive", "multitone", "output"),
    "laser-model": ("run", "laser", "sweep", "output"),
    "estimate": ("run", "estimate", "thermometry", "output"),
}
# dimension of sweep start/stop per kind
SWEEP_DIMENSION = {"spectrum": "frequency", "power-sweep": "frequency", "laser-model": "density"}
SWEEP_DEFAULTS = {
    "spectrum": {"points": 61, "spacing": "linear"},
    "power-sweep": {"points": 40, "spacing": "geometric"},
    "laser-model": {"points": 101, "spacing": "linear"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated run configuration.

    Args:
        kind: One of :data:`KINDS`.
        seed: Seed for synthetic noise; the physics is deterministic.
        sections: ``{section: {key: value}}`` with every schema key present.
        defaulted: ``section.key`` names filled from defaults (provenance only).
    """

    kind: str
    seed: int
    sections: dict
    defaulted: tuple[str, ...] = field(default=(), compare=False)

    def get(self, section: str, key: str):
        return self.sections[section][key]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "sections": self.sections}

    def fingerprint(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def render(self) -> str:
        """Canonical INI text; ``parse_config(cfg.render()) == cfg``."""
        lines = []
        for name in SECTIONS_BY_KIND[self.kind]:
            lines.append(f"[{name}]")
            for key, value in self.sections[name].items():
                spec = _key_spec(self.kind, name, key)
                text = _render_value(spec, value)
                if text is not None:
                    lines.append(f"{key} = {text}")
            lines.append("")
        return "\n".join(lines)


# --- value conversion ---------------------------------------------------------

def _key_spec(kind, section, key) -> Key:
    spec = SCHEMA[section][key]
    if section == "sweep" and key in ("start", "stop"):
        return Key(SWEEP_DIMENSION[kind], required=True)
    if section == "sweep" and key in SWEEP_DEFAULTS[kind]:
        return Key(spec.kind, SWEEP_DEFAULTS[kind][key], spec.choices, positive=spec.positive)
    return spec


def _fmt(x: float) -> str:
    return repr(float(x))


def _render_value(spec: Key, value):
    if value is None:
        return None
    if spec.kind == "bool":
        return "yes" if value else "no"
    if spec.kind == "list":
        unit = CANONICAL[spec.item]
        return ", ".join(f"{_fmt(v)} {unit}" for v in value)
    if spec.kind in CANONICAL:
        return f"{_fmt(value)} {CANONICAL[spec.kind]}"
    if spec.kind == "float":
        return _fmt(value)
    return str(value)


def parse_quantity(text: str, dimension: str | None = None, key: str | None = None,
                   line: int | None = None) -> tuple[float, str]:
    """``"17.6 mT"`` -> ``(0.0176, "field")``. Bare numbers are rejected."""
    m = _QUANTITY.match(str(text))
    if not m:
        raise ConfigError(f"cannot read quantity {text!r}", key, line, "<number> <unit>")
    unit = m.group(2)
    expected = f"a {dimension} with unit, e.g. {_example(dimension)}" if dimension else "<number> <unit>"
    if unit is None:
        raise ConfigError(f"missing unit in {text!r}", key, line, expected)
    if unit not in UNITS:
        raise ConfigError(f"unknown unit {unit!r}", key, line, expected)
    dim, factor = UNITS[unit]
    if dimension is not None and dim != dimension:
        raise ConfigError(f"unit {unit!r} is a {dim}", key, line, expected)
    # decimal scaling keeps e.g. 17.6 mT == 0.0176 T exactly
    return float(Decimal(m.group(1)) * Decimal(repr(factor))), dim


def _example(dimension):
    units = [u for u, (d, _) in UNITS.items() if d == dimension]
    return "1.0 " + "/".join(units) if len(units) <= 1 else "1.0 " + " | ".join(units)


def _convert(spec: Key, raw, key, line):
    if isinstance(raw, str):
        text = raw.strip()
    else:
        text = raw
    kind = spec.kind
    try:
        if kind == "bool":
            if isinstance(text, bool):
                return text
            low = str(text).lower()
            if low in ("yes", "true", "on", "1"):
                return True
            if low in ("no", "false", "off", "0"):
                return False
            raise ConfigError(f"not a boolean: {text!r}", key, line, "yes/no")
        if kind == "int":
            if isinstance(text, bool) or (isinstance(text, float) and not text.is_integer()):
                raise ValueError
            value = int(text)
            if spec.positive and value <= 0:
                raise ConfigError("must be positive", key, line, "integer > 0")
            return value
        if kind == "float":
            if isinstance(text, bool):
                raise ValueError
            return float(text)
        if kind == "str":
            return str(text)
        if kind == "choice":
            value = str(text)
            if value == "1" and "+1" in spec.choices:
                value = "+1"
            if value not in spec.choices:
                raise ConfigError(f"invalid value {text!r}", key, line, " | ".join(spec.choices))
            return value
        if kind == "list":
            items = text if isinstance(text, list) else [t for t in str(text).split(",") if t.strip()]
            return tuple(parse_quantity(t, spec.item, key, line)[0] for t in items)
        value, _ = parse_quantity(text, kind, key, line)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid {kind} {text!r}", key, line, f"a {kind}") from None
    if spec.positive and not value > 0:
        raise ConfigError("must be positive", key, line, f"a positive {kind}")
    return value


# --- parsing ------------------------------------------------------------------

def _ini_locations(text: str) -> dict:
    """(section, key) -> line number, and section -> header line."""
    where, section = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), n)
            continue
        m = re.match(r"^([^=:\s]+)\s*[=:]", s)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), n)
    return where


def _read_ini(text: str):
    cp = configparser.ConfigParser(strict=True, interpolation=None,
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
                                   default_section="__defaults__")
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", f"{exc.section}.{exc.option}", exc.lineno,
                          "each key once per section") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section", exc.section, exc.lineno,
                          "each section once") from None
    except configparser.Error as exc:
        raise ConfigError(f"syntax error: {exc.message.splitlines()[0]}",
                          None, getattr(exc, "lineno", None), "[section] and key = value lines") from None
    raw = {s: dict(cp.items(s)) for s in cp.sections()}
    return raw, _ini_locations(text)


def _read_json(text: str):
    def pairs(items):
        seen = {}
        for k, v in items:
            if k in seen:
                raise ConfigError("duplicate key", k, _json_line(text, k, 2), "each key once per object")
            seen[k] = v
        return seen

    try:
        data = json.loads(text, object_pairs_hook=pairs)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", None, exc.lineno, "a JSON object") from None
    if not isinstance(data, dict) or not all(isinstance(v, dict) for v in data.values()):
        raise ConfigError("top level must map section names to objects", None, 1,
                          '{"section": {"key": value}}')
    where = {}
    for s, body in data.items():
        where[(s, None)] = _json_line(text, s)
        for k in body:
            where[(s, k)] = _json_line(text, k)
    return data, where


def _json_line(text, key, occurrence=1):
    count = 0
    for n, line in enumerate(text.splitlines(), 1):
        count += line.count(f'"{key}"')
        if count >= occurrence:
            return n
    return None


def parse_config(text: str, kind: str | None = None) -> ExperimentConfig:
    """Validate configuration text and fill defaults.

    Args:
        text: INI or JSON text.
        kind: Run kind implied by the caller (e.g. the CLI subcommand). It
            must agree with ``[run] kind`` when both are present.

    Raises:
        ConfigError: Unknown section or key, duplicate key, missing or wrong
            unit, or a violated constraint; the message names key and line.
    """
    stripped = text.lstrip()
    raw, where = _read_json(text) if stripped.startswith("{") else _read_ini(text)
    run_kind = raw.get("run", {}).get("kind")
    if run_kind is not None:
        run_kind = str(run_kind).strip()
        if run_kind not in KINDS:
            raise ConfigError(f"unknown run kind {run_kind!r}", "run.kind",
                              where.get(("run", "kind")), " | ".join(KINDS))
    if kind is not None and run_kind is not None and kind != run_kind:
        raise ConfigError(f"run kind {run_kind!r} does not match {kind!r}", "run.kind",
                          where.get(("run", "kind")), kind)
    kind = kind or run_kind
    if kind is None:
        raise ConfigError("run kind not given", "run.kind", None, " | ".join(KINDS))
    allowed = SECTIONS_BY_KIND[kind]
    for s in raw:
        if s not in allowed:
            raise ConfigError(f"section [{s}] is not used by {kind} runs", s,
                              where.get((s, None)), ", ".join(allowed))
        for k in raw[s]:
            if k not in SCHEMA[s]:
                raise ConfigError(f"unknown key in [{s}]", f"{s}.{k}", where.get((s, k)),
                                  ", ".join(SCHEMA[s]))
    sections, defaulted = {}, []
    for s in allowed:
        body = {}
        for k in SCHEMA[s]:
            spec = _key_spec(kind, s, k)
            if k in raw.get(s, {}):
                body[k] = _convert(spec, raw[s][k], f"{s}.{k}", where.get((s, k)))
            elif s == "run" and k == "kind":
                body[k] = kind
            else:
                if spec.required:
                    raise ConfigError("required key missing", f"{s}.{k}", where.get((s, None)),
                                      f"a {spec.kind} value")
                body[k] = spec.default
                defaulted.append(f"{s}.{k}")
        sections[s] = body
    cfg = ExperimentConfig(kind, sections["run"]["seed"], sections, tuple(defaulted))
    _validate(cfg, where)
    return cfg


def _validate(cfg: ExperimentConfig, where):
    def fail(msg, s, k, expected):
        raise ConfigError(msg, f"{s}.{k}", where.get((s, k)), expected)

    if "sweep" in cfg.sections:
        sw = cfg.sections["sweep"]
        if sw["start"] == sw["stop"]:
            fail("sweep start equals stop", "sweep", "stop", "start != stop")
        if sw["spacing"] == "geometric" and min(sw["start"], sw["stop"]) <= 0:
            fail("geometric sweep needs positive endpoints", "sweep", "start", "> 0")
        if cfg.kind == "laser-model" and min(sw["start"], sw["stop"]) < 0:
            fail("laser density must be non-negative", "sweep", "start", ">= 0 mW/mm2")
    if "protocol" in cfg.sections:
        p = cfg.sections["protocol"]
        if p["mode"] == "evolve" and p["duration"] is None:
            fail("evolve protocol needs a duration", "protocol", "duration", "e.g. 10 ms")
    if "drive" in cfg.sections and cfg.sections["drive"]["rabi"] < 0:
        fail("rabi amplitude must be non-negative", "drive", "rabi", ">= 0 Hz")
    if cfg.kind == "multitone":
        mt = cfg.sections["multitone"]
        n = len(mt["tones"]) or 3
        try:
            subsets = parse_subsets(mt["subsets"], n)
        except ValueError as exc:
            fail(str(exc), "multitone", "subsets", "e.g. '1; 1,2; 1,2,3'")
        if not subsets:
            fail("no subsets", "multitone", "subsets", "e.g. '1; 1,2; 1,2,3'")
    if cfg.kind == "estimate":
        e, t = cfg.sections["estimate"], cfg.sections["thermometry"]
        has_e = e["s_hyper"] is not None or e["s_thermal"] is not None
        if has_e and (e["s_hyper"] is None or e["s_thermal"] is None):
            fail("s_hyper and s_thermal go together", "estimate", "s_thermal", "both integrals")
        if e["s_thermal"] == 0:
            fail("s_thermal must be nonzero", "estimate", "s_thermal", "a nonzero integral")
        pair = (t["f_minus"], t["f_plus"])
        if (pair[0] is None) != (pair[1] is None):
            fail("f_minus and f_plus go together", "thermometry", "f_plus", "both centres")
        if pair[0] is not None and not pair[1] > pair[0]:
            fail("f_plus must exceed f_minus", "thermometry", "f_plus", "f_plus > f_minus")


def parse_subsets(text: str, n_tones: int) -> tuple[tuple[int, ...], ...]:
    """``"1; 1,2; 1,2,3"`` -> zero-based index tuples. Empty text gives the
    cumulative subsets ``1``, ``1,2``, ... up to ``n_tones``."""
    if not text.strip():
        return tuple(tuple(range(k)) for k in range(1, n_tones + 1))
    out = []
    for part in text.split(";"):
        idx = tuple(int(i) - 1 for i in part.split(",") if i.strip())
        if not idx:
            raise ValueError("empty subset")
        if any(not 0 <= i < n_tones for i in idx):
            raise ValueError(f"tone index out of range 1..{n_tones}")
        out.append(idx)
    return tuple(out)


def load_config(path, kind: str | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), kind)


def default_config(kind: str, **sweep) -> ExperimentConfig:
    """Config with schema defaults and a stock sweep range per kind."""
    ranges = {
        "spectrum": ("2.362 GHz", "2.380 GHz"),
        "power-sweep": ("10 kHz", "2 MHz"),
        "laser-model": ("0 mW/mm2", "100 mW/mm2"),
    }
    lines = ["[run]", f"kind = {kind}"]
    if kind in ranges:
        start, stop = sweep.get("start", ranges[kind][0]), sweep.get("stop", ranges[kind][1])
        lines += ["[sweep]", f"start = {start}", f"stop = {stop}"]
    return parse_config("\n".join(lines) + "\n")


def with_overrides(cfg: ExperimentConfig, overrides: dict[str, Any]) -> ExperimentConfig:
    """Apply ``{"section.key": raw value}`` on top of ``cfg`` and revalidate.

    Raw values follow the file grammar (units required).
    """
    sections = {s: dict(body) for s, body in cfg.sections.items()}
    defaulted = set(cfg.defaulted)
    for name, raw in overrides.items():
        section, _, key = name.partition(".")
        if section not in sections:
            raise ConfigError(f"section [{section}] is not used by {cfg.kind} runs", name, None,
                              ", ".join(sections))
        if key not in SCHEMA[section] or name == "run.kind":
            raise ConfigError("unknown key", name, None, ", ".join(k for k in SCHEMA[section] if k != "kind"))
        sections[section][key] = _convert(_key_spec(cfg.kind, section, key), raw, name, None)
        defaulted.discard(name)
    out = ExperimentConfig(cfg.kind, sections["run"]["seed"], sections,
                           tuple(d for d in cfg.defaulted if d in defaulted))
    _validate(out, {})
    return out
