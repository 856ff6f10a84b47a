"""Strict sectioned key-value configuration.

Files look like::

    [evolution]
    t_total = 1.0
    steps = 64

Arrays are comma-separated. Every key must be declared in the schema of the
chosen scenario kind; unknown sections or keys are rejected before any
computation starts.
"""
import configparser
import re

from .errors import ConfigError

KINDS = (
    "dynsys",
    "quantum",
    "liouville",
    "verify-bch",
    "verify-kernel",
    "convergence-trotter",
    "convergence-commutator",
)

REQUIRED = object()


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _optional(conv):
    def parse(text):
        return None if text.strip() in ("", "none") else conv(text)
    return parse


TYPES = {
    "float": float,
    "int": int,
    "str": str.strip,
    "bool": _bool,
    "floats": _floats,
    "ints": _ints,
    "float?": _optional(float),
    "int?": _optional(int),
    "floats?": _optional(_floats),
    "ints?": _optional(_ints),
}

_GRID = {
    "bits": ("ints", REQUIRED),
    "lower": ("floats", [-10.0]),
    "upper": ("floats", [10.0]),
    "hbar": ("float", 1.0),
}
_POTENTIAL = {
    "kind": ("str", "free"),
    "omega": ("float", 1.0),
    "lambda": ("float", 1.0),
    "file": ("str", ""),
}
_QSTATE = {
    "kind": ("str", "gaussian"),
    "x0": ("floats", [0.0]),
    "p0": ("floats", [0.0]),
    "sigma": ("floats", [1.0]),
    "n": ("int", 0),
}
_FLOW = {
    "kind": ("str", REQUIRED),
    "c": ("floats", [1.0, 0.0]),
    "hamiltonian": ("str", "harmonic"),
    "files": ("str", ""),
}

SCHEMAS = {
    "dynsys": {
        "map": {"name": ("str", "identity"), "theta": ("float", 1.5707963267948966), "dim": ("int", 2)},
        "run": {
            "mode": ("str", "discrete"),
            "steps": ("int", REQUIRED),
            "s0": ("floats", []),
            "l0": ("floats", []),
            "tangent0": ("floats", []),
            "random_initial": ("bool", False),
            "precision": ("int?", None),
            "pairing_tolerance": ("float?", None),
        },
        "continuum": {
            "flow": ("str", "harmonic"),
            "c": ("floats", [1.0, 0.0]),
            "x0": ("floats", [1.0, 0.0]),
            "p0": ("floats", [0.0, 1.0]),
            "t_final": ("float", 10.0),
            "dt_sweep": ("floats", [0.1, 0.05, 0.025, 0.0125]),
            "expected_slope": ("float?", None),
            "tolerance": ("float", 0.3),
        },
    },
    "quantum": {
        "grid": _GRID,
        "potential": _POTENTIAL,
        "state": _QSTATE,
        "evolution": {
            "t_total": ("float", REQUIRED),
            "steps": ("int", REQUIRED),
            "mass": ("float", 1.0),
            "record_every": ("int", 1),
        },
        "oracle": {"enabled": ("bool", True)},
    },
    "liouville": {
        "grid": _GRID,
        "flow": _FLOW,
        "state": _QSTATE,
        "evolution": {
            "t_total": ("float", REQUIRED),
            "steps": ("int", REQUIRED),
            "sign": ("int", 1),
            "record_every": ("int", 1),
        },
        "oracle": {"enabled": ("bool", True), "substeps": ("int", 1024)},
    },
    "verify-bch": {
        "matrices": {"size": ("int", 4), "pairs": ("int", 1)},
        "sweep": {
            "eps_top": ("float", 0.1),
            "eps_points": ("int", 5),
            "expected": ("float", 3.0),
            "tolerance": ("float", 0.2),
        },
    },
    "verify-kernel": {
        "kernel": {
            "hbar": ("float", 1.0),
            "real_a": ("floats", [0.05, 0.5, 2.0]),
            "t": ("float", 1.0),
            "mass": ("float", 1.0),
            "steps": ("int", 50),
            "damping": ("float", 1e-6),
            "tolerance": ("float", 1e-6),
        },
    },
    "convergence-trotter": {
        "grid": _GRID,
        "potential": _POTENTIAL,
        "state": _QSTATE,
        "evolution": {"t_total": ("float", REQUIRED), "mass": ("float", 1.0)},
        "sweep": {
            "steps": ("ints", REQUIRED),
            "expected": ("float?", -1.0),
            "tolerance": ("float", 0.15),
            "taus": ("floats?", None),
            "single_expected": ("float?", 2.0),
            "single_tolerance": ("float", 0.2),
        },
    },
    "convergence-commutator": {
        "grid": _GRID,
        "flow": _FLOW,
        "state": _QSTATE,
        "evolution": {"t_total": ("float", REQUIRED), "sign": ("int", 1)},
        "sweep": {
            "steps": ("ints?", None),
            "taus": ("floats?", None),
            "single_expected": ("float?", 3.0),
            "single_tolerance": ("float", 0.3),
            "global_expected": ("float?", None),
            "global_tolerance": ("float", 0.1),
        },
    },
}


def _line_of(text, section, key=None):
    if text is None:
        return None
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"\[(.+)\]$", stripped)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if key is not None and current == section:
            if re.match(rf"{re.escape(key)}\s*[=:]", stripped):
                return lineno
    return None


def _where(text, section, key=None):
    line = _line_of(text, section, key)
    return f" (line {line})" if line else ""


def parse_text(text):
    """Raw ``{section: {key: value}}`` from config text."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"config syntax error: {err}") from err
    return {s: dict(parser.items(s)) for s in parser.sections()}


def apply_overrides(raw, overrides):
    """``section.key=value`` strings layered over ``raw``."""
    out = {s: dict(kv) for s, kv in raw.items()}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        if "." not in lhs:
            raise ConfigError(f"--set key must be section.key, got {lhs!r}")
        section, key = lhs.strip().split(".", 1)
        out.setdefault(section, {})[key.strip()] = value.strip()
    return out


def validate(kind, raw, text=None):
    """Typed config for ``kind``; raises :class:`ConfigError` on any problem."""
    if kind not in SCHEMAS:
        raise ConfigError(f"unknown scenario kind {kind!r}; choose from {', '.join(KINDS)}")
    schema = SCHEMAS[kind]
    for section, values in raw.items():
        if section not in schema:
            raise ConfigError(f"unknown section [{section}]{_where(text, section)} for kind {kind}")
        for key in values:
            if key not in schema[section]:
                raise ConfigError(
                    f"unknown key {section}.{key}{_where(text, section, key)} for kind {kind}"
                )
    typed = {}
    for section, keys in schema.items():
        typed[section] = {}
        for key, (type_name, default) in keys.items():
            if key in raw.get(section, {}):
                text_value = raw[section][key]
                try:
                    typed[section][key] = TYPES[type_name](text_value)
                except ValueError as err:
                    raise ConfigError(
                        f"bad value for {section}.{key}{_where(text, section, key)}: {err}"
                    ) from err
            elif default is REQUIRED:
                raise ConfigError(f"missing required key {section}.{key}")
            else:
                typed[section][key] = list(default) if isinstance(default, list) else default
    return typed


def load(kind, text=None, overrides=None, base=None):
    """Parse ``text`` (or start from ``base`` raw values), apply overrides, validate."""
    raw = parse_text(text) if text is not None else {s: dict(kv) for s, kv in (base or {}).items()}
    raw = apply_overrides(raw, overrides)
    return validate(kind, raw, text), raw


def render(raw):
    """Config text for raw values (used for the built-in scenario defaults)."""
    lines = []
    for section, values in raw.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in values.items())
        lines.append("")
    return "\n".join(lines)
