"""Run configuration: flat ``key = value`` text with dotted section prefixes.

A ``[section]`` header line prefixes the keys that follow it, so these two
forms are equivalent::

    solver.tol = 1e-4

    [solver]
    tol = 1e-4
"""
from __future__ import annotations

import json

SCENARIOS = ("sinker", "rotating-slab")

# key -> (type, default); ``None`` default marks a required key
SCHEMA = {
    "scenario": (str, None),
    "seed": (int, 0),
    "grid.nx": (int, None),
    "grid.ny": (int, None),
    "grid.xsize": (float, 1e5),
    "grid.ysize": (float, 1e5),
    "physics.eta_host": (float, 1e18),
    "physics.eta_inclusion": (float, 1e26),
    "physics.rho_host": (float, 3200.0),
    "physics.rho_inclusion": (float, 3300.0),
    "physics.g_y": (float, 10.0),
    "physics.radius": (float, 2e4),
    "scaling.t0": (float, 1.0),
    "scaling.x0": (float, 1e5),
    "scaling.eta0": (float, 1e18),
    "solver.omega_p": (float, 0.6),
    "solver.max_cycles": (int, 500),
    "solver.tol": (float, 1e-4),
    "solver.vcycles": (int, 1),
    "solver.levels": (int, 4),
    "solver.factor": (str, "2.5"),
    "solver.schedule": (str, "0:0,0.25:25,0.5:50,0.75:75,1:100"),
    "solver.log_every": (int, 1),
    "solver.init": (str, "lithostatic"),
    "solver.accel": (str, "none"),
    "solver.accel_m": (int, 10),
    "solver.accel_beta": (float, 1.0),
    "smoother.kind": (str, "jacobi"),
    "smoother.omega_v": (float, 0.3),
    "smoother.pre": (int, 5),
    "smoother.post": (int, 5),
    "smoother.growth": (float, 2.5),
    "smoother.ras_tile": (str, "32x32"),
    "smoother.ras_inner": (int, 4),
    "smoother.ras_overlap": (int, 2),
    "markers.per_cell": (int, 4),
    "markers.jitter": (float, 0.0),
    "slab.omega": (float, 1.0),
    "slab.width": (float, 0.6),
    "slab.height": (float, 0.2),
    "slab.eta_slab": (float, 1e3),
    "slab.eta_host": (float, 1.0),
    "advect.integrator": (str, "euler"),
    "advect.steps": (int, 1),
    "advect.cfl": (float, 0.5),
    "advect.max_dt": (float, float("inf")),
    "distributed.px": (int, 1),
    "distributed.py": (int, 1),
    "distributed.periodic": (bool, False),
    "output.dir": (str, "out"),
    "output.snapshot_every": (int, 0),
    "output.markers": (str, "none"),
}


class ConfigError(ValueError):
    """Malformed or incomplete run configuration."""


def _convert(key, typ, raw, where):
    try:
        if typ is bool:
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            f = float(raw)
            if f != int(f):
                raise ValueError(raw)
            return int(f)
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: {key} expects {typ.__name__}, got {raw!r}") from None


def _strip(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def parse_text(text: str, source: str = "<config>") -> dict:
    """Raw ``{key: (value, line)}`` entries from config text."""
    out = {}
    prefix = ""
    for n, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if s.startswith("[") and s.endswith("]"):
            prefix = s[1:-1].strip()
            if prefix:
                prefix += "."
            continue
        if "=" not in s:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {line.strip()!r}")
        k, v = s.split("=", 1)
        key = prefix + k.strip()
        if not k.strip():
            raise ConfigError(f"{source}:{n}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{n}: duplicate key {key}")
        out[key] = (_strip(v), f"{source}:{n}")
    return out


def build_config(raw: dict, overrides: list[str] | None = None) -> dict:
    raw = dict(raw)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = (_strip(v), "--set")
    cfg = {}
    for key, (value, where) in raw.items():
        if key not in SCHEMA:
            raise ConfigError(f"{where}: unknown key {key}")
        cfg[key] = _convert(key, SCHEMA[key][0], value, where)
    for key, (typ, default) in SCHEMA.items():
        if key not in cfg:
            if default is None:
                raise ConfigError(f"missing required field {key}")
            cfg[key] = default
    if cfg["scenario"] not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {SCENARIOS}, got {cfg['scenario']!r}")
    for key in ("grid.nx", "grid.ny"):
        if cfg[key] < 2:
            raise ConfigError(f"{key} must be >= 2, got {cfg[key]}")
    parse_schedule(cfg["solver.schedule"])
    parse_tile(cfg["smoother.ras_tile"])
    return cfg


def load_config(path, overrides=None) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return build_config(parse_text(text, str(path)), overrides)


def parse_schedule(text: str):
    try:
        pairs = [item.split(":") for item in text.split(",") if item.strip()]
        return tuple((float(t), int(c)) for t, c in pairs)
    except ValueError:
        raise ConfigError(f"solver.schedule: expected 'theta:cycle,...', got {text!r}") from None


def parse_tile(text: str):
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise ConfigError(f"smoother.ras_tile: expected 'IxJ', got {text!r}") from None


def to_json(cfg: dict) -> str:
    """Nested JSON mirror of a flat configuration."""
    tree: dict = {}
    for key in sorted(cfg):
        node = tree
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        v = cfg[key]
        node[parts[-1]] = v if not (isinstance(v, float) and v == float("inf")) else "inf"
    return json.dumps(tree, indent=2, sort_keys=True)


def to_text(cfg: dict) -> str:
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))
