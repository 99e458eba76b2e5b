"""Plain ``key = value`` config files with ``[sections]``.

Unknown sections and keys are rejected with a "did you mean" hint; every
value is validated through :class:`engine.SimConfig`.
"""

from __future__ import annotations

import configparser
import difflib
import inspect
from dataclasses import dataclass, field, fields

from .engine import CONFIG_KEYS, SimConfig
from .exceptions import ConfigurationError
from .initial_data import PRESETS, make_initial_spec

# "section.key" -> SimConfig field
FIELD_FOR_KEY = {v: k for k, v in CONFIG_KEYS.items()}
FIELD_FOR_KEY["time.dt_ref"] = "dt_ref"
FIELD_FOR_KEY["grid.h_ref"] = "h_ref"
SECTIONS = ("grid", "physics", "time", "initial", "solver", "output")


@dataclass
class InitialSection:
    preset: str = "uniform"
    params: dict = field(default_factory=dict)
    smooth_momentum: bool = True

    def spec(self, cfg: SimConfig):
        return make_initial_spec(self.preset, cfg.grid, cfg.vgrid, cfg.epsilon, self.smooth_momentum, **self.params)


def _suggest(word, options):
    close = difflib.get_close_matches(word, list(options), n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


def parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", ""):
        return None
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def _typed(name, value, key):
    """Coerce to the SimConfig field type."""
    ftype = {f.name: f.type for f in fields(SimConfig)}[name]
    if value is None:
        if "None" in str(ftype):
            return None
        raise ConfigurationError(f"{key} needs a value", key=key)
    try:
        if ftype == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if ftype == "bool":
            if not isinstance(value, bool):
                raise ValueError
            return value
        if isinstance(value, bool):
            raise ValueError
        return float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: cannot read {value!r} as {ftype}", key=key) from None


def parse_config(text: str, source="<config>"):
    """Return ``(SimConfig, InitialSection)`` from config text."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__", inline_comment_prefixes=(";", "#"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {source}: {exc}", key="config") from exc
    kw = {}
    init = InitialSection()
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigurationError(f"unknown section [{sec}]{_suggest(sec, SECTIONS)}", key=sec)
        for k, raw in cp.items(sec):
            key = f"{sec}.{k}"
            val = parse_value(raw)
            if sec == "initial":
                if k == "preset":
                    init.preset = str(val)
                elif k == "smooth_momentum":
                    if not isinstance(val, bool):
                        raise ConfigurationError(f"{key} must be true or false", key=key)
                    init.smooth_momentum = val
                else:
                    init.params[k] = val
                continue
            if key not in FIELD_FOR_KEY:
                raise ConfigurationError(f"unknown key {key}{_suggest(key, FIELD_FOR_KEY)}", key=key)
            name = FIELD_FOR_KEY[key]
            kw[name] = _typed(name, val, key)
    if init.preset not in PRESETS:
        raise ConfigurationError(
            f"unknown preset {init.preset!r}{_suggest(init.preset, PRESETS)}", key="initial.preset"
        )
    allowed = [p for p in inspect.signature(PRESETS[init.preset]).parameters if p not in ("grid", "vgrid")]
    for k in init.params:
        if k not in allowed:
            raise ConfigurationError(
                f"unknown parameter initial.{k} for preset {init.preset!r}{_suggest(k, allowed)}", key=f"initial.{k}"
            )
    cfg = SimConfig(**kw)
    return cfg, init


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}", key="config") from exc
    return parse_config(text, str(path))


def dump_config(cfg: SimConfig, init: InitialSection) -> str:
    """Config text that :func:`parse_config` reads back to the same objects."""
    out = {s: [] for s in SECTIONS}
    for f in fields(SimConfig):
        key = CONFIG_KEYS.get(f.name) or {"dt_ref": "time.dt_ref", "h_ref": "grid.h_ref"}[f.name]
        sec, k = key.split(".")
        v = getattr(cfg, f.name)
        out[sec].append(f"{k} = {'none' if v is None else repr(v) if isinstance(v, float) else v}")
    out["initial"].append(f"preset = {init.preset}")
    out["initial"].append(f"smooth_momentum = {init.smooth_momentum}")
    for k, v in init.params.items():
        out["initial"].append(f"{k} = {repr(v) if isinstance(v, float) else v}")
    return "\n".join(f"[{s}]\n" + "\n".join(lines) + "\n" for s, lines in out.items())
