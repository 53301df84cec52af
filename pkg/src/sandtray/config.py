"""Scenario configuration: JSON files, presets and validation."""

import copy
import json
import re
from dataclasses import dataclass, field

import numpy as np

from . import domain as dm
from .convex import body_from_spec
from .expr import ExpressionError, compile_expression, evaluate

CURVED_PRESETS = ("disk", "ellipse", "annulus-sector")
ALPHA_METHODS = ("divergence_exponential", "transverse_spacing")
TOLERANCE_KEYS = ("delta", "linearity", "sigma")

PRESETS = {
    "square-tray": {
        "domain": {"preset": "square"},
        "body": {"family": "euclidean_ball"},
        "datum": {"kind": "coordinate", "axis": "y"},
        "source": {"kind": "constant", "value": 1.0},
    },
    "hexagon-lens": {
        "domain": {"preset": "hexagon"},
        "body": {"family": "lens", "role": "polar"},
        "datum": {"kind": "constant", "value": 0.0},
        "source": {"kind": "constant", "value": 1.0},
    },
    "annulus-sector": {
        "domain": {"preset": "annulus-sector", "r_in": 1.0, "r_out": 2.0, "eps": 0.5},
        "body": {"family": "euclidean_ball"},
        "datum": {"kind": "angle", "cut": -np.pi},
        "source": {"kind": "constant", "value": 1.0},
    },
    "ellipse-foci": {
        "domain": {"preset": "ellipse", "a": 2.0, "b": 1.0},
        "body": {"family": "euclidean_ball"},
        "datum": {"kind": "constant", "value": 0.0},
        "source": {"kind": "constant", "value": 1.0},
    },
    "disk-homogeneous": {
        "domain": {"preset": "disk", "radius": 1.0},
        "body": {"family": "euclidean_ball"},
        "datum": {"kind": "constant", "value": 0.0},
        "source": {"kind": "constant", "value": 1.0},
    },
    "l-shape": {
        "domain": {"preset": "l-shape"},
        "body": {"family": "euclidean_ball"},
        "datum": {"kind": "constant", "value": 0.0},
        "source": {"kind": "constant", "value": 1.0},
    },
}

DEFAULTS = {
    "name": "scenario",
    "resolution": 128,
    "samples": 720,
    "alpha_method": "divergence_exponential",
    "tolerances": {},
    "witness": True,
    "output": "out",
}


class ConfigError(ValueError):
    """A configuration problem, with the offending field and line when known."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class ScenarioConfig:
    name: str
    domain: dict
    body: dict
    datum: dict
    source: dict
    resolution: int = 128
    samples: int = 720
    alpha_method: str = "divergence_exponential"
    tolerances: dict = field(default_factory=dict)
    witness: bool = True
    output: str = "out"
    preset: str = None

    @property
    def h(self):
        return 1.0 / self.resolution

    def to_dict(self):
        """Effective configuration: presets expanded, defaults filled."""
        return {
            "name": self.name,
            "domain": copy.deepcopy(self.domain),
            "body": copy.deepcopy(self.body),
            "datum": copy.deepcopy(self.datum),
            "source": copy.deepcopy(self.source),
            "resolution": int(self.resolution),
            "samples": int(self.samples),
            "alpha_method": self.alpha_method,
            "tolerances": dict(self.tolerances),
            "witness": bool(self.witness),
            "output": self.output,
        }

    def build_domain(self):
        spec = dict(self.domain)
        if spec.get("preset") in CURVED_PRESETS and "segments" not in spec:
            spec["segments"] = _curved_segments(spec["preset"], self.samples)
        return dm.domain_from_spec(spec)

    def build_body(self):
        return body_from_spec(self.body)

    def datum_function(self):
        return datum_function(self.datum)

    def source_function(self):
        return source_function(self.source)


def _curved_segments(kind, samples):
    # the disk and ellipse are polygonised at the sample resolution, each
    # vertex a sample; the annulus arcs, which only carry the datum test, coarser
    if kind == "annulus-sector":
        return max(8, samples // 6)
    return max(16, samples)


def _line_of(text, key):
    if text is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def datum_function(spec):
    """``phi(points, arc)`` for a datum spec."""
    kind = spec.get("kind")
    if kind == "constant":
        c = float(spec.get("value", 0.0))
        return lambda p, s: np.full(len(p), c)
    if kind == "coordinate":
        axis = {"x": 0, "y": 1}[spec.get("axis", "y")]
        scale = float(spec.get("scale", 1.0))
        offset = float(spec.get("offset", 0.0))
        return lambda p, s: scale * np.asarray(p)[:, axis] + offset
    if kind == "angle":
        cut = float(spec.get("cut", -np.pi))
        scale = float(spec.get("scale", 1.0))
        return lambda p, s: scale * evaluate(compile_expression("theta"), p, s, cut)
    if kind == "piecewise":
        table = np.asarray(spec["table"], dtype=float)
        return lambda p, s: np.interp(s, table[:, 0], table[:, 1])
    if kind == "expr":
        fn = compile_expression(spec["expr"])
        cut = float(spec.get("cut", -np.pi))
        return lambda p, s: evaluate(fn, p, s, cut)
    raise ValueError(f"unknown datum kind {kind!r}")


def source_function(spec):
    """``f(points)`` for a source spec; points have shape (..., 2)."""
    kind = spec.get("kind")
    if kind == "constant":
        c = float(spec.get("value", 1.0))
        return lambda p: np.full(np.shape(p)[:-1], c)
    if kind == "expr":
        fn = compile_expression(spec["expr"])
        return lambda p: evaluate(fn, p)
    if kind == "indicator":
        value = float(spec.get("value", 1.0))
        if "box" in spec:
            x0, y0, x1, y1 = map(float, spec["box"])
            return lambda p: value * ((p[..., 0] >= x0) & (p[..., 0] <= x1)
                                      & (p[..., 1] >= y0) & (p[..., 1] <= y1))
        if "annulus" in spec:
            r0, r1 = map(float, spec["annulus"])
            c = np.asarray(spec.get("center", (0.0, 0.0)), dtype=float)

            def ind(p):
                r = np.hypot(p[..., 0] - c[0], p[..., 1] - c[1])
                return value * ((r >= r0) & (r <= r1))
            return ind
        if "polygon" in spec:
            region = dm.PolygonalDomain(spec["polygon"], name="source")
            return lambda p: value * (region.classify(np.reshape(p, (-1, 2)))
                                      != dm.OUTSIDE).reshape(np.shape(p)[:-1])
        raise ValueError("indicator needs one of box, annulus, polygon")
    raise ValueError(f"unknown source kind {kind!r}")


def from_dict(data, text=None):
    """Build and validate a :class:`ScenarioConfig` from a parsed mapping."""
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", line=1 if text else None)
    unknown = set(data) - set(DEFAULTS) - {"preset", "domain", "body", "datum", "source"}
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError("unknown key", field=k, line=_line_of(text, k))
    merged = copy.deepcopy(DEFAULTS)
    preset = data.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}", field="preset",
                              line=_line_of(text, "preset"))
        merged = _merge(merged, PRESETS[preset])
        merged["name"] = preset
    merged = _merge(merged, {k: v for k, v in data.items() if k != "preset"})
    for key in ("domain", "body", "datum", "source"):
        if not isinstance(merged.get(key), dict):
            raise ConfigError("missing or not an object", field=key, line=_line_of(text, key))
    cfg = ScenarioConfig(
        name=str(merged["name"]), domain=merged["domain"], body=merged["body"],
        datum=merged["datum"], source=merged["source"], resolution=merged["resolution"],
        samples=merged["samples"], alpha_method=merged["alpha_method"],
        tolerances=merged["tolerances"], witness=merged["witness"],
        output=merged["output"], preset=preset)
    validate(cfg, text)
    return cfg


def validate(cfg, text=None):
    """Check the config invariants; raises :class:`ConfigError`."""
    def fail(msg, key):
        raise ConfigError(msg, field=key, line=_line_of(text, key.split(".")[-1]))

    if not isinstance(cfg.resolution, int) or isinstance(cfg.resolution, bool) \
            or cfg.resolution < 16:
        fail(f"resolution must be an integer >= 16, got {cfg.resolution!r}", "resolution")
    if not isinstance(cfg.samples, int) or isinstance(cfg.samples, bool) or cfg.samples < 4:
        fail(f"samples must be a positive integer, got {cfg.samples!r}", "samples")
    if cfg.alpha_method not in ALPHA_METHODS:
        fail(f"alpha_method must be one of {ALPHA_METHODS}", "alpha_method")
    if not isinstance(cfg.tolerances, dict):
        fail("tolerances must be an object", "tolerances")
    for k, v in cfg.tolerances.items():
        if k not in TOLERANCE_KEYS:
            fail(f"unknown tolerance {k!r}, expected one of {TOLERANCE_KEYS}", "tolerances")
        if not isinstance(v, (int, float)) or v <= 0:
            fail(f"tolerance {k!r} must be a positive number", "tolerances")
    try:
        domain = cfg.build_domain()
    except (ValueError, KeyError, TypeError) as exc:
        fail(f"invalid domain: {exc}", "domain")
    if cfg.domain.get("preset") not in CURVED_PRESETS:
        nverts = len(domain.edge_start)
        if cfg.samples < 4 * nverts:
            fail(f"samples {cfg.samples} below 4x the polygon vertex count {nverts}", "samples")
    try:
        cfg.build_body()
    except (ValueError, KeyError, TypeError) as exc:
        fail(f"invalid body: {exc}", "body")
    try:
        phi = cfg.datum_function()
        phi(domain.vertices[:2], np.zeros(2))
    except (ValueError, KeyError, TypeError, ExpressionError) as exc:
        fail(f"invalid datum: {exc}", "datum")
    try:
        src = cfg.source_function()
        np.asarray(src(np.zeros((2, 2))), dtype=float)
    except (ValueError, KeyError, TypeError, ExpressionError) as exc:
        fail(f"invalid source: {exc}", "source")
    return cfg


def load(path, overrides=None):
    """Read a JSON config file; ``overrides`` entries replace top-level keys."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return loads(text, overrides)


def loads(text, overrides=None):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from None
    if overrides:
        if not isinstance(data, dict):
            raise ConfigError("top level must be an object", line=1)
        data = _merge(data, {k: v for k, v in overrides.items() if v is not None})
    return from_dict(data, text)


def preset_config(name, **overrides):
    """The config of a named preset, optionally overriding top-level keys."""
    data = {"preset": name}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return from_dict(data)
