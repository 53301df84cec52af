"""Artifact files: CSV fields, sorted-key JSON and a deterministic SVG scene."""

import json
import math
import os

import numpy as np

from .grid import write_csv

FIELD_FILES = ("uphi.csv", "uf.csv", "vf.csv", "div_theta.csv")
_WIDTH = 800.0
_MAX_BLOCKS = 120
_MAX_RAYS = 400
_MAX_MARKS = 2000
_RAMP = ((0.97, 0.98, 1.0), (0.03, 0.19, 0.42))


def jsonable(obj):
    """Plain JSON types; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dumps(obj):
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False,
                      allow_nan=False) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def singular_sets_document(res):
    doc = res.sets.to_dict()
    r = res.rays
    doc["rays"] = {
        "inside_nodes": int(r.mask.sum()),
        "regular_nodes": int(r.regular.sum()),
        "reaching_boundary": int((r.reaches_boundary & r.mask).sum()),
        "linearity_tolerance": float(r.tol),
    }
    return doc


def _field_summary(f):
    return None if f is None else f.summary()


def diagnosis_document(res):
    """Everything scalar about a run, with the effective config echoed."""
    doc = {
        "config": res.config.to_dict(),
        "status": int(res.status),
        "flags": list(res.flags),
        "datum": res.datum_report.to_dict(),
        "equivalence_constants": {"c1": res.constants[0], "c2": res.constants[1]},
        "domain": res.domain.describe(),
        "body": res.body.describe(),
        "samples": {"count": len(res.samples), "spacing": res.samples.spacing},
    }
    if res.uphi is not None:
        doc["grid"] = {"origin": list(res.uphi.grid.origin), "h": res.uphi.grid.h,
                       "nx": res.uphi.grid.nx, "ny": res.uphi.grid.ny}
        doc["fields"] = {"uphi": _field_summary(res.uphi), "uf": _field_summary(res.uf),
                         "vf": _field_summary(res.transport.v) if res.transport else None}
        doc["xphi"] = res.xphi.to_dict()
    if res.diagnosis is not None:
        doc["diagnosis"] = res.diagnosis.to_dict()
        if res.witness is not None:
            doc["witness"] = {"residuals": [float(x) for x in res.witness.residuals],
                              "combined": res.witness.combined.summary()}
    return doc


def _color(t):
    t = min(max(t, 0.0), 1.0)
    c = [round(255 * (a + t * (b - a))) for a, b in zip(*_RAMP)]
    return "#%02x%02x%02x" % tuple(c)


def render_svg(res):
    """Deterministic SVG: v_f shading, T hatching, rays, Sigma/D/J marks, outline."""
    domain, grid = res.domain, res.uphi.grid
    lo, hi = domain.bbox
    span = max(hi[0] - lo[0], hi[1] - lo[1])
    pad = 0.05 * span
    scale = _WIDTH / (hi[0] - lo[0] + 2 * pad)
    height = (hi[1] - lo[1] + 2 * pad) * scale
    legend_h = 50.0

    def X(x):
        return f"{(x - lo[0] + pad) * scale:.2f}"

    def Y(y):
        return f"{(hi[1] + pad - y) * scale:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH:.0f}" '
           f'height="{height + legend_h:.0f}" viewBox="0 0 {_WIDTH:.0f} {height + legend_h:.0f}">',
           '<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" '
           'patternTransform="rotate(45)"><line x1="0" y1="0" x2="0" y2="6" '
           'stroke="#c0392b" stroke-width="1.2"/></pattern></defs>',
           f'<rect id="background" x="0" y="0" width="{_WIDTH:.0f}" '
           f'height="{height + legend_h:.0f}" fill="#ffffff"/>']

    v = res.transport.v
    vals = np.where(v.mask, v.values, np.nan)
    vmax = float(np.nanmax(vals)) if np.any(np.isfinite(vals)) else 1.0
    vmin = float(np.nanmin(vals)) if np.any(np.isfinite(vals)) else 0.0
    rng = vmax - vmin if vmax > vmin else 1.0
    k = max(1, int(math.ceil(max(grid.nx, grid.ny) / _MAX_BLOCKS)))
    size = k * grid.h
    shade, hatch = ['<g id="vf-shading" stroke="none">'], ['<g id="t-hatching" stroke="none">']
    for bi in range(0, grid.nx, k):
        for bj in range(0, grid.ny, k):
            block = vals[bi:bi + k, bj:bj + k]
            x0 = grid.xs[bi] - 0.5 * grid.h
            y1 = grid.ys[bj] - 0.5 * grid.h + size
            rect = (f'x="{X(x0)}" y="{Y(y1)}" width="{size * scale:.2f}" '
                    f'height="{size * scale:.2f}"')
            if np.any(np.isfinite(block)):
                t = (float(np.nanmean(block)) - vmin) / rng
                shade.append(f'<rect {rect} fill="{_color(t)}"/>')
            if np.any(res.sets.t_mask[bi:bi + k, bj:bj + k]):
                hatch.append(f'<rect {rect} fill="url(#hatch)"/>')
    out += shade + ["</g>"] + hatch + ["</g>"]

    r = res.rays
    idx = np.flatnonzero(r.regular)
    stride = max(1, int(math.ceil(len(idx) / _MAX_RAYS)))
    pts = grid.points().reshape(-1, 2)
    out.append('<g id="rays" stroke="#555555" stroke-width="0.6" stroke-opacity="0.7">')
    for n in idx[::stride]:
        p, q = pts[n], r.endpoint.reshape(-1, 2)[n]
        out.append(f'<line x1="{X(p[0])}" y1="{Y(p[1])}" x2="{X(q[0])}" y2="{Y(q[1])}"/>')
    out.append("</g>")

    def marks(gid, points, color, radius):
        points = np.asarray(points).reshape(-1, 2)
        stride = max(1, int(math.ceil(len(points) / _MAX_MARKS)))
        out.append(f'<g id="{gid}" fill="{color}" stroke="none">')
        for p in points[::stride]:
            out.append(f'<circle cx="{X(p[0])}" cy="{Y(p[1])}" r="{radius}"/>')
        out.append("</g>")

    marks("sigma", pts[res.sets.sigma_mask.ravel()], "#7f8c8d", 1.2)
    marks("d-set", pts[res.sets.d_mask.ravel()], "#e67e22", 1.8)
    marks("j-set", res.sets.j_points, "#2980b9", 2.5)

    out.append('<g id="domain-outline" fill="none" stroke="#000000" stroke-width="1.5">')
    for li, loop in enumerate(domain.loops):
        d = " ".join(f"{'M' if i == 0 else 'L'}{X(p[0])},{Y(p[1])}" for i, p in enumerate(loop))
        out.append(f'<path id="loop-{li}" d="{d} Z"/>')
    out.append("</g>")

    out.append('<g id="legend" font-family="sans-serif" font-size="11">')
    steps = 20
    bar_w = 240.0 / steps
    for s in range(steps):
        out.append(f'<rect x="{20 + s * bar_w:.2f}" y="{height + 12:.2f}" width="{bar_w:.2f}" '
                   f'height="12" fill="{_color(s / (steps - 1))}"/>')
    out.append(f'<text x="20" y="{height + 40:.2f}">{vmin:.3g}</text>')
    out.append(f'<text x="260" y="{height + 40:.2f}" text-anchor="end">{vmax:.3g}</text>')
    out.append(f'<text x="280" y="{height + 22:.2f}">v_f; hatched: T; grey: Sigma; '
               f'orange: D; blue: J</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_fields(res, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    mask = res.uphi.mask
    write_csv(os.path.join(out_dir, "uphi.csv"), res.uphi, mask)
    write_csv(os.path.join(out_dir, "uf.csv"), res.uf, mask)
    write_csv(os.path.join(out_dir, "vf.csv"), res.transport.v, mask)
    write_csv(os.path.join(out_dir, "div_theta.csv"), res.transport.div_theta, mask)
    write_json(os.path.join(out_dir, "singular_sets.json"), singular_sets_document(res))


def write_all(res, out_dir, stage="render"):
    """Write the artifact files for the stages that ran; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if res.uphi is not None:
        write_fields(res, out_dir)
        written += list(FIELD_FILES) + ["singular_sets.json"]
    write_json(os.path.join(out_dir, "diagnosis.json"), diagnosis_document(res))
    written.append("diagnosis.json")
    if stage == "render" and res.transport is not None:
        with open(os.path.join(out_dir, "scene.svg"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(render_svg(res))
        written.append("scene.svg")
    return [os.path.join(out_dir, w) for w in written]
