"""Uniform grids and grid-sampled scalar fields."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    origin: tuple
    h: float
    nx: int
    ny: int

    @property
    def xs(self):
        return self.origin[0] + self.h * np.arange(self.nx)

    @property
    def ys(self):
        return self.origin[1] + self.h * np.arange(self.ny)

    @property
    def shape(self):
        return (self.nx, self.ny)

    def points(self):
        """Node coordinates, shape (nx, ny, 2), index [i, j] <-> (x_i, y_j)."""
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def index_of(self, point):
        """Nearest node index (i, j)."""
        p = np.asarray(point, dtype=float)
        i = np.rint((p[..., 0] - self.origin[0]) / self.h).astype(int)
        j = np.rint((p[..., 1] - self.origin[1]) / self.h).astype(int)
        return np.clip(i, 0, self.nx - 1), np.clip(j, 0, self.ny - 1)


def make_grid(domain, h):
    """Grid aligned to multiples of ``h`` covering the bounding box plus one cell."""
    lo, hi = domain.bbox
    i0 = np.floor(lo / h + 1e-9).astype(int) - 1
    i1 = np.ceil(hi / h - 1e-9).astype(int) + 1
    return GridSpec((float(i0[0] * h), float(i0[1] * h)), float(h),
                    int(i1[0] - i0[0] + 1), int(i1[1] - i0[1] + 1))


@dataclass
class ScalarField:
    grid: GridSpec
    values: np.ndarray
    mask: np.ndarray

    def finite(self):
        return np.isfinite(self.values)

    def interpolate(self, points):
        return interpolate(self.grid, self.values, points)

    def masked_values(self):
        return self.values[self.mask]

    def summary(self):
        v = np.where(self.mask, self.values, np.nan)
        pts = self.grid.points()
        imin = np.unravel_index(np.nanargmin(v), v.shape)
        imax = np.unravel_index(np.nanargmax(v), v.shape)
        return {
            "min": float(v[imin]),
            "max": float(v[imax]),
            "argmin": [float(c) for c in pts[imin]],
            "argmax": [float(c) for c in pts[imax]],
            "mean": float(np.nanmean(v)),
            "nodes": int(self.mask.sum()),
        }


def interpolate(grid, values, points):
    """Bilinear interpolation that ignores non-finite corners.

    Weights of missing corners are dropped and the rest renormalised; a point
    with no finite corner gets NaN.
    """
    p = np.asarray(points, dtype=float)
    shape = p.shape[:-1]
    p = p.reshape(-1, 2)
    fx = (p[:, 0] - grid.origin[0]) / grid.h
    fy = (p[:, 1] - grid.origin[1]) / grid.h
    i0 = np.clip(np.floor(fx).astype(int), 0, grid.nx - 2)
    j0 = np.clip(np.floor(fy).astype(int), 0, grid.ny - 2)
    tx = np.clip(fx - i0, 0.0, 1.0)
    ty = np.clip(fy - j0, 0.0, 1.0)
    num = np.zeros(len(p))
    den = np.zeros(len(p))
    for di, dj, w in ((0, 0, (1 - tx) * (1 - ty)), (1, 0, tx * (1 - ty)),
                      (0, 1, (1 - tx) * ty), (1, 1, tx * ty)):
        v = values[i0 + di, j0 + dj]
        ok = np.isfinite(v)
        num += np.where(ok, w * np.where(ok, v, 0.0), 0.0)
        den += np.where(ok, w, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 1e-12, num / den, np.nan)
    # all available corners carry zero weight: fall back to their plain mean
    bad = ~(den > 1e-12)
    if np.any(bad):
        vals = np.stack([values[i0[bad] + di, j0[bad] + dj] for di in (0, 1) for dj in (0, 1)])
        with np.errstate(invalid="ignore"):
            cnt = np.isfinite(vals).sum(axis=0)
            out[bad] = np.where(cnt > 0, np.nansum(vals, axis=0) / np.maximum(cnt, 1), np.nan)
    return out.reshape(shape)


def gradient(values, h):
    """Central differences, one-sided next to missing nodes, NaN if isolated."""
    g = np.full(values.shape + (2,), np.nan)
    ok = np.isfinite(values)
    for axis in (0, 1):
        fwd = np.full(values.shape, np.nan)
        bwd = np.full(values.shape, np.nan)
        sl_hi = [slice(None)] * 2
        sl_lo = [slice(None)] * 2
        sl_hi[axis] = slice(1, None)
        sl_lo[axis] = slice(None, -1)
        diff = (values[tuple(sl_hi)] - values[tuple(sl_lo)]) / h
        fwd[tuple(sl_lo)] = diff
        bwd[tuple(sl_hi)] = diff
        cen = 0.5 * (fwd + bwd)
        comp = np.where(np.isfinite(cen), cen, np.where(np.isfinite(fwd), fwd, bwd))
        g[..., axis] = np.where(ok, comp, np.nan)
    return g


def one_sided_differences(values, h):
    """Forward and backward differences along x and y (NaN where undefined)."""
    out = {}
    for axis, name in ((0, "x"), (1, "y")):
        fwd = np.full(values.shape, np.nan)
        bwd = np.full(values.shape, np.nan)
        sl_hi = [slice(None)] * 2
        sl_lo = [slice(None)] * 2
        sl_hi[axis] = slice(1, None)
        sl_lo[axis] = slice(None, -1)
        diff = (values[tuple(sl_hi)] - values[tuple(sl_lo)]) / h
        fwd[tuple(sl_lo)] = diff
        bwd[tuple(sl_hi)] = diff
        out[name + "+"] = fwd
        out[name + "-"] = bwd
    return out


def write_csv(path, field, mask=None):
    """Rows ``x,y,value`` for every masked node, y-major, 17 significant digits."""
    mask = field.mask if mask is None else mask
    xs, ys = field.grid.xs, field.grid.ys
    lines = ["x,y,value"]
    for j in range(field.grid.ny):
        for i in np.nonzero(mask[:, j])[0]:
            lines.append(f"{xs[i]:.17g},{ys[j]:.17g},{field.values[i, j]:.17g}")
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :2], data[:, 2]
