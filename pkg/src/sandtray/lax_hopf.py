"""Lax-Hopf extensions of a boundary datum on a grid.

``u_phi(x) = min { phi(y) + rho0(x - y) : y visible from x }`` is the largest
function with ``u = phi`` on the boundary and ``Du`` in ``K``.  The reverse
field ``w_phi`` is the same construction for the reversed body and datum
``-phi``, and ``u_f`` is the smallest admissible extension that agrees with
``u_phi`` on the support of the source.
"""

from dataclasses import dataclass, asdict

import numpy as np

from . import domain as dm
from .convex import equivalence_constants, gauge, polar_gauge
from .grid import ScalarField, gradient, make_grid

_CHUNK = 1_500_000
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class NoVisibleBoundary(RuntimeError):
    """A node sees no boundary sample (masking or polygonisation problem)."""


@dataclass
class LaxHopfField(ScalarField):
    """A Lax-Hopf field with its minimiser data.

    ``argmin`` holds the best sample index per node (-1 where not computed),
    ``foot`` the refined minimising boundary point.  The near set of node
    ``nodes[r]`` is ``near_indices[near_indptr[r]:near_indptr[r + 1]]`` with
    Lax-Hopf values ``near_values`` over the same range.
    """

    argmin: np.ndarray = None
    foot: np.ndarray = None
    nodes: np.ndarray = None
    near_indptr: np.ndarray = None
    near_indices: np.ndarray = None
    near_values: np.ndarray = None
    delta: float = 0.0

    def near_set(self, i, j):
        """Sample indices and values within ``delta`` of the minimum at node (i, j)."""
        flat = np.ravel_multi_index((i, j), self.grid.shape)
        r = np.searchsorted(self.nodes, flat)
        if r >= len(self.nodes) or self.nodes[r] != flat:
            return np.empty(0, dtype=int), np.empty(0)
        a, b = self.near_indptr[r], self.near_indptr[r + 1]
        return self.near_indices[a:b], self.near_values[a:b]


def _golden_min(fun, n, iters=48):
    """Vectorised golden-section minimisation of convex ``fun(t)`` on [0, 1]."""
    a = np.zeros(n)
    b = np.ones(n)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        d_new = np.where(left, c, a + _GOLDEN * (b - a))
        c_new = np.where(left, b - _GOLDEN * (b - a), d)
        fc_new = np.where(left, fun(c_new), fd)
        fd_new = np.where(left, fc, fun(d_new))
        c, d, fc, fd = c_new, d_new, fc_new, fd_new
    t = 0.5 * (a + b)
    return t, fun(t)


def _refine(body, x, src, vals, k, other):
    """Minimise along the boundary piece [src[k], src[other]] with linear datum."""
    p0, p1 = src[k], src[other]
    v0, v1 = vals[k], vals[other]

    def fun(t):
        y = p0 + t[:, None] * (p1 - p0)
        return v0 + t * (v1 - v0) + polar_gauge(body, x - y)

    t, f = _golden_min(fun, len(x))
    return t, f, p0 + t[:, None] * (p1 - p0)


def lax_hopf_min(domain, body, src, vals, x, buckets=None, delta=None, pieces=None,
                 convex_sources=False):
    """Lax-Hopf minimum over visible sources for interior targets ``x``.

    Returns ``(value, argmin, foot, near)`` where ``near`` is ``None`` or a
    CSR triple ``(indptr, indices, values)``.  ``pieces`` is an optional pair
    of index arrays (previous, next) along the boundary loops; the minimum is
    then refined along every visible piece whose cost bound undercuts the
    best sample, with the datum linear on each piece.
    """
    x = np.ascontiguousarray(np.asarray(x, dtype=float).reshape(-1, 2))
    src = np.ascontiguousarray(np.asarray(src, dtype=float).reshape(-1, 2))
    vals = np.asarray(vals, dtype=float)
    n, m = len(x), len(src)
    if not domain.is_convex and buckets is None:
        buckets = dm.source_buckets(domain, src)
    labels = np.full(n, dm.INSIDE, dtype=np.int8)
    value = np.empty(n)
    arg = np.empty(n, dtype=np.int64)
    foot = np.empty((n, 2))
    near_idx, near_val, near_cnt = [], [], []
    if pieces is not None:
        nxt = np.asarray(pieces[1])
        seg = src[nxt] - src
        c2 = equivalence_constants(body)[1] * 1.01
        lip = np.abs(vals[nxt] - vals) + c2 * np.hypot(seg[:, 0], seg[:, 1])
        lip[nxt == np.arange(m)] = np.inf
    step = max(1, _CHUNK // max(m, 1))
    for s in range(0, n, step):
        xc = x[s:s + step]
        vis = dm.visibility_matrix(domain, xc, src, x_labels=labels[s:s + step],
                                   buckets=buckets)
        cost = vals[None, :] + polar_gauge(body, xc[:, None, :] - src[None, :, :])
        cost[~vis] = np.inf
        k = np.argmin(cost, axis=1)
        rows = np.arange(len(xc))
        best = cost[rows, k]
        if not np.all(np.isfinite(best)):
            bad = xc[~np.isfinite(best)][0]
            raise NoVisibleBoundary(f"no visible boundary sample from {bad.tolist()}")
        ft = src[k].copy()
        if pieces is not None:
            # a piece can beat the best sample only if the lower bound of its
            # convex cost, (f0 + f1 - Lip) / 2, does
            c0, c1 = cost, cost[:, nxt]
            lower = 0.5 * (c0 + c1 - lip[None, :])
            r, c = np.nonzero((lower < best[:, None] - 1e-12) & np.isfinite(c0) & np.isfinite(c1))
            if len(r):
                _, f, y = _refine(body, xc[r], src, vals, c, nxt[c])
                order = np.lexsort((f, r))
                r, f, y = r[order], f[order], y[order]
                first = np.concatenate([[True], r[1:] != r[:-1]])
                r, f, y = r[first], f[first], y[first]
                better = f < best[r]
                best[r[better]] = f[better]
                ft[r[better]] = y[better]
        value[s:s + step] = best
        arg[s:s + step] = k
        foot[s:s + step] = ft
        if delta is not None:
            r, c = np.nonzero(cost <= best[:, None] + delta)
            near_idx.append(c)
            near_val.append(cost[r, c])
            near_cnt.append(np.bincount(r, minlength=len(xc)))
    near = None
    if delta is not None:
        cnt = np.concatenate(near_cnt) if near_cnt else np.zeros(0, dtype=int)
        indptr = np.concatenate([[0], np.cumsum(cnt)])
        near = (indptr, np.concatenate(near_idx) if near_idx else np.zeros(0, dtype=int),
                np.concatenate(near_val) if near_val else np.zeros(0))
    return value, arg, foot, near


def _node_labels(domain, grid):
    return domain.classify(grid.points().reshape(-1, 2)).reshape(grid.shape)


def _solve(domain, samples, body, grid, delta):
    if grid is None:
        raise ValueError("a grid is required")
    pts = grid.points()
    labels = _node_labels(domain, grid)
    mask = labels == dm.INSIDE
    on_b = labels == dm.BOUNDARY
    nodes = np.flatnonzero(mask)
    prev, nxt = samples.neighbors(np.arange(len(samples)))
    value, arg, foot, near = lax_hopf_min(domain, body, samples.points, samples.values,
                                          pts.reshape(-1, 2)[nodes], delta=delta,
                                          pieces=(prev, nxt))
    values = np.full(grid.shape, np.nan)
    argmin = np.full(grid.shape, -1, dtype=np.int64)
    feet = np.full(grid.shape + (2,), np.nan)
    values.flat[nodes] = value
    argmin.flat[nodes] = arg
    feet.reshape(-1, 2)[nodes] = foot
    if np.any(on_b):
        bpts = pts[on_b]
        values[on_b] = samples.interpolate(domain, bpts)
        feet[on_b] = bpts
    return LaxHopfField(grid, values, mask, argmin=argmin, foot=feet, nodes=nodes,
                        near_indptr=near[0], near_indices=near[1], near_values=near[2],
                        delta=float(delta))


def solve_uphi(domain, samples, body, grid=None, h=None, delta=None):
    """Maximal solution ``u_phi`` on ``grid`` (or a fresh grid of spacing ``h``).

    Inside nodes get the Lax-Hopf minimum, boundary nodes the datum, nodes
    outside the closed domain NaN.  ``delta`` (default ``3h``) sets the width
    of the stored near set used for projection sets.
    """
    if grid is None:
        grid = make_grid(domain, h)
    delta = 3.0 * grid.h if delta is None else delta
    return _solve(domain, samples, body, grid, delta)


def solve_w_reverse(domain, samples, body, grid=None, h=None, delta=None):
    """Reverse field ``w_phi(x) = min -phi(y) + rho0(y - x)`` over visible ``y``."""
    return solve_uphi(domain, samples.negated(), body.reversed(), grid=grid, h=h, delta=delta)


def support_frontier(mask, support):
    """Support nodes with a 4-neighbour in the domain outside the support."""
    pad = np.pad(support, 1, constant_values=False)
    inner = pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    padm = np.pad(mask, 1, constant_values=False)
    near_free = ((padm[:-2, 1:-1] & ~pad[:-2, 1:-1]) | (padm[2:, 1:-1] & ~pad[2:, 1:-1])
                 | (padm[1:-1, :-2] & ~pad[1:-1, :-2]) | (padm[1:-1, 2:] & ~pad[1:-1, 2:]))
    return support & (near_free | ~inner)


def solve_uf(domain, samples, body, grid, uphi, support_mask):
    """Minimal solution ``u_f(x) = max u_phi(z) - rho0(z - x)`` over admissible ``z``.

    Candidates are the boundary samples and the frontier nodes of the support.
    A segment from ``x`` that crosses the support first meets it at a point
    whose candidate value dominates, so plain visibility in the domain is
    enough.  On the support ``u_f = u_phi``.
    """
    support = np.asarray(support_mask, dtype=bool) & uphi.mask
    pts = grid.points()
    mask = uphi.mask
    front = support_frontier(mask, support)
    fz = pts[front]
    src = np.concatenate([samples.points, fz])
    vals = -np.concatenate([samples.values, uphi.values[front]])
    prev, nxt = samples.neighbors(np.arange(len(samples)))
    extra = np.arange(len(samples), len(src))
    pieces = (np.concatenate([prev, extra]), np.concatenate([nxt, extra]))
    todo = np.flatnonzero(mask & ~support)
    rev = body.reversed()
    out = np.array(uphi.values, copy=True)
    if len(todo):
        xs = pts.reshape(-1, 2)[todo]
        buckets = None
        if not domain.is_convex:
            buckets = dm.source_buckets(domain, src)
        value, _, _, _ = lax_hopf_min(domain, rev, src, vals, xs, buckets=buckets,
                                      pieces=pieces)
        out.flat[todo] = -value
    return ScalarField(grid, out, mask.copy())


def lax_hopf_value(domain, samples, body, points):
    """Pointwise ``u_phi`` at interior ``points`` (refined along boundary pieces)."""
    prev, nxt = samples.neighbors(np.arange(len(samples)))
    value, _, _, _ = lax_hopf_min(domain, body, samples.points, samples.values, points,
                                  pieces=(prev, nxt))
    return value


def unrestricted_min(samples, body, points):
    """``min phi(y) + rho0(x - y)`` over all samples, ignoring visibility."""
    x = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.empty(len(x))
    step = max(1, _CHUNK // len(samples))
    for s in range(0, len(x), step):
        xc = x[s:s + step]
        out[s:s + step] = np.min(samples.values[None]
                                 + polar_gauge(body, xc[:, None] - samples.points[None]), axis=1)
    return out


@dataclass
class XphiReport:
    boundary_error: float
    lipschitz_violation: float
    gradient_gauge_max: float
    pairs_checked: int

    def to_dict(self):
        return asdict(self)


def _shifted(arr, di, dj):
    """Views ``(arr[i, j], arr[i + di, j + dj])`` over all valid index pairs."""
    nx, ny = arr.shape[:2]
    ia, ib = slice(max(0, -di), nx - max(0, di)), slice(max(0, di), nx - max(0, -di))
    ja, jb = slice(max(0, -dj), ny - max(0, dj)), slice(max(0, dj), ny - max(0, -dj))
    return arr[ia, ja], arr[ib, jb]


def check_xphi_membership(field, domain, samples, body, pairs=500, seed=0):
    """Check ``u = phi`` on the boundary and ``Du`` in ``K`` for a grid field.

    The Lipschitz test covers every pair of adjacent (including diagonal)
    inside nodes plus ``pairs`` random inside pairs whose segment stays in
    the closed domain.
    """
    vals = field.values
    grid = field.grid
    at_b = field.interpolate(samples.points)
    boundary_error = float(np.nanmax(np.abs(at_b - samples.values)))
    ok = field.mask & np.isfinite(vals)
    worst = -np.inf
    count = 0
    for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
        a, b = _shifted(ok, di, dj)
        va, vb = _shifted(vals, di, dj)
        both = a & b
        if not np.any(both):
            continue
        step = grid.h * np.array([di, dj], dtype=float)
        diff = vb[both] - va[both]
        worst = max(worst, float(np.max(diff - polar_gauge(body, step))),
                    float(np.max(-diff - polar_gauge(body, -step))))
        count += 2 * int(both.sum())
    idx = np.flatnonzero(ok)
    if len(idx) >= 2 and pairs > 0:
        rng = np.random.default_rng(seed)
        a = rng.choice(idx, pairs)
        b = rng.choice(idx, pairs)
        pts = grid.points().reshape(-1, 2)
        keep = dm.segments_in_closure(domain, pts[a], pts[b]) & (a != b)
        a, b = a[keep], b[keep]
        if len(a):
            diff = vals.flat[b] - vals.flat[a]
            worst = max(worst, float(np.max(diff - polar_gauge(body, pts[b] - pts[a]))))
            count += len(a)
    g = gradient(vals, grid.h)[ok]
    g = g[np.all(np.isfinite(g), axis=1)]
    gmax = float(np.max(gauge(body, g))) if len(g) else 0.0
    return XphiReport(boundary_error, worst if np.isfinite(worst) else 0.0, gmax, count)
