"""Transport rays of ``u_phi`` and its singular sets.

Each inside node carries the boundary point it projects to, the ray
direction ``d = (x - p) / rho0(x - p)``, the length ``tau`` over which
``u_phi`` keeps growing with unit slope, and the endpoint ``q = x + tau d``.
From these the singular sets are assembled: the kink set Sigma, the set D of
nodes with several projections, the ray endpoints J inside the domain, the
boundary pairs E joined by a full ray and the union T of those rays.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import domain as dm
from .convex import equivalence_constants, gauge, polar_gauge
from .grid import one_sided_differences

SIGMA_TOL = 0.15
CLUSTER_GAP = 5.0


class MultivaluedDirection(ValueError):
    """The node has several projections, so the ray direction is not unique."""


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def _clusters_of(idx, samples, gap):
    """Split sorted sample indices into arc-connected clusters (cyclic per loop)."""
    if len(idx) == 0:
        return []
    out = []
    for li in np.unique(samples.loop[idx]):
        sub = idx[samples.loop[idx] == li]
        arc = samples.arc[sub]
        cut = np.nonzero(np.diff(arc) > gap)[0] + 1
        parts = np.split(sub, cut)
        if len(parts) > 1 and arc[0] + samples.loop_length[li] - arc[-1] <= gap:
            parts[0] = np.concatenate([parts[-1], parts[0]])
            parts.pop()
        out.extend(parts)
    return out


def wraps_loop(cluster, samples):
    """Whether a cluster closes up around its whole boundary loop."""
    li = samples.loop[cluster[0]]
    arc = np.sort(samples.arc[cluster])
    gaps = np.diff(np.concatenate([arc, [arc[0] + samples.loop_length[li]]]))
    return bool(np.all(gaps <= CLUSTER_GAP * samples.spacing + 1e-12))


def _second_flags(samples, body, uphi, x, indptr, indices, values, argmin, slack):
    rows = np.repeat(np.arange(len(x)), np.diff(indptr))
    d = _directions(body, x[rows], samples.points[indices])
    return _kernels.second_minima(
        indptr, indices, values, samples.arc, samples.loop, samples.loop_start,
        samples.loop_size, samples.loop_length, CLUSTER_GAP * samples.spacing + 1e-12,
        values - samples.values[indices], argmin, uphi.delta,
        np.ascontiguousarray(d[:, 0]), np.ascontiguousarray(d[:, 1]), slack)


def _basin(k, idx, rank, samples):
    """Samples reachable from ``k`` along the loop with non-decreasing cost."""
    pos = {int(s): n for n, s in enumerate(idx)}
    out = [int(k)]
    for step in (-1, 1):
        cur = int(k)
        while True:
            prev, nxt = samples.neighbors(np.array([cur]))
            nb = int((prev if step < 0 else nxt)[0])
            if nb not in pos or nb in out or rank[nb] < rank[cur]:
                break
            out.append(nb)
            cur = nb
    return np.array(sorted(out, key=lambda s: (rank[s], s)), dtype=np.int64)


def projections(uphi, samples, body, i, j, delta=None):
    """Projection set at node (i, j) as a list of sample-index clusters.

    Every visible sample whose Lax-Hopf value is within ``delta`` of
    ``u_phi`` belongs to the near set.  Besides the best sample, a sample is
    a projection when its cost is a local minimum along the boundary more
    than five sample spacings of arc from the best one, it lies farther than
    ``delta`` from the node, and its cost exceeds the best by at most
    ``h |d - d_best|`` (``d`` the ray directions), so that only nodes within
    about a cell of the equal-cost curve see two projections.  Each
    projection comes with its basin of samples, best sample first; the list
    is sorted by cost.
    """
    idx, vals = uphi.near_set(i, j)
    if delta is not None:
        if delta > uphi.delta:
            raise ValueError(f"delta {delta} exceeds the stored near-set width {uphi.delta}")
        keep = vals <= uphi.values[i, j] + delta + 1e-12
        idx, vals = idx[keep], vals[keep]
    best = int(uphi.argmin[i, j])
    x = uphi.grid.points()[i, j][None]
    flags = _second_flags(samples, body, uphi, x, np.array([0, len(idx)]), idx, vals,
                          np.array([best]), uphi.grid.h)
    rank = dict(zip(idx.tolist(), vals.tolist()))
    heads = [best] + idx[flags].tolist()
    out = [_basin(k, idx, rank, samples) for k in heads]
    out.sort(key=lambda c: rank[int(c[0])])
    return out


def near_set_wraps(uphi, samples, i, j):
    """Whether the near set at (i, j) closes up around a whole boundary loop."""
    idx, _ = uphi.near_set(i, j)
    return any(wraps_loop(c, samples)
               for c in _clusters_of(idx, samples, CLUSTER_GAP * samples.spacing + 1e-12))


# ---------------------------------------------------------------------------
# ray field
# ---------------------------------------------------------------------------

@dataclass
class RayField:
    """Per-node ray records on the grid of ``u_phi`` (NaN off the mask)."""

    foot: np.ndarray
    direction: np.ndarray
    tau: np.ndarray
    endpoint: np.ndarray
    reaches_boundary: np.ndarray
    clusters: np.ndarray
    in_D: np.ndarray
    mask: np.ndarray
    tol: float = 0.0

    @property
    def regular(self):
        """Nodes with a single projection cluster."""
        return self.mask & ~self.in_D


def _directions(body, x, p):
    v = x - p
    r = polar_gauge(body, v)
    return v / r[:, None]


def ray_field(domain, samples, body, uphi, tol=None, extrapolate=True):
    """Rays through every inside node of ``uphi``.

    ``tol`` is the linearity tolerance (default ``3h``).  D nodes (two or
    more projections as in :func:`projections`, or a near set closing
    around a whole loop)
    get ``tau = 0`` and ``q = x``.
    """
    grid = uphi.grid
    h = grid.h
    tol = 3.0 * h if tol is None else tol
    mask = uphi.mask
    nodes = uphi.nodes
    pts = grid.points().reshape(-1, 2)
    x = pts[nodes]
    second = _second_flags(samples, body, uphi, x, uphi.near_indptr, uphi.near_indices,
                           uphi.near_values, uphi.argmin.flat[nodes].copy(), h)
    count, full = _kernels.count_clusters(uphi.near_indptr, uphi.near_indices, samples.arc,
                                          samples.loop, samples.loop_length,
                                          CLUSTER_GAP * samples.spacing + 1e-12, second)
    clusters = np.zeros(grid.shape, dtype=np.int64)
    clusters.flat[nodes] = count
    in_D = np.zeros(grid.shape, dtype=bool)
    in_D.flat[nodes] = (count >= 2) | full

    p = uphi.foot.reshape(-1, 2)[nodes]
    d = _directions(body, x, p)
    tmax = _kernels.ray_exit(np.ascontiguousarray(x), np.ascontiguousarray(d), *domain.edge_xy)
    tau, reached = _kernels.ray_scan(np.ascontiguousarray(x), np.ascontiguousarray(d),
                                     uphi.values.flat[nodes].copy(), tmax,
                                     np.ascontiguousarray(uphi.values), grid.origin[0],
                                     grid.origin[1], h, tol, extrapolate)
    dnode = in_D.flat[nodes]
    tau[dnode] = 0.0
    reached[dnode] = False

    def full_field(vals, width=None):
        shape = grid.shape if width is None else grid.shape + (width,)
        out = np.full(shape, np.nan)
        if width is None:
            out.flat[nodes] = vals
        else:
            out.reshape(-1, width)[nodes] = vals
        return out

    reach = np.zeros(grid.shape, dtype=bool)
    reach.flat[nodes] = reached
    return RayField(foot=full_field(p, 2), direction=full_field(d, 2), tau=full_field(tau),
                    endpoint=full_field(x + tau[:, None] * d, 2), reaches_boundary=reach,
                    clusters=clusters, in_D=in_D, mask=mask.copy(), tol=float(tol))


def ray_of(domain, samples, body, uphi, i, j, tol=None, extrapolate=True):
    """Direction, length and endpoint of the ray through node (i, j)."""
    if not uphi.mask[i, j]:
        raise ValueError("node is not inside the domain")
    clusters = projections(uphi, samples, body, i, j)
    if len(clusters) != 1 or near_set_wraps(uphi, samples, i, j):
        raise MultivaluedDirection(f"node {(i, j)} has several projections")
    grid = uphi.grid
    tol = 3.0 * grid.h if tol is None else tol
    x = grid.points()[i, j][None]
    d = _directions(body, x, uphi.foot[i, j][None])
    tmax = _kernels.ray_exit(x, np.ascontiguousarray(d), *domain.edge_xy)
    tau, reached = _kernels.ray_scan(x, np.ascontiguousarray(d),
                                     np.array([uphi.values[i, j]]), tmax,
                                     np.ascontiguousarray(uphi.values), grid.origin[0],
                                     grid.origin[1], grid.h, tol, extrapolate)
    return {"direction": d[0], "tau": float(tau[0]), "endpoint": x[0] + tau[0] * d[0],
            "reaches_boundary": bool(reached[0])}


# ---------------------------------------------------------------------------
# singular sets
# ---------------------------------------------------------------------------

def detect_sigma(uphi, body, tol=SIGMA_TOL):
    """Kink mask of ``u_phi`` and sub-grid kink point estimates.

    A node is flagged when the jump between forward and backward difference
    quotients, measured in the gauge of the body (both orientations), exceeds
    ``tol``.  Axes with a missing neighbour do not contribute.  Each flagged
    node also yields the crossing point of the two outer one-sided lines
    along its dominant axis.
    """
    v = uphi.values
    h = uphi.grid.h
    dq = one_sided_differences(v, h)
    jx = np.nan_to_num(dq["x+"] - dq["x-"])
    jy = np.nan_to_num(dq["y+"] - dq["y-"])
    jump = np.stack([jx, jy], axis=-1)
    size = np.maximum(gauge(body, jump), gauge(body, -jump))
    mask = uphi.mask & (size > tol)
    return mask, _kink_points(uphi, mask, jx, jy)


def _kink_points(uphi, mask, jx, jy):
    v = uphi.values
    grid = uphi.grid
    pts = grid.points()
    out = []
    for i, j in zip(*np.nonzero(mask)):
        axis = 0 if abs(jx[i, j]) >= abs(jy[i, j]) else 1
        e = np.array([1, 0]) if axis == 0 else np.array([0, 1])
        idx = [(i + k * e[0], j + k * e[1]) for k in (-2, -1, 1, 2)]
        ok = all(0 <= a < grid.nx and 0 <= b < grid.ny and np.isfinite(v[a, b]) for a, b in idx)
        shift = 0.0
        if ok:
            # lines through (-2, -1) and (1, 2) in units of h
            sl = v[idx[1]] - v[idx[0]]
            sr = v[idx[3]] - v[idx[2]]
            if abs(sl - sr) > 1e-14:
                s = (v[idx[2]] - sr - v[idx[1]] - sl) / (sl - sr)
                shift = float(np.clip(s, -1.0, 1.0))
        out.append(pts[i, j] + shift * grid.h * e)
    return np.array(out).reshape(-1, 2)


@dataclass
class SingularSets:
    sigma_mask: np.ndarray
    d_mask: np.ndarray
    j_points: np.ndarray
    j_weights: np.ndarray
    j_from_d: np.ndarray
    t_mask: np.ndarray
    e_pairs: np.ndarray
    t_measure_estimate: float
    sigma_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    d_in_sigma: bool = True
    j_in_d_closure: bool = True
    checks: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "sigma_nodes": int(self.sigma_mask.sum()),
            "d_nodes": int(self.d_mask.sum()),
            "t_nodes": int(self.t_mask.sum()),
            "t_measure_estimate": float(self.t_measure_estimate),
            "j_points": [[float(a), float(b)] for a, b in self.j_points],
            "j_weights": [int(w) for w in self.j_weights],
            "j_from_d": [bool(b) for b in self.j_from_d],
            "e_pairs": [[[float(c) for c in p], [float(c) for c in q]] for p, q in self.e_pairs],
            "sigma_points": [[float(a), float(b)] for a, b in self.sigma_points],
            "d_in_sigma": bool(self.d_in_sigma),
            "j_in_d_closure": bool(self.j_in_d_closure),
            "checks": self.checks,
        }


def _dilate(mask, r=1):
    out = mask.copy()
    for _ in range(r):
        pad = np.pad(out, 1, constant_values=False)
        grown = pad[1:-1, 1:-1].copy()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                grown |= pad[1 + di:pad.shape[0] - 1 + di, 1 + dj:pad.shape[1] - 1 + dj]
        out = grown
    return out


def _dedupe(points, cell):
    """Merge points sharing a cell of side ``cell``; returns centroids and counts."""
    if len(points) == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=int)
    key = np.floor(points / cell).astype(np.int64)
    _, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    sums = np.zeros((len(cnt), 2))
    np.add.at(sums, inv, points)
    return sums / cnt[:, None], cnt


def e_pairs_from_rays(domain, samples, body, uphi, rays, tol=None):
    """Boundary pairs ``(p, q)`` with ``phi(q) = phi(p) + rho0(q - p)`` joined inside.

    Candidates are (foot, exit point) pairs of rays that run to the
    boundary.  A pair is kept when the datum gap matches within ``tol``
    (default ``3h c2``), ``p`` and ``q`` lie on different edges and the open
    segment between them is in the domain.
    """
    h = uphi.grid.h
    if tol is None:
        tol = 3.0 * h * equivalence_constants(body)[1]
    sel = rays.reaches_boundary & rays.mask
    if not np.any(sel):
        return np.zeros((0, 2, 2))
    p = rays.foot[sel]
    q = rays.endpoint[sel]
    pairs = np.stack([p, q], axis=1)
    key = np.round(pairs.reshape(-1, 4) / (h / 8.0)).astype(np.int64)
    _, first = np.unique(key, axis=0, return_index=True)
    pairs = pairs[np.sort(first)]
    p, q = pairs[:, 0], pairs[:, 1]
    gap = samples.interpolate(domain, q) - samples.interpolate(domain, p) - polar_gauge(body, q - p)
    keep = np.abs(gap) <= tol
    if np.any(keep):
        ep = _edge_of(domain, p[keep])
        eq = _edge_of(domain, q[keep])
        idx = np.nonzero(keep)[0]
        keep[idx[ep == eq]] = False
    if np.any(keep):
        idx = np.nonzero(keep)[0]
        mid = 0.5 * (p[idx] + q[idx])
        inside = domain.classify(mid) == dm.INSIDE
        blocked = _kernels.open_blocked_pairs(np.ascontiguousarray(p[idx]),
                                              np.ascontiguousarray(q[idx]), *domain.edge_xy)
        keep[idx[~inside | blocked]] = False
    return pairs[keep]


def _edge_of(domain, pts):
    a, b = domain.edge_start, domain.edge_end
    ab = b - a
    ap = pts[:, None, :] - a[None]
    t = np.clip(np.sum(ap * ab, -1) / np.sum(ab * ab, -1), 0, 1)
    dist = np.sum((ap - t[..., None] * ab) ** 2, -1)
    return np.argmin(dist, axis=1)


def t_mask_from_pairs(grid, mask, pairs):
    """Inside nodes within h/2 of some segment in ``pairs``."""
    h = grid.h
    out = np.zeros(grid.shape, dtype=bool)
    if len(pairs) == 0:
        return out
    pts = grid.points()
    for p, q in pairs:
        length = np.linalg.norm(q - p)
        n = max(2, int(np.ceil(length / (0.5 * h))) + 1)
        s = np.linspace(0.0, 1.0, n)
        line = p[None] + s[:, None] * (q - p)[None]
        i, j = grid.index_of(line)
        cand = set()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                ii = np.clip(i + di, 0, grid.nx - 1)
                jj = np.clip(j + dj, 0, grid.ny - 1)
                cand.update(zip(ii.tolist(), jj.tolist()))
        ci = np.array([c[0] for c in cand])
        cj = np.array([c[1] for c in cand])
        x = pts[ci, cj]
        v = q - p
        t = np.clip(((x - p) @ v) / max(v @ v, 1e-300), 0.0, 1.0)
        dist = np.linalg.norm(x - p - t[:, None] * v, axis=1)
        near = dist <= 0.5 * h + 1e-12
        out[ci[near], cj[near]] = True
    return out & mask


def detect_singular_sets(domain, samples, body, uphi, rays, sigma=None):
    """Assemble Sigma, D, J, E and T from the ray field.

    J is the set of ray endpoints inside the domain (merged on an h/2 grid)
    together with the D nodes, whose rays have zero length.
    """
    grid = uphi.grid
    h = grid.h
    if sigma is None:
        sigma_mask, sigma_pts = detect_sigma(uphi, body)
    else:
        sigma_mask, sigma_pts = sigma
    d_mask = rays.in_D & rays.mask
    interior_end = rays.mask & ~rays.in_D & ~rays.reaches_boundary
    ends = rays.endpoint[interior_end]
    if len(ends):
        ends = ends[domain.boundary_distance(ends) > domain.tol]
    j_end, w_end = _dedupe(ends, 0.5 * h)
    d_pts = grid.points()[d_mask]
    j_points = np.concatenate([j_end, d_pts])
    j_weights = np.concatenate([w_end, np.ones(len(d_pts), dtype=int)])
    j_from_d = np.concatenate([np.zeros(len(j_end), dtype=bool), np.ones(len(d_pts), dtype=bool)])

    pairs = e_pairs_from_rays(domain, samples, body, uphi, rays)
    t_mask = t_mask_from_pairs(grid, uphi.mask, pairs)

    d_in_sigma = bool(np.all(_dilate(sigma_mask, 1)[d_mask]))
    # the layer next to the boundary is exempt: there the second foot of a
    # ridge node is closer than the projection tolerance
    far = j_end[domain.boundary_distance(j_end) > 3.0 * h] if len(j_end) else j_end
    if len(far):
        i, j = grid.index_of(far)
        j_in_d = bool(np.all(_dilate(d_mask, 2)[i, j]))
    else:
        j_in_d = True
    return SingularSets(sigma_mask=sigma_mask, d_mask=d_mask, j_points=j_points,
                        j_weights=j_weights, j_from_d=j_from_d, t_mask=t_mask,
                        e_pairs=pairs, t_measure_estimate=float(h * h * t_mask.sum()),
                        sigma_points=sigma_pts, d_in_sigma=d_in_sigma,
                        j_in_d_closure=j_in_d)
