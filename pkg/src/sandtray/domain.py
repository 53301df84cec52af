"""
Polygonal domains with holes.

Point classification, boundary sampling, visibility between boundary points
and grid nodes, geodesic distances for a (possibly asymmetric) convex metric,
and the compatibility check of a boundary datum with that metric.

Loop orientation convention: the outer loop is counter-clockwise and holes
are clockwise, so the domain always lies to the left of every edge.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra, shortest_path

from . import _kernels
from .convex import polar_gauge

INSIDE, BOUNDARY, OUTSIDE = 1, 0, -1
_LABELS = {INSIDE: "inside", BOUNDARY: "boundary", OUTSIDE: "outside"}
_CHUNK = 2_000_000
_T_EPS = 1e-9


class Unreachable(RuntimeError):
    """No path joins the two points inside the closed domain."""


def _signed_area(loop):
    x, y = loop[:, 0], loop[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _segments_cross(p1, p2, q1, q2, eps=1e-12):
    """Proper crossing test for arrays of segments (broadcasting)."""
    r = p2 - p1
    s = q2 - q1
    den = _cross(r, s)
    qp = q1 - p1
    scale = np.linalg.norm(r, axis=-1) * np.linalg.norm(s, axis=-1)
    ok = np.abs(den) > eps * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(qp, s) / den
        u = _cross(qp, r) / den
    return ok & (t > eps) & (t < 1 - eps) & (u > eps) & (u < 1 - eps)


class PolygonalDomain:
    """An outer polygon loop minus polygonal holes.

    ``length_defect`` records, for polygonised curved domains, the largest
    relative shortening of boundary-hugging paths caused by replacing arcs
    with chords; it is zero for genuine polygons.
    """

    def __init__(self, outer, holes=(), name="polygon", length_defect=0.0):
        outer = np.asarray(outer, dtype=float)
        if _signed_area(outer) < 0:
            outer = outer[::-1]
        hs = []
        for h in holes:
            h = np.asarray(h, dtype=float)
            if _signed_area(h) > 0:
                h = h[::-1]
            hs.append(h)
        self.outer = outer
        self.holes = tuple(hs)
        self.name = name
        self.length_defect = float(length_defect)
        self._build()
        self._validate()

    def _build(self):
        starts, ends, loop_id, arc0 = [], [], [], []
        for li, loop in enumerate(self.loops):
            nxt = np.roll(loop, -1, axis=0)
            starts.append(loop)
            ends.append(nxt)
            loop_id.append(np.full(len(loop), li))
            lengths = np.linalg.norm(nxt - loop, axis=1)
            arc0.append(np.concatenate([[0.0], np.cumsum(lengths)[:-1]]))
        self.edge_start = np.concatenate(starts)
        self.edge_end = np.concatenate(ends)
        self.edge_loop = np.concatenate(loop_id)
        self.edge_arc = np.concatenate(arc0)
        self.edge_length = np.linalg.norm(self.edge_end - self.edge_start, axis=1)
        self.edge_xy = tuple(np.ascontiguousarray(c) for c in (
            self.edge_start[:, 0], self.edge_start[:, 1],
            self.edge_end[:, 0], self.edge_end[:, 1]))
        self.loop_length = np.array([
            self.edge_length[self.edge_loop == li].sum() for li in range(len(self.loops))
        ])
        allv = np.concatenate(self.loops)
        self.bbox = (allv.min(axis=0), allv.max(axis=0))
        self.diameter = float(np.linalg.norm(self.bbox[1] - self.bbox[0]))
        self.tol = 1e-9 * self.diameter
        self.perimeter = float(self.loop_length.sum())
        # interior lies to the left of every edge: reflex iff the turn is clockwise
        reflex = []
        for loop in self.loops:
            prev = loop - np.roll(loop, 1, axis=0)
            nxt = np.roll(loop, -1, axis=0) - loop
            reflex.append(loop[_cross(prev, nxt) < -1e-14])
        self.reflex_vertices = np.concatenate(reflex) if reflex else np.zeros((0, 2))
        self.is_convex = not self.holes and len(self.reflex_vertices) == 0

    def _validate(self):
        for loop in self.loops:
            if len(loop) < 3:
                raise ValueError("every loop needs at least 3 vertices")
        a, b = self.edge_start, self.edge_end
        n = len(a)
        cross = _segments_cross(a[:, None], b[:, None], a[None], b[None])
        idx = np.arange(n)
        cross[idx, idx] = False
        if np.any(cross):
            i, j = np.argwhere(cross)[0]
            raise ValueError(f"boundary edges {i} and {j} intersect")
        outer_end = np.roll(self.outer, -1, axis=0)
        for h in self.holes:
            cls = _classify_edges(h, self.outer, outer_end, self.tol)
            if np.any(cls != INSIDE):
                raise ValueError("holes must lie strictly inside the outer loop")

    @property
    def loops(self):
        return (self.outer,) + self.holes

    @property
    def vertices(self):
        return np.concatenate(self.loops)

    def classify(self, points):
        """Integer labels: 1 inside, 0 on the boundary, -1 outside."""
        return _classify_edges(np.asarray(points, dtype=float),
                               self.edge_start, self.edge_end, self.tol)

    def boundary_distance(self, points):
        pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
        out = _kernels.edge_distance(pts, *self.edge_xy)
        return out.reshape(np.shape(points)[:-1])

    def describe(self):
        return {
            "name": self.name,
            "outer": self.outer.tolist(),
            "holes": [h.tolist() for h in self.holes],
            "length_defect": self.length_defect,
        }


def _classify_edges(points, starts, ends, tol):
    shape = points.shape[:-1]
    pts = np.ascontiguousarray(points.reshape(-1, 2))
    out = _kernels.classify(pts, starts[:, 0].copy(), starts[:, 1].copy(),
                            ends[:, 0].copy(), ends[:, 1].copy(), float(tol))
    return out.reshape(shape)


def contains(domain, x):
    """Classify a single point as 'inside', 'boundary' or 'outside'."""
    return _LABELS[int(domain.classify(np.asarray(x, dtype=float)[None])[0])]


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def square(side=1.0):
    s = float(side)
    return PolygonalDomain([(0, 0), (s, 0), (s, s), (0, s)], name="square")


def l_shape():
    """Unit square minus its top-right quarter."""
    v = [(0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)]
    return PolygonalDomain(v, name="l-shape")


def hexagon():
    """{|y| < 2 - |x|, |y| < 1}."""
    v = [(-1, -1), (1, -1), (2, 0), (1, 1), (-1, 1), (-2, 0)]
    return PolygonalDomain(v, name="hexagon")


def _arc_defect(turn):
    return 1.0 - np.cos(turn / 2.0)


def disk(radius=1.0, n=720):
    t = 2 * np.pi * np.arange(n) / n
    v = radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    return PolygonalDomain(v, name="disk", length_defect=_arc_defect(2 * np.pi / n))


def ellipse(a=2.0, b=1.0, n=720):
    t = 2 * np.pi * np.arange(n) / n
    v = np.stack([a * np.cos(t), b * np.sin(t)], axis=1)
    # the largest turning angle per edge sits at the ends of the major axis
    d = np.diff(np.arctan2(a * np.cos(t[:2]), -b * np.sin(t[:2])))
    turn = float(abs(d[0])) if len(d) else 2 * np.pi / n
    return PolygonalDomain(v, name="ellipse", length_defect=_arc_defect(turn))


def annulus_sector(r_in=1.0, r_out=2.0, eps=0.5, n_arc=128):
    """{r_in < r < r_out, -pi < theta < pi - eps}, arcs replaced by chords."""
    th_out = np.linspace(-np.pi, np.pi - eps, n_arc + 1)
    th_in = th_out[::-1]
    outer = r_out * np.stack([np.cos(th_out), np.sin(th_out)], axis=1)
    inner = r_in * np.stack([np.cos(th_in), np.sin(th_in)], axis=1)
    v = np.concatenate([outer, inner])
    v[np.abs(v[:, 1]) < 1e-12, 1] = 0.0
    turn = (2 * np.pi - eps) / n_arc
    return PolygonalDomain(v, name="annulus-sector", length_defect=_arc_defect(turn))


def domain_from_spec(spec):
    kind = spec.get("preset")
    if kind is None:
        return PolygonalDomain(spec["outer"], spec.get("holes", ()), name=spec.get("name", "polygon"))
    if kind == "square":
        return square(spec.get("side", 1.0))
    if kind == "l-shape":
        return l_shape()
    if kind == "hexagon":
        return hexagon()
    if kind == "disk":
        return disk(spec.get("radius", 1.0), spec.get("segments", 720))
    if kind == "ellipse":
        return ellipse(spec.get("a", 2.0), spec.get("b", 1.0), spec.get("segments", 720))
    if kind == "annulus-sector":
        return annulus_sector(spec.get("r_in", 1.0), spec.get("r_out", 2.0),
                              spec.get("eps", 0.5), spec.get("segments", 128))
    raise ValueError(f"unknown domain preset {kind!r}")


# ---------------------------------------------------------------------------
# boundary samples
# ---------------------------------------------------------------------------

@dataclass
class BoundarySamples:
    """Ordered boundary samples, loop by loop, with datum values."""

    points: np.ndarray
    values: np.ndarray
    loop: np.ndarray
    edge: np.ndarray
    arc: np.ndarray
    is_vertex: np.ndarray
    loop_length: np.ndarray
    spacing: float = 0.0
    loop_start: np.ndarray = field(init=False)
    loop_size: np.ndarray = field(init=False)

    def __post_init__(self):
        nloops = len(self.loop_length)
        self.loop_size = np.bincount(self.loop, minlength=nloops)
        self.loop_start = np.concatenate([[0], np.cumsum(self.loop_size)[:-1]])

    def __len__(self):
        return len(self.points)

    def with_values(self, values):
        out = BoundarySamples(self.points, np.asarray(values, dtype=float), self.loop,
                              self.edge, self.arc, self.is_vertex, self.loop_length,
                              self.spacing)
        return out

    def negated(self):
        return self.with_values(-self.values)

    def neighbors(self, k):
        """Previous and next sample indices along the loop (cyclic)."""
        k = np.asarray(k)
        li = self.loop[k]
        start, size = self.loop_start[li], self.loop_size[li]
        pos = k - start
        return start + (pos - 1) % size, start + (pos + 1) % size

    def interpolate(self, domain, points):
        """Datum at arbitrary boundary points, linear between samples."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        a, b = domain.edge_start, domain.edge_end
        ab = b - a
        ap = pts[:, None, :] - a[None]
        t = np.clip(np.sum(ap * ab, -1) / np.sum(ab * ab, -1), 0, 1)
        d = np.sum((ap - t[..., None] * ab) ** 2, -1)
        e = np.argmin(d, axis=1)
        li = domain.edge_loop[e]
        s = domain.edge_arc[e] + t[np.arange(len(pts)), e] * domain.edge_length[e]
        out = np.empty(len(pts))
        for loop_id in np.unique(li):
            sel = self.loop == loop_id
            arc = np.concatenate([self.arc[sel], [self.loop_length[loop_id]]])
            val = np.concatenate([self.values[sel], self.values[sel][:1]])
            m = li == loop_id
            out[m] = np.interp(s[m], arc, val)
        return out.reshape(np.shape(points)[:-1])


def _eval_datum(datum, pts, arc):
    if datum is None:
        return np.zeros(len(pts))
    if np.isscalar(datum):
        return np.full(len(pts), float(datum))
    return np.broadcast_to(np.asarray(datum(pts, arc), dtype=float), (len(pts),)).copy()


def sample_boundary(domain, target_count, datum=None):
    """Sample every loop so that spacing <= perimeter / target_count.

    Every polygon vertex is a sample.  ``datum`` is ``None`` (zero), a scalar
    or a callable ``datum(points, arc)`` returning one value per point, where
    ``arc`` is the arc-length parameter along the sample's loop.
    """
    nverts = len(domain.edge_start)
    if target_count < nverts:
        raise ValueError(f"target_count {target_count} is below the vertex count {nverts}")
    max_gap = domain.perimeter / target_count
    pts, loop, edge, arc, isv = [], [], [], [], []
    for e in range(nverts):
        a, b, L = domain.edge_start[e], domain.edge_end[e], domain.edge_length[e]
        m = max(1, int(np.ceil(L / max_gap - 1e-12)))
        lam = np.arange(m) / m
        pts.append(a[None] + lam[:, None] * (b - a)[None])
        loop.append(np.full(m, domain.edge_loop[e]))
        edge.append(np.full(m, e))
        arc.append(domain.edge_arc[e] + lam * L)
        v = np.zeros(m, dtype=bool)
        v[0] = True
        isv.append(v)
    pts = np.concatenate(pts)
    arc = np.concatenate(arc)
    loop = np.concatenate(loop)
    gaps = []
    for li in range(len(domain.loops)):
        s = arc[loop == li]
        gaps.append(np.diff(np.concatenate([s, [domain.loop_length[li]]])).max())
    return BoundarySamples(pts, _eval_datum(datum, pts, arc), loop,
                           np.concatenate(edge), arc, np.concatenate(isv),
                           domain.loop_length.copy(), float(max(gaps)))


# ---------------------------------------------------------------------------
# visibility
# ---------------------------------------------------------------------------

_NBINS = 2048


def source_buckets(domain, y):
    """Bearing-bin edge lists for the sources ``y``, reusable across target chunks."""
    y = np.ascontiguousarray(np.asarray(y, dtype=float).reshape(-1, 2))
    return _kernels.edge_buckets(y, *domain.edge_xy, _NBINS, float(domain.tol))


def visibility_matrix(domain, x, y, x_labels=None, buckets=None):
    """Open-segment visibility between targets ``x`` (n, 2) and sources ``y`` (m, 2).

    Entry (i, k) is True when the open segment (y_k, x_i) lies in the open
    domain.  Sources are expected on the boundary; targets in the closure.
    ``buckets`` may carry the result of :func:`source_buckets` for ``y``.
    """
    x = np.ascontiguousarray(np.asarray(x, dtype=float).reshape(-1, 2))
    y = np.ascontiguousarray(np.asarray(y, dtype=float).reshape(-1, 2))
    if x_labels is None:
        x_labels = domain.classify(x)
    vis = np.zeros((len(x), len(y)), dtype=bool)
    on_b = x_labels == BOUNDARY
    active = (x_labels == INSIDE) | on_b
    if domain.is_convex:
        vis[active] = True
    else:
        idx = np.nonzero(active)[0]
        if len(idx):
            if buckets is None:
                buckets = source_buckets(domain, y)
            vis[idx] = ~_kernels.blocked_bucketed(np.ascontiguousarray(x[idx]), y,
                                                  buckets[0], buckets[1], *domain.edge_xy)
    # only boundary targets can coincide with a source or see it along an edge
    bidx = np.nonzero(on_b)[0]
    if len(bidx):
        mid = 0.5 * (x[bidx, None, :] + y[None])
        ok = (domain.classify(mid.reshape(-1, 2)) == INSIDE).reshape(len(bidx), len(y))
        ok &= np.any(np.abs(x[bidx, None, :] - y[None]) > domain.tol, axis=-1)
        vis[bidx] &= ok
    return vis


def visible(domain, y, x):
    """Whether boundary point ``y`` is visible from ``x``.

    Degenerate input (x equal to y) is not a visibility pair.
    """
    return bool(visibility_matrix(domain, np.asarray(x, float)[None], np.asarray(y, float)[None])[0, 0])


def segments_in_closure(domain, p, q):
    """Elementwise test that the closed segments [p_i, q_i] lie in the closed domain."""
    p = np.ascontiguousarray(np.asarray(p, dtype=float).reshape(-1, 2))
    q = np.ascontiguousarray(np.asarray(q, dtype=float).reshape(-1, 2))
    v = domain.vertices
    return _kernels.closed_ok(p, q, *domain.edge_xy, v[:, 0].copy(), v[:, 1].copy(),
                              float(domain.tol))


# ---------------------------------------------------------------------------
# geodesics
# ---------------------------------------------------------------------------

@dataclass
class GeodesicResult:
    length: float
    polyline: np.ndarray


def _weight_matrix(domain, p, q, body):
    """w[i, j] = polar_gauge(q_j - p_i) when [p_i, q_j] lies in the closure, else inf."""
    pi = np.repeat(np.arange(len(p)), len(q))
    qj = np.tile(np.arange(len(q)), len(p))
    w = np.full(len(pi), np.inf)
    if len(pi):
        ok = segments_in_closure(domain, p[pi], q[qj])
        w[ok] = polar_gauge(body, q[qj[ok]] - p[pi[ok]])
    return w.reshape(len(p), len(q))


def _minplus(a, b):
    out = np.empty((a.shape[0], b.shape[1]))
    step = max(1, _CHUNK // max(a.shape[1] * b.shape[1], 1))
    for k in range(0, a.shape[0], step):
        out[k:k + step] = np.min(a[k:k + step, :, None] + b[None], axis=1)
    return out


def geodesic_distance(domain, x, y, body):
    """Shortest path from ``x`` to ``y`` in the closed domain, length in polar gauge."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nodes = np.concatenate([x[None], y[None], domain.reflex_vertices])
    w = _weight_matrix(domain, nodes, nodes, body)
    np.fill_diagonal(w, np.inf)
    graph = np.where(np.isfinite(w), w, 0.0)
    # zero-length edges would vanish from a dense csgraph input
    graph[np.isfinite(w) & (w == 0)] = 1e-300
    dist, pred = dijkstra(graph, directed=True, indices=0, return_predecessors=True)
    if not np.isfinite(dist[1]):
        raise Unreachable("no admissible path between the points")
    path = [1]
    while path[-1] != 0:
        path.append(pred[path[-1]])
    poly = nodes[path[::-1]]
    length = float(np.sum(polar_gauge(body, np.diff(poly, axis=0))))
    return GeodesicResult(length, poly)


def _pair_geodesics(domain, pts, pairs, body):
    """Geodesic lengths d(pts[i] -> pts[j]) for index pairs (i, j)."""
    i, j = pairs
    direct = np.full(len(i), np.inf)
    ok = segments_in_closure(domain, pts[i], pts[j])
    direct[ok] = polar_gauge(body, pts[j[ok]] - pts[i[ok]])
    R = domain.reflex_vertices
    if len(R) == 0:
        return direct
    w_rr = _weight_matrix(domain, R, R, body)
    np.fill_diagonal(w_rr, 0.0)
    d_rr = shortest_path(np.where(np.isfinite(w_rr), w_rr, 0.0), method="FW", directed=True)
    d_rr[~np.isfinite(d_rr)] = np.inf
    np.fill_diagonal(d_rr, 0.0)
    w_pr = _weight_matrix(domain, pts, R, body)
    w_rp = _weight_matrix(domain, R, pts, body)
    a = _minplus(w_pr, d_rr)
    via = np.empty(len(i))
    step = max(1, _CHUNK // max(len(R), 1))
    for k in range(0, len(i), step):
        via[k:k + step] = np.min(a[i[k:k + step]] + w_rp[:, j[k:k + step]].T, axis=1)
    return np.minimum(direct, via)


@dataclass
class DatumReport:
    is_compatible: bool
    worst_pair: tuple
    margin: float
    chord_ok: bool
    chord_worst_pair: tuple
    chord_margin: float
    n_pairs: int
    n_samples: int
    sample_spacing: float
    tolerance: float

    def to_dict(self):
        return {
            "is_compatible": bool(self.is_compatible),
            "worst_pair": [list(map(float, p)) for p in self.worst_pair],
            "margin": float(self.margin),
            "chord_ok": bool(self.chord_ok),
            "chord_worst_pair": [list(map(float, p)) for p in self.chord_worst_pair],
            "chord_margin": float(self.chord_margin),
            "n_pairs": int(self.n_pairs),
            "n_samples": int(self.n_samples),
            "sample_spacing": float(self.sample_spacing),
            "tolerance": float(self.tolerance),
        }


def validate_datum(domain, samples, body, max_pairs=100_000, seed=0):
    """Check phi(x) - phi(y) <= d_L(y -> x) on sampled boundary pairs.

    The geodesic bound is relaxed by the polygonisation ``length_defect`` of
    curved domains.  The chord condition phi(x) - phi(y) <= polar_gauge(x - y)
    is checked on all pairs and reported separately.
    """
    pts, phi = samples.points, samples.values
    n = len(pts)
    # chord test on every ordered pair, row blocks to bound memory
    worst = (np.inf, 0, 0)
    step = max(1, _CHUNK // n)
    for k in range(0, n, step):
        xs = np.arange(k, min(n, k + step))
        slack = polar_gauge(body, pts[xs, None] - pts[None]) - (phi[xs, None] - phi[None])
        slack[np.arange(len(xs)), xs] = np.inf
        a = np.unravel_index(np.argmin(slack), slack.shape)
        if slack[a] < worst[0]:
            worst = (float(slack[a]), int(xs[a[0]]), int(a[1]))
    chord_margin, cx, cy = worst

    total = n * (n - 1)
    if total <= max_pairs:
        ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    else:
        rng = np.random.default_rng(seed)
        ii = rng.integers(0, n, max_pairs)
        jj = rng.integers(0, n, max_pairs)
        # always include the pair that is tightest for the chord test
        ii[0], jj[0] = cy, cx
        keep = ii != jj
        ii, jj = ii[keep], jj[keep]
    d = _pair_geodesics(domain, pts, (ii, jj), body)
    relax = 1.0 / (1.0 - domain.length_defect)
    slack = d * relax - (phi[jj] - phi[ii])
    k = int(np.argmin(slack))
    tol = max(domain.tol, 1e-12)
    return DatumReport(
        is_compatible=bool(slack[k] >= -tol),
        worst_pair=(tuple(pts[jj[k]]), tuple(pts[ii[k]])),
        margin=float(slack[k]),
        chord_ok=bool(chord_margin >= -tol),
        chord_worst_pair=(tuple(pts[cx]), tuple(pts[cy])),
        chord_margin=float(chord_margin),
        n_pairs=int(len(ii)),
        n_samples=n,
        sample_spacing=samples.spacing,
        tolerance=tol,
    )
