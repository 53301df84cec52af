"""Transport density, weak-form residuals and the uniqueness diagnosis.

Along a ray ``x + t d`` with ``d = Dρ(Du_phi)`` the equation
``-div(v d) = f`` becomes ``dv/dt = -f - v div d``, so with ``v = 0`` at the
ray end

    v(x) = ∫_0^τ f(x + t d) exp(∫_0^t div d) dt.

The exponential factor is the Jacobian ratio of the ray tube; it can also be
measured directly from the spacing between neighbouring rays.
"""

from dataclasses import dataclass, asdict, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import _kernels
from . import domain as dm
from .convex import gauge_gradient, polar_gauge
from .grid import ScalarField, gradient
from .lax_hopf import lax_hopf_min, solve_w_reverse
from .rays import _dilate, detect_sigma, ray_field

DIV_CLAMP = 10.0
RESIDUAL_EPS = 1e-12


class EmptyT(ValueError):
    """The set T is too small for the non-uniqueness witness."""


# ---------------------------------------------------------------------------
# direction field
# ---------------------------------------------------------------------------

@dataclass
class DirectionField:
    theta: np.ndarray
    div_theta: ScalarField
    theta_extended: np.ndarray
    div_extended: np.ndarray


def _extend_nearest(values, valid, mask):
    """Fill ``mask & ~valid`` from the nearest valid node (per component)."""
    if not np.any(valid):
        return np.where(mask[..., None] if values.ndim == 3 else mask, 0.0, np.nan)
    _, (ii, jj) = ndimage.distance_transform_edt(~valid, return_indices=True)
    filled = values[ii, jj]
    keep = valid[..., None] if values.ndim == 3 else valid
    out = np.where(keep, values, filled)
    outside = ~mask[..., None] if values.ndim == 3 else ~mask
    return np.where(outside, np.nan, out)


def direction_divergence(uphi, body, sigma_mask=None, rays=None):
    """``theta = Dρ(Du_phi)`` and its divergence on the grid.

    ``theta`` is the body gradient at the central-difference gradient of
    ``u_phi``, evaluated off Sigma dilated by one cell, and ``div theta`` is
    taken off Sigma dilated by two cells.  With ``rays``, nodes next to Sigma
    but away from D take the ray direction instead, which equals
    ``Dρ(Du_phi)`` and stays exact where rays merely cross a kink; then only
    D is excluded from the divergence.
    Excluded inside nodes take the value of the nearest valid node and are
    flagged in ``theta_extended`` and ``div_extended``.
    """
    grid = uphi.grid
    mask = uphi.mask
    g = gradient(uphi.values, grid.h)
    g_ok = np.all(np.isfinite(g), axis=-1) & (np.hypot(g[..., 0], g[..., 1]) > 1e-12)
    closure = np.isfinite(uphi.values)
    th_c = np.full(grid.shape + (2,), np.nan)
    if np.any(closure & g_ok):
        th_c[closure & g_ok] = gauge_gradient(body, g[closure & g_ok])
    if sigma_mask is None:
        sigma_mask = detect_sigma(uphi, body)[0]
    ok = mask & g_ok & ~_dilate(sigma_mask, 1)
    theta = np.where(ok[..., None], th_c, np.nan)
    bad = sigma_mask
    if rays is not None:
        bad = rays.in_D & mask
        near_kink = rays.regular & ~ok & ~_dilate(bad, 1)
        theta[near_kink] = rays.direction[near_kink]
        ok = ok | near_kink
    theta_f = _extend_nearest(theta, ok, mask)
    # boundary nodes keep their own direction so that differences reach the edge
    th_c[mask] = theta_f[mask]
    dx = gradient(th_c[..., 0], grid.h)[..., 0]
    dy = gradient(th_c[..., 1], grid.h)[..., 1]
    div = dx + dy
    dok = mask & np.isfinite(div) & ~_dilate(bad, 2)
    div_f = _extend_nearest(np.where(dok, div, np.nan), dok, mask)
    return DirectionField(theta=theta_f, div_theta=ScalarField(grid, div_f, mask.copy()),
                          theta_extended=mask & ~ok, div_extended=mask & ~dok)


# ---------------------------------------------------------------------------
# transport density
# ---------------------------------------------------------------------------

def _transverse_ratio(domain, samples, body, uphi, rays, nodes, eta):
    """Spacing ``w(t) = a + t b`` between the rays through ``x ± eta n``.

    ``n`` is the unit normal to the ray at ``x``; the neighbouring rays take
    their directions from their own refined projections.  On a polygonised
    boundary ``eta`` must span several samples, since nearby feet on one
    edge share its normal.
    """
    pts = uphi.grid.points().reshape(-1, 2)
    x = pts[nodes]
    d = rays.direction.reshape(-1, 2)[nodes]
    n = np.stack([-d[:, 1], d[:, 0]], axis=1)
    n /= np.hypot(n[:, 0], n[:, 1])[:, None]
    prev, nxt = samples.neighbors(np.arange(len(samples)))
    dirs, offs = [], []
    for sgn in (1.0, -1.0):
        e = np.broadcast_to(np.asarray(eta, dtype=float), (len(x),)).copy()
        xs = x + sgn * e[:, None] * n
        # pull the probe back toward x until it is inside
        for _ in range(6):
            out = domain.classify(xs) != dm.INSIDE
            if not np.any(out):
                break
            e[out] *= 0.5
            xs[out] = x[out] + sgn * e[out, None] * n[out]
        out = domain.classify(xs) != dm.INSIDE
        xs[out] = x[out]
        e[out] = 0.0
        _, _, foot, _ = lax_hopf_min(domain, body, samples.points, samples.values, xs,
                                     pieces=(prev, nxt))
        v = xs - foot
        dirs.append(v / polar_gauge(body, v)[:, None])
        offs.append(e)
    a = offs[0] + offs[1]
    # match parameters by progress along d, so straight rays give an exact slope
    slope = [np.sum(v * n, axis=1) / np.sum(v * d, axis=1) for v in dirs]
    b = (slope[0] - slope[1]) * polar_gauge(body, d)
    a = np.where(a > 0, a, 1.0)
    b = np.where(offs[0] + offs[1] > 0, b, 0.0)
    return a, b


def solve_vf(uphi, rays, f, div_theta, method="divergence_exponential", domain=None,
             samples=None, body=None, clamp=DIV_CLAMP):
    """Transport density ``v_f`` on the inside nodes.

    ``method`` picks the ray-tube weight: ``divergence_exponential`` uses
    ``exp(∫ div theta)`` with ``div theta`` clamped to ``±clamp/h``;
    ``transverse_spacing`` measures the distance between the neighbouring
    rays ``max(h/4, 16 sample spacings)`` to either side, narrowed to a fifth
    of the tube's focal distance where the rays spread fast, and needs
    ``domain``, ``samples`` and ``body``.  D nodes get ``v = 0``.
    """
    grid = uphi.grid
    h = grid.h
    nodes = np.flatnonzero(rays.mask & ~rays.in_D)
    x = np.ascontiguousarray(grid.points().reshape(-1, 2)[nodes])
    d = np.ascontiguousarray(rays.direction.reshape(-1, 2)[nodes])
    tau = rays.tau.flat[nodes].copy()
    fvals = np.ascontiguousarray(np.where(np.isfinite(f.values), f.values, np.nan))
    dvals = np.ascontiguousarray(div_theta.values)
    if method == "divergence_exponential":
        a = b = np.zeros(0)
    elif method == "transverse_spacing":
        if domain is None or samples is None or body is None:
            raise ValueError("transverse_spacing needs domain, samples and body")
        eta = max(0.25 * h, 16.0 * samples.spacing)
        a, b = _transverse_ratio(domain, samples, body, uphi, rays, nodes, eta)
        # keep the probes well inside the focal distance a/|b| of the tube
        with np.errstate(divide="ignore", invalid="ignore"):
            focal = np.where(np.abs(b) > 0, a / np.abs(b), np.inf)
        narrow = np.maximum(np.minimum(0.2 * focal, eta), 0.25 * h)
        redo = narrow < eta
        if np.any(redo):
            a2, b2 = _transverse_ratio(domain, samples, body, uphi, rays, nodes[redo],
                                       narrow[redo])
            a[redo], b[redo] = a2, b2
    else:
        raise ValueError(f"unknown method {method!r}")
    v = _kernels.integrate_rays(x, d, tau, fvals, dvals, grid.origin[0], grid.origin[1], h,
                                clamp / h, np.ascontiguousarray(a), np.ascontiguousarray(b))
    out = np.full(grid.shape, np.nan)
    out[rays.mask] = 0.0
    out.flat[nodes] = v
    return ScalarField(grid, out, rays.mask.copy())


@dataclass
class TransportSolution:
    v: ScalarField
    theta: np.ndarray
    div_theta: ScalarField
    alpha_method: str


def solve_transport(domain, samples, body, uphi, rays, f, method="divergence_exponential"):
    """Direction field plus ``v_f`` in one call."""
    geo = direction_divergence(uphi, body, rays=rays)
    v = solve_vf(uphi, rays, f, geo.div_theta, method=method, domain=domain,
                 samples=samples, body=body)
    return TransportSolution(v, geo.theta, geo.div_theta, method)


# ---------------------------------------------------------------------------
# weak form
# ---------------------------------------------------------------------------

def _bump(t):
    inside = np.abs(t) < 1.0
    tt = np.where(inside, t, 0.0)
    q = 1.0 - tt * tt
    b = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    db = np.where(inside, b * (-2.0 * tt / (q * q)), 0.0)
    return b, db


@dataclass(frozen=True)
class Bump:
    """Tensor bump ``b((x - cx)/rx) b((y - cy)/ry)`` with ``b(t) = exp(1 - 1/(1 - t²))``."""

    cx: float
    cy: float
    rx: float
    ry: float

    def __call__(self, pts):
        bx, _ = _bump((pts[..., 0] - self.cx) / self.rx)
        by, _ = _bump((pts[..., 1] - self.cy) / self.ry)
        return bx * by

    def grad(self, pts):
        bx, dbx = _bump((pts[..., 0] - self.cx) / self.rx)
        by, dby = _bump((pts[..., 1] - self.cy) / self.ry)
        return np.stack([dbx * by / self.rx, bx * dby / self.ry], axis=-1)


def _tile_bumps(domain, n, probe=9):
    """One bump per tile of the bounding box, centred at its deepest inside probe."""
    lo, hi = domain.bbox
    cell = (hi - lo) / n
    u = (np.arange(probe) + 0.5) / probe
    local = np.stack(np.meshgrid(u, u, indexing="ij"), -1).reshape(-1, 2)
    out = []
    for j in range(n):
        for i in range(n):
            pts = lo + (np.array([i, j]) + local) * cell
            inside = domain.classify(pts) == dm.INSIDE
            if not np.any(inside):
                continue
            pts = pts[inside]
            dist = domain.boundary_distance(pts)
            k = int(np.argmax(dist))
            # a square of half-width r sits in the disc of radius r sqrt(2)
            r = float(min(0.5 * cell.min(), 0.95 * dist[k] / np.sqrt(2.0)))
            if r > 0:
                out.append(Bump(float(pts[k, 0]), float(pts[k, 1]), r, r))
    if not out:
        raise ValueError("could not fit the test functions inside the domain")
    return out


def bump_tests(domain, n=4, shrink=0.95, probe=64):
    """``n × n`` bumps tiling a box that, with every support, lies inside the domain.

    When no such box is found (non-convex domains) there is one bump per tile
    of the bounding box that meets the domain, sized to stay inside it.
    """
    lo, hi = domain.bbox
    c = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    s = np.linspace(-1.0, 1.0, probe)
    edge = np.concatenate([np.stack([s, np.full_like(s, v)], 1) for v in (-1.0, 1.0)]
                          + [np.stack([np.full_like(s, v), s], 1) for v in (-1.0, 1.0)])
    grid_pts = np.stack(np.meshgrid(s, s, indexing="ij"), -1).reshape(-1, 2)
    probe_pts = np.concatenate([edge, grid_pts])
    scale = 1.0
    for _ in range(60):
        pts = c + scale * half * probe_pts
        if np.all(domain.classify(pts) == dm.INSIDE):
            break
        scale *= shrink
    else:
        return _tile_bumps(domain, n)
    box_lo = c - scale * half
    cell = 2.0 * scale * half / n
    return [Bump(float(box_lo[0] + (i + 0.5) * cell[0]), float(box_lo[1] + (j + 0.5) * cell[1]),
                 float(0.5 * cell[0]), float(0.5 * cell[1]))
            for j in range(n) for i in range(n)]


def weak_residual(v, theta, f, tests):
    """Normalised residuals of ``∫ v <theta, ∇ψ> = ∫ f ψ`` for each test ``ψ``.

    The normaliser is ``∫ f ψ``; for a test where the source vanishes it is
    ``∫ v |<theta, ∇ψ>|`` instead, so a homogeneous equation is measured
    relative to its own flux.
    """
    grid = v.grid
    h2 = grid.h ** 2
    pts = grid.points()
    mask = v.mask
    vv = np.where(mask, np.nan_to_num(v.values), 0.0)
    th = np.where(mask[..., None], np.nan_to_num(theta), 0.0)
    ff = np.where(mask, np.nan_to_num(f.values if f is not None else np.zeros(grid.shape)), 0.0)
    out = []
    for psi in tests:
        phi = psi(pts)
        gphi = psi.grad(pts)
        flux = vv * np.sum(th * gphi, axis=-1)
        lhs = float(np.sum(flux) * h2)
        rhs = float(np.sum(ff * phi) * h2)
        norm = rhs if rhs > RESIDUAL_EPS else float(np.sum(np.abs(flux)) * h2)
        out.append(abs(lhs - rhs) / (norm + RESIDUAL_EPS))
    return out


# ---------------------------------------------------------------------------
# witness and diagnosis
# ---------------------------------------------------------------------------

def t_tolerance(domain, h):
    """Area below which T counts as negligible at resolution ``h``."""
    return 5.0 * h * domain.perimeter


@dataclass
class Witness:
    v_plus: ScalarField
    v_minus: ScalarField
    residuals: list

    @property
    def combined(self):
        return ScalarField(self.v_plus.grid, self.v_plus.values + self.v_minus.values,
                           self.v_plus.mask)


def nonuniqueness_witness(domain, samples, body, uphi, sets, theta, tests=None, rays=None):
    """Two transport densities whose sum solves the homogeneous equation.

    ``g`` is the indicator of T.  ``v_plus`` carries ``g`` along the forward
    rays, ``v_minus`` along the rays of the reverse field ``w_phi``, which on
    T run the opposite way.  Returns both together with the residuals of
    ``v_plus + v_minus`` against zero source.
    """
    grid = uphi.grid
    if sets.t_measure_estimate <= t_tolerance(domain, grid.h):
        raise EmptyT(f"T has measure {sets.t_measure_estimate:.3g}")
    g = ScalarField(grid, np.where(uphi.mask, sets.t_mask.astype(float), np.nan), uphi.mask)
    fwd_rays = ray_field(domain, samples, body, uphi) if rays is None else rays
    fwd = direction_divergence(uphi, body, rays=fwd_rays)
    v_plus = solve_vf(uphi, fwd_rays, g, fwd.div_theta)
    rsamples, rbody = samples.negated(), body.reversed()
    w = solve_w_reverse(domain, samples, body, grid=grid)
    rev_rays = ray_field(domain, rsamples, rbody, w)
    rev = direction_divergence(w, rbody, rays=rev_rays)
    v_minus = solve_vf(w, rev_rays, g, rev.div_theta)
    if tests is None:
        tests = bump_tests(domain)
    total = ScalarField(grid, v_plus.values + v_minus.values, uphi.mask)
    res = weak_residual(total, theta, None, tests)
    return Witness(v_plus, v_minus, res)


def support_mask(grid, source, mask):
    """Closed support of a source at cell resolution.

    ``source`` is a callable on points.  Every corner of a cell whose centre
    has a positive source value belongs to the support, as does every node
    with a positive value.
    """
    pts = grid.points()
    centres = pts[:-1, :-1] + 0.5 * grid.h
    pos = np.asarray(source(centres)) > 0
    out = np.asarray(source(pts)) > 0
    out[:-1, :-1] |= pos
    out[1:, :-1] |= pos
    out[:-1, 1:] |= pos
    out[1:, 1:] |= pos
    return out if mask is None else out & mask


@dataclass
class Diagnosis:
    t_measure: float
    t_tolerance: float
    v_unique: bool
    j_in_support: bool
    u_unique: bool
    energy_gap: float
    weak_residuals: list
    witness_lambda_residual: float = None
    j_points_in_domain: int = 0
    j_points_outside_support: list = field(default_factory=list)
    caveats: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def j_in_support(domain, sets, support, grid):
    """Whether every J point away from the boundary is within ``h`` of the support."""
    h = grid.h
    j = sets.j_points
    if len(j):
        j = j[domain.boundary_distance(j) > 2.0 * h]
    if len(j) == 0:
        return True, 0, []
    spt = grid.points()[support]
    if len(spt) == 0:
        return False, len(j), j.tolist()
    dist, _ = cKDTree(spt).query(j)
    bad = j[dist > h * (1 + 1e-9)]
    return len(bad) == 0, len(j), bad.tolist()


def diagnose(domain, uphi, uf, vf, sets, f, support, residuals, witness_residuals=None):
    """Uniqueness report for the ``v`` and ``u`` components."""
    grid = uphi.grid
    h = grid.h
    tol = t_tolerance(domain, h)
    ok, nj, bad = j_in_support(domain, sets, support, grid)
    m = uphi.mask
    fv = np.where(m, np.nan_to_num(f.values), 0.0)
    gap = h * h * abs(float(np.sum(fv * np.where(m, uphi.values, 0.0)))
                      - float(np.sum(fv * np.where(m, uf.values, 0.0))))
    caveats = ["E-segments are harvested from grid rays; corridors thinner than h may be missed"]
    return Diagnosis(
        t_measure=float(sets.t_measure_estimate),
        t_tolerance=float(tol),
        v_unique=bool(sets.t_measure_estimate <= tol),
        j_in_support=bool(ok),
        u_unique=bool(ok),
        energy_gap=float(gap),
        weak_residuals=[float(r) for r in residuals],
        witness_lambda_residual=None if witness_residuals is None else float(max(witness_residuals)),
        j_points_in_domain=int(nj),
        j_points_outside_support=bad[:50],
        caveats=caveats,
    )
