import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from sandtray import domain as dm
from sandtray import lax_hopf as lh
from sandtray.convex import ConvexBody, gauge, polar_gauge
from sandtray.grid import ScalarField, gradient
from sandtray.rays import detect_sigma, _dilate

S2 = np.sqrt(2.0)
BALL = ConvexBody.ball()
LENS = ConvexBody.lens().polar()
H = 1 / 32


@pytest.fixture(scope="module")
def square_setup():
    d = dm.square()
    s = dm.sample_boundary(d, 160, lambda p, arc: p[:, 1])
    return d, s, lh.solve_uphi(d, s, BALL, h=H)


@pytest.fixture(scope="module")
def hexagon_setup():
    d = dm.hexagon()
    s = dm.sample_boundary(d, 600)
    return d, s, lh.solve_uphi(d, s, LENS, h=H)


def _hexagon_exact(x, y):
    return np.minimum(S2 * (1 - np.abs(y)), S2 * (2 - np.abs(x) - np.abs(y)))


# -- pointwise examples -----------------------------------------------------

def test_square_value(square_setup):
    d, s, _ = square_setup
    assert lh.lax_hopf_value(d, s, BALL, np.array([[0.5, 0.3]]))[0] == pytest.approx(0.3,
                                                                                     abs=1e-12)


def test_hexagon_values():
    d = dm.hexagon()
    s = dm.sample_boundary(d, 600)
    u = lh.lax_hopf_value(d, s, LENS, np.array([[0.0, 0.0], [1.5, 0.0]]))
    assert u == pytest.approx([S2, S2 / 2], abs=1e-12)


def _blocked(x, y):
    """Open segment from x to y meets the removed quarter of the L-shape."""
    lam = np.linspace(0.001, 0.999, 999)[:, None]
    seg = x[None] + lam * (np.atleast_2d(y)[:, None] - x[None])
    return np.any((seg[..., 0] > 0.5) & (seg[..., 1] > 0.5), axis=-1)


def test_l_shape_matches_dense_brute_force():
    d = dm.l_shape()
    phi = lambda p: 0.5 * np.asarray(p)[..., 0]
    s = dm.sample_boundary(d, 240, lambda p, arc: phi(p))
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, size=(400, 2))
    x = x[d.classify(x) == dm.INSIDE][:60]
    u = lh.lax_hopf_value(d, s, BALL, x)
    # oracle: dense boundary points with visibility by sampling the segment,
    # then a bounded scalar search around the best one on its edge
    t = np.linspace(0, 1, 2001)
    loop = np.concatenate([d.outer, d.outer[:1]])
    for xi, ui in zip(x, u):
        best = np.inf
        for a, b in zip(loop[:-1], loop[1:]):
            pts = a + t[:, None] * (b - a)
            cost = phi(pts) + np.hypot(*(pts - xi).T)
            cost[_blocked(xi, pts)] = np.inf
            k = int(np.argmin(cost))
            if not np.isfinite(cost[k]):
                continue
            f = lambda r: phi(a + r * (b - a)) + np.hypot(*(a + r * (b - a) - xi))
            lo, hi = t[max(k - 1, 0)], t[min(k + 1, len(t) - 1)]
            r = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                options={"xatol": 1e-12}).x
            val = f(r) if not _blocked(xi, a + r * (b - a))[0] else cost[k]
            best = min(best, val)
        assert ui == pytest.approx(best, abs=1e-9)


def test_reverse_field_values():
    d = dm.square()
    s = dm.sample_boundary(d, 160, lambda p, arc: p[:, 1])
    w = lh.solve_w_reverse(d, s, BALL, h=0.1)
    i, j = w.grid.index_of((0.5, 0.3))
    assert w.values[i, j] == pytest.approx(-0.3, abs=1e-12)
    # boundary samples carry the negated datum
    assert np.allclose(w.interpolate(s.points[s.is_vertex]), -s.values[s.is_vertex], atol=1e-12)


def test_reverse_field_on_disk_is_distance():
    d = dm.disk(1.0, 360)
    s = dm.sample_boundary(d, 360)
    w = lh.solve_w_reverse(d, s, BALL, h=1 / 16)
    r = np.hypot(*w.grid.points()[w.mask].T)
    assert np.max(np.abs(w.values[w.mask] - (1 - r))) <= 1e-4


# -- u_f --------------------------------------------------------------------

def test_uf_equals_uphi_on_full_support(square_setup):
    d, s, u = square_setup
    uf = lh.solve_uf(d, s, BALL, u.grid, u, u.mask)
    assert np.array_equal(uf.values[u.mask], u.values[u.mask])


def test_uf_without_source_on_square(square_setup):
    d, s, u = square_setup
    uf = lh.solve_uf(d, s, BALL, u.grid, u, np.zeros(u.grid.shape, bool))
    # T is the whole square, so u_f still equals u_phi = y
    y = u.grid.points()[..., 1]
    assert np.max(np.abs(uf.values - y)[u.mask]) <= 1e-12


def test_uf_without_source_on_disk_is_minus_distance():
    d = dm.disk(1.0, 360)
    s = dm.sample_boundary(d, 360)
    u = lh.solve_uphi(d, s, BALL, h=1 / 16)
    uf = lh.solve_uf(d, s, BALL, u.grid, u, np.zeros(u.grid.shape, bool))
    r = np.hypot(*u.grid.points()[u.mask].T)
    assert np.max(np.abs(uf.values[u.mask] + (1 - r))) <= 1e-4
    i, j = u.grid.index_of((0.0, 0.0))
    assert uf.values[i, j] == pytest.approx(-1.0, abs=1e-4)
    assert uf.values[i, j] < u.values[i, j]


def test_uf_with_annulus_source_dips_below_uphi_at_centre():
    d = dm.disk(1.0, 360)
    s = dm.sample_boundary(d, 360)
    u = lh.solve_uphi(d, s, BALL, h=1 / 32)
    r = np.hypot(*np.moveaxis(u.grid.points(), -1, 0))
    support = u.mask & (r >= 0.5)
    uf = lh.solve_uf(d, s, BALL, u.grid, u, support)
    # inside the hole u_f = max over the support circle of u_phi - distance
    inner = u.mask & (r < 0.5 - 2 * u.grid.h)
    expected = 0.5 - (0.5 - r)
    assert np.max(np.abs(uf.values[inner] - expected[inner])) <= 2 * u.grid.h
    assert np.all(uf.values[support] == u.values[support])


# -- membership report ------------------------------------------------------

def test_xphi_report_on_square(square_setup):
    d, s, u = square_setup
    rep = lh.check_xphi_membership(u, d, s, BALL)
    assert rep.boundary_error <= 2 * H
    assert rep.lipschitz_violation <= 1e-12
    assert rep.gradient_gauge_max <= 1 + H


def test_xphi_report_on_zero_field():
    d = dm.square()
    s = dm.sample_boundary(d, 40)
    u = lh.solve_uphi(d, s, BALL, h=0.1)
    zero = ScalarField(u.grid, np.where(u.mask | np.isfinite(u.values), 0.0, np.nan), u.mask)
    rep = lh.check_xphi_membership(zero, d, s, BALL)
    assert rep.boundary_error == 0 and rep.lipschitz_violation <= 0
    assert rep.gradient_gauge_max == 0


def test_xphi_report_detects_a_bump(square_setup):
    d, s, u = square_setup
    p = u.grid.points()
    r2 = np.sum((p - 0.5) ** 2, axis=-1)
    q = np.clip(1 - r2 / 0.04, 1e-3, None)
    bump = np.where(r2 < 0.04, 0.1 * np.exp(1 - 1 / q), 0.0)
    f = ScalarField(u.grid, u.values + bump, u.mask)
    rep = lh.check_xphi_membership(f, d, s, BALL)
    assert rep.boundary_error <= 2 * H
    assert rep.lipschitz_violation > 0.01


# -- invariants -------------------------------------------------------------

def test_hexagon_closed_form(hexagon_setup):
    d, s, u = hexagon_setup
    p = u.grid.points()
    err = np.abs(u.values - _hexagon_exact(p[..., 0], p[..., 1]))[u.mask]
    assert err.max() <= 1e-9


@pytest.mark.parametrize("which", ["square", "hexagon"])
def test_maximality(which, square_setup, hexagon_setup):
    d, s, u = square_setup if which == "square" else hexagon_setup
    body = BALL if which == "square" else LENS
    p = u.grid.points()
    support = u.mask & (np.hypot(p[..., 0] - 0.3, p[..., 1] - 0.4) < 0.2)
    uf = lh.solve_uf(d, s, body, u.grid, u, support)
    w = lh.solve_w_reverse(d, s, body, grid=u.grid)
    m = u.mask
    assert np.max((uf.values - u.values)[m]) <= 1e-10
    assert np.max((-w.values - u.values)[m]) <= 1e-10


def test_eikonal_saturation_off_sigma(hexagon_setup):
    d, s, u = hexagon_setup
    sigma, _ = detect_sigma(u, LENS)
    far = u.mask & ~_dilate(sigma, 2)
    # keep central differences inside the domain
    far &= d.boundary_distance(u.grid.points()) > 1.5 * H
    g = gradient(u.values, H)[far]
    rho = gauge(LENS, g)
    assert np.all(np.abs(rho - 1) <= 5 * H)


@pytest.mark.parametrize("which", ["square", "hexagon"])
def test_boundary_agreement(which, square_setup, hexagon_setup):
    d, s, u = square_setup if which == "square" else hexagon_setup
    body = BALL if which == "square" else LENS
    c2 = polar_gauge(body, np.stack([np.cos(np.linspace(0, 2 * np.pi, 721)),
                                     np.sin(np.linspace(0, 2 * np.pi, 721))], 1)).max()
    p = u.grid.points()
    support = u.mask & (np.hypot(p[..., 0], p[..., 1] - 0.5) < 0.2)
    uf = lh.solve_uf(d, s, body, u.grid, u, support)
    w = lh.solve_w_reverse(d, s, body, grid=u.grid)
    tol = 2 * H * c2
    assert np.max(np.abs(u.interpolate(s.points) - s.values)) <= tol
    assert np.max(np.abs(uf.interpolate(s.points) - s.values)) <= tol
    assert np.max(np.abs(w.interpolate(s.points) + s.values)) <= tol


@pytest.mark.parametrize("which", ["square", "hexagon"])
def test_chord_datum_reduces_to_unrestricted_min(which, square_setup, hexagon_setup):
    d, s, u = square_setup if which == "square" else hexagon_setup
    body = BALL if which == "square" else LENS
    assert dm.validate_datum(d, s, body).chord_ok
    free = lh.unrestricted_min(s, body, u.grid.points()[u.mask])
    assert np.max(np.abs(free - u.values[u.mask])) <= 2 * H


def test_near_set_holds_every_sample_within_delta(square_setup):
    d, s, u = square_setup
    i, j = u.grid.index_of((0.5, 0.3))
    idx, vals = u.near_set(i, j)
    brute = s.values + polar_gauge(BALL, u.grid.points()[i, j] - s.points)
    assert set(idx.tolist()) == set(np.flatnonzero(brute <= u.values[i, j] + u.delta + 1e-12))
    assert np.allclose(vals, brute[idx])
    assert u.argmin[i, j] == int(np.argmin(brute))

