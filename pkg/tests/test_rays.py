import numpy as np
import pytest

from sandtray import domain as dm
from sandtray import lax_hopf as lh
from sandtray import rays as rf
from sandtray.convex import ConvexBody, polar_gauge

BALL = ConvexBody.ball()
LENS = ConvexBody.lens().polar()


def _setup(domain, samples, body, h, datum=None):
    s = dm.sample_boundary(domain, samples, datum)
    u = lh.solve_uphi(domain, s, body, h=h)
    rays = rf.ray_field(domain, s, body, u)
    sets = rf.detect_singular_sets(domain, s, body, u, rays)
    return domain, s, body, u, rays, sets


@pytest.fixture(scope="module")
def square():
    return _setup(dm.square(), 160, BALL, 1 / 32, lambda p, arc: p[:, 1])


@pytest.fixture(scope="module")
def disk():
    return _setup(dm.disk(1.0, 360), 360, BALL, 1 / 32)


@pytest.fixture(scope="module")
def hexagon():
    return _setup(dm.hexagon(), 600, LENS, 1 / 32)


def _node(u, p):
    i, j = u.grid.index_of(p)
    assert np.allclose(u.grid.points()[i, j], p)
    return i, j


# -- projections and single rays --------------------------------------------

def test_square_projection_is_the_vertical_foot(square):
    d, s, body, u, rays, _ = square
    i, j = _node(u, (0.5, 0.3125))
    clusters = rf.projections(u, s, body, i, j)
    assert len(clusters) == 1
    assert np.allclose(s.points[clusters[0][0]], (0.5, 0.0))


def test_square_ray(square):
    d, s, body, u, _, _ = square
    i, j = _node(u, (0.5, 0.3125))
    r = rf.ray_of(d, s, body, u, i, j)
    assert np.allclose(r["direction"], (0.0, 1.0))
    assert r["tau"] == pytest.approx(1 - 0.3125, abs=1e-9)
    assert np.allclose(r["endpoint"], (0.5, 1.0)) and r["reaches_boundary"]


def test_disk_centre_is_in_d(disk):
    d, s, body, u, rays, _ = disk
    i, j = _node(u, (0.0, 0.0))
    assert rays.in_D[i, j] and rays.tau[i, j] == 0.0
    clusters = rf.projections(u, s, body, i, j)
    assert len(clusters) >= 2 or rf.near_set_wraps(u, s, i, j)
    with pytest.raises(rf.MultivaluedDirection):
        rf.ray_of(d, s, body, u, i, j)


def test_disk_radial_ray(disk):
    d, s, body, u, _, _ = disk
    h = u.grid.h
    i, j = _node(u, (0.5, 0.0))
    r = rf.ray_of(d, s, body, u, i, j)
    # the foot sits on an inscribed edge, tilting the ray by up to half its angle
    assert np.allclose(r["direction"], (-1.0, 0.0), atol=np.pi / 360 + 1e-9)
    assert r["tau"] == pytest.approx(0.5, abs=2 * h)
    assert np.hypot(*r["endpoint"]) <= 2 * h and not r["reaches_boundary"]


def test_hexagon_projections(hexagon):
    d, s, body, u, rays, _ = hexagon
    i, j = _node(u, (0.0, 0.5))
    clusters = rf.projections(u, s, body, i, j)
    assert len(clusters) == 1
    foot = s.points[clusters[0][0]]
    assert foot[1] == 1.0 and abs(foot[0]) <= s.spacing
    i, j = _node(u, (0.5, 0.0))
    clusters = rf.projections(u, s, body, i, j)
    feet = np.array(sorted(tuple(s.points[c[0]]) for c in clusters))
    assert len(clusters) == 2
    assert np.array_equal(feet[:, 1], [-1.0, 1.0])
    assert np.all(np.abs(feet[:, 0] - 0.5) <= s.spacing)
    assert rays.in_D[i, j]


def test_projection_delta_cannot_exceed_stored_width(square):
    d, s, body, u, _, _ = square
    with pytest.raises(ValueError):
        rf.projections(u, s, body, 16, 16, delta=2 * u.delta)


# -- Sigma ------------------------------------------------------------------

def test_sigma_examples(square, disk, hexagon):
    assert not square[5].sigma_mask.any()
    u, sig = disk[3], disk[5].sigma_mask
    h = u.grid.h
    assert sig.any()
    # the cone 1 - r bends by about h / r per cell, so the band reaches r ~ h / tol
    assert np.all(np.hypot(*u.grid.points()[sig].T) <= h / rf.SIGMA_TOL + h)
    u, sig = hexagon[3], hexagon[5].sigma_mask
    p = u.grid.points()[sig]
    near_axis = np.abs(p[:, 1]) <= h + 1e-12
    near_lines = np.abs(np.abs(p[:, 0]) - 1) <= h + 1e-12
    assert np.all(near_axis | near_lines)


# -- singular sets ----------------------------------------------------------

def test_square_sets(square):
    d, s, body, u, rays, sets = square
    h = u.grid.h
    assert not sets.d_mask.any()
    assert sets.t_measure_estimate >= 0.9
    p, q = sets.e_pairs[:, 0], sets.e_pairs[:, 1]
    assert len(sets.e_pairs) > 10
    assert np.allclose(p[:, 0], q[:, 0]) and np.allclose(p[:, 1], 0) and np.allclose(q[:, 1], 1)
    # u_phi is affine with unit slope along each E segment
    for a, b in sets.e_pairs[::5]:
        t = np.linspace(0.05, 0.95, 10)
        pts = a + t[:, None] * (b - a)
        vals = u.interpolate(pts)
        expect = s.interpolate(d, a[None])[0] + polar_gauge(body, pts - a)
        assert np.max(np.abs(vals - expect)) <= 1e-9


def test_disk_sets(disk):
    d, s, body, u, rays, sets = disk
    h = u.grid.h
    assert sets.d_mask.any()
    assert np.all(np.hypot(*sets.j_points.T) <= 1.5 * h)
    assert sets.t_measure_estimate == 0.0
    assert sets.d_in_sigma and sets.j_in_d_closure


def test_hexagon_sets(hexagon):
    d, s, body, u, rays, sets = hexagon
    h = u.grid.h
    pd = u.grid.points()[sets.d_mask]
    assert len(pd) and np.all(np.abs(pd[:, 1]) <= h + 1e-12)
    assert sets.d_in_sigma and sets.j_in_d_closure


def test_sets_document_is_plain(hexagon):
    doc = hexagon[5].to_dict()
    assert doc["d_nodes"] == int(hexagon[5].d_mask.sum())
    assert all(isinstance(c, float) for p in doc["j_points"] for c in p)


# -- invariants -------------------------------------------------------------

@pytest.mark.parametrize("name", ["square", "disk", "hexagon"])
def test_in_d_agrees_with_projections(name, request):
    d, s, body, u, rays, _ = request.getfixturevalue(name)
    rng = np.random.default_rng(7)
    nodes = np.argwhere(u.mask)
    pick = nodes[rng.choice(len(nodes), 60, replace=False)]
    pick = np.concatenate([pick, np.argwhere(rays.in_D)])
    for i, j in pick:
        multi = len(rf.projections(u, s, body, i, j)) >= 2 or rf.near_set_wraps(u, s, i, j)
        assert bool(rays.in_D[i, j]) == multi


@pytest.mark.parametrize("name", ["square", "disk", "hexagon"])
def test_d_inside_sigma_and_j_near_d(name, request):
    d, s, body, u, rays, sets = request.getfixturevalue(name)
    h = u.grid.h
    assert np.all(rf._dilate(sets.sigma_mask, 1)[sets.d_mask])
    ends = sets.j_points[~sets.j_from_d]
    ends = ends[d.boundary_distance(ends) > 3 * h] if len(ends) else ends
    if len(ends) and sets.d_mask.any():
        pd = u.grid.points()[sets.d_mask]
        dist = np.min(np.hypot(*(ends[:, None] - pd[None]).transpose(2, 0, 1)), axis=1)
        assert np.all(dist <= 2 * np.sqrt(2) * h + 1e-12)


@pytest.mark.parametrize("name", ["square", "disk", "hexagon"])
def test_linear_growth_along_rays(name, request):
    d, s, body, u, rays, _ = request.getfixturevalue(name)
    h = u.grid.h
    rng = np.random.default_rng(8)
    nodes = np.argwhere(rays.regular & (rays.tau > 2 * h))
    for i, j in nodes[rng.choice(len(nodes), 30, replace=False)]:
        p, q = rays.foot[i, j], rays.endpoint[i, j]
        phi_p = s.interpolate(d, p[None])[0]
        t = np.linspace(0.05, 0.95, 10)
        pts = p + t[:, None] * (q - p)
        expect = phi_p + polar_gauge(body, pts - p)
        assert np.max(np.abs(u.interpolate(pts) - expect)) <= 3 * h


@pytest.mark.parametrize("name", ["square", "disk", "hexagon"])
def test_positive_tau_away_from_d(name, request):
    d, s, body, u, rays, sets = request.getfixturevalue(name)
    far = rays.regular & ~rf._dilate(sets.d_mask, 2)
    assert np.all(rays.tau[far] > 0)


@pytest.mark.parametrize("name", ["square", "hexagon"])
def test_projection_constancy_along_rays(name, request):
    d, s, body, u, rays, _ = request.getfixturevalue(name)
    h = u.grid.h
    rng = np.random.default_rng(9)
    nodes = np.argwhere(rays.regular & (rays.tau > 4 * h))
    for i, j in nodes[rng.choice(len(nodes), 10, replace=False)]:
        foot = rays.foot[i, j]
        x = u.grid.points()[i, j]
        for t in np.linspace(0.2, 0.8, 5) * rays.tau[i, j]:
            z = x + t * rays.direction[i, j]
            _, _, fz, _ = lh.lax_hopf_min(d, body, s.points, s.values, z[None],
                                          pieces=s.neighbors(np.arange(len(s))))
            vz = lh.lax_hopf_value(d, s, body, z[None])[0]
            cost = s.interpolate(d, foot[None])[0] + polar_gauge(body, z - foot)
            assert cost - vz <= u.delta


def test_j_area_shrinks_with_h():
    def j_cells(h, samples):
        d, s, body, u, rays, sets = _setup(dm.disk(1.0, samples), samples, BALL, h)
        i, j = u.grid.index_of(sets.j_points)
        return len(set(zip(i.tolist(), j.tolist()))) * h * h

    coarse, fine = j_cells(1 / 32, 180), j_cells(1 / 64, 360)
    assert fine <= coarse / 2
