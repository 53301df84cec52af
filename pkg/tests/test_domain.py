import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sandtray import domain as dm
from sandtray.convex import ConvexBody, polar_gauge
from sandtray.expr import polar_angle

BALL = ConvexBody.ball()
SQUARE = dm.square()
L = dm.l_shape()
HOLED = dm.PolygonalDomain([(0, 0), (3, 0), (3, 3), (0, 3)],
                           [[(1, 1), (2, 1), (2, 2), (1, 2)]], name="frame")


def _brute_geodesic(domain, x, y, body):
    """Shortest path over every ordered chain of at most three polygon vertices."""
    verts = [tuple(v) for v in domain.vertices]
    best = np.inf
    for k in range(4):
        for chain in itertools.permutations(verts, k):
            path = np.array([x, *chain, y], dtype=float)
            ok = dm.segments_in_closure(domain, path[:-1], path[1:])
            if np.all(ok):
                best = min(best, float(np.sum(polar_gauge(body, np.diff(path, axis=0)))))
    return best


# -- membership and sampling ------------------------------------------------

def test_contains_examples():
    assert dm.contains(SQUARE, (0.5, 0.5)) == "inside"
    assert dm.contains(SQUARE, (0.5, 0.0)) == "boundary"
    assert dm.contains(dm.hexagon(), (2.5, 0.0)) == "outside"
    assert dm.contains(HOLED, (1.5, 1.5)) == "outside"
    assert dm.contains(HOLED, (1.0, 1.5)) == "boundary"


def test_square_samples_include_corners():
    s = dm.sample_boundary(SQUARE, 8, lambda p, arc: p[:, 1])
    assert len(s) == 8
    corners = {(0, 0), (1, 0), (1, 1), (0, 1)}
    assert corners <= {tuple(p) for p in s.points}
    assert np.all((s.values >= 0) & (s.values <= 1))
    assert np.allclose(s.values, s.points[:, 1])


def test_square_four_samples_are_the_corners():
    s = dm.sample_boundary(SQUARE, 4)
    assert len(s) == 4 and np.all(s.is_vertex)
    assert np.all(s.values == 0)


def test_hexagon_sample_spacing():
    hexa = dm.hexagon()
    s = dm.sample_boundary(hexa, 600)
    assert len(s) >= 600
    gaps = np.diff(np.concatenate([s.arc, [hexa.perimeter]]))
    assert gaps.max() <= hexa.perimeter / 600 + 1e-12
    assert s.spacing == pytest.approx(gaps.max())


def test_too_few_samples_rejected():
    with pytest.raises(ValueError):
        dm.sample_boundary(dm.hexagon(), 5)


def test_samples_walk_every_loop():
    s = dm.sample_boundary(HOLED, 48)
    # perimeters 12 and 4 at a maximum gap of 16/48
    assert list(s.loop_size) == [36, 12]
    prev, nxt = s.neighbors(np.arange(len(s)))
    assert np.all(s.loop[prev] == s.loop) and np.all(s.loop[nxt] == s.loop)


def test_invalid_polygons_rejected():
    with pytest.raises(ValueError):
        dm.PolygonalDomain([(0, 0), (1, 1), (1, 0), (0, 1)])
    with pytest.raises(ValueError):
        dm.PolygonalDomain([(0, 0), (1, 0), (1, 1), (0, 1)], [[(0.5, 0.5), (2, 0.5), (2, 2)]])


def test_curved_presets_record_length_defect():
    assert SQUARE.length_defect == 0.0
    d = dm.disk(1.0, 360)
    assert d.length_defect == pytest.approx(1 - np.cos(np.pi / 360))
    # the chord perimeter falls short of 2 pi by at most that defect
    assert 1 - d.perimeter / (2 * np.pi) <= d.length_defect


# -- visibility -------------------------------------------------------------

def test_convex_domain_sees_everything():
    s = dm.sample_boundary(SQUARE, 40)
    x = np.random.default_rng(0).uniform(0.01, 0.99, size=(30, 2))
    assert np.all(dm.visibility_matrix(SQUARE, x, s.points))


def test_l_shape_notch_blocks():
    assert not dm.visible(L, (0.9, 0.5), (0.1, 0.9))
    assert dm.visible(L, (0.9, 0.5), (0.9, 0.1))


def test_degenerate_pair_not_visible():
    assert not dm.visible(SQUARE, (0.5, 0.0), (0.5, 0.0))


def test_segment_along_an_edge_is_not_visible():
    assert not dm.visible(SQUARE, (0.2, 0.0), (0.8, 0.0))


def test_hole_blocks_visibility():
    assert not dm.visible(HOLED, (1.5, 0.0), (1.5, 2.5))
    assert dm.visible(HOLED, (1.5, 0.0), (1.5, 0.5))


def _boundary_points(domain, rng, n):
    s = dm.sample_boundary(domain, 200)
    return s.points[rng.choice(len(s), n)]


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_visibility_is_symmetric_on_boundary_pairs(seed):
    rng = np.random.default_rng(seed)
    for domain in (L, HOLED):
        a, b = _boundary_points(domain, rng, 2)
        assert dm.visible(domain, a, b) == dm.visible(domain, b, a)


# -- geodesics --------------------------------------------------------------

def test_convex_geodesic_is_segment():
    r = dm.geodesic_distance(SQUARE, (0, 0), (1, 1), BALL)
    assert r.length == pytest.approx(np.sqrt(2))
    assert len(r.polyline) == 2


def test_l_shape_geodesic_bends_at_reflex_corner():
    x, y = (0.25, 0.95), (0.95, 0.25)
    r = dm.geodesic_distance(L, x, y, BALL)
    expected = 2 * np.hypot(0.25, 0.45)
    assert r.length == pytest.approx(expected, rel=1e-12)
    assert r.length == pytest.approx(_brute_geodesic(L, x, y, BALL), rel=1e-12)
    assert np.allclose(r.polyline[1], (0.5, 0.5))


def test_asymmetric_geodesic_uses_directed_weights():
    lens = ConvexBody.lens()
    shifted = ConvexBody.polygon([[-1, -0.5], [2, -1], [1.5, 1], [-0.5, 1.5]])
    x, y = (0.25, 0.95), (0.95, 0.25)
    for body in (lens, shifted):
        assert dm.geodesic_distance(L, x, y, body).length == pytest.approx(
            _brute_geodesic(L, x, y, body), rel=1e-12)


def test_geodesic_goes_around_a_hole():
    r = dm.geodesic_distance(HOLED, (1.5, 0.5), (1.5, 2.5), BALL)
    assert r.length == pytest.approx(2 * np.hypot(0.5, 0.5) + 1.0)


def _inside_points(domain, rng, n):
    lo, hi = domain.bbox
    out = []
    while len(out) < n:
        p = rng.uniform(lo, hi)
        if domain.classify(p[None])[0] == dm.INSIDE:
            out.append(p)
    return np.array(out)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_geodesic_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    body = ConvexBody.lens().polar()
    for domain in (L, HOLED):
        x, y, z = _inside_points(domain, rng, 3)
        d = lambda a, b: dm.geodesic_distance(domain, a, b, body).length
        assert d(x, y) <= d(x, z) + d(z, y) + 1e-10


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_geodesic_dominates_segment_and_bends_at_reflex_vertices(seed):
    rng = np.random.default_rng(seed)
    for domain in (L, HOLED):
        x, y = _inside_points(domain, rng, 2)
        r = dm.geodesic_distance(domain, x, y, BALL)
        seg = float(polar_gauge(BALL, y - x))
        assert r.length >= seg - 1e-12
        if dm.segments_in_closure(domain, x, y)[0]:
            assert r.length == pytest.approx(seg, rel=1e-12)
        reflex = {tuple(v) for v in domain.reflex_vertices}
        for v in r.polyline[1:-1]:
            assert tuple(v) in reflex


# -- datum compatibility ----------------------------------------------------

def test_square_coordinate_datum_is_compatible():
    s = dm.sample_boundary(SQUARE, 40, lambda p, arc: p[:, 1])
    rep = dm.validate_datum(SQUARE, s, BALL)
    assert rep.is_compatible and rep.chord_ok
    assert rep.n_pairs == 40 * 39


def test_steep_datum_is_incompatible():
    s = dm.sample_boundary(SQUARE, 40, lambda p, arc: 2 * p[:, 1])
    rep = dm.validate_datum(SQUARE, s, BALL)
    assert not rep.is_compatible
    (px, py), (qx, qy) = rep.worst_pair
    # the worst pair climbs the full height: phi gap 2 against distance 1
    assert py - qy == pytest.approx(1.0) and px == pytest.approx(qx)
    assert rep.margin == pytest.approx(-1.0)


def test_annulus_angle_datum_fails_chord_test_only():
    d = dm.annulus_sector(1.0, 2.0, 0.5, n_arc=60)
    s = dm.sample_boundary(d, 360, lambda p, arc: polar_angle(p))
    rep = dm.validate_datum(d, s, BALL)
    assert rep.is_compatible and not rep.chord_ok
    assert rep.chord_margin == pytest.approx(2 * np.sin(0.25) - (2 * np.pi - 0.5), rel=1e-9)


def test_datum_report_is_json_ready():
    s = dm.sample_boundary(SQUARE, 8)
    doc = dm.validate_datum(SQUARE, s, BALL).to_dict()
    assert set(doc) >= {"is_compatible", "worst_pair", "margin", "chord_ok"}
    assert all(isinstance(c, float) for p in doc["worst_pair"] for c in p)
