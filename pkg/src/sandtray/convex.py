"""
Convex bodies, gauges and support functions in the plane.

A :class:`ConvexBody` is a closed-form description of a compact convex set
containing the origin in its interior.  The body is built from a *shape*
(ball, ellipse, p-ball, lens or polygon) and a *role*: ``"primal"`` means the
body is the shape itself, ``"polar"`` means the body is the polar set of the
shape.  Switching the role is exactly polarity, so ``body.polar().polar()``
is ``body``.

For a body ``K`` with gauge ``rho``:

* ``gauge(K, xi)``       = inf{t >= 0 : xi in tK}
* ``polar_gauge(K, xi)`` = gauge of the polar body = max{<xi, eta> : eta in K}

All functions are vectorised over a trailing axis of length 2.
"""

from dataclasses import dataclass

import numpy as np

LENS_SHIFT = np.sqrt(2.0) / 2.0
BOUNDARY_RTOL = 1e-9

_FAMILIES = ("euclidean_ball", "ellipse", "p_ball", "lens", "polygon")


class ZeroVector(ValueError):
    """Raised when a gradient is requested at the origin."""


class NonDifferentiable(ValueError):
    """Raised when the gauge has no gradient at the requested direction."""


@dataclass(frozen=True)
class ConvexBody:
    family: str
    params: tuple = ()
    role: str = "primal"
    negated: bool = False

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown body family {self.family!r}")
        if self.role not in ("primal", "polar"):
            raise ValueError(f"role must be 'primal' or 'polar', got {self.role!r}")
        if self.family == "euclidean_ball" and not self.params[0] > 0:
            raise ValueError("ball radius must be positive")
        if self.family == "ellipse":
            A = self.matrix
            if not (np.allclose(A, A.T) and np.all(np.linalg.eigvalsh(A) > 0)):
                raise ValueError("ellipse matrix must be symmetric positive definite")
        if self.family == "p_ball" and not 1.0 < self.params[0] < np.inf:
            raise ValueError("p-ball exponent must lie in (1, inf)")
        if self.family == "polygon":
            _polygon_facets(self.vertices)

    # -- constructors ------------------------------------------------------

    @classmethod
    def ball(cls, radius=1.0):
        return cls("euclidean_ball", (float(radius),))

    @classmethod
    def ellipse(cls, A):
        A = np.asarray(A, dtype=float)
        return cls("ellipse", (float(A[0, 0]), float(A[0, 1]), float(A[1, 1])))

    @classmethod
    def p_ball(cls, p):
        return cls("p_ball", (float(p),))

    @classmethod
    def lens(cls):
        """The lens {(|x| + sqrt(2)/2)^2 + y^2 <= 1}."""
        return cls("lens", ())

    @classmethod
    def polygon(cls, vertices):
        v = np.asarray(vertices, dtype=float)
        return cls("polygon", tuple(map(float, v.ravel())))

    # -- derived bodies ----------------------------------------------------

    def polar(self):
        role = "polar" if self.role == "primal" else "primal"
        return ConvexBody(self.family, self.params, role, self.negated)

    def reversed(self):
        """The body -K; its gauge is xi -> gauge(K, -xi)."""
        return ConvexBody(self.family, self.params, self.role, not self.negated)

    # -- accessors ---------------------------------------------------------

    @property
    def matrix(self):
        a, b, c = self.params
        return np.array([[a, b], [b, c]])

    @property
    def vertices(self):
        return np.asarray(self.params, dtype=float).reshape(-1, 2)

    @property
    def is_c1(self):
        """Whether the gauge of the body is C^1 away from the origin."""
        if self.family == "polygon":
            return False
        if self.family == "lens":
            return self.role == "polar"
        return True

    def describe(self):
        d = {"family": self.family, "role": self.role, "negated": self.negated}
        if self.family == "euclidean_ball":
            d["radius"] = self.params[0]
        elif self.family == "ellipse":
            d["matrix"] = self.matrix.tolist()
        elif self.family == "p_ball":
            d["p"] = self.params[0]
        elif self.family == "polygon":
            d["vertices"] = self.vertices.tolist()
        return d


# ---------------------------------------------------------------------------
# shape primitives: gauge and support function of the shape itself
# ---------------------------------------------------------------------------

def _polygon_facets(vertices):
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[0] < 3:
        raise ValueError("polygon body needs at least 3 vertices")
    e = np.roll(v, -1, axis=0) - v
    area2 = np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
    if area2 <= 0:
        raise ValueError("polygon body vertices must be counter-clockwise")
    normals = np.stack([e[:, 1], -e[:, 0]], axis=1)
    offsets = np.sum(normals * v, axis=1)
    if np.any(offsets <= 0):
        raise ValueError("polygon body must contain the origin in its interior")
    return normals / offsets[:, None]


def _lens_gauge(xi):
    x, y = np.abs(xi[..., 0]), xi[..., 1]
    c = LENS_SHIFT
    r2 = x * x + y * y
    return (c * x + np.sqrt(c * c * x * x + (1 - c * c) * r2)) / (1 - c * c)


def _lens_gauge_grad(xi):
    x, y = xi[..., 0], xi[..., 1]
    c = LENS_SHIFT
    ax = np.abs(x)
    root = np.sqrt(c * c * ax * ax + (1 - c * c) * (ax * ax + y * y))
    # t solves (1 - c^2) t^2 - 2 c |x| t - r^2 = 0; implicit differentiation
    t = (c * ax + root) / (1 - c * c)
    denom = 2 * (1 - c * c) * t - 2 * c * ax
    gx = (2 * c * t + 2 * ax) * np.sign(x) / denom
    gy = 2 * y / denom
    return np.stack([gx, gy], axis=-1)


def _lens_support(xi):
    a, b = xi[..., 0], xi[..., 1]
    c = LENS_SHIFT
    n = np.hypot(a, b)
    right = -c * a + n
    left = c * a + n
    corner = np.abs(b) * np.sqrt(1 - c * c)
    return np.where(a >= c * n, right, np.where(-a >= c * n, left, corner))


def _lens_support_grad(xi):
    a, b = xi[..., 0], xi[..., 1]
    c = LENS_SHIFT
    n = np.hypot(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        ux, uy = a / n, b / n
    right = np.stack([ux - c, uy], axis=-1)
    left = np.stack([ux + c, uy], axis=-1)
    corner = np.stack([np.zeros_like(b), np.sign(b) * np.sqrt(1 - c * c)], axis=-1)
    return np.where((a >= c * n)[..., None], right,
                    np.where((-a >= c * n)[..., None], left, corner))


def _shape_gauge(body, xi):
    fam = body.family
    if fam == "euclidean_ball":
        return np.hypot(xi[..., 0], xi[..., 1]) / body.params[0]
    if fam == "ellipse":
        A = body.matrix
        q = np.einsum("...i,ij,...j->...", xi, A, xi)
        return np.sqrt(np.maximum(q, 0.0))
    if fam == "p_ball":
        p = body.params[0]
        return (np.abs(xi[..., 0]) ** p + np.abs(xi[..., 1]) ** p) ** (1.0 / p)
    if fam == "lens":
        return _lens_gauge(xi)
    a = _polygon_facets(body.vertices)
    return np.maximum(np.max(xi @ a.T, axis=-1), 0.0)


def _shape_support(body, xi):
    fam = body.family
    if fam == "euclidean_ball":
        return body.params[0] * np.hypot(xi[..., 0], xi[..., 1])
    if fam == "ellipse":
        B = np.linalg.inv(body.matrix)
        q = np.einsum("...i,ij,...j->...", xi, B, xi)
        return np.sqrt(np.maximum(q, 0.0))
    if fam == "p_ball":
        p = body.params[0]
        q = p / (p - 1.0)
        return (np.abs(xi[..., 0]) ** q + np.abs(xi[..., 1]) ** q) ** (1.0 / q)
    if fam == "lens":
        return _lens_support(xi)
    return np.maximum(np.max(xi @ body.vertices.T, axis=-1), 0.0)


def _argmax_unique(scores, tol):
    order = np.sort(scores, axis=-1)
    gap = order[..., -1] - order[..., -2]
    scale = np.maximum(np.abs(order[..., -1]), 1.0)
    if np.any(gap <= tol * scale):
        raise NonDifferentiable("direction lies on a facet-cone boundary")
    return np.argmax(scores, axis=-1)


def _shape_gauge_grad(body, xi):
    fam = body.family
    if fam == "euclidean_ball":
        n = np.hypot(xi[..., 0], xi[..., 1])
        return xi / (body.params[0] * n)[..., None]
    if fam == "ellipse":
        Ax = xi @ body.matrix
        return Ax / _shape_gauge(body, xi)[..., None]
    if fam == "p_ball":
        p = body.params[0]
        g = _shape_gauge(body, xi)
        return np.sign(xi) * np.abs(xi) ** (p - 1) / (g ** (p - 1))[..., None]
    if fam == "lens":
        n = np.hypot(xi[..., 0], xi[..., 1])
        if np.any(np.abs(xi[..., 0]) <= BOUNDARY_RTOL * n):
            raise NonDifferentiable("lens gauge has a kink along the vertical axis")
        return _lens_gauge_grad(xi)
    a = _polygon_facets(body.vertices)
    return a[_argmax_unique(xi @ a.T, BOUNDARY_RTOL)]


def _shape_support_grad(body, xi):
    fam = body.family
    if fam == "euclidean_ball":
        n = np.hypot(xi[..., 0], xi[..., 1])
        return body.params[0] * xi / n[..., None]
    if fam == "ellipse":
        B = np.linalg.inv(body.matrix)
        return (xi @ B) / _shape_support(body, xi)[..., None]
    if fam == "p_ball":
        p = body.params[0]
        q = p / (p - 1.0)
        g = _shape_support(body, xi)
        return np.sign(xi) * np.abs(xi) ** (q - 1) / (g ** (q - 1))[..., None]
    if fam == "lens":
        return _lens_support_grad(xi)
    v = body.vertices
    return v[_argmax_unique(xi @ v.T, BOUNDARY_RTOL)]


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def _oriented(body, xi):
    xi = np.asarray(xi, dtype=float)
    return -xi if body.negated else xi


def _normalized(z):
    """``z / m`` and ``m = max |z_i|`` (1 where ``z = 0``), against under- and overflow."""
    m = np.max(np.abs(z), axis=-1)
    m = np.where(m > 0, m, 1.0)
    return z / m[..., None], m


def gauge(body, xi):
    """Minkowski gauge of ``body`` at ``xi``."""
    z, m = _normalized(_oriented(body, xi))
    if body.role == "primal":
        return m * _shape_gauge(body, z)
    return m * _shape_support(body, z)


def polar_gauge(body, xi):
    """Support function of ``body``, i.e. the gauge of its polar."""
    return gauge(body.polar(), xi)


def gauge_gradient(body, xi):
    """Gradient of the gauge at a nonzero ``xi``.

    The result lies on the boundary of the polar body and satisfies the Euler
    identity ``<grad, xi> = gauge(xi)``.
    """
    xi = np.asarray(xi, dtype=float)
    if np.any(np.hypot(xi[..., 0], xi[..., 1]) == 0.0):
        raise ZeroVector("gauge gradient is undefined at the origin")
    z, _ = _normalized(_oriented(body, xi))
    if body.role == "primal":
        g = _shape_gauge_grad(body, z)
    else:
        g = _shape_support_grad(body, z)
    return -g if body.negated else g


def polar_gauge_gradient(body, xi):
    return gauge_gradient(body.polar(), xi)


def contains(body, xi):
    """Membership in the closed body with the relative boundary tolerance."""
    return gauge(body, xi) <= 1.0 + BOUNDARY_RTOL


def boundary_points(body, n):
    """``n`` points on the boundary of ``body``, ordered by angle."""
    t = 2 * np.pi * np.arange(n) / n
    u = np.stack([np.cos(t), np.sin(t)], axis=1)
    return u / gauge(body, u)[:, None]


def equivalence_constants(body, n=3600):
    """Sampled (c1, c2) with c1 |xi| <= polar_gauge(xi) <= c2 |xi|."""
    t = 2 * np.pi * np.arange(n) / n
    u = np.stack([np.cos(t), np.sin(t)], axis=1)
    g = polar_gauge(body, u)
    return float(g.min()), float(g.max())


def body_from_spec(spec):
    """Build a body from a config mapping (see :mod:`sandtray.config`)."""
    fam = spec["family"]
    if fam == "euclidean_ball":
        body = ConvexBody.ball(spec.get("radius", 1.0))
    elif fam == "ellipse":
        body = ConvexBody.ellipse(spec["matrix"])
    elif fam == "p_ball":
        body = ConvexBody.p_ball(spec["p"])
    elif fam == "lens":
        body = ConvexBody.lens()
    elif fam == "polygon":
        body = ConvexBody.polygon(spec["vertices"])
    else:
        raise ValueError(f"unknown body family {fam!r}")
    if spec.get("role", "primal") == "polar":
        body = body.polar()
    if spec.get("negated", False):
        body = body.reversed()
    return body
