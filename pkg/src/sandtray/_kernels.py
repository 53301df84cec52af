"""Compiled segment/polygon kernels used by :mod:`sandtray.domain`."""

import numpy as np
from numba import njit

T_EPS = 1e-9


@njit(cache=True)
def _point_label(px, py, ax, ay, bx, by, tol):
    inside = False
    for e in range(ax.shape[0]):
        x1, y1, x2, y2 = ax[e], ay[e], bx[e], by[e]
        dx, dy = x2 - x1, y2 - y1
        ll = dx * dx + dy * dy
        t = ((px - x1) * dx + (py - y1) * dy) / ll if ll > 0 else 0.0
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        qx, qy = x1 + t * dx - px, y1 + t * dy - py
        if qx * qx + qy * qy <= tol * tol:
            return 0
        if (y1 > py) != (y2 > py):
            xint = x1 + (py - y1) * dx / dy
            if px < xint:
                inside = not inside
    return 1 if inside else -1


@njit(cache=True)
def classify(pts, ax, ay, bx, by, tol):
    out = np.empty(pts.shape[0], dtype=np.int8)
    for i in range(pts.shape[0]):
        out[i] = _point_label(pts[i, 0], pts[i, 1], ax, ay, bx, by, tol)
    return out


@njit(cache=True)
def _open_hit(yx, yy, xx, xy, ax, ay, bx, by, exmin, exmax, eymin, eymax):
    rx, ry = xx - yx, xy - yy
    smin_x, smax_x = min(xx, yx), max(xx, yx)
    smin_y, smax_y = min(xy, yy), max(xy, yy)
    rn = np.sqrt(rx * rx + ry * ry)
    for e in range(ax.shape[0]):
        if exmax[e] < smin_x or exmin[e] > smax_x or eymax[e] < smin_y or eymin[e] > smax_y:
            continue
        sx, sy = bx[e] - ax[e], by[e] - ay[e]
        den = rx * sy - ry * sx
        if abs(den) <= 1e-12 * rn * np.sqrt(sx * sx + sy * sy):
            continue
        qx, qy = ax[e] - yx, ay[e] - yy
        t = (qx * sy - qy * sx) / den
        u = (qx * ry - qy * rx) / den
        if t > T_EPS and t < 1.0 - T_EPS and u >= -T_EPS and u <= 1.0 + T_EPS:
            return True
    return False


@njit(cache=True)
def open_blocked(x, y, ax, ay, bx, by):
    """(n, m) mask: open segment (y_k, x_i) touches an edge or a vertex."""
    exmin = np.minimum(ax, bx)
    exmax = np.maximum(ax, bx)
    eymin = np.minimum(ay, by)
    eymax = np.maximum(ay, by)
    out = np.zeros((x.shape[0], y.shape[0]), dtype=np.bool_)
    for i in range(x.shape[0]):
        for k in range(y.shape[0]):
            out[i, k] = _open_hit(y[k, 0], y[k, 1], x[i, 0], x[i, 1],
                                  ax, ay, bx, by, exmin, exmax, eymin, eymax)
    return out


@njit(cache=True)
def closed_ok(p, q, ax, ay, bx, by, vx, vy, tol):
    """Elementwise: closed segment [p_i, q_i] lies in the closed polygon."""
    n = p.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    ts = np.empty(vx.shape[0] + 2)
    for i in range(n):
        px, py, qx, qy = p[i, 0], p[i, 1], q[i, 0], q[i, 1]
        rx, ry = qx - px, qy - py
        rn = np.sqrt(rx * rx + ry * ry)
        ok = True
        for e in range(ax.shape[0]):
            sx, sy = bx[e] - ax[e], by[e] - ay[e]
            den = rx * sy - ry * sx
            if abs(den) <= T_EPS * rn * np.sqrt(sx * sx + sy * sy):
                continue
            wx, wy = ax[e] - px, ay[e] - py
            t = (wx * sy - wy * sx) / den
            u = (wx * ry - wy * rx) / den
            if t > T_EPS and t < 1.0 - T_EPS and u > T_EPS and u < 1.0 - T_EPS:
                ok = False
                break
        if not ok:
            continue
        rr = rx * rx + ry * ry
        nt = 0
        ts[nt] = 0.0
        nt += 1
        if rr > 0:
            for v in range(vx.shape[0]):
                t = ((vx[v] - px) * rx + (vy[v] - py) * ry) / rr
                if t <= T_EPS or t >= 1.0 - T_EPS:
                    continue
                fx, fy = px + t * rx - vx[v], py + t * ry - vy[v]
                if fx * fx + fy * fy <= tol * tol:
                    ts[nt] = t
                    nt += 1
        ts[nt] = 1.0
        nt += 1
        tt = np.sort(ts[:nt])
        for k in range(nt - 1):
            m = 0.5 * (tt[k] + tt[k + 1])
            if _point_label(px + m * rx, py + m * ry, ax, ay, bx, by, tol) < 0:
                ok = False
                break
        out[i] = ok
    return out


@njit(cache=True)
def ray_exit(x, d, ax, ay, bx, by):
    """Smallest t > 0 with x_i + t d_i on an edge (inf when none)."""
    n = x.shape[0]
    out = np.full(n, np.inf)
    for i in range(n):
        px, py, rx, ry = x[i, 0], x[i, 1], d[i, 0], d[i, 1]
        best = np.inf
        for e in range(ax.shape[0]):
            sx, sy = bx[e] - ax[e], by[e] - ay[e]
            den = rx * sy - ry * sx
            if den == 0.0:
                continue
            wx, wy = ax[e] - px, ay[e] - py
            t = (wx * sy - wy * sx) / den
            u = (wx * ry - wy * rx) / den
            if t > 1e-12 and u >= -1e-12 and u <= 1.0 + 1e-12 and t < best:
                best = t
        out[i] = best
    return out


@njit(cache=True)
def _bin_of(angle, nbins):
    b = int(np.floor((angle + np.pi) / (2.0 * np.pi) * nbins))
    if b < 0:
        b = 0
    if b >= nbins:
        b = nbins - 1
    return b


@njit(cache=True)
def edge_buckets(y, ax, ay, bx, by, nbins, tol):
    """Per source point, the edges whose angular extent covers each bearing bin.

    Returns CSR arrays ``(offsets, ids)`` with ``offsets`` of shape
    (m, nbins + 1).  Edges through the source are skipped: an open segment
    leaving the source can only meet them at the source itself.
    """
    m = y.shape[0]
    ne = ax.shape[0]
    counts = np.zeros((m, nbins), dtype=np.int64)
    lo = np.empty((m, ne), dtype=np.int64)
    span = np.full((m, ne), -1, dtype=np.int64)
    for k in range(m):
        py, qy = y[k, 0], y[k, 1]
        for e in range(ne):
            dx, dy = bx[e] - ax[e], by[e] - ay[e]
            ll = dx * dx + dy * dy
            t = ((py - ax[e]) * dx + (qy - ay[e]) * dy) / ll if ll > 0 else 0.0
            t = min(max(t, 0.0), 1.0)
            fx, fy = ax[e] + t * dx - py, ay[e] + t * dy - qy
            if fx * fx + fy * fy <= tol * tol:
                continue
            a1 = np.arctan2(ay[e] - qy, ax[e] - py)
            a2 = np.arctan2(by[e] - qy, bx[e] - py)
            da = a2 - a1
            if da > np.pi:
                da -= 2.0 * np.pi
            elif da < -np.pi:
                da += 2.0 * np.pi
            start = a1 if da >= 0 else a1 + da
            stop = start + abs(da) + 1e-9
            start -= 1e-9
            if start < -np.pi:
                start += 2.0 * np.pi
                stop += 2.0 * np.pi
            if stop > np.pi:
                stop -= 2.0 * np.pi
            b0 = _bin_of(start, nbins)
            nb = (_bin_of(stop, nbins) - b0) % nbins + 1
            lo[k, e] = b0
            span[k, e] = nb
            for j in range(nb):
                counts[k, (b0 + j) % nbins] += 1
    offsets = np.zeros((m, nbins + 1), dtype=np.int64)
    total = 0
    for k in range(m):
        for b in range(nbins):
            offsets[k, b] = total
            total += counts[k, b]
        offsets[k, nbins] = total
    ids = np.empty(total, dtype=np.int64)
    fill = offsets[:, :nbins].copy()
    for k in range(m):
        for e in range(ne):
            nb = span[k, e]
            for j in range(nb):
                b = (lo[k, e] + j) % nbins
                ids[fill[k, b]] = e
                fill[k, b] += 1
    return offsets, ids


@njit(cache=True)
def blocked_bucketed(x, y, offsets, ids, ax, ay, bx, by):
    """(n, m) mask as :func:`open_blocked`, testing only edges in the bearing bin."""
    nbins = offsets.shape[1] - 1
    out = np.zeros((x.shape[0], y.shape[0]), dtype=np.bool_)
    # source-major so that one source's bin table stays in cache
    for k in range(y.shape[0]):
        yx, yy = y[k, 0], y[k, 1]
        for i in range(x.shape[0]):
            rx, ry = x[i, 0] - yx, x[i, 1] - yy
            if rx == 0.0 and ry == 0.0:
                continue
            b = _bin_of(np.arctan2(ry, rx), nbins)
            rn = np.sqrt(rx * rx + ry * ry)
            for p in range(offsets[k, b], offsets[k, b + 1]):
                e = ids[p]
                sx, sy = bx[e] - ax[e], by[e] - ay[e]
                den = rx * sy - ry * sx
                if abs(den) <= 1e-12 * rn * np.sqrt(sx * sx + sy * sy):
                    continue
                qx, qy = ax[e] - yx, ay[e] - yy
                t = (qx * sy - qy * sx) / den
                u = (qx * ry - qy * rx) / den
                if t > T_EPS and t < 1.0 - T_EPS and u >= -T_EPS and u <= 1.0 + T_EPS:
                    out[i, k] = True
                    break
    return out


@njit(cache=True)
def bilinear(vals, ox, oy, h, px, py):
    """Bilinear value at (px, py) skipping non-finite corners (NaN if none)."""
    nx, ny = vals.shape
    fx = (px - ox) / h
    fy = (py - oy) / h
    i0 = min(max(int(np.floor(fx)), 0), nx - 2)
    j0 = min(max(int(np.floor(fy)), 0), ny - 2)
    tx = min(max(fx - i0, 0.0), 1.0)
    ty = min(max(fy - j0, 0.0), 1.0)
    num = 0.0
    den = 0.0
    tot = 0.0
    cnt = 0
    for di in range(2):
        wx = tx if di == 1 else 1.0 - tx
        for dj in range(2):
            wy = ty if dj == 1 else 1.0 - ty
            v = vals[i0 + di, j0 + dj]
            if np.isfinite(v):
                num += wx * wy * v
                den += wx * wy
                tot += v
                cnt += 1
    if den > 1e-12:
        return num / den
    if cnt > 0:
        return tot / cnt
    return np.nan


@njit(cache=True)
def _deviation(vals, ox, oy, h, x0, x1, d0, d1, u0, s):
    v = bilinear(vals, ox, oy, h, x0 + s * d0, x1 + s * d1)
    if not np.isfinite(v):
        return np.inf
    return u0 + s - v


@njit(cache=True)
def ray_scan(x, d, u0, tmax, vals, ox, oy, h, tol, extrapolate):
    """Length of linear growth ``u(x + s d) = u(x) + s`` along each ray.

    Scans at step h/2, bisects the first violation of ``tol`` to h/4 and,
    when ``extrapolate`` is set, moves the end back along the fitted slope
    of the deviation.  Returns ``(tau, reached)`` where ``reached`` marks
    rays that run on to the boundary exit ``tmax``.
    """
    n = x.shape[0]
    tau = np.empty(n)
    reached = np.zeros(n, dtype=np.bool_)
    ds = 0.5 * h
    for i in range(n):
        x0, x1, d0, d1, uu, tm = x[i, 0], x[i, 1], d[i, 0], d[i, 1], u0[i], tmax[i]
        lo = 0.0
        hi = -1.0
        s = ds
        while s < tm:
            if _deviation(vals, ox, oy, h, x0, x1, d0, d1, uu, s) > tol:
                hi = s
                break
            lo = s
            s += ds
        if hi < 0.0:
            if _deviation(vals, ox, oy, h, x0, x1, d0, d1, uu, tm) <= tol:
                tau[i] = tm
                reached[i] = True
                continue
            hi = tm
        while hi - lo > 0.25 * h:
            mid = 0.5 * (lo + hi)
            if _deviation(vals, ox, oy, h, x0, x1, d0, d1, uu, mid) > tol:
                hi = mid
            else:
                lo = mid
        t = lo
        if extrapolate:
            e1 = _deviation(vals, ox, oy, h, x0, x1, d0, d1, uu, hi)
            s2 = min(hi + h, tm)
            if s2 > hi and np.isfinite(e1):
                e2 = _deviation(vals, ox, oy, h, x0, x1, d0, d1, uu, s2)
                slope = (e2 - e1) / (s2 - hi)
                if np.isfinite(slope) and slope > 0.0:
                    t = min(max(hi - e1 / slope, 0.0), lo)
        if tm - t <= h:
            tau[i] = tm
            reached[i] = True
        else:
            tau[i] = t
    return tau, reached


@njit(cache=True)
def _entry_of(indices, a, b, k):
    """Position of sample ``k`` among the sorted ``indices[a:b]``, or -1."""
    pos = a + np.searchsorted(indices[a:b], k)
    if pos < b and indices[pos] == k:
        return pos
    return -1


@njit(cache=True)
def _loop_neighbors(k, loop, loop_start, loop_size):
    lp = loop[k]
    s0, m = loop_start[lp], loop_size[lp]
    off = k - s0
    return s0 + (off - 1) % m, s0 + (off + 1) % m


@njit(cache=True)
def second_minima(indptr, indices, values, arc, loop, loop_start, loop_size, loop_length,
                  gap, reach, argmin, r_min, dx, dy, slack):
    """Per near-set entry: is it a second projection of its node?

    An entry qualifies when its sample is a local minimum of the node's cost
    along the boundary loop (samples outside the near set count as higher),
    lies more than ``gap`` of arc from the node's best sample, reaches
    beyond ``r_min`` from the node, and its cost is within
    ``slack |d - d_best|`` of the best, ``(dx, dy)`` being the per-entry ray
    directions: a node at distance ``s`` from the equal-cost curve sees the
    gap ``s |d - d_best|``.
    """
    n = indptr.shape[0] - 1
    out = np.zeros(indices.shape[0], dtype=np.bool_)
    for r in range(n):
        a, b = indptr[r], indptr[r + 1]
        if b - a < 2:
            continue
        kb = argmin[r]
        qb = _entry_of(indices, a, b, kb)
        if qb < 0:
            continue
        vmin = values[qb]
        for q in range(a, b):
            k = indices[q]
            if k == kb or reach[q] <= r_min:
                continue
            if loop[k] == loop[kb]:
                dist = abs(arc[k] - arc[kb])
                dist = min(dist, loop_length[loop[k]] - dist)
                if dist <= gap:
                    continue
            kp, kn = _loop_neighbors(k, loop, loop_start, loop_size)
            qp = _entry_of(indices, a, b, kp)
            qn = _entry_of(indices, a, b, kn)
            if qp >= 0 and values[qp] <= values[q]:
                continue
            if qn >= 0 and values[qn] < values[q]:
                continue
            ddx, ddy = dx[q] - dx[qb], dy[q] - dy[qb]
            if values[q] - vmin <= slack * np.sqrt(ddx * ddx + ddy * ddy) + 1e-12:
                out[q] = True
    return out


@njit(cache=True)
def count_clusters(indptr, indices, arc, loop, loop_length, gap, second):
    """Projection count per node and whether the near set closes around a loop.

    The count is one plus the number of second projections flagged in
    ``second``.  ``full`` marks a node whose near set, with consecutive
    samples no more than ``gap`` of arc apart, covers a whole loop.
    """
    n = indptr.shape[0] - 1
    count = np.zeros(n, dtype=np.int64)
    full = np.zeros(n, dtype=np.bool_)
    for r in range(n):
        a, b = indptr[r], indptr[r + 1]
        if b == a:
            continue
        c = 1
        for q in range(a, b):
            if second[q]:
                c += 1
        count[r] = c
        p = a
        while p < b:
            lp = loop[indices[p]]
            runs = 1
            q = p
            while q + 1 < b and loop[indices[q + 1]] == lp:
                if arc[indices[q + 1]] - arc[indices[q]] > gap:
                    runs += 1
                q += 1
            wrap = arc[indices[p]] + loop_length[lp] - arc[indices[q]] <= gap
            if runs == 1 and wrap:
                full[r] = True
            p = q + 1
    return count, full


@njit(cache=True)
def open_blocked_pairs(p, q, ax, ay, bx, by):
    """Elementwise: open segment (p_i, q_i) touches an edge or a vertex."""
    exmin = np.minimum(ax, bx)
    exmax = np.maximum(ax, bx)
    eymin = np.minimum(ay, by)
    eymax = np.maximum(ay, by)
    out = np.zeros(p.shape[0], dtype=np.bool_)
    for i in range(p.shape[0]):
        out[i] = _open_hit(p[i, 0], p[i, 1], q[i, 0], q[i, 1],
                           ax, ay, bx, by, exmin, exmax, eymin, eymax)
    return out


@njit(cache=True)
def edge_distance(pts, ax, ay, bx, by):
    """Euclidean distance from each point to the nearest edge."""
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        px, py = pts[i, 0], pts[i, 1]
        best = np.inf
        for e in range(ax.shape[0]):
            dx, dy = bx[e] - ax[e], by[e] - ay[e]
            ll = dx * dx + dy * dy
            t = ((px - ax[e]) * dx + (py - ay[e]) * dy) / ll if ll > 0 else 0.0
            t = min(max(t, 0.0), 1.0)
            fx, fy = ax[e] + t * dx - px, ay[e] + t * dy - py
            d2 = fx * fx + fy * fy
            if d2 < best:
                best = d2
        out[i] = np.sqrt(best)
    return out


@njit(cache=True)
def integrate_rays(x, d, tau, fvals, dvals, ox, oy, h, clamp, ratio_a, ratio_b):
    """Transport density along rays by the composite trapezoid rule.

    ``v = int_0^tau f(x + t d) w(t) dt`` with weight
    ``w(t) = exp(int_0^t div)`` (div clamped to +-clamp), or, when
    ``ratio_a`` is non-empty, the spacing ratio
    ``max(ratio_a + t ratio_b, 0) / ratio_a`` of a neighbouring ray.
    """
    n = x.shape[0]
    out = np.zeros(n)
    spacing = ratio_a.shape[0] > 0
    for i in range(n):
        T = tau[i]
        if not (T > 0.0):
            continue
        m = max(1, int(np.ceil(T / (0.5 * h))))
        dt = T / m
        x0, x1, d0, d1 = x[i, 0], x[i, 1], d[i, 0], d[i, 1]
        acc = 0.0
        logw = 0.0
        prev_div = 0.0
        for k in range(m + 1):
            t = k * dt
            px, py = x0 + t * d0, x1 + t * d1
            if spacing:
                w = max(ratio_a[i] + t * ratio_b[i], 0.0) / ratio_a[i]
            else:
                dv = bilinear(dvals, ox, oy, h, px, py)
                if not np.isfinite(dv):
                    dv = 0.0
                dv = min(max(dv, -clamp), clamp)
                if k > 0:
                    logw += 0.5 * dt * (prev_div + dv)
                prev_div = dv
                w = np.exp(logw)
            fv = bilinear(fvals, ox, oy, h, px, py)
            if not np.isfinite(fv):
                fv = 0.0
            c = 0.5 if (k == 0 or k == m) else 1.0
            acc += c * fv * w
        out[i] = acc * dt
    return out
