"""Numba kernels for the hot loops: batched capsule collision and damped least-squares IK.

The numpy versions in :mod:`bctmp.geometry` define the semantics; the tests
check these kernels against them.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


@njit(cache=True)
def _pt_seg(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    den = dx * dx + dy * dy
    t = 0.0
    if den > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / den
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    ex = px - ax - t * dx
    ey = py - ay - t * dy
    return math.sqrt(ex * ex + ey * ey)


@njit(cache=True)
def seg_seg(px, py, qx, qy, ax, ay, bx, by):
    o1 = _orient(px, py, qx, qy, ax, ay)
    o2 = _orient(px, py, qx, qy, bx, by)
    o3 = _orient(ax, ay, bx, by, px, py)
    o4 = _orient(ax, ay, bx, by, qx, qy)
    if o1 * o2 < 0.0 and o3 * o4 < 0.0:
        return 0.0
    d = _pt_seg(px, py, ax, ay, bx, by)
    d = min(d, _pt_seg(qx, qy, ax, ay, bx, by))
    d = min(d, _pt_seg(ax, ay, px, py, qx, qy))
    d = min(d, _pt_seg(bx, by, px, py, qx, qy))
    return d


@njit(cache=True)
def _segments(q, links, base, span, depth, out):
    """Fill ``out`` (S, 4) with capsule endpoints for one state: links, palm, fingers."""
    n = q.shape[0]
    x = base[0]
    y = base[1]
    th = base[2]
    for k in range(n):
        th += q[k]
        nx = x + links[k] * math.cos(th)
        ny = y + links[k] * math.sin(th)
        out[k, 0] = x
        out[k, 1] = y
        out[k, 2] = nx
        out[k, 3] = ny
        x = nx
        y = ny
    c = math.cos(th)
    s = math.sin(th)
    hx = -0.5 * span * s
    hy = 0.5 * span * c
    lx, ly, rx, ry = x + hx, y + hy, x - hx, y - hy
    out[n, 0], out[n, 1], out[n, 2], out[n, 3] = lx, ly, rx, ry
    out[n + 1, 0], out[n + 1, 1], out[n + 1, 2], out[n + 1, 3] = lx, ly, lx + depth * c, ly + depth * s
    out[n + 2, 0], out[n + 2, 1], out[n + 2, 2], out[n + 2, 3] = rx, ry, rx + depth * c, ry + depth * s


@njit(cache=True)
def _state_hits(q, links, base, span, depth, clearance, es, ee, offsets, pairs, segs):
    n_seg = q.shape[0] + 3
    n_edge = es.shape[0]
    n_poly = offsets.shape[0]
    _segments(q, links, base, span, depth, segs)
    for s in range(n_seg):
        px, py, qx, qy = segs[s, 0], segs[s, 1], segs[s, 2], segs[s, 3]
        for e in range(n_edge):
            if seg_seg(px, py, qx, qy, es[e, 0], es[e, 1], ee[e, 0], ee[e, 1]) <= clearance:
                return True
        # a capsule wholly inside a polygon crosses no edge; test its start point
        for p in range(n_poly):
            lo = offsets[p]
            hi = offsets[p + 1] if p + 1 < n_poly else n_edge
            inside = True
            for e in range(lo, hi):
                if _orient(es[e, 0], es[e, 1], ee[e, 0], ee[e, 1], px, py) < 0.0:
                    inside = False
                    break
            if inside:
                return True
    lim = 2.0 * clearance
    for k in range(pairs.shape[0]):
        u = pairs[k, 0]
        v = pairs[k, 1]
        d = seg_seg(segs[u, 0], segs[u, 1], segs[u, 2], segs[u, 3], segs[v, 0], segs[v, 1], segs[v, 2], segs[v, 3])
        if d < lim:
            return True
    return False


@njit(cache=True)
def collide_states(qs, links, base, span, depth, clearance, es, ee, offsets, pairs):
    segs = np.empty((qs.shape[1] + 3, 4))
    hit = np.zeros(qs.shape[0], dtype=np.bool_)
    for i in range(qs.shape[0]):
        hit[i] = _state_hits(qs[i], links, base, span, depth, clearance, es, ee, offsets, pairs, segs)
    return hit


@njit(cache=True)
def edge_hits(qa, qb, resolution, links, base, span, depth, clearance, es, ee, offsets, pairs):
    """Number of interpolated states checked before the first collision, or -1 if the edge is free.

    States are spaced at most ``resolution`` apart in joint-space norm, endpoints included.
    """
    n = qa.shape[0]
    dist = 0.0
    for k in range(n):
        dist += (qb[k] - qa[k]) ** 2
    dist = math.sqrt(dist)
    steps = max(1, int(math.ceil(dist / resolution)))
    segs = np.empty((n + 3, 4))
    q = np.empty(n)
    for i in range(steps + 1):
        t = i / steps
        for k in range(n):
            q[k] = qa[k] + t * (qb[k] - qa[k])
        if _state_hits(q, links, base, span, depth, clearance, es, ee, offsets, pairs, segs):
            return i + 1
    return -1


@njit(cache=True)
def state_slack(q, links, base, span, depth, clearance, es, ee, offsets, pairs, segs, lip):
    """Joint-space radius around ``q`` that is certainly collision-free; <= 0 means ``q`` collides.

    ``lip`` bounds how far any point of the arm moves per radian of joint motion,
    so a capsule with metric slack ``s`` stays clear for joint steps below ``s / lip``.
    """
    n_seg = q.shape[0] + 3
    n_edge = es.shape[0]
    n_poly = offsets.shape[0]
    _segments(q, links, base, span, depth, segs)
    best = math.inf
    for s in range(n_seg):
        px, py, qx, qy = segs[s, 0], segs[s, 1], segs[s, 2], segs[s, 3]
        for e in range(n_edge):
            d = seg_seg(px, py, qx, qy, es[e, 0], es[e, 1], ee[e, 0], ee[e, 1]) - clearance
            if d < best:
                best = d
        for p in range(n_poly):
            lo = offsets[p]
            hi = offsets[p + 1] if p + 1 < n_poly else n_edge
            inside = True
            for e in range(lo, hi):
                if _orient(es[e, 0], es[e, 1], ee[e, 0], ee[e, 1], px, py) < 0.0:
                    inside = False
                    break
            if inside:
                return -1.0
    best = best / lip
    for k in range(pairs.shape[0]):
        u = pairs[k, 0]
        v = pairs[k, 1]
        d = seg_seg(segs[u, 0], segs[u, 1], segs[u, 2], segs[u, 3], segs[v, 0], segs[v, 1], segs[v, 2], segs[v, 3])
        # both capsules move, so their gap closes at up to twice the point speed
        d = (d - 2.0 * clearance) / (2.0 * lip)
        if d < best:
            best = d
    return best


@njit(cache=True)
def edge_certified(qa, qb, min_slack, lip, links, base, span, depth, clearance, es, ee, offsets, pairs):
    """Conservative advancement along the straight joint-space segment.

    Returns (free, states evaluated). Free means every state on the continuous
    segment clears all obstacles by at least ``clearance``.
    """
    n = qa.shape[0]
    dist = 0.0
    for k in range(n):
        dist += (qb[k] - qa[k]) ** 2
    dist = math.sqrt(dist)
    segs = np.empty((n + 3, 4))
    q = np.empty(n)
    t = 0.0
    evals = 0
    while True:
        for k in range(n):
            q[k] = qa[k] + t * (qb[k] - qa[k])
        s = state_slack(q, links, base, span, depth, clearance, es, ee, offsets, pairs, segs, lip)
        evals += 1
        if s <= min_slack:
            return False, evals
        if t >= 1.0 or dist == 0.0:
            return True, evals
        t = min(1.0, t + s / dist)


@njit(cache=True)
def _pose_and_jac(q, links, base, tool_depth, jac):
    n = q.shape[0]
    th = base[2]
    x = base[0]
    y = base[1]
    ang = np.empty(n)
    for k in range(n):
        th += q[k]
        ang[k] = th
        x += links[k] * math.cos(th)
        y += links[k] * math.sin(th)
    c = math.cos(th)
    s = math.sin(th)
    x += tool_depth * c
    y += tool_depth * s
    ax = -tool_depth * s
    ay = tool_depth * c
    for k in range(n - 1, -1, -1):
        ax -= links[k] * math.sin(ang[k])
        ay += links[k] * math.cos(ang[k])
        jac[0, k] = ax
        jac[1, k] = ay
        jac[2, k] = 1.0
    return x, y, th


@njit(cache=True)
def _wrap(a):
    two_pi = 2.0 * math.pi
    r = a + math.pi
    r = r - two_pi * math.floor(r / two_pi)
    r -= math.pi
    if r <= -math.pi:
        r += 2.0 * math.pi
    return r


@njit(cache=True)
def _solve3(a, e, out):
    """Solve the symmetric 3x3 system a @ out = e by cofactors."""
    c00 = a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
    c01 = a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]
    c02 = a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]
    det = a[0, 0] * c00 + a[0, 1] * c01 + a[0, 2] * c02
    c10 = a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2]
    c11 = a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
    c12 = a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1]
    c20 = a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]
    c21 = a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]
    c22 = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    out[0] = (c00 * e[0] + c10 * e[1] + c20 * e[2]) / det
    out[1] = (c01 * e[0] + c11 * e[1] + c21 * e[2]) / det
    out[2] = (c02 * e[0] + c12 * e[1] + c22 * e[2]) / det


@njit(cache=True)
def dls_step(q, target, links, base, tool_depth, damping, jac, a, e, y):
    """One damped least-squares update of ``q`` toward ``target``; returns the max residual."""
    n = q.shape[0]
    x0, y0, t0 = _pose_and_jac(q, links, base, tool_depth, jac)
    e[0] = target[0] - x0
    e[1] = target[1] - y0
    e[2] = _wrap(target[2] - t0)
    res = max(abs(e[0]), abs(e[1]), abs(e[2]))
    for r in range(3):
        for c in range(3):
            acc = 0.0
            for k in range(n):
                acc += jac[r, k] * jac[c, k]
            a[r, c] = acc
        a[r, r] += damping * damping
    _solve3(a, e, y)
    return res


@njit(cache=True)
def ik_solve(starts, targets, links, base, tool_depth, lo, hi, damping, max_iter, max_step):
    """Multi-start DLS IK. Returns states (T*S, n) and residual norms (T*S, 2)."""
    n_t = targets.shape[0]
    n_s = starts.shape[0]
    n = starts.shape[1]
    out = np.empty((n_t * n_s, n))
    res = np.empty((n_t * n_s, 2))
    jac = np.empty((3, n))
    a = np.empty((3, 3))
    e = np.empty(3)
    y = np.empty(3)
    dq = np.empty(n)
    for t in range(n_t):
        for s in range(n_s):
            q = starts[s].copy()
            for _ in range(max_iter):
                r = dls_step(q, targets[t], links, base, tool_depth, damping, jac, a, e, y)
                if r < 1e-12:
                    break
                big = 0.0
                for k in range(n):
                    dq[k] = jac[0, k] * y[0] + jac[1, k] * y[1] + jac[2, k] * y[2]
                    big = max(big, abs(dq[k]))
                scale = 1.0
                if big > max_step:
                    scale = max_step / big
                moved = 0.0
                for k in range(n):
                    v = q[k] + scale * dq[k]
                    if v < lo[k]:
                        v = lo[k]
                    elif v > hi[k]:
                        v = hi[k]
                    moved = max(moved, abs(v - q[k]))
                    q[k] = v
                if moved < 1e-13:
                    break
            x0, y0, t0 = _pose_and_jac(q, links, base, tool_depth, jac)
            out[t * n_s + s] = q
            res[t * n_s + s, 0] = math.hypot(targets[t, 0] - x0, targets[t, 1] - y0)
            res[t * n_s + s, 1] = abs(_wrap(targets[t, 2] - t0))
    return out, res


@njit(cache=True)
def polyline_certified(qs, min_slack, lip, links, base, span, depth, clearance, es, ee, offsets, pairs):
    """Index of the first segment of ``qs`` that is not certified free (-1 if none), and states evaluated."""
    total = 0
    if qs.shape[0] == 1:
        segs = np.empty((qs.shape[1] + 3, 4))
        s = state_slack(qs[0], links, base, span, depth, clearance, es, ee, offsets, pairs, segs, lip)
        return (-1 if s > min_slack else 0), 1
    for i in range(qs.shape[0] - 1):
        free, evals = edge_certified(qs[i], qs[i + 1], min_slack, lip, links, base, span, depth, clearance,
                                     es, ee, offsets, pairs)
        total += evals
        if not free:
            return i, total
    return -1, total
