"""Pure-Python geometry kernels.

These are the hot primitives of the discrete search stage: collision tests
between axis-aligned boxes swept along straight line segments.  The compiled
Cython module ``_core`` mirrors this file exactly; keep the two in sync.

All inputs are plain 3-tuples / lists of floats.  A sweep of a box ``B``
(given at the origin) along segment ``[a, b]`` is the Minkowski sum
``B + seg(a, b)``.  Two such sweeps intersect iff the parallelogram
``{s2 - s1 : s1 in seg1, s2 in seg2}`` touches the box difference
``B1 - B2`` (an axis-aligned box), which a separating-axis test decides
exactly using 10 candidate axes.
"""

BACKEND = "pure"


def seg_aabb_intersects(ax, ay, az, bx, by, bz,
                        minx, miny, minz, maxx, maxy, maxz, tol=1e-9):
    """Closed-set intersection test between segment [a,b] and an AABB (slab method)."""
    t0 = 0.0
    t1 = 1.0
    for a, d, lo, hi in (
        (ax, bx - ax, minx, maxx),
        (ay, by - ay, miny, maxy),
        (az, bz - az, minz, maxz),
    ):
        if -1e-300 < d < 1e-300:
            if a < lo - tol or a > hi + tol:
                return False
        else:
            ta = (lo - tol - a) / d
            tb = (hi + tol - a) / d
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
            if t0 > t1:
                return False
    return True


def _axis_separates(axx, axy, axz, cx, cy, cz, ex, ey, ez, pts, tol):
    n2 = axx * axx + axy * axy + axz * axz
    if n2 < 1e-18:
        return False
    bc = axx * cx + axy * cy + axz * cz
    br = abs(axx) * ex + abs(axy) * ey + abs(axz) * ez
    pmin = pmax = axx * pts[0][0] + axy * pts[0][1] + axz * pts[0][2]
    for k in (1, 2, 3):
        v = axx * pts[k][0] + axy * pts[k][1] + axz * pts[k][2]
        if v < pmin:
            pmin = v
        elif v > pmax:
            pmax = v
    scale = n2 ** 0.5
    return pmin > bc + br + tol * scale or pmax < bc - br - tol * scale


def sweep_pair_intersects(r0min, r0max, p1a, p1b,
                          o0min, o0max, q1a, q1b, tol=1e-9):
    """Closed-set intersection of two swept boxes.

    First body: box [r0min, r0max] (at origin) swept from p1a to p1b.
    Second body: box [o0min, o0max] (at origin) swept from q1a to q1b.
    """
    # box difference B = (first box) - (second box)
    bminx = r0min[0] - o0max[0]
    bminy = r0min[1] - o0max[1]
    bminz = r0min[2] - o0max[2]
    bmaxx = r0max[0] - o0min[0]
    bmaxy = r0max[1] - o0min[1]
    bmaxz = r0max[2] - o0min[2]
    cx = 0.5 * (bminx + bmaxx)
    cy = 0.5 * (bminy + bmaxy)
    cz = 0.5 * (bminz + bmaxz)
    ex = 0.5 * (bmaxx - bminx)
    ey = 0.5 * (bmaxy - bminy)
    ez = 0.5 * (bmaxz - bminz)

    # parallelogram {s2 - s1}
    pts = (
        (q1a[0] - p1a[0], q1a[1] - p1a[1], q1a[2] - p1a[2]),
        (q1a[0] - p1b[0], q1a[1] - p1b[1], q1a[2] - p1b[2]),
        (q1b[0] - p1a[0], q1b[1] - p1a[1], q1b[2] - p1a[2]),
        (q1b[0] - p1b[0], q1b[1] - p1b[1], q1b[2] - p1b[2]),
    )
    ux = p1b[0] - p1a[0]
    uy = p1b[1] - p1a[1]
    uz = p1b[2] - p1a[2]
    wx = q1b[0] - q1a[0]
    wy = q1b[1] - q1a[1]
    wz = q1b[2] - q1a[2]

    # box face normals
    if _axis_separates(1.0, 0.0, 0.0, cx, cy, cz, ex, ey, ez, pts, tol):
        return False
    if _axis_separates(0.0, 1.0, 0.0, cx, cy, cz, ex, ey, ez, pts, tol):
        return False
    if _axis_separates(0.0, 0.0, 1.0, cx, cy, cz, ex, ey, ez, pts, tol):
        return False
    # parallelogram plane normal w x u
    if _axis_separates(wy * uz - wz * uy, wz * ux - wx * uz, wx * uy - wy * ux,
                       cx, cy, cz, ex, ey, ez, pts, tol):
        return False
    # edge cross products e_i x u and e_i x w
    if _axis_separates(0.0, -uz, uy, cx, cy, cz, ex, ey, ez, pts, tol):
        return False
    if _axis_separates(uz, 0.0, -ux, cx, cy, cz, ex, ey, ez, pts, tol):
        return False
    if _axis_separates(-uy, ux, 0.0, cx, cy, cz, ex, ey, ez, pts, tol):
        return False
    if _axis_separates(0.0, -wz, wy, cx, cy, cz, ex, ey, ez, pts, tol):
        return False
    if _axis_separates(wz, 0.0, -wx, cx, cy, cz, ex, ey, ez, pts, tol):
        return False
    if _axis_separates(-wy, wx, 0.0, cx, cy, cz, ex, ey, ez, pts, tol):
        return False
    return True


def box_support(nx, ny, nz, bmin, bmax):
    """Support value max_{v in box} n . v."""
    s = 0.0
    s += nx * (bmax[0] if nx > 0.0 else bmin[0])
    s += ny * (bmax[1] if ny > 0.0 else bmin[1])
    s += nz * (bmax[2] if nz > 0.0 else bmin[2])
    return s
