# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels. Mirror of probnav.kernels._pure."""

from libc.math cimport fabs, sqrt

BACKEND = "compiled"


def seg_aabb_intersects(double ax, double ay, double az,
                        double bx, double by, double bz,
                        double minx, double miny, double minz,
                        double maxx, double maxy, double maxz,
                        double tol=1e-9):
    cdef double t0 = 0.0, t1 = 1.0
    cdef double a, d, lo, hi, ta, tb, tmp
    cdef int i
    for i in range(3):
        if i == 0:
            a = ax; d = bx - ax; lo = minx; hi = maxx
        elif i == 1:
            a = ay; d = by - ay; lo = miny; hi = maxy
        else:
            a = az; d = bz - az; lo = minz; hi = maxz
        if -1e-300 < d < 1e-300:
            if a < lo - tol or a > hi + tol:
                return False
        else:
            ta = (lo - tol - a) / d
            tb = (hi + tol - a) / d
            if ta > tb:
                tmp = ta; ta = tb; tb = tmp
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
            if t0 > t1:
                return False
    return True


cdef bint _axis_separates(double axx, double axy, double axz,
                          double cx, double cy, double cz,
                          double ex, double ey, double ez,
                          double* px, double* py, double* pz,
                          double tol) nogil:
    cdef double n2 = axx * axx + axy * axy + axz * axz
    if n2 < 1e-18:
        return False
    cdef double bc = axx * cx + axy * cy + axz * cz
    cdef double br = fabs(axx) * ex + fabs(axy) * ey + fabs(axz) * ez
    cdef double pmin, pmax, v
    cdef int k
    pmin = pmax = axx * px[0] + axy * py[0] + axz * pz[0]
    for k in range(1, 4):
        v = axx * px[k] + axy * py[k] + axz * pz[k]
        if v < pmin:
            pmin = v
        elif v > pmax:
            pmax = v
    cdef double scale = sqrt(n2)
    return pmin > bc + br + tol * scale or pmax < bc - br - tol * scale


def sweep_pair_intersects(r0min, r0max, p1a, p1b,
                          o0min, o0max, q1a, q1b, double tol=1e-9):
    cdef double bminx = <double>r0min[0] - <double>o0max[0]
    cdef double bminy = <double>r0min[1] - <double>o0max[1]
    cdef double bminz = <double>r0min[2] - <double>o0max[2]
    cdef double bmaxx = <double>r0max[0] - <double>o0min[0]
    cdef double bmaxy = <double>r0max[1] - <double>o0min[1]
    cdef double bmaxz = <double>r0max[2] - <double>o0min[2]
    cdef double cx = 0.5 * (bminx + bmaxx)
    cdef double cy = 0.5 * (bminy + bmaxy)
    cdef double cz = 0.5 * (bminz + bmaxz)
    cdef double ex = 0.5 * (bmaxx - bminx)
    cdef double ey = 0.5 * (bmaxy - bminy)
    cdef double ez = 0.5 * (bmaxz - bminz)

    cdef double p1ax = <double>p1a[0], p1ay = <double>p1a[1], p1az = <double>p1a[2]
    cdef double p1bx = <double>p1b[0], p1by = <double>p1b[1], p1bz = <double>p1b[2]
    cdef double q1ax = <double>q1a[0], q1ay = <double>q1a[1], q1az = <double>q1a[2]
    cdef double q1bx = <double>q1b[0], q1by = <double>q1b[1], q1bz = <double>q1b[2]

    cdef double px[4]
    cdef double py[4]
    cdef double pz[4]
    px[0] = q1ax - p1ax; py[0] = q1ay - p1ay; pz[0] = q1az - p1az
    px[1] = q1ax - p1bx; py[1] = q1ay - p1by; pz[1] = q1az - p1bz
    px[2] = q1bx - p1ax; py[2] = q1by - p1ay; pz[2] = q1bz - p1az
    px[3] = q1bx - p1bx; py[3] = q1by - p1by; pz[3] = q1bz - p1bz

    cdef double ux = p1bx - p1ax, uy = p1by - p1ay, uz = p1bz - p1az
    cdef double wx = q1bx - q1ax, wy = q1by - q1ay, wz = q1bz - q1az

    if _axis_separates(1.0, 0.0, 0.0, cx, cy, cz, ex, ey, ez, px, py, pz, tol):
        return False
    if _axis_separates(0.0, 1.0, 0.0, cx, cy, cz, ex, ey, ez, px, py, pz, tol):
        return False
    if _axis_separates(0.0, 0.0, 1.0, cx, cy, cz, ex, ey, ez, px, py, pz, tol):
        return False
    if _axis_separates(wy * uz - wz * uy, wz * ux - wx * uz, wx * uy - wy * ux,
                       cx, cy, cz, ex, ey, ez, px, py, pz, tol):
        return False
    if _axis_separates(0.0, -uz, uy, cx, cy, cz, ex, ey, ez, px, py, pz, tol):
        return False
    if _axis_separates(uz, 0.0, -ux, cx, cy, cz, ex, ey, ez, px, py, pz, tol):
        return False
    if _axis_separates(-uy, ux, 0.0, cx, cy, cz, ex, ey, ez, px, py, pz, tol):
        return False
    if _axis_separates(0.0, -wz, wy, cx, cy, cz, ex, ey, ez, px, py, pz, tol):
        return False
    if _axis_separates(wz, 0.0, -wx, cx, cy, cz, ex, ey, ez, px, py, pz, tol):
        return False
    if _axis_separates(-wy, wx, 0.0, cx, cy, cz, ex, ey, ez, px, py, pz, tol):
        return False
    return True


def box_support(double nx, double ny, double nz, bmin, bmax):
    cdef double s = 0.0
    s += nx * (<double>bmax[0] if nx > 0.0 else <double>bmin[0])
    s += ny * (<double>bmax[1] if ny > 0.0 else <double>bmin[1])
    s += nz * (<double>bmax[2] if nz > 0.0 else <double>bmin[2])
    return s
