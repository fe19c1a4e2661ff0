# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the pairwise barrier and projection kernels."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, hypot, INFINITY, NAN

cnp.import_array()


def pair_terms(pos, vel, first, second, kind, double max_accel, double d_s,
               double d_c, double domain_tol):
    cdef const double[:, ::1] p = np.ascontiguousarray(pos, dtype=np.float64)
    cdef const double[:, ::1] v = np.ascontiguousarray(vel, dtype=np.float64)
    cdef const cnp.intp_t[::1] fi = np.ascontiguousarray(first, dtype=np.intp)
    cdef const cnp.intp_t[::1] se = np.ascontiguousarray(second, dtype=np.intp)
    cdef const long[::1] kd = np.ascontiguousarray(kind, dtype=np.int_)
    cdef Py_ssize_t k = fi.shape[0]
    h_arr = np.empty(k)
    gdp_arr = np.zeros((k, 2))
    gdv_arr = np.zeros((k, 2))
    dist_arr = np.empty(k)
    cdef double[::1] h = h_arr
    cdef double[:, ::1] gdp = gdp_arr
    cdef double[:, ::1] gdv = gdv_arr
    cdef double[::1] dist = dist_arr
    cdef Py_ssize_t m, a, b
    cdef double dpx, dpy, dvx, dvy, d, nx, ny, radial, arg, s, s_eff, sign, rx, ry
    cdef double s_floor = sqrt(max_accel * domain_tol)
    for m in range(k):
        a = fi[m]
        b = se[m]
        dpx = p[a, 0] - p[b, 0]
        dpy = p[a, 1] - p[b, 1]
        dvx = v[a, 0] - v[b, 0]
        dvy = v[a, 1] - v[b, 1]
        d = hypot(dpx, dpy)
        dist[m] = d
        if kd[m] == 1:
            sign = -1.0
            arg = max_accel * (d_c - d)
        else:
            sign = 1.0
            arg = max_accel * (d - d_s)
        if d == 0.0:
            h[m] = NAN if kd[m] == 1 else -INFINITY
            continue
        if arg < -domain_tol:
            h[m] = -INFINITY
            continue
        if arg < 0.0:
            arg = 0.0
        nx = dpx / d
        ny = dpy / d
        radial = nx * dvx + ny * dvy
        s = sqrt(arg)
        s_eff = s if s > s_floor else s_floor
        h[m] = 2.0 * s + sign * radial
        rx = (dvx - nx * radial) / d
        ry = (dvy - ny * radial) / d
        gdp[m, 0] = sign * ((max_accel / s_eff) * nx + rx)
        gdp[m, 1] = sign * ((max_accel / s_eff) * ny + ry)
        gdv[m, 0] = sign * nx
        gdv[m, 1] = sign * ny
    return h_arr, gdp_arr, gdv_arr, dist_arr


cdef inline double _clip(double x, double lo, double hi) noexcept nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef double _phi(const double[::1] u_hat, const double[::1] a, double c, const double[::1] lo,
                 const double[::1] hi, double mu) noexcept nogil:
    cdef Py_ssize_t j
    cdef double acc = 0.0
    for j in range(u_hat.shape[0]):
        acc += a[j] * _clip(u_hat[j] + mu * a[j], lo[j], hi[j])
    return acc + c


def project_halfspace_box(u_hat, a, double c, lo, hi):
    cdef const double[::1] uh = np.ascontiguousarray(u_hat, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] lv = np.ascontiguousarray(lo, dtype=np.float64)
    cdef const double[::1] hv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t n = uh.shape[0]
    cdef Py_ssize_t j, nb = 0, q
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double phi0, top, t, mu, mu_a, phi_a, phi_b

    phi0 = _phi(uh, av, c, lv, hv, 0.0)
    if phi0 >= 0.0:
        for j in range(n):
            out[j] = _clip(uh[j], lv[j], hv[j])
        return out_arr, 0.0, True
    top = c
    for j in range(n):
        if av[j] > 0.0:
            out[j] = hv[j]
        elif av[j] < 0.0:
            out[j] = lv[j]
        else:
            out[j] = _clip(uh[j], lv[j], hv[j])
        top += av[j] * out[j]
    if top < 0.0:
        return out_arr, INFINITY, False

    bp_arr = np.empty(2 * n)
    cdef double[::1] bp = bp_arr
    for j in range(n):
        if av[j] != 0.0:
            t = (lv[j] - uh[j]) / av[j]
            if t > 0.0:
                bp[nb] = t
                nb += 1
            t = (hv[j] - uh[j]) / av[j]
            if t > 0.0:
                bp[nb] = t
                nb += 1
    bp_sorted = np.unique(bp_arr[:nb])
    cdef const double[::1] bs = bp_sorted
    mu_a = 0.0
    phi_a = phi0
    mu = 0.0
    for q in range(bs.shape[0]):
        phi_b = _phi(uh, av, c, lv, hv, bs[q])
        if phi_b >= 0.0:
            mu = mu_a - phi_a * (bs[q] - mu_a) / (phi_b - phi_a)
            break
        mu_a = bs[q]
        phi_a = phi_b
    for j in range(n):
        out[j] = _clip(uh[j] + mu * av[j], lv[j], hv[j])
    return out_arr, mu, True
