# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled box-mass kernel; same contract as ``_quadrature_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport erfc, exp, sqrt, fabs, ceil

cnp.import_array()

cdef double SQRT1_2 = 0.7071067811865476
cdef double INV_SQRT_2PI = 0.3989422804014327
cdef double TAIL = 8.5
cdef int MAX_PANELS = 4096


cdef inline double phi_interval(double a, double b) nogil:
    if not b > a:
        return 0.0
    if a >= 0.0:
        return 0.5 * (erfc(a * SQRT1_2) - erfc(b * SQRT1_2))
    if b <= 0.0:
        return 0.5 * (erfc(-b * SQRT1_2) - erfc(-a * SQRT1_2))
    return 1.0 - 0.5 * erfc(-a * SQRT1_2) - 0.5 * erfc(b * SQRT1_2)


cdef double box_mass(double m0, double m1, double c00, double c01, double c11,
                     double lo0, double lo1, double hi0, double hi1,
                     const double[::1] nodes, const double[::1] weights) nogil:
    cdef double s0 = sqrt(c00)
    cdef double s1 = sqrt(c11)
    cdef double rho = c01 / (s0 * s1)
    cdef double a0, b0, sc, width, h, half, mid, t, acc, lo_s, hi_s, r
    cdef int n_panels, p, q, nq = nodes.shape[0]
    if rho > 1.0:
        rho = 1.0
    elif rho < -1.0:
        rho = -1.0
    a0 = (lo0 - m0) / s0
    b0 = (hi0 - m0) / s0
    if a0 < -TAIL:
        a0 = -TAIL
    if b0 > TAIL:
        b0 = TAIL
    if not b0 > a0:
        return 0.0
    lo_s = (lo1 - m1) / s1
    hi_s = (hi1 - m1) / s1
    if rho == 0.0:
        return phi_interval(a0, b0) * phi_interval(lo_s, hi_s)

    r = fabs(rho)
    sc = 1.0 - rho * rho
    if sc < 1e-300:
        sc = 1e-300
    sc = sqrt(sc)
    width = sc / r
    if width > 1.0:
        width = 1.0
    width *= 0.5
    n_panels = <int>ceil((b0 - a0) / width)
    if n_panels < 1:
        n_panels = 1
    if n_panels > MAX_PANELS:
        n_panels = MAX_PANELS
    h = (b0 - a0) / n_panels
    half = 0.5 * h
    acc = 0.0
    for p in range(n_panels):
        mid = a0 + (p + 0.5) * h
        for q in range(nq):
            t = mid + half * nodes[q]
            acc += half * weights[q] * INV_SQRT_2PI * exp(-0.5 * t * t) * \
                phi_interval((lo_s - rho * t) / sc, (hi_s - rho * t) / sc)
    return acc


def box_masses_2d(means, covs, lo, hi, nodes, weights):
    cdef const double[:, ::1] m = np.ascontiguousarray(means, dtype=np.float64)
    cdef const double[:, :, ::1] c = np.ascontiguousarray(covs, dtype=np.float64)
    cdef const double[:, ::1] a = np.ascontiguousarray(lo, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(hi, dtype=np.float64)
    cdef const double[::1] x = np.ascontiguousarray(nodes, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = m.shape[0], k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for k in range(n):
            o[k] = box_mass(m[k, 0], m[k, 1], c[k, 0, 0], c[k, 0, 1], c[k, 1, 1],
                            a[k, 0], a[k, 1], b[k, 0], b[k, 1], x, w)
    return out
