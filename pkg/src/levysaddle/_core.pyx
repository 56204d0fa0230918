# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: weighted log-sum-exp moments and contour sums."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, log, log1p, fabs, sin, cos, INFINITY

cnp.import_array()


cdef inline double _log_phi0(double z) nogil:
    cdef double s
    if fabs(z) < 0.1:
        if z == 0.0:
            return -INFINITY
        s = z * (1.0 / 3 + z * (1.0 / 12 + z * (1.0 / 60 + z * (1.0 / 360 + z * (1.0 / 2520 + z * (1.0 / 20160 + z / 181440))))))
        return 2.0 * log(fabs(z)) - 0.69314718055994530942 + log1p(s)
    if z >= 1.0:
        return z + log1p(-(1.0 + z) * exp(-z))
    return log(expm1(z) - z)


cdef inline double _log_abs_expm1(double z) nogil:
    if z > 1.0:
        return z + log1p(-exp(-z))
    if z == 0.0:
        return -INFINITY
    return log(fabs(expm1(z)))


cdef inline double _sinmx(double y) nogil:
    cdef double y2
    if fabs(y) < 0.1:
        y2 = y * y
        return -y * y2 / 6.0 * (1.0 - y2 / 20.0 * (1.0 - y2 / 42.0 * (1.0 - y2 / 72.0)))
    return sin(y) - y


cdef double _log_term(double v, double lw, double xi, int k) nogil:
    cdef double av
    if k == 0:
        return lw + _log_phi0(xi * v)
    av = fabs(v)
    if av == 0.0:
        return -INFINITY
    if k == 1:
        return lw + log(av) + _log_abs_expm1(xi * v)
    return lw + k * log(av) + xi * v


def log_terms(double[::1] v, double[::1] logw, double xi, int k):
    cdef Py_ssize_t i, n = v.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _log_term(v[i], logw[i], xi, k)
    return out


def log_moment(double[::1] v, double[::1] logw, double xi, int k):
    cdef Py_ssize_t i, n = v.shape[0]
    cdef double top = -INFINITY, acc = 0.0
    if n == 0:
        return -INFINITY
    buf = np.empty(n)
    cdef double[::1] t = buf
    # two passes: terms and their maximum, then the scaled sum
    with nogil:
        for i in range(n):
            t[i] = _log_term(v[i], logw[i], xi, k)
            if t[i] > top:
                top = t[i]
        if top != -INFINITY:
            for i in range(n):
                acc += exp(t[i] - top)
    if top == -INFINITY:
        return top
    return top + log(acc)


def contour_sums(double[::1] v, double[::1] logw, double xi, eta_in):
    cdef double[::1] etas = np.ascontiguousarray(eta_in, dtype=np.float64)
    cdef Py_ssize_t i, j, n = v.shape[0], m = etas.shape[0]
    a_arr = np.empty(m)
    b_arr = np.empty(m)
    cdef double[::1] a_out = a_arr
    cdef double[::1] b_out = b_arr
    wt_arr = np.empty(n)
    w_arr = np.empty(n)
    em_arr = np.empty(n)
    cdef double[::1] wt = wt_arr
    cdef double[::1] w = w_arr
    cdef double[::1] em = em_arr
    cdef double e, ph, sh, ch, sn, sa, sb
    with nogil:
        for i in range(n):
            w[i] = exp(logw[i])
            wt[i] = exp(logw[i] + xi * v[i])
            em[i] = w[i] * expm1(xi * v[i])
        for j in range(m):
            e = etas[j]
            sa = 0.0
            sb = 0.0
            for i in range(n):
                ph = e * v[i]
                # one sine/cosine pair of the half angle serves both sums
                sh = sin(0.5 * ph)
                ch = cos(0.5 * ph)
                sa += wt[i] * sh * sh
                sn = 2.0 * sh * ch
                if fabs(ph) < 0.1:
                    sb += em[i] * sn + w[i] * _sinmx(ph)
                else:
                    sb += em[i] * sn + w[i] * (sn - ph)
            a_out[j] = 2.0 * sa
            b_out[j] = sb
    return a_arr, b_arr


def cos_sums(double[::1] v, double[::1] logw, z_in):
    cdef double[::1] zs = np.ascontiguousarray(z_in, dtype=np.float64)
    cdef Py_ssize_t i, j, n = v.shape[0], m = zs.shape[0]
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    w_arr = np.exp(np.asarray(logw))
    cdef double[::1] w = w_arr
    cdef double z, h, s
    with nogil:
        for j in range(m):
            z = zs[j]
            s = 0.0
            for i in range(n):
                h = sin(0.5 * z * v[i])
                s += w[i] * h * h
            out[j] = 2.0 * s
    return out
