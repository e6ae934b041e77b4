# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels.

Mirrors ``modeseek._fallback`` function for function; see that module for the
argument conventions.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, fabs, isfinite, pow
from libc.stdlib cimport malloc, free, realloc

cnp.import_array()

FLOW_CRITICAL = 0
FLOW_MAX_ARC = 1
FLOW_MAX_STEPS = 2
FLOW_NONFINITE = 3


cdef double _mix_vg(const double* x, const double[::1] coefs,
                    const double[:, ::1] means, const double[:, :, ::1] precs,
                    double* g, double* H, double* pd, int want) noexcept nogil:
    # want: 0 value only, 1 value + grad, 2 value + grad + hessian
    cdef Py_ssize_t K = means.shape[0]
    cdef Py_ssize_t d = means.shape[1]
    cdef Py_ssize_t k, i, j
    cdef double q, e, f = 0.0, diff_j
    if want >= 1:
        for i in range(d):
            g[i] = 0.0
    if want >= 2:
        for i in range(d * d):
            H[i] = 0.0
    for k in range(K):
        for i in range(d):
            pd[i] = 0.0
            for j in range(d):
                diff_j = x[j] - means[k, j]
                pd[i] += precs[k, i, j] * diff_j
        q = 0.0
        for i in range(d):
            q += (x[i] - means[k, i]) * pd[i]
        e = coefs[k] * exp(-0.5 * q)
        f += e
        if want >= 1:
            for i in range(d):
                g[i] -= e * pd[i]
        if want >= 2:
            for i in range(d):
                for j in range(d):
                    H[i * d + j] += e * (pd[i] * pd[j] - precs[k, i, j])
    return f


def mix_value(const double[::1] x, const double[::1] coefs,
              const double[:, ::1] means, const double[:, :, ::1] precs):
    cdef Py_ssize_t d = means.shape[1]
    cdef double* pd = <double*> malloc(d * sizeof(double))
    cdef double f
    try:
        f = _mix_vg(&x[0], coefs, means, precs, NULL, NULL, pd, 0)
    finally:
        free(pd)
    return f


def mix_value_grad(const double[::1] x, const double[::1] coefs,
                   const double[:, ::1] means, const double[:, :, ::1] precs):
    cdef Py_ssize_t d = means.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = np.empty(d)
    cdef double* pd = <double*> malloc(d * sizeof(double))
    cdef double f
    try:
        f = _mix_vg(&x[0], coefs, means, precs, <double*> g.data, NULL, pd, 1)
    finally:
        free(pd)
    return f, g


def mix_derivs(const double[::1] x, const double[::1] coefs,
               const double[:, ::1] means, const double[:, :, ::1] precs):
    cdef Py_ssize_t d = means.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = np.empty(d)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] H = np.empty((d, d))
    cdef double* pd = <double*> malloc(d * sizeof(double))
    cdef double f
    try:
        f = _mix_vg(&x[0], coefs, means, precs, <double*> g.data, <double*> H.data, pd, 2)
    finally:
        free(pd)
    return f, g, H


def mix_values(const double[:, ::1] X, const double[::1] coefs,
               const double[:, ::1] means, const double[:, :, ::1] precs):
    cdef Py_ssize_t n = X.shape[0], d = means.shape[1], r
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef double[::1] ov = out
    cdef double* pd = <double*> malloc(d * sizeof(double))
    try:
        with nogil:
            for r in range(n):
                ov[r] = _mix_vg(&X[r, 0], coefs, means, precs, NULL, NULL, pd, 0)
    finally:
        free(pd)
    return out


def mix_derivs_batch(const double[:, ::1] X, const double[::1] coefs,
                     const double[:, ::1] means, const double[:, :, ::1] precs):
    cdef Py_ssize_t n = X.shape[0], d = means.shape[1], r
    cdef cnp.ndarray[cnp.float64_t, ndim=1] F = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] G = np.empty((n, d))
    cdef cnp.ndarray[cnp.float64_t, ndim=3] H = np.empty((n, d, d))
    cdef double[::1] fv = F
    cdef double[:, ::1] gv = G
    cdef double[:, :, ::1] hv = H
    cdef double* pd = <double*> malloc(d * sizeof(double))
    try:
        with nogil:
            for r in range(n):
                fv[r] = _mix_vg(&X[r, 0], coefs, means, precs, &gv[r, 0], &hv[r, 0, 0], pd, 2)
    finally:
        free(pd)
    return F, G, H


def kde_sums(const double[::1] x, const double[:, ::1] sample,
             const cnp.int64_t[::1] idx, double h, int power, int order):
    cdef Py_ssize_t d = sample.shape[1], m = idx.shape[0]
    cdef Py_ssize_t a, i, j, p
    cdef double h2 = h * h, u, t, k, dk, d2k, s0 = 0.0, sdk = 0.0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s1 = np.zeros(d)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s2 = np.zeros(d)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] s3 = np.zeros((d, d))
    cdef double[::1] v1 = s1, v2 = s2
    cdef double[:, ::1] v3 = s3
    cdef double* diff = <double*> malloc(d * sizeof(double))
    try:
        with nogil:
            for a in range(m):
                p = idx[a]
                u = 0.0
                for i in range(d):
                    diff[i] = x[i] - sample[p, i]
                    u += diff[i] * diff[i]
                u /= h2
                if u >= 1.0:
                    continue
                t = 1.0 - u
                k = pow(t, power) if power > 0 else 1.0
                s0 += k
                for i in range(d):
                    v1[i] -= k * diff[i]
                if order >= 1 and power >= 1:
                    dk = -power * pow(t, power - 1)
                    for i in range(d):
                        v2[i] += dk * diff[i]
                    if order >= 2:
                        sdk += dk
                        if power >= 2:
                            d2k = power * (power - 1) * pow(t, power - 2)
                            for i in range(d):
                                for j in range(d):
                                    v3[i, j] += d2k * diff[i] * diff[j]
            if order >= 2 and power >= 1:
                for i in range(d):
                    v3[i, i] += sdk * h2 / 2.0
    finally:
        free(diff)
    return s0, s1, s2, s3


# Dormand-Prince 5(4) tableau
cdef double[7][7] _A
cdef double[7] _E
_A[1][:1] = [1.0 / 5]
_A[2][:2] = [3.0 / 40, 9.0 / 40]
_A[3][:3] = [44.0 / 45, -56.0 / 15, 32.0 / 9]
_A[4][:4] = [19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729]
_A[5][:5] = [9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656]
_A[6][:6] = [35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84]
_E[:] = [35.0 / 384 - 5179.0 / 57600, 0.0, 500.0 / 1113 - 7571.0 / 16695,
         125.0 / 192 - 393.0 / 640, -2187.0 / 6784 + 92097.0 / 339200,
         11.0 / 84 - 187.0 / 2100, -1.0 / 40]


cdef inline void _to_field(double* g, double* out, Py_ssize_t d, bint unit_speed) noexcept nogil:
    cdef Py_ssize_t i
    cdef double n = 0.0
    if unit_speed:
        for i in range(d):
            n += g[i] * g[i]
        n = sqrt(n)
    if unit_speed and n > 0:
        for i in range(d):
            out[i] = g[i] / n
    else:
        for i in range(d):
            out[i] = g[i]


def flow_mixture(x0, const double[::1] coefs, const double[:, ::1] means,
                 const double[:, :, ::1] precs, double rtol, double atol,
                 double h_max, double grad_stop, double max_arc,
                 double max_step_len, bint unit_speed, long max_steps):
    cdef Py_ssize_t d = means.shape[1]
    cdef Py_ssize_t i, j, s
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y0 = np.array(x0, dtype=np.float64)
    cdef double* buf = <double*> malloc((12 * d + 2 * d * d) * sizeof(double))
    cdef double* y = buf
    cdef double* ys = buf + d
    cdef double* g = buf + 2 * d
    cdef double* pd = buf + 3 * d
    cdef double* ks = buf + 4 * d          # 7 stages
    cdef double* ynew = buf + 11 * d
    cdef double* H = buf + 12 * d
    cdef double* Hn = buf + 12 * d + d * d
    cdef double f, fnew, gnorm, hn, h, cap, speed, err, e, sc, arc = 0.0, fac, step2
    cdef long steps = 0
    cdef int code = -1
    cdef Py_ssize_t n_out = 1, cap_out = 256
    cdef double* out = <double*> malloc(cap_out * d * sizeof(double))
    cdef double* grown
    try:
        for i in range(d):
            y[i] = y0[i]
            out[i] = y0[i]
        f = _mix_vg(y, coefs, means, precs, g, H, pd, 2)
        gnorm = 0.0
        hn = 0.0
        for i in range(d):
            gnorm += g[i] * g[i]
        for i in range(d * d):
            hn += H[i] * H[i]
        gnorm = sqrt(gnorm)
        hn = sqrt(hn)
        if gnorm <= grad_stop:
            return _copy_rows(out, n_out, d), FLOW_CRITICAL
        _to_field(g, ks, d, unit_speed)
        h = h_max if hn == 0 else min(h_max, 0.1 / hn)
        while True:
            if steps >= max_steps:
                code = FLOW_MAX_STEPS
                break
            cap = h_max
            if hn > 0:
                cap = min(cap, (0.1 * gnorm / hn) if unit_speed else (0.1 / hn))
            speed = 0.0
            for i in range(d):
                speed += ks[i] * ks[i]
            speed = sqrt(speed)
            if speed > 0 and max_step_len > 0:
                cap = min(cap, max_step_len / speed)
            h = min(h, cap)
            for s in range(1, 7):
                for i in range(d):
                    ys[i] = y[i]
                    for j in range(s):
                        if _A[s][j] != 0.0:
                            ys[i] += h * _A[s][j] * ks[j * d + i]
                if s < 6:
                    _mix_vg(ys, coefs, means, precs, g, NULL, pd, 1)
                    _to_field(g, ks + s * d, d, unit_speed)
                else:
                    for i in range(d):
                        ynew[i] = ys[i]
                    fnew = _mix_vg(ynew, coefs, means, precs, g, Hn, pd, 2)
                    _to_field(g, ks + 6 * d, d, unit_speed)
            err = 0.0
            for i in range(d):
                e = 0.0
                for j in range(7):
                    if _E[j] != 0.0:
                        e += h * _E[j] * ks[j * d + i]
                sc = atol + rtol * max(fabs(y[i]), fabs(ynew[i]))
                err = max(err, fabs(e) / sc)
            steps += 1
            if not isfinite(err) or not isfinite(fnew):
                code = FLOW_NONFINITE
                break
            step2 = 0.0
            for i in range(d):
                step2 += (ynew[i] - y[i]) * (ynew[i] - y[i])
            if max_step_len > 0 and step2 > max_step_len * max_step_len:
                h *= max(0.2, 0.9 * max_step_len / sqrt(step2))
                continue
            if err <= 1.0:
                for i in range(d):
                    y[i] = ynew[i]
                    ks[i] = ks[6 * d + i]
                arc += sqrt(step2)
                if n_out == cap_out:
                    grown = <double*> realloc(out, 2 * cap_out * d * sizeof(double))
                    if grown == NULL:
                        raise MemoryError()
                    out = grown
                    cap_out *= 2
                for i in range(d):
                    out[n_out * d + i] = y[i]
                n_out += 1
                gnorm = 0.0
                hn = 0.0
                for i in range(d):
                    gnorm += g[i] * g[i]
                for i in range(d * d):
                    H[i] = Hn[i]
                    hn += H[i] * H[i]
                gnorm = sqrt(gnorm)
                hn = sqrt(hn)
                if gnorm <= grad_stop:
                    code = FLOW_CRITICAL
                    break
                if arc > max_arc:
                    code = FLOW_MAX_ARC
                    break
            fac = 5.0 if err == 0.0 else 0.9 * pow(err, -0.2)
            h *= min(5.0, max(0.2, fac))
        result = _copy_rows(out, n_out, d)
    finally:
        free(buf)
        free(out)
    return result, code


cdef object _copy_rows(double* src, Py_ssize_t n, Py_ssize_t d):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] arr = np.empty((n, d))
    cdef double* dst = <double*> arr.data
    cdef Py_ssize_t i
    for i in range(n * d):
        dst[i] = src[i]
    return arr
