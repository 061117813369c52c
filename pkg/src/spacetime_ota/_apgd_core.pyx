# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled adaptive projected gradient loop.

Complex matrices are held as separate real and imaginary planes and every
inner loop is an axpy over a contiguous row, which gcc vectorizes at -O3
without reassociating sums. The work of each iteration runs without the GIL.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite
from libc.string cimport memcpy

cnp.import_array()

cdef int STATUS_MAX_ITERS = 0
cdef int STATUS_TOLERANCE = 1
cdef int STATUS_STAGNATION = 2
cdef int STATUS_NONFINITE = -1


cdef inline void _caxpy(Py_ssize_t n, double ar, double ai,
                        const double* xr, const double* xi,
                        double* yr, double* yi) noexcept nogil:
    # y += a * x
    cdef Py_ssize_t k
    for k in range(n):
        yr[k] += ar * xr[k] - ai * xi[k]
        yi[k] += ar * xi[k] + ai * xr[k]


cdef class _Mat:
    """Split complex matrix, row-major."""
    cdef public object re_arr, im_arr
    cdef double* re
    cdef double* im
    cdef Py_ssize_t rows, cols, size

    def __cinit__(self, Py_ssize_t rows, Py_ssize_t cols):
        self.rows = rows
        self.cols = cols
        self.size = rows * cols
        self.re_arr = np.zeros((rows, cols))
        self.im_arr = np.zeros((rows, cols))
        self.re = <double*> cnp.PyArray_DATA(self.re_arr)
        self.im = <double*> cnp.PyArray_DATA(self.im_arr)

    def load(self, A):
        A = np.asarray(A)
        self.re_arr[...] = A.real
        self.im_arr[...] = A.imag

    def value(self):
        return self.re_arr + 1j * self.im_arr


cdef inline void _copy(_Mat dst, _Mat src) noexcept nogil:
    memcpy(dst.re, src.re, src.size * sizeof(double))
    memcpy(dst.im, src.im, src.size * sizeof(double))


cdef inline double _sq(_Mat A) noexcept nogil:
    cdef Py_ssize_t k
    cdef double acc = 0.0
    for k in range(A.size):
        acc += A.re[k] * A.re[k] + A.im[k] * A.im[k]
    return acc


cdef inline double _sqdiff(_Mat A, _Mat B) noexcept nogil:
    cdef Py_ssize_t k
    cdef double d, e, acc = 0.0
    for k in range(A.size):
        d = A.re[k] - B.re[k]
        e = A.im[k] - B.im[k]
        acc += d * d + e * e
    return acc


cdef inline bint _finite(_Mat A) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(A.size):
        if not (isfinite(A.re[k]) and isfinite(A.im[k])):
            return False
    return True


cdef inline void _step(_Mat X, _Mat G, double alpha) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(X.size):
        X.re[k] -= alpha * G.re[k]
        X.im[k] -= alpha * G.im[k]


cdef void _project(_Mat P, const double* sqrt_caps, double* norms) noexcept nogil:
    # P is T x Ns; column norms accumulated row by row
    cdef Py_ssize_t t, i, ns = P.cols
    cdef double* pr
    cdef double* pi
    for i in range(ns):
        norms[i] = 0.0
    for t in range(P.rows):
        pr = P.re + t * ns
        pi = P.im + t * ns
        for i in range(ns):
            norms[i] += pr[i] * pr[i] + pi[i] * pi[i]
    for i in range(ns):
        norms[i] = sqrt(norms[i])
        norms[i] = sqrt_caps[i] / norms[i] if norms[i] > sqrt_caps[i] else 1.0
    for t in range(P.rows):
        pr = P.re + t * ns
        pi = P.im + t * ns
        for i in range(ns):
            pr[i] *= norms[i]
            pi[i] *= norms[i]


cdef double _grad(_Mat P, _Mat Q, _Mat W, const double* mask, double lam,
                  bint freeze_p, _Mat R, _Mat RT, _Mat GP, _Mat GQ) noexcept nogil:
    """Objective value; fills GQ and (unless frozen) GP."""
    cdef Py_ssize_t T = P.rows, ns = P.cols, nr = Q.cols
    cdef Py_ssize_t t, i, j
    cdef double f = 0.0, fq = 0.0, a, b
    cdef double* rr
    cdef double* ri

    # R = P^T Q - W, row i of R accumulates P[t, i] * Q[t, :]
    for i in range(ns):
        rr = R.re + i * nr
        ri = R.im + i * nr
        for j in range(nr):
            rr[j] = -W.re[i * nr + j]
            ri[j] = -W.im[i * nr + j]
        for t in range(T):
            _caxpy(nr, P.re[t * ns + i], P.im[t * ns + i],
                   Q.re + t * nr, Q.im + t * nr, rr, ri)
    if mask != NULL:
        for i in range(R.size):
            R.re[i] *= mask[i]
            R.im[i] *= mask[i]
    for i in range(R.size):
        f += R.re[i] * R.re[i] + R.im[i] * R.im[i]
    for i in range(Q.size):
        fq += Q.re[i] * Q.re[i] + Q.im[i] * Q.im[i]

    # GQ = 2 (conj(P) R + lam Q)
    for i in range(Q.size):
        GQ.re[i] = lam * Q.re[i]
        GQ.im[i] = lam * Q.im[i]
    for t in range(T):
        for i in range(ns):
            _caxpy(nr, P.re[t * ns + i], -P.im[t * ns + i],
                   R.re + i * nr, R.im + i * nr, GQ.re + t * nr, GQ.im + t * nr)
    for i in range(GQ.size):
        GQ.re[i] *= 2.0
        GQ.im[i] *= 2.0

    if not freeze_p:
        # GP = 2 conj(Q) R^T
        for i in range(ns):
            for j in range(nr):
                RT.re[j * ns + i] = R.re[i * nr + j]
                RT.im[j * ns + i] = R.im[i * nr + j]
        for i in range(GP.size):
            GP.re[i] = 0.0
            GP.im[i] = 0.0
        for t in range(T):
            for j in range(nr):
                a = 2.0 * Q.re[t * nr + j]
                b = -2.0 * Q.im[t * nr + j]
                _caxpy(ns, a, b, RT.re + j * ns, RT.im + j * ns,
                       GP.re + t * ns, GP.im + t * ns)
    return f + lam * fq


def apgd(P, Q, W, mask, sqrt_caps, double lam, double alpha0, Py_ssize_t max_iters,
         double rel_tol, Py_ssize_t stall_iters, bint freeze_p,
         double[::1] obj_hist, double[::1] step_hist, callback=None):
    """Run the loop in place on ``P`` (T x Ns) and ``Q`` (T x Nr).

    Same contract as the numpy fallback: ``P`` must be feasible on entry,
    returns ``(iterations, status)``.
    """
    cdef Py_ssize_t T = P.shape[0], ns = P.shape[1], nr = Q.shape[1]
    cdef _Mat Pm = _Mat(T, ns), Qm = _Mat(T, nr), Wm = _Mat(ns, nr)
    cdef _Mat R = _Mat(ns, nr), RT = _Mat(nr, ns)
    cdef _Mat GP = _Mat(T, ns), GQ = _Mat(T, nr)
    cdef _Mat P0 = _Mat(T, ns), Q0 = _Mat(T, nr), GP0 = _Mat(T, ns), GQ0 = _Mat(T, nr)
    Pm.load(P)
    Qm.load(Q)
    Wm.load(W)
    mask_arr = None if mask is None else np.ascontiguousarray(mask, dtype=np.float64)
    cdef const double* maskp = NULL
    if mask_arr is not None:
        maskp = <double*> cnp.PyArray_DATA(mask_arr)
    sc_arr = np.ascontiguousarray(sqrt_caps, dtype=np.float64)
    cdef const double* sc = <double*> cnp.PyArray_DATA(sc_arr)
    norms_arr = np.zeros(ns)
    cdef double* norms = <double*> cnp.PyArray_DATA(norms_arr)

    cdef double f, alpha, alpha_prev, alpha_prev2, dx2 = 0.0, dg2, ref2 = 0.0, best
    cdef Py_ssize_t k = 0, since_best = 0
    cdef int status = STATUS_MAX_ITERS
    cdef bint finite

    with nogil:
        f = _grad(Pm, Qm, Wm, maskp, lam, freeze_p, R, RT, GP, GQ)
        finite = isfinite(f) and _finite(GQ) and (freeze_p or _finite(GP))
        if finite:
            alpha = alpha0
            _copy(P0, Pm)
            _copy(Q0, Qm)
            _copy(GP0, GP)
            _copy(GQ0, GQ)
            if not freeze_p:
                _step(Pm, GP, alpha)
                _project(Pm, sc, norms)
            _step(Qm, GQ, alpha)
            dx2 = _sqdiff(Qm, Q0) + (0.0 if freeze_p else _sqdiff(Pm, P0))
            ref2 = _sq(Q0) + _sq(P0)
    if not finite:
        return 0, STATUS_NONFINITE
    obj_hist[0] = f
    step_hist[0] = alpha
    if callback is not None:
        callback(0, f, alpha)
    k = 1
    alpha_prev = alpha
    alpha_prev2 = alpha
    best = f

    if sqrt(dx2) < rel_tol * max(1.0, sqrt(ref2)):
        status = STATUS_TOLERANCE
    elif dx2 == 0.0:
        status = STATUS_STAGNATION
    else:
        while k < max_iters:
            with nogil:
                f = _grad(Pm, Qm, Wm, maskp, lam, freeze_p, R, RT, GP, GQ)
                finite = isfinite(f) and _finite(GQ) and (freeze_p or _finite(GP))
                if finite:
                    dx2 = _sqdiff(Qm, Q0)
                    dg2 = _sqdiff(GQ, GQ0)
                    if not freeze_p:
                        dx2 += _sqdiff(Pm, P0)
                        dg2 += _sqdiff(GP, GP0)
                    alpha = sqrt(1.0 + alpha_prev / alpha_prev2) * alpha_prev
                    if dg2 > 0.0:
                        alpha = min(alpha, sqrt(dx2) / (2.0 * sqrt(dg2)))
                    _copy(P0, Pm)
                    _copy(Q0, Qm)
                    _copy(GP0, GP)
                    _copy(GQ0, GQ)
                    if not freeze_p:
                        _step(Pm, GP, alpha)
                        _project(Pm, sc, norms)
                    _step(Qm, GQ, alpha)
                    dx2 = _sqdiff(Qm, Q0) + (0.0 if freeze_p else _sqdiff(Pm, P0))
                    ref2 = _sq(Q0) + _sq(P0)
            if not finite:
                status = STATUS_NONFINITE
                break
            obj_hist[k] = f
            step_hist[k] = alpha
            if callback is not None:
                callback(k, f, alpha)
            k += 1
            alpha_prev2 = alpha_prev
            alpha_prev = alpha
            if sqrt(dx2) < rel_tol * max(1.0, sqrt(ref2)):
                status = STATUS_TOLERANCE
                break
            if dx2 == 0.0:
                status = STATUS_STAGNATION
                break
            if f < best * (1.0 - 1e-15):
                best = f
                since_best = 0
            else:
                since_best += 1
                if stall_iters and since_best >= stall_iters:
                    status = STATUS_STAGNATION
                    break

    P[...] = Pm.value()
    Q[...] = Qm.value()
    return k, status
