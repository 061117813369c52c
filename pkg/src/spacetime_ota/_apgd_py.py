"""Numpy implementation of the adaptive projected gradient loop.

Same contract as the compiled ``_apgd_core.apgd``; used when the extension
is not built or ``SPACETIME_OTA_BACKEND=python`` is set.
"""
import math

import numpy as np

STATUS_MAX_ITERS = 0
STATUS_TOLERANCE = 1
STATUS_STAGNATION = 2
STATUS_NONFINITE = -1


def _grad(P, Q, W, mask, lam, freeze_p):
    # non-finite values are reported by the caller
    with np.errstate(invalid="ignore", over="ignore"):
        R = P.T @ Q - W
        if mask is not None:
            R *= mask
        f = float(np.vdot(R, R).real + lam * np.vdot(Q, Q).real)
        GQ = 2.0 * (P.conj() @ R + lam * Q)
        GP = None if freeze_p else 2.0 * (Q.conj() @ R.T)
    return f, GP, GQ


def _project(P, sqrt_caps):
    norms = np.sqrt(np.einsum("ti,ti->i", P.real, P.real)
                    + np.einsum("ti,ti->i", P.imag, P.imag))
    over = norms > sqrt_caps
    if over.any():
        P[:, over] *= sqrt_caps[over] / norms[over]
    return P


def _sqnorm(A):
    return float(np.vdot(A, A).real)


def apgd(P, Q, W, mask, sqrt_caps, lam, alpha0, max_iters, rel_tol,
         stall_iters, freeze_p, obj_hist, step_hist, callback=None):
    """Run the loop in place on ``P`` (T x Ns) and ``Q`` (T x Nr).

    ``P`` must already be feasible. Returns ``(iterations, status)``; the
    per-iteration objective and step size are written to ``obj_hist`` and
    ``step_hist``.
    """
    lam = float(lam)
    f, GP, GQ = _grad(P, Q, W, mask, lam, freeze_p)
    if not (math.isfinite(f) and np.isfinite(GQ).all()
            and (freeze_p or np.isfinite(GP).all())):
        return 0, STATUS_NONFINITE

    # first step seeds the recursion with alpha0
    P_prev, Q_prev, GP_prev, GQ_prev = P.copy(), Q.copy(), GP, GQ
    alpha = float(alpha0)
    if not freeze_p:
        P -= alpha * GP
        _project(P, sqrt_caps)
    Q -= alpha * GQ
    obj_hist[0] = f
    step_hist[0] = alpha
    if callback is not None:
        callback(0, f, alpha)
    k = 1
    alpha_prev = alpha_prev2 = alpha
    best = f
    since_best = 0

    dx2 = _sqnorm(Q - Q_prev) + (0.0 if freeze_p else _sqnorm(P - P_prev))
    ref2 = _sqnorm(Q_prev) + _sqnorm(P_prev)
    if math.sqrt(dx2) < rel_tol * max(1.0, math.sqrt(ref2)):
        return k, STATUS_TOLERANCE
    if dx2 == 0.0:
        return k, STATUS_STAGNATION

    while k < max_iters:
        f, GP, GQ = _grad(P, Q, W, mask, lam, freeze_p)
        if not (math.isfinite(f) and np.isfinite(GQ).all()
                and (freeze_p or np.isfinite(GP).all())):
            return k, STATUS_NONFINITE

        dx2 = _sqnorm(Q - Q_prev)
        dg2 = _sqnorm(GQ - GQ_prev)
        if not freeze_p:
            dx2 += _sqnorm(P - P_prev)
            dg2 += _sqnorm(GP - GP_prev)
        alpha = math.sqrt(1.0 + alpha_prev / alpha_prev2) * alpha_prev
        if dg2 > 0.0:
            alpha = min(alpha, math.sqrt(dx2) / (2.0 * math.sqrt(dg2)))

        P_prev, Q_prev, GP_prev, GQ_prev = P.copy(), Q.copy(), GP, GQ
        if not freeze_p:
            P -= alpha * GP
            _project(P, sqrt_caps)
        Q -= alpha * GQ

        obj_hist[k] = f
        step_hist[k] = alpha
        if callback is not None:
            callback(k, f, alpha)
        k += 1
        alpha_prev2, alpha_prev = alpha_prev, alpha

        dx2 = _sqnorm(Q - Q_prev) + (0.0 if freeze_p else _sqnorm(P - P_prev))
        ref2 = _sqnorm(Q_prev) + _sqnorm(P_prev)
        if math.sqrt(dx2) < rel_tol * max(1.0, math.sqrt(ref2)):
            return k, STATUS_TOLERANCE
        if dx2 == 0.0:
            return k, STATUS_STAGNATION
        if f < best * (1.0 - 1e-15):
            best = f
            since_best = 0
        else:
            since_best += 1
            if stall_iters and since_best >= stall_iters:
                return k, STATUS_STAGNATION
    return k, STATUS_MAX_ITERS
