"""Penalized complex matrix factorization by adaptive projected gradient descent.

Minimizes ``||P^T Q - W||_F^2 + lam ||Q||_F^2`` over ``P`` (T x Ns) and
``Q`` (T x Nr) with every column ``p_i`` of ``P`` kept inside the ball of
radius ``sqrt(caps[i])``. The step size adapts to local curvature, so no
Lipschitz constant is needed.

The iteration loop runs in the compiled ``_apgd_core`` extension when it is
available, otherwise in the numpy kernel from ``_apgd_py``. Set the
environment variable ``SPACETIME_OTA_BACKEND`` to ``python`` or ``compiled``
to force a choice.
"""
from __future__ import annotations

import enum
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _apgd_py
from .network import ProblemInstance, complex_normal

__all__ = [
    "Factorization",
    "SolverConfig",
    "SolverTrace",
    "Termination",
    "SolverDivergence",
    "objective",
    "gradient",
    "project",
    "step_size",
    "solve",
    "ridge_oracle",
    "BACKEND",
    "available_backends",
    "get_kernel",
]

log = logging.getLogger(__name__)

FEASIBILITY_RTOL = 1e-12


def available_backends():
    names = ["python"]
    try:
        from . import _apgd_core  # noqa: F401
    except ImportError:
        pass
    else:
        names.insert(0, "compiled")
    return names


def get_kernel(name: str):
    """Return the ``apgd`` loop implementation for a backend name."""
    if name == "compiled":
        from . import _apgd_core
        return _apgd_core.apgd
    if name == "python":
        return _apgd_py.apgd
    raise ValueError(f"unknown backend {name!r}")


def _select_backend():
    wanted = os.environ.get("SPACETIME_OTA_BACKEND", "").strip().lower()
    have = available_backends()
    if wanted:
        if wanted not in have:
            raise ImportError(f"requested backend {wanted!r} is not available ({have})")
        return wanted
    return have[0]


BACKEND = _select_backend()


class SolverDivergence(FloatingPointError):
    """Objective or gradient became non-finite during the iteration."""


class Termination(str, enum.Enum):
    MAX_ITERS = "max_iters"
    TOLERANCE = "tolerance"
    STAGNATION = "stagnation"


_STATUS = {
    _apgd_py.STATUS_MAX_ITERS: Termination.MAX_ITERS,
    _apgd_py.STATUS_TOLERANCE: Termination.TOLERANCE,
    _apgd_py.STATUS_STAGNATION: Termination.STAGNATION,
}


@dataclass
class Factorization:
    """Precoders ``P`` (column i is sender i) and decoders ``Q`` (column j is receiver j)."""

    P: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=complex)
        self.Q = np.asarray(self.Q, dtype=complex)
        if self.P.ndim != 2 or self.Q.ndim != 2 or self.P.shape[0] != self.Q.shape[0]:
            raise ValueError(
                f"P and Q must be 2-D with the same number of rows, got "
                f"{self.P.shape} and {self.Q.shape}")

    @property
    def T(self) -> int:
        return self.P.shape[0]

    def conj(self) -> "Factorization":
        return Factorization(self.P.conj(), self.Q.conj())


@dataclass
class SolverConfig:
    """Solver knobs.

    ``lam`` is the penalty on ``||Q||_F^2``. ``alpha0`` only seeds the
    step-size recursion. Iteration stops when the relative change of the
    stacked iterate drops below ``rel_tol``, when the best objective has not
    improved for ``stall_iters`` iterations (0 disables this), or after
    ``max_iters``. With ``edge_mask`` only entries of ``P^T Q - W`` on
    network edges are penalized.
    """

    lam: float = 0.1
    alpha0: float = 1e-7
    max_iters: int = 20000
    rel_tol: float = 1e-9
    init_scale: float = 0.1
    stall_iters: int = 2000
    edge_mask: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lam must be nonnegative")
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.rel_tol >= 0:
            raise ValueError("rel_tol must be nonnegative")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be positive")
        if self.stall_iters < 0:
            raise ValueError("stall_iters must be nonnegative")


@dataclass
class SolverTrace:
    objective_history: np.ndarray
    step_history: np.ndarray
    iterations_run: int
    terminated_by: Termination
    backend: str = field(default=BACKEND)


def _check_shapes(fac: Factorization, W: np.ndarray):
    ns, nr = W.shape
    if fac.P.shape[1] != ns or fac.Q.shape[1] != nr:
        raise ValueError(
            f"factorization shapes {fac.P.shape}, {fac.Q.shape} do not match "
            f"weight matrix {W.shape}")


def _weights(instance_or_W):
    if isinstance(instance_or_W, ProblemInstance):
        return instance_or_W.W
    return np.asarray(instance_or_W, dtype=complex)


def _residual(fac, W, mask=None):
    R = fac.P.T @ fac.Q - W
    if mask is not None:
        R = R * mask
    return R


def objective(fac: Factorization, instance, lam: float, mask=None) -> float:
    """``||P^T Q - W||_F^2 + lam ||Q||_F^2``.

    ``instance`` may be a :class:`ProblemInstance` or the weight matrix itself.
    """
    W = _weights(instance)
    _check_shapes(fac, W)
    R = _residual(fac, W, mask)
    return float(np.vdot(R, R).real + lam * np.vdot(fac.Q, fac.Q).real)


def gradient(fac: Factorization, instance, lam: float, mask=None):
    """Gradient w.r.t. the real and imaginary parts, packed as complex matrices.

    Returns ``(G_P, G_Q)`` with ``G_P = 2 conj(Q) R^T`` and
    ``G_Q = 2 (conj(P) R + lam Q)`` where ``R = P^T Q - W``. The real part of
    each entry is the derivative along the real coordinate, the imaginary part
    along the imaginary coordinate.
    """
    W = _weights(instance)
    _check_shapes(fac, W)
    R = _residual(fac, W, mask)
    G_P = 2.0 * (fac.Q.conj() @ R.T)
    G_Q = 2.0 * (fac.P.conj() @ R + lam * fac.Q)
    return G_P, G_Q


def project(P: np.ndarray, caps) -> np.ndarray:
    """Scale each column ``p_i`` of ``P`` into the ball ``||p_i||^2 <= caps[i]``.

    Returns a new array; columns already inside their ball are untouched.
    """
    P = np.array(P, dtype=complex)
    caps = np.asarray(caps, dtype=float)
    if P.ndim != 2 or caps.shape != (P.shape[1],):
        raise ValueError(f"caps of shape {caps.shape} do not match P of shape {P.shape}")
    if np.any(caps < 0):
        raise ValueError("caps must be nonnegative")
    return _apgd_py._project(P, np.sqrt(caps))


def step_size(alpha_prev: float, alpha_prev2: float, dx_norm: float,
              dg_norm: float) -> float:
    """Adaptive step: ``min(sqrt(1 + a1/a2) a1, dx / (2 dg))``.

    ``dx_norm`` and ``dg_norm`` are the norms of the change in iterate and
    in gradient between the last two iterates; ``dg_norm == 0`` leaves only
    the growth term.
    """
    grow = math.sqrt(1.0 + alpha_prev / alpha_prev2) * alpha_prev
    if dg_norm == 0:
        return grow
    return min(grow, dx_norm / (2.0 * dg_norm))


def ridge_oracle(P: np.ndarray, instance, lam: float) -> np.ndarray:
    """Exact minimizer over ``Q`` of the objective for fixed ``P``.

    Solves the ``T x T`` Hermitian system ``(conj(P) P^T + lam I) Q = conj(P) W``.
    """
    if not lam > 0:
        raise ValueError("ridge_oracle needs lam > 0")
    P = np.asarray(P, dtype=complex)
    W = _weights(instance)
    if P.shape[1] != W.shape[0]:
        raise ValueError(f"P has {P.shape[1]} columns, W has {W.shape[0]} rows")
    A = P.conj() @ P.T + lam * np.eye(P.shape[0])
    return np.linalg.solve(A, P.conj() @ W)


def initial_point(instance: ProblemInstance, T: int, init_scale: float,
                  rng: np.random.Generator) -> Factorization:
    ns, nr = instance.W.shape
    P = complex_normal(rng, (T, ns), var=init_scale ** 2)
    Q = complex_normal(rng, (T, nr), var=init_scale ** 2)
    return Factorization(project(P, instance.caps), Q)


def solve(instance: ProblemInstance, T: int, config: SolverConfig | None = None,
          rng: np.random.Generator | None = None, *, init: Factorization | None = None,
          freeze_p: bool = False, verbose: bool = False, callback=None,
          backend: str | None = None):
    """Run adaptive projected gradient descent from a random or given start.

    With ``freeze_p`` the precoders stay at ``init.P`` (after projection) and
    only ``Q`` is optimized, which makes the problem convex.

    Returns ``(Factorization, SolverTrace)``. Raises :class:`SolverDivergence`
    if the objective or gradient stops being finite.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    config = config or SolverConfig()
    ns, nr = instance.W.shape
    if init is None:
        if freeze_p:
            raise ValueError("freeze_p requires an initial factorization")
        if rng is None:
            raise ValueError("need an rng for random initialization")
        fac = initial_point(instance, T, config.init_scale, rng)
    else:
        if init.T != T or init.P.shape[1] != ns or init.Q.shape[1] != nr:
            raise ValueError("initial factorization does not match instance and T")
        fac = Factorization(project(init.P, instance.caps), init.Q.copy())

    mask = instance.topology.adjacency.astype(float) if config.edge_mask else None
    P = np.ascontiguousarray(fac.P)
    Q = np.ascontiguousarray(fac.Q)
    obj = np.zeros(config.max_iters)
    steps = np.zeros(config.max_iters)

    if verbose:
        user_cb = callback

        def callback(k, f, alpha):
            print(f'{{"iter": {k}, "objective": {f!r}, "alpha": {alpha!r}}}', flush=True)
            if user_cb is not None:
                user_cb(k, f, alpha)

    backend = backend or BACKEND
    kernel = get_kernel(backend)
    iters, status = kernel(P, Q, instance.W, mask, np.sqrt(instance.caps), config.lam,
                           config.alpha0, config.max_iters, config.rel_tol,
                           config.stall_iters, freeze_p, obj, steps, callback)
    if status == _apgd_py.STATUS_NONFINITE:
        raise SolverDivergence(
            f"non-finite objective or gradient at iteration {iters} "
            f"(T={T}, lam={config.lam}, last step={steps[iters - 1] if iters else None})")
    trace = SolverTrace(obj[:iters].copy(), steps[:iters].copy(), int(iters),
                        _STATUS[status], backend)
    log.debug("solve T=%d: %d iterations, %s", T, iters, trace.terminated_by.value)
    return Factorization(P, Q), trace
