"""MSE accounting for a precoder/decoder design, analytic and by simulation.

The analytic MSE has two parts. The noise part is
``sigma^2 / N_r * sum_j ||q_j||^2``. The bias part appears because the
penalized solver only approximately meets ``(P^T Q)_ij = W_ij`` on edges:
receiver j's estimate is off by
``bias_j = sum_{i in N_j} s_i h_ij ((P^T Q)_ij - W_ij)`` even without noise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ProblemInstance, complex_normal
from .solver import Factorization

__all__ = [
    "MseReport",
    "MonteCarloResult",
    "analytical_mse",
    "receiver_bias",
    "unbiasedness_residual",
    "power_consumption",
    "simulate_transmission",
]

MC_CHUNK = 4096


@dataclass
class MseReport:
    noise_term: float
    bias_term: float
    total: float
    max_residual: float
    noise_per_receiver: np.ndarray
    bias_per_receiver: np.ndarray

    @property
    def total_per_receiver(self) -> np.ndarray:
        return self.noise_per_receiver + self.bias_per_receiver


@dataclass
class MonteCarloResult:
    mse_per_receiver: np.ndarray
    se_per_receiver: np.ndarray
    mse: float
    se: float
    n_trials: int


def _check(fac, instance):
    ns, nr = instance.W.shape
    if fac.P.shape[1] != ns or fac.Q.shape[1] != nr:
        raise ValueError("factorization does not match instance dimensions")


def _edge_residual(fac, instance):
    adj = instance.topology.adjacency
    return np.where(adj, fac.P.T @ fac.Q - instance.W, 0.0)


def receiver_bias(fac: Factorization, instance: ProblemInstance) -> np.ndarray:
    """Deterministic estimation error of each receiver (complex, length N_r)."""
    _check(fac, instance)
    R = _edge_residual(fac, instance)
    return (instance.s[:, None] * instance.h * R).sum(axis=0)


def analytical_mse(fac: Factorization, instance: ProblemInstance) -> MseReport:
    _check(fac, instance)
    nr = instance.n_receivers
    q2 = np.sum(np.abs(fac.Q) ** 2, axis=0)
    noise = instance.noise_var * q2
    bias = np.abs(receiver_bias(fac, instance)) ** 2
    noise_term = float(noise.sum() / nr)
    bias_term = float(bias.sum() / nr)
    return MseReport(
        noise_term=noise_term,
        bias_term=bias_term,
        total=noise_term + bias_term,
        max_residual=unbiasedness_residual(fac, instance),
        noise_per_receiver=noise,
        bias_per_receiver=bias,
    )


def unbiasedness_residual(fac: Factorization, instance: ProblemInstance) -> float:
    """Largest ``|(P^T Q)_ij - W_ij|`` over the network edges."""
    _check(fac, instance)
    return float(np.abs(_edge_residual(fac, instance)).max())


def power_consumption(fac: Factorization, instance: ProblemInstance) -> np.ndarray:
    """Total transmit power ``|s_i|^2 ||p_i||^2`` of each sender over all slots."""
    if fac.P.shape[1] != instance.n_senders:
        raise ValueError("P does not match the number of senders")
    return np.abs(instance.s) ** 2 * np.sum(np.abs(fac.P) ** 2, axis=0)


def simulate_transmission(fac: Factorization, instance: ProblemInstance,
                          n_trials: int, rng: np.random.Generator,
                          chunk: int = MC_CHUNK) -> MonteCarloResult:
    """Monte Carlo estimate of the per-receiver MSE over fresh noise draws.

    Each trial transmits ``y_jt = sum_{i in N_j} s_i p_it h_ij + n_jt`` with
    ``n_jt ~ CN(0, sigma^2)`` and decodes ``theta_hat_j = sum_t q_jt y_jt``.
    Trials are processed in chunks of fixed size whose statistics are merged
    in order, so results depend only on the rng state and ``chunk``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be positive")
    _check(fac, instance)
    adj = instance.topology.adjacency
    T = fac.T
    nr = instance.n_receivers
    # noiseless received signal per (slot, receiver)
    gain = np.where(adj, instance.h, 0.0) * instance.s[:, None]
    clean = fac.P @ gain
    theta = instance.targets

    # running mean and sum of squared deviations, merged chunk by chunk
    mean = np.zeros(nr)
    m2 = np.zeros(nr)
    mean_net = 0.0
    m2_net = 0.0
    done = 0
    while done < n_trials:
        m = min(chunk, n_trials - done)
        noise = complex_normal(rng, (m, T, nr), var=instance.noise_var)
        y = clean[None, :, :] + noise
        est = np.einsum("mtj,tj->mj", y, fac.Q)
        err = np.abs(est - theta) ** 2
        mean, m2 = _merge(mean, m2, done, err)
        mean_net, m2_net = _merge(mean_net, m2_net, done, err.mean(axis=1))
        done += m

    n = n_trials
    dof = max(n - 1, 1)
    return MonteCarloResult(
        mse_per_receiver=mean,
        se_per_receiver=np.sqrt(m2 / dof / n),
        mse=float(mean_net),
        se=float(np.sqrt(m2_net / dof / n)),
        n_trials=n,
    )


def _merge(mean, m2, n, batch):
    """Fold a batch (first axis = samples) into running mean / M2 statistics."""
    k = batch.shape[0]
    b_mean = batch.mean(axis=0)
    b_m2 = ((batch - b_mean) ** 2).sum(axis=0)
    tot = n + k
    delta = b_mean - mean
    return mean + delta * (k / tot), m2 + b_m2 + delta ** 2 * (n * k / tot)
