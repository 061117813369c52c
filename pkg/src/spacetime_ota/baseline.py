"""Standard one-receiver-per-slot OtA computation used as the reference.

Slot ``j`` serves receiver ``j`` only. Every sender splits its power budget
evenly over the receivers it is connected to, and within a slot all
connected senders invert their channel with a common amplitude factor
``eta_j`` limited by the weakest channel-to-sample ratio.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ProblemInstance

__all__ = ["BaselineResult", "baseline_eta", "baseline_evaluate"]


@dataclass
class BaselineResult:
    eta: np.ndarray
    mse_per_receiver: np.ndarray
    power_used: np.ndarray
    slot_power: np.ndarray
    per_receiver_power: float

    @property
    def mse(self) -> float:
        """Network MSE, the mean over receivers."""
        return float(self.mse_per_receiver.mean())

    @property
    def n_slots(self) -> int:
        return len(self.eta)


def baseline_eta(receiver: int, instance: ProblemInstance,
                 per_receiver_power: float) -> float:
    """``sqrt(per_receiver_power) * min_i |N_j| |h_ij| / |s_i|`` over ``i`` in ``N_j``."""
    if not per_receiver_power > 0:
        raise ValueError("per_receiver_power must be positive")
    nbrs = list(instance.topology.neighbors[receiver])
    ratio = len(nbrs) * np.abs(instance.h[nbrs, receiver]) / np.abs(instance.s[nbrs])
    return float(np.sqrt(per_receiver_power) * ratio.min())


def _default_degree(instance):
    deg = instance.topology.sender_degrees
    if deg.min() != deg.max():
        raise ValueError("senders have unequal degrees; pass sender_degree explicitly")
    return int(deg[0])


def baseline_evaluate(instance: ProblemInstance,
                      sender_degree: int | None = None) -> BaselineResult:
    """MSE ``sigma^2 / eta_j^2`` per receiver and the power each sender spends.

    ``slot_power[i, j]`` is ``|b_ij s_i|^2`` with ``b_ij = eta_j / (|N_j| h_ij)``,
    zero where sender ``i`` is not connected to receiver ``j``.
    """
    if sender_degree is None:
        sender_degree = _default_degree(instance)
    if sender_degree < 1:
        raise ValueError("sender_degree must be positive")
    per_rx = instance.p_max / sender_degree
    topo = instance.topology
    eta = np.array([baseline_eta(j, instance, per_rx) for j in range(topo.n_receivers)])

    adj = topo.adjacency
    slot_power = np.zeros(adj.shape)
    deg = topo.receiver_degrees
    i, j = np.nonzero(adj)
    b = eta[j] / (deg[j] * instance.h[i, j])
    slot_power[i, j] = np.abs(b * instance.s[i]) ** 2
    return BaselineResult(
        eta=eta,
        mse_per_receiver=instance.noise_var / eta ** 2,
        power_used=slot_power.sum(axis=1),
        slot_power=slot_power,
        per_receiver_power=per_rx,
    )
