"""Random network instances and the factorization problem data built from them.

Indices are 0-based: sender ``i`` is row ``i`` of the weight matrix and
receiver ``j`` is column ``j``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MAGNITUDE_FLOOR",
    "TOPOLOGY_RETRIES",
    "Topology",
    "ChannelRealization",
    "DataSamples",
    "ProblemInstance",
    "generate_topology",
    "draw_channels",
    "draw_samples",
    "build_instance",
    "complex_normal",
    "save_instance",
    "load_instance",
    "instance_to_dict",
    "instance_from_dict",
]

# Draws with smaller modulus are redrawn; W and the power caps divide by them.
MAGNITUDE_FLOOR = 1e-6
TOPOLOGY_RETRIES = 100

INSTANCE_FORMAT = "spacetime-ota-instance"
INSTANCE_VERSION = 1


@dataclass(frozen=True)
class Topology:
    """Bipartite sender -> receiver connectivity."""

    n_senders: int
    n_receivers: int
    edges: tuple[tuple[int, int], ...]
    neighbors: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        if self.n_senders < 1 or self.n_receivers < 1:
            raise ValueError("topology needs at least one sender and one receiver")
        edges = tuple(sorted({(int(i), int(j)) for i, j in self.edges}))
        for i, j in edges:
            if not (0 <= i < self.n_senders and 0 <= j < self.n_receivers):
                raise ValueError(f"edge {(i, j)} out of range")
        nbrs = [[] for _ in range(self.n_receivers)]
        for i, j in edges:
            nbrs[j].append(i)
        empty = [j for j, n in enumerate(nbrs) if not n]
        if empty:
            raise ValueError(f"receivers without neighbors: {empty}")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "neighbors", tuple(tuple(sorted(n)) for n in nbrs))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def adjacency(self) -> np.ndarray:
        """Boolean ``n_senders x n_receivers`` matrix, True on edges."""
        adj = np.zeros((self.n_senders, self.n_receivers), dtype=bool)
        if self.edges:
            i, j = np.array(self.edges).T
            adj[i, j] = True
        return adj

    @property
    def receiver_degrees(self) -> np.ndarray:
        return np.array([len(n) for n in self.neighbors])

    @property
    def sender_degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


@dataclass(frozen=True)
class ChannelRealization:
    """Complex channel gains stored densely; entries off the edge set are zero."""

    gains: np.ndarray

    def __getitem__(self, edge):
        return self.gains[edge]


@dataclass(frozen=True)
class DataSamples:
    values: np.ndarray

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class ProblemInstance:
    """Everything the solver, the baseline and the evaluators need.

    ``W[i, j] = 1 / (|N_j| h_ij)`` on edges and 0 elsewhere, and
    ``caps[i] = p_max / |s_i|^2`` bounds the squared norm of sender i's
    precoding vector.
    """

    topology: Topology
    channels: ChannelRealization
    samples: DataSamples
    W: np.ndarray
    caps: np.ndarray
    noise_var: float
    p_max: float
    seeds: dict = field(default_factory=dict)

    @property
    def n_senders(self) -> int:
        return self.topology.n_senders

    @property
    def n_receivers(self) -> int:
        return self.topology.n_receivers

    @property
    def h(self) -> np.ndarray:
        return self.channels.gains

    @property
    def s(self) -> np.ndarray:
        return self.samples.values

    @property
    def targets(self) -> np.ndarray:
        """Per-receiver mean of the connected senders' samples."""
        s = self.samples.values
        return np.array([s[list(n)].mean() for n in self.topology.neighbors])

    def with_noise_var(self, noise_var: float) -> "ProblemInstance":
        if not noise_var >= 0:
            raise ValueError("noise_var must be nonnegative")
        return ProblemInstance(
            self.topology, self.channels, self.samples, self.W, self.caps,
            float(noise_var), self.p_max, dict(self.seeds),
        )


def complex_normal(rng: np.random.Generator, size, var: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian draws with total variance ``var``."""
    scale = np.sqrt(var / 2.0)
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    return scale * (re + 1j * im)


def _floored_complex_normal(rng, n):
    out = complex_normal(rng, n)
    bad = np.flatnonzero(np.abs(out) < MAGNITUDE_FLOOR)
    while bad.size:
        out[bad] = complex_normal(rng, bad.size)
        bad = bad[np.abs(out[bad]) < MAGNITUDE_FLOOR]
    return out


def generate_topology(n_senders: int, n_receivers: int, sender_degree: int,
                      rng: np.random.Generator) -> Topology:
    """Connect every sender to ``sender_degree`` receivers chosen uniformly.

    Draws leaving a receiver isolated are discarded, at most
    ``TOPOLOGY_RETRIES`` times.
    """
    if n_senders < 1 or n_receivers < 1 or sender_degree < 1:
        raise ValueError("n_senders, n_receivers and sender_degree must be positive")
    if sender_degree > n_receivers:
        raise ValueError(
            f"sender_degree={sender_degree} exceeds n_receivers={n_receivers}")
    for _ in range(TOPOLOGY_RETRIES):
        edges = []
        covered = np.zeros(n_receivers, dtype=bool)
        for i in range(n_senders):
            js = rng.choice(n_receivers, size=sender_degree, replace=False)
            covered[js] = True
            edges.extend((i, int(j)) for j in js)
        if covered.all():
            return Topology(n_senders, n_receivers, tuple(edges))
    raise RuntimeError(
        f"no topology without isolated receivers after {TOPOLOGY_RETRIES} draws "
        f"(n_senders={n_senders}, n_receivers={n_receivers}, degree={sender_degree})")


def draw_channels(topology: Topology, rng: np.random.Generator) -> ChannelRealization:
    """Independent CN(0, 1) gain on every edge, in edge-list order."""
    gains = np.zeros((topology.n_senders, topology.n_receivers), dtype=complex)
    i, j = np.array(topology.edges).T
    gains[i, j] = _floored_complex_normal(rng, topology.n_edges)
    return ChannelRealization(gains)


def draw_samples(n_senders: int, rng: np.random.Generator) -> DataSamples:
    if n_senders < 1:
        raise ValueError("n_senders must be positive")
    return DataSamples(_floored_complex_normal(rng, n_senders))


def build_instance(topology: Topology, channels: ChannelRealization,
                   samples: DataSamples, p_max: float, noise_var: float,
                   seeds: dict | None = None) -> ProblemInstance:
    h = np.asarray(channels.gains, dtype=complex)
    s = np.asarray(samples.values, dtype=complex)
    shape = (topology.n_senders, topology.n_receivers)
    if h.shape != shape:
        raise ValueError(f"channel matrix has shape {h.shape}, expected {shape}")
    if s.shape != (topology.n_senders,):
        raise ValueError(f"expected {topology.n_senders} samples, got {s.shape}")
    if not p_max > 0:
        raise ValueError("p_max must be positive")
    if not noise_var >= 0:
        raise ValueError("noise_var must be nonnegative")

    adj = topology.adjacency
    if np.any(np.abs(h[adj]) < MAGNITUDE_FLOOR):
        raise ValueError("channel gain below magnitude floor on an edge")
    if np.any(np.abs(s) < MAGNITUDE_FLOOR):
        raise ValueError("data sample below magnitude floor")

    W = np.zeros(shape, dtype=complex)
    deg = topology.receiver_degrees
    i, j = np.nonzero(adj)
    W[i, j] = 1.0 / (deg[j] * h[i, j])
    if not np.all(np.isfinite(W)):
        raise ValueError("non-finite weight matrix")
    caps = p_max / np.abs(s) ** 2
    return ProblemInstance(topology, ChannelRealization(h), DataSamples(s), W, caps,
                           float(noise_var), float(p_max), dict(seeds or {}))


def _pairs(z):
    return [[float(v.real), float(v.imag)] for v in np.asarray(z).ravel()]


def _unpairs(rows):
    a = np.asarray(rows, dtype=float).reshape(-1, 2)
    return a[:, 0] + 1j * a[:, 1]


def instance_to_dict(inst: ProblemInstance) -> dict:
    topo = inst.topology
    i, j = np.array(topo.edges).T
    return {
        "format": INSTANCE_FORMAT,
        "version": INSTANCE_VERSION,
        "n_senders": topo.n_senders,
        "n_receivers": topo.n_receivers,
        "p_max": inst.p_max,
        "noise_var": inst.noise_var,
        "edges": [list(e) for e in topo.edges],
        "channels": _pairs(inst.h[i, j]),
        "samples": _pairs(inst.s),
        "seeds": inst.seeds,
    }


def instance_from_dict(doc: dict) -> ProblemInstance:
    if doc.get("format") != INSTANCE_FORMAT:
        raise ValueError(f"not an instance document (format={doc.get('format')!r})")
    if doc.get("version") != INSTANCE_VERSION:
        raise ValueError(f"unsupported instance version {doc.get('version')!r}")
    topo = Topology(doc["n_senders"], doc["n_receivers"],
                    tuple(tuple(e) for e in doc["edges"]))
    vals = _unpairs(doc["channels"])
    if len(vals) != topo.n_edges:
        raise ValueError("channel list length does not match edge list")
    gains = np.zeros((topo.n_senders, topo.n_receivers), dtype=complex)
    # stored in the same order as the (sorted) edge list
    order = {tuple(e): k for k, e in enumerate(doc["edges"])}
    for e in topo.edges:
        gains[e] = vals[order[e]]
    return build_instance(topo, ChannelRealization(gains),
                          DataSamples(_unpairs(doc["samples"])),
                          doc["p_max"], doc["noise_var"], doc.get("seeds"))


def save_instance(inst: ProblemInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1) + "\n")


def load_instance(path) -> ProblemInstance:
    return instance_from_dict(json.loads(Path(path).read_text()))
