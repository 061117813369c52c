"""Sweep harness: (SNR, T) grid over random channel realizations.

Seed layout (``np.random.SeedSequence(master_seed, spawn_key=...)``):

=================  ============================================
spawn key          stream
=================  ============================================
``(0,)``           data samples, shared by every realization
``(1,)``           topology when ``fixed_topology`` is set
``(2, r, 0)``      topology of realization ``r``
``(2, r, 1)``      channels of realization ``r``
``(2, r, 2, T)``   solver initialization for slot count ``T``
``(2, r, 3, T, k)`` Monte Carlo noise for the k-th SNR value
=================  ============================================

Every stream depends only on its key, so records do not change when other
grid points are added or removed, or when realizations run in parallel.

The solver objective does not involve the noise variance (``p_max`` is
fixed and SNR is realized through ``sigma^2``), so each (realization, T)
pair is solved once and evaluated at every SNR.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .baseline import baseline_evaluate
from .evaluation import analytical_mse, power_consumption, simulate_transmission
from .network import build_instance, draw_channels, draw_samples, generate_topology
from .solver import SolverConfig, SolverDivergence, solve

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "Record",
    "RESULTS_HEADER",
    "POWER_HEADER",
    "SUMMARY_HEADER",
    "MC_HEADER",
    "load_config",
    "realization_instance",
    "run_experiment",
    "write_outputs",
    "summarize",
    "format_summary",
]

log = logging.getLogger(__name__)

RESULTS_HEADER = ["snr", "T", "realization", "mse_proposed", "mse_noise", "mse_bias",
                  "max_residual", "mse_baseline", "iters", "wall_ms"]
POWER_HEADER = ["method", "snr", "T", "realization", "sender", "power"]
SUMMARY_HEADER = ["snr", "T", "mean_proposed", "se_proposed", "mean_baseline",
                  "se_baseline", "ratio"]
MC_HEADER = ["snr", "T", "realization", "mse_analytical", "mse_empirical", "se_empirical"]


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class ExperimentConfig:
    """Sweep definition. Defaults reproduce the published setup."""

    n_senders: int = 50
    n_receivers: int = 30
    sender_degree: int = 20
    t_values: list = field(default_factory=lambda: list(range(1, 31)))
    snr_values: list = field(default_factory=lambda: [1.0, 10.0, 100.0])
    n_realizations: int = 100
    lam: float = 0.1
    p_max: float = 1.0
    master_seed: int = 0
    max_iters: int = 20000
    rel_tol: float = 1e-9
    alpha0: float = 1e-7
    init_scale: float = 0.1
    stall_iters: int = 2000
    edge_mask: bool = False
    mc_trials: int = 0
    fixed_topology: bool = False
    # [snr, T] pairs for power_hist.csv; None picks T = n_receivers (or the
    # largest T) at every SNR
    hist_points: list | None = None
    record_timing: bool = False
    output_dir: str = "results"

    def __post_init__(self):
        self.t_values = [int(t) for t in self.t_values]
        self.snr_values = [float(s) for s in self.snr_values]
        if not self.t_values or not self.snr_values:
            raise ValueError("t_values and snr_values must be non-empty")
        if min(self.t_values) < 1:
            raise ValueError("t_values entries must be >= 1")
        if len(set(self.t_values)) != len(self.t_values):
            raise ValueError("t_values contains duplicates")
        if len(set(self.snr_values)) != len(self.snr_values):
            raise ValueError("snr_values contains duplicates")
        if min(self.snr_values) <= 0:
            raise ValueError("snr_values must be positive")
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if self.sender_degree > self.n_receivers:
            raise ValueError("sender_degree cannot exceed n_receivers")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")
        if self.mc_trials < 0:
            raise ValueError("mc_trials must be >= 0")
        if self.hist_points is not None:
            self.hist_points = [(float(s), int(t)) for s, t in self.hist_points]
        self.solver_config()

    def solver_config(self) -> SolverConfig:
        return SolverConfig(lam=self.lam, alpha0=self.alpha0, max_iters=self.max_iters,
                            rel_tol=self.rel_tol, init_scale=self.init_scale,
                            stall_iters=self.stall_iters, edge_mask=self.edge_mask)

    def histogram_points(self):
        if self.hist_points is not None:
            return set(self.hist_points)
        T = self.n_receivers if self.n_receivers in self.t_values else max(self.t_values)
        return {(s, T) for s in self.snr_values}

    @classmethod
    def from_dict(cls, doc: dict | None) -> "ExperimentConfig":
        doc = dict(doc or {})
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        solver = doc.pop("solver", None) or {}
        doc.update(solver)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**doc)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if doc is not None and not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return ExperimentConfig.from_dict(doc)


@dataclass
class Record:
    snr: float
    T: int
    realization: int
    mse_proposed: float
    mse_noise: float
    mse_bias: float
    max_residual: float
    mse_baseline: float
    iters: int
    wall_ms: float
    terminated_by: str = ""
    failed: bool = False

    def row(self):
        return [fmt(getattr(self, k)) for k in RESULTS_HEADER]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    power_rows: list
    mc_rows: list

    def mean_ratio(self, snr: float, T: int) -> float:
        prop = [r.mse_proposed for r in self.records if r.snr == snr and r.T == T]
        base = [r.mse_baseline for r in self.records if r.snr == snr and r.T == T]
        return float(np.mean(prop) / np.mean(base))


def _stream(cfg, *key):
    return np.random.default_rng(np.random.SeedSequence(cfg.master_seed, spawn_key=key))


def shared_samples(cfg: ExperimentConfig):
    return draw_samples(cfg.n_senders, _stream(cfg, 0))


def shared_topology(cfg: ExperimentConfig):
    return generate_topology(cfg.n_senders, cfg.n_receivers, cfg.sender_degree,
                             _stream(cfg, 1))


def realization_instance(cfg: ExperimentConfig, r: int, samples=None, fixed_topo=None,
                         snr: float = 1.0):
    """Rebuild the problem instance the sweep uses for realization ``r``."""
    if samples is None:
        samples = shared_samples(cfg)
    if fixed_topo is None and cfg.fixed_topology:
        fixed_topo = shared_topology(cfg)
    topo = fixed_topo if fixed_topo is not None else generate_topology(
        cfg.n_senders, cfg.n_receivers, cfg.sender_degree, _stream(cfg, 2, r, 0))
    channels = draw_channels(topo, _stream(cfg, 2, r, 1))
    seeds = {"master_seed": cfg.master_seed, "realization": r}
    return build_instance(topo, channels, samples, cfg.p_max, cfg.p_max / snr, seeds)


def _run_realization(cfg: ExperimentConfig, r: int, samples, fixed_topo):
    base_inst = realization_instance(cfg, r, samples, fixed_topo)
    hist = cfg.histogram_points()
    solver_cfg = cfg.solver_config()

    baselines = {}
    out = {}
    power_rows = []
    mc_rows = {}
    for k, snr in enumerate(cfg.snr_values):
        inst = base_inst.with_noise_var(cfg.p_max / snr)
        baselines[snr] = b = baseline_evaluate(inst, cfg.sender_degree)
        if any(s == snr for s, _ in hist):
            for i, p in enumerate(b.power_used):
                power_rows.append(("baseline", snr, cfg.n_receivers, r, i, p))

    for T in cfg.t_values:
        t0 = time.perf_counter()
        try:
            fac, trace = solve(base_inst, T, solver_cfg, _stream(cfg, 2, r, 2, T))
        except SolverDivergence as exc:
            log.warning("realization %d, T=%d: %s", r, T, exc)
            for snr in cfg.snr_values:
                out[(snr, T)] = Record(snr, T, r, *([math.nan] * 4),
                                       baselines[snr].mse, -1, 0.0, "diverged", True)
            continue
        wall = (time.perf_counter() - t0) * 1e3 if cfg.record_timing else 0.0
        power = power_consumption(fac, base_inst)
        for k, snr in enumerate(cfg.snr_values):
            inst = base_inst.with_noise_var(cfg.p_max / snr)
            rep = analytical_mse(fac, inst)
            out[(snr, T)] = Record(snr, T, r, rep.total, rep.noise_term, rep.bias_term,
                                   rep.max_residual, baselines[snr].mse,
                                   trace.iterations_run, wall, trace.terminated_by.value)
            if (snr, T) in hist:
                for i, p in enumerate(power):
                    power_rows.append(("proposed", snr, T, r, i, p))
            if cfg.mc_trials:
                mc = simulate_transmission(fac, inst, cfg.mc_trials,
                                           _stream(cfg, 2, r, 3, T, k))
                mc_rows[(snr, T)] = (snr, T, r, rep.total, mc.mse, mc.se)
    return out, power_rows, mc_rows


def run_experiment(config: ExperimentConfig, threads: int = 1,
                   progress=None) -> ExperimentResult:
    """Run the full sweep and return records in (snr, T, realization) order.

    ``progress`` is called with the realization index as each one finishes.
    """
    cfg = config
    samples = shared_samples(cfg)
    fixed_topo = shared_topology(cfg) if cfg.fixed_topology else None

    def work(r):
        res = _run_realization(cfg, r, samples, fixed_topo)
        if progress is not None:
            progress(r)
        return res

    reals = range(cfg.n_realizations)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_real = list(pool.map(work, reals))
    else:
        per_real = [work(r) for r in reals]

    records, mc_rows = [], []
    for snr in cfg.snr_values:
        for T in cfg.t_values:
            for r in reals:
                records.append(per_real[r][0][(snr, T)])
                if cfg.mc_trials:
                    mc_rows.append(per_real[r][2][(snr, T)])

    method_order = {"proposed": 0, "baseline": 1}
    power_rows = [row for res in per_real for row in res[1]]
    power_rows.sort(key=lambda x: (method_order[x[0]], cfg.snr_values.index(x[1]),
                                   x[2], x[3], x[4]))
    return ExperimentResult(cfg, records, power_rows, mc_rows)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def write_outputs(result: ExperimentResult, output_dir) -> dict:
    """Write results.csv, power_hist.csv (and mc.csv) plus the resolved config."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"results": out / "results.csv", "power_hist": out / "power_hist.csv"}
    _write_csv(paths["results"], RESULTS_HEADER, (r.row() for r in result.records))
    _write_csv(paths["power_hist"], POWER_HEADER,
               ([m] + [fmt(v) for v in rest] for m, *rest in result.power_rows))
    if result.mc_rows:
        paths["mc"] = out / "mc.csv"
        _write_csv(paths["mc"], MC_HEADER, ([fmt(v) for v in row] for row in result.mc_rows))
    cfg = asdict(result.config)
    cfg["hist_points"] = [list(p) for p in cfg["hist_points"]] if cfg["hist_points"] else None
    paths["config"] = out / "config.yaml"
    paths["config"].write_text(yaml.safe_dump(cfg, sort_keys=False))
    return paths


class SummaryError(ValueError):
    pass


def _read_results(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SummaryError(f"{path}: empty file") from None
        if header != RESULTS_HEADER:
            raise SummaryError(f"{path}:1: unexpected header {header}")
        for row in reader:
            line = reader.line_num
            if len(row) != len(RESULTS_HEADER):
                raise SummaryError(
                    f"{path}:{line}: expected {len(RESULTS_HEADER)} fields, got {len(row)}")
            try:
                rows.append((float(row[0]), int(row[1]), float(row[3]), float(row[7])))
            except ValueError as exc:
                raise SummaryError(f"{path}:{line}: {exc}") from None
    if not rows:
        raise SummaryError(f"{path}: no records")
    return rows


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def summarize(results_csv, summary_csv=None) -> list:
    """Per (snr, T) mean and standard error of both methods and their ratio."""
    groups = {}
    for snr, T, prop, base in _read_results(results_csv):
        g = groups.setdefault((snr, T), ([], []))
        g[0].append(prop)
        g[1].append(base)
    summary = []
    for (snr, T) in sorted(groups):
        prop, base = groups[(snr, T)]
        mp, sp = _mean_se(prop)
        mb, sb = _mean_se(base)
        summary.append({"snr": snr, "T": T, "mean_proposed": mp, "se_proposed": sp,
                        "mean_baseline": mb, "se_baseline": sb, "ratio": mp / mb})
    if summary_csv is not None:
        _write_csv(summary_csv, SUMMARY_HEADER,
                   ([fmt(row[k]) for k in SUMMARY_HEADER] for row in summary))
    return summary


def format_summary(summary: list) -> str:
    lines = ["{:>8} {:>4} {:>13} {:>11} {:>13} {:>11} {:>8}".format(*SUMMARY_HEADER)]
    for row in summary:
        lines.append("{:>8g} {:>4d} {:>13.5e} {:>11.3e} {:>13.5e} {:>11.3e} {:>8.4f}".format(
            *(row[k] for k in SUMMARY_HEADER)))
    return "\n".join(lines)
