"""Quick self-checks on small instances, run by ``spacetime-ota check``.

Each check returns ``(passed, detail)``. They mirror the heavier test suite
at reduced sizes so they finish in a few seconds.
"""
from __future__ import annotations

import numpy as np

from .baseline import baseline_evaluate
from .evaluation import analytical_mse, power_consumption, simulate_transmission
from .network import (ChannelRealization, DataSamples, Topology, build_instance,
                      complex_normal, draw_channels, draw_samples, generate_topology)
from .solver import (Factorization, SolverConfig, gradient, objective, project,
                     ridge_oracle, solve)


def small_instance(seed, n_senders=6, n_receivers=4, degree=2, noise_var=0.1):
    rng = np.random.default_rng(seed)
    topo = generate_topology(n_senders, n_receivers, degree, rng)
    return build_instance(topo, draw_channels(topo, rng), draw_samples(n_senders, rng),
                          1.0, noise_var)


def fd_gradient(fac, W, lam, h=1e-6):
    """Central differences over the real and imaginary coordinates."""
    out = []
    for name in ("P", "Q"):
        X = getattr(fac, name)
        G = np.zeros_like(X)
        for idx in np.ndindex(X.shape):
            parts = []
            for d in (1.0, 1j):
                plus = Factorization(fac.P.copy(), fac.Q.copy())
                minus = Factorization(fac.P.copy(), fac.Q.copy())
                getattr(plus, name)[idx] += h * d
                getattr(minus, name)[idx] -= h * d
                parts.append((objective(plus, W, lam) - objective(minus, W, lam)) / (2 * h))
            G[idx] = parts[0] + 1j * parts[1]
        out.append(G)
    return out


def check_gradient(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for T, ns, nr in [(1, 1, 1), (3, 5, 4), (8, 12, 7)]:
        fac = Factorization(complex_normal(rng, (T, ns)), complex_normal(rng, (T, nr)))
        W = complex_normal(rng, (ns, nr))
        ana = np.concatenate([g.ravel() for g in gradient(fac, W, 0.3)])
        num = np.concatenate([g.ravel() for g in fd_gradient(fac, W, 0.3)])
        worst = max(worst, np.linalg.norm(ana - num) / np.linalg.norm(num))
    return worst < 1e-6, f"max relative error {worst:.2e}"


def check_projection(seed=0):
    rng = np.random.default_rng(seed)
    P = complex_normal(rng, (4, 200), var=4.0)
    caps = rng.uniform(0.1, 3.0, 200)
    Pp = project(P, caps)
    feasible = np.all(np.sum(np.abs(Pp) ** 2, axis=0) <= caps * (1 + 1e-12))
    idem = np.allclose(project(Pp, caps), Pp, rtol=1e-15, atol=0)
    return bool(feasible and idem), f"feasible={feasible} idempotent={idem}"


def check_ridge_subcase(seed=0):
    inst = small_instance(seed)
    rng = np.random.default_rng(seed + 1)
    P = project(complex_normal(rng, (3, inst.n_senders)), inst.caps)
    Q0 = complex_normal(rng, (3, inst.n_receivers), var=0.01)
    cfg = SolverConfig(lam=0.1, rel_tol=1e-13, max_iters=50000)
    fac, _ = solve(inst, 3, cfg, init=Factorization(P, Q0), freeze_p=True)
    Q_star = ridge_oracle(P, inst, 0.1)
    err = np.linalg.norm(fac.Q - Q_star) / np.linalg.norm(Q_star)
    return err < 1e-4, f"relative error {err:.2e}"


def check_tiny_exact():
    topo = Topology(1, 1, ((0, 0),))
    inst = build_instance(topo, ChannelRealization(np.array([[1.0 + 0j]])),
                          DataSamples(np.array([1.0 + 0j])), 1.0, 0.5)
    # the valley p q = 1 is nearly flat at this lam, so allow a long run
    cfg = SolverConfig(lam=1e-6, max_iters=200000, rel_tol=1e-12)
    fac, _ = solve(inst, 1, cfg, np.random.default_rng(0))
    mse = analytical_mse(fac, inst).total
    err = abs(mse - 0.5) / 0.5
    return err < 0.02, f"MSE {mse:.6f} vs 0.5"


def check_monte_carlo(seed=0, n_trials=20000):
    inst = small_instance(seed, noise_var=0.2)
    fac, _ = solve(inst, 3, SolverConfig(max_iters=3000), np.random.default_rng(seed))
    rep = analytical_mse(fac, inst)
    mc = simulate_transmission(fac, inst, n_trials, np.random.default_rng(seed + 7))
    z = abs(mc.mse - rep.total) / mc.se
    return z < 3.0, f"analytic {rep.total:.5f}, empirical {mc.mse:.5f} ({z:.2f} s.e.)"


def check_power(seed=0):
    inst = small_instance(seed)
    fac, _ = solve(inst, 3, SolverConfig(max_iters=2000), np.random.default_rng(seed))
    pw = power_consumption(fac, inst)
    b = baseline_evaluate(inst, 2)
    prop_ok = np.all(pw <= inst.p_max * (1 + 1e-12))
    slot_max = np.where(inst.topology.adjacency, b.slot_power, 0).max(axis=0)
    base_ok = np.allclose(slot_max, b.per_receiver_power, rtol=1e-12)
    return bool(prop_ok and base_ok), f"proposed within P_max={prop_ok}, bottleneck at cap={base_ok}"


CHECKS = {
    "gradient vs finite differences": check_gradient,
    "projection feasibility/idempotence": check_projection,
    "frozen-P solve vs ridge oracle": check_ridge_subcase,
    "1x1 exact case": check_tiny_exact,
    "analytic vs Monte Carlo MSE": check_monte_carlo,
    "power audit": check_power,
}


def run_checks(out=print) -> bool:
    ok = True
    for name, fn in CHECKS.items():
        passed, detail = fn()
        ok &= bool(passed)
        out(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return ok
