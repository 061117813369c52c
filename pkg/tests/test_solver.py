import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from spacetime_ota.checks import fd_gradient
from spacetime_ota.network import (ChannelRealization, DataSamples, ProblemInstance, Topology,
                                   build_instance, complex_normal)
from spacetime_ota.solver import (Factorization, SolverConfig, SolverDivergence, Termination,
                                  available_backends, gradient, objective, project,
                                  initial_point, ridge_oracle, solve, step_size)

from conftest import make_instance


def one_by_one(h=1.0, s=1.0, p_max=1.0, noise_var=0.5):
    topo = Topology(1, 1, ((0, 0),))
    return build_instance(topo, ChannelRealization(np.array([[complex(h)]])),
                          DataSamples(np.array([complex(s)])), p_max, noise_var)


# objective

def test_objective_at_zero_is_weight_norm(small_instance):
    T = 4
    fac = Factorization(np.zeros((T, 10)), np.zeros((T, 6)))
    W = small_instance.W
    assert objective(fac, small_instance, 0.3) == pytest.approx(np.sum(np.abs(W) ** 2))


def test_objective_vanishes_on_exact_factorization():
    rng = np.random.default_rng(1)
    P = complex_normal(rng, (3, 4))
    Q = complex_normal(rng, (3, 5))
    assert objective(Factorization(P, Q), P.T @ Q, 0.0) == pytest.approx(0.0, abs=1e-28)


def test_objective_one_by_one():
    fac = Factorization([[1.0]], [[2.0]])
    assert objective(fac, np.array([[1.0]]), 0.5) == 3.0


def test_objective_shape_mismatch():
    with pytest.raises(ValueError):
        objective(Factorization(np.ones((2, 3)), np.ones((2, 4))), np.ones((3, 5)), 0.1)


# gradient

def test_gradient_one_by_one():
    G_P, G_Q = gradient(Factorization([[1.0]], [[1.0]]), np.array([[0.0]]), 0.0)
    assert G_P[0, 0] == 2.0 and G_Q[0, 0] == 2.0


def test_gradient_vanishes_at_exact_factorization():
    rng = np.random.default_rng(2)
    P = complex_normal(rng, (3, 4))
    Q = complex_normal(rng, (3, 5))
    G_P, G_Q = gradient(Factorization(P, Q), P.T @ Q, 0.0)
    assert np.allclose(G_P, 0, atol=1e-13) and np.allclose(G_Q, 0, atol=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    fac = Factorization(complex_normal(rng, (3, 4)), complex_normal(rng, (3, 2)))
    W = complex_normal(rng, (4, 2))
    lam = rng.uniform(0, 1)
    ana = np.concatenate([g.ravel() for g in gradient(fac, W, lam)])
    num = np.concatenate([g.ravel() for g in fd_gradient(fac, W, lam)])
    assert np.linalg.norm(ana - num) / np.linalg.norm(num) < 1e-6


def test_masked_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    fac = Factorization(complex_normal(rng, (2, 3)), complex_normal(rng, (2, 3)))
    W = complex_normal(rng, (3, 3))
    mask = (rng.uniform(size=(3, 3)) < 0.5).astype(float)
    G = gradient(fac, W, 0.2, mask=mask)
    h = 1e-6
    for name, g in zip("PQ", G):
        X = getattr(fac, name)
        for idx in np.ndindex(X.shape):
            for d, part in ((1.0, g[idx].real), (1j, g[idx].imag)):
                fp = Factorization(fac.P.copy(), fac.Q.copy())
                fm = Factorization(fac.P.copy(), fac.Q.copy())
                getattr(fp, name)[idx] += h * d
                getattr(fm, name)[idx] -= h * d
                num = (objective(fp, W, 0.2, mask) - objective(fm, W, 0.2, mask)) / (2 * h)
                assert num == pytest.approx(part, rel=1e-6, abs=1e-8)


# projection

def test_projection_boundary_unchanged():
    P = np.array([[3.0], [4.0]])
    assert np.array_equal(project(P, [25.0]), P)


def test_projection_scales_to_ball():
    assert np.allclose(project(np.array([[3.0], [4.0]]), [1.0]), [[0.6], [0.8]])


def test_projection_zero_column():
    assert np.array_equal(project(np.zeros((3, 2)), [0.0, 2.0]), np.zeros((3, 2)))


def test_projection_does_not_mutate_input():
    P = np.array([[3.0], [4.0]], dtype=complex)
    project(P, [1.0])
    assert P[0, 0] == 3.0


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(a=arrays(np.float64, (2, 4), elements=finite), b=arrays(np.float64, (2, 4), elements=finite),
       cap=st.floats(0.0, 1e4))
def test_projection_properties(a, b, cap):
    pa = (a[0] + 1j * a[1])[:, None]
    pb = (b[0] + 1j * b[1])[:, None]
    Pa, Pb = project(pa, [cap]), project(pb, [cap])
    assert np.sum(np.abs(Pa) ** 2) <= cap * (1 + 1e-12) + 1e-300
    assert np.allclose(project(Pa, [cap]), Pa, rtol=4e-16, atol=0)
    assert np.linalg.norm(Pa - Pb) <= np.linalg.norm(pa - pb) * (1 + 1e-12) + 1e-12


# step size

def test_step_size_examples():
    assert step_size(1.0, 1.0, 1.0, 2.0) == 0.25
    assert step_size(0.5, 0.5, 3.0, 0.0) == pytest.approx(math.sqrt(2) * 0.5)
    assert step_size(2.0, 1.0, 10.0, 1.0) == pytest.approx(math.sqrt(12))


@given(a1=st.floats(1e-12, 1e6), a2=st.floats(1e-12, 1e6), dx=st.floats(1e-12, 1e6),
       dg=st.floats(0, 1e6))
def test_step_size_positive(a1, a2, dx, dg):
    assert step_size(a1, a2, dx, dg) > 0


# ridge oracle

def test_ridge_one_by_one():
    assert ridge_oracle(np.array([[1.0]]), np.array([[1.0]]), 1.0)[0, 0] == pytest.approx(0.5)


def test_ridge_zero_precoder(small_instance):
    Q = ridge_oracle(np.zeros((3, 10)), small_instance, 0.1)
    assert np.array_equal(Q, np.zeros((3, 6)))


@pytest.mark.parametrize("seed", range(4))
def test_ridge_is_stationary_in_q(seed):
    inst = make_instance(seed)
    rng = np.random.default_rng(seed)
    P = complex_normal(rng, (4, 10))
    Q = ridge_oracle(P, inst, 0.1)
    _, G_Q = gradient(Factorization(P, Q), inst, 0.1)
    assert np.abs(G_Q).max() < 1e-10


def test_ridge_rejects_zero_lambda(small_instance):
    with pytest.raises(ValueError):
        ridge_oracle(np.ones((2, 10)), small_instance, 0.0)


# solve

def test_solve_tiny_exact_case(backend):
    inst = one_by_one()
    cfg = SolverConfig(lam=1e-6, max_iters=200000, rel_tol=1e-12)
    fac, trace = solve(inst, 1, cfg, np.random.default_rng(0), backend=backend)
    p, q = fac.P[0, 0], fac.Q[0, 0]
    assert abs(p) == pytest.approx(1.0, abs=1e-6)
    assert p * q == pytest.approx(1.0, abs=1e-5)
    assert trace.objective_history[-1] == pytest.approx(1e-6, rel=1e-3)


@pytest.mark.parametrize("seed", range(3))
def test_frozen_precoder_matches_ridge(backend, seed):
    inst = make_instance(seed)
    rng = np.random.default_rng(100 + seed)
    P = project(complex_normal(rng, (5, 10)), inst.caps)
    init = Factorization(P, complex_normal(rng, (5, 6), var=0.01))
    cfg = SolverConfig(lam=0.1, rel_tol=1e-13, max_iters=100000)
    fac, _ = solve(inst, 5, cfg, init=init, freeze_p=True, backend=backend)
    assert np.allclose(fac.P, P, rtol=1e-15, atol=0)
    Q_star = ridge_oracle(P, inst, 0.1)
    assert np.linalg.norm(fac.Q - Q_star) / np.linalg.norm(Q_star) < 1e-4


def test_zero_weights_drive_q_to_zero(backend, small_instance):
    inst = small_instance
    zero = ProblemInstance(inst.topology, inst.channels, inst.samples,
                           np.zeros_like(inst.W), inst.caps, inst.noise_var, inst.p_max)
    fac, trace = solve(zero, 3, SolverConfig(lam=0.5), np.random.default_rng(1), backend=backend)
    assert objective(fac, zero, 0.5) < 1e-10
    assert np.abs(fac.Q).max() < 1e-5


@pytest.mark.parametrize("T", [1, 3, 8])
def test_solution_is_feasible_and_trace_consistent(backend, T):
    inst = make_instance(3, noise_var=1.0)
    cfg = SolverConfig(max_iters=3000)
    fac, trace = solve(inst, T, cfg, np.random.default_rng(T), backend=backend)
    assert fac.P.shape == (T, 10) and fac.Q.shape == (T, 6)
    assert np.all(np.sum(np.abs(fac.P) ** 2, axis=0) <= inst.caps * (1 + 1e-12))
    assert len(trace.objective_history) == len(trace.step_history) == trace.iterations_run
    assert np.all(trace.step_history > 0)
    assert trace.objective_history[-1] < trace.objective_history[0]
    assert trace.backend == backend


def test_every_iterate_is_feasible(small_instance):
    # run the loop one iteration at a time from the previous output
    inst = small_instance
    cfg = SolverConfig(max_iters=1, init_scale=3.0)
    fac, _ = solve(inst, 4, cfg, np.random.default_rng(0))
    for k in range(50):
        fac, _ = solve(inst, 4, SolverConfig(max_iters=2, alpha0=0.5), init=fac)
        assert np.all(np.sum(np.abs(fac.P) ** 2, axis=0) <= inst.caps * (1 + 1e-12))


def test_tolerance_termination(backend):
    fac, trace = solve(one_by_one(), 1, SolverConfig(lam=0.1, rel_tol=1e-6),
                       np.random.default_rng(0), backend=backend)
    assert trace.terminated_by is Termination.TOLERANCE
    assert trace.iterations_run < 20000


def test_max_iters_termination(backend, small_instance):
    _, trace = solve(small_instance, 3, SolverConfig(max_iters=7, rel_tol=0),
                     np.random.default_rng(0), backend=backend)
    assert trace.terminated_by is Termination.MAX_ITERS and trace.iterations_run == 7


def test_stagnation_termination(backend):
    # at a fixed point with rel_tol = 0 the iterate stops moving exactly
    inst = one_by_one()
    init = Factorization([[0.0]], [[0.0]])
    _, trace = solve(inst, 1, SolverConfig(rel_tol=0.0), init=init, freeze_p=True,
                     backend=backend)
    assert trace.terminated_by in (Termination.STAGNATION, Termination.TOLERANCE)
    _, trace = solve(make_instance(1), 2, SolverConfig(rel_tol=0.0, stall_iters=5, max_iters=50000),
                     np.random.default_rng(0), backend=backend)
    assert trace.terminated_by is Termination.STAGNATION


def test_divergence_is_reported(backend, small_instance):
    inst = small_instance
    W = inst.W.copy()
    W[0, 0] = np.inf
    bad = ProblemInstance(inst.topology, inst.channels, inst.samples, W, inst.caps,
                          inst.noise_var, inst.p_max)
    with pytest.raises(SolverDivergence):
        solve(bad, 2, SolverConfig(), np.random.default_rng(0), backend=backend)


def test_solve_is_deterministic(backend, small_instance):
    a, ta = solve(small_instance, 4, SolverConfig(max_iters=500), np.random.default_rng(9),
                  backend=backend)
    b, tb = solve(small_instance, 4, SolverConfig(max_iters=500), np.random.default_rng(9),
                  backend=backend)
    assert np.array_equal(a.P, b.P) and np.array_equal(a.Q, b.Q)
    assert np.array_equal(ta.objective_history, tb.objective_history)


@pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernel not built")
def test_backends_agree(small_instance):
    cfg = SolverConfig(max_iters=200, rel_tol=0)
    a, ta = solve(small_instance, 4, cfg, np.random.default_rng(2), backend="compiled")
    b, tb = solve(small_instance, 4, cfg, np.random.default_rng(2), backend="python")
    assert np.allclose(ta.objective_history, tb.objective_history, rtol=1e-9)
    assert np.allclose(ta.step_history, tb.step_history, rtol=1e-9)
    assert np.allclose(a.P, b.P, rtol=1e-8, atol=1e-10)


def test_edge_mask_only_penalizes_edges(backend, small_instance):
    inst = small_instance
    mask = inst.topology.adjacency.astype(float)
    x0 = initial_point(inst, 3, 0.1, np.random.default_rng(4))
    fac, trace = solve(inst, 3, SolverConfig(max_iters=3000, edge_mask=True), init=x0,
                       backend=backend)
    # the recorded objective is the masked one
    assert trace.objective_history[0] == pytest.approx(objective(x0, inst, 0.1, mask), rel=1e-12)
    assert trace.objective_history[-1] < trace.objective_history[0]
    # off-edge products are free, so the masked fit beats the full one on edges
    full, _ = solve(inst, 3, SolverConfig(max_iters=3000), init=x0, backend=backend)
    assert objective(fac, inst, 0.1, mask) <= objective(full, inst, 0.1, mask) * (1 + 1e-6)


def test_verbose_streams_json_lines(capsys, small_instance):
    seen = []
    solve(small_instance, 2, SolverConfig(max_iters=3, rel_tol=0), np.random.default_rng(0),
          verbose=True, callback=lambda k, f, a: seen.append(k))
    lines = capsys.readouterr().out.strip().splitlines()
    recs = [json.loads(line) for line in lines]
    assert [r["iter"] for r in recs] == [0, 1, 2] == seen
    assert all(r["alpha"] > 0 for r in recs)


def test_solve_argument_errors(small_instance):
    with pytest.raises(ValueError):
        solve(small_instance, 0, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        solve(small_instance, 2)
    with pytest.raises(ValueError):
        solve(small_instance, 2, freeze_p=True)
    with pytest.raises(ValueError):
        SolverConfig(alpha0=0)
    with pytest.raises(ValueError):
        SolverConfig(lam=-1)
