import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcelqr import (
    CostSpec,
    DefectiveMatrixError,
    LtiSystem,
    NotConvergedError,
    PceRandomVector,
    SourceBasis,
    StochasticScenario,
    build_truncated_stationary,
    convergence_certificate,
    infinite_gains,
    required_dim_closed_form,
    required_dim_lyapunov,
    riccati_ladder,
    solve_finite,
    stationarity_residual,
    stationary_cost,
    stationary_gains,
    stationary_pair,
    uniform_disturbance,
)
from pcelqr.checks import moment_stage_cost
from pcelqr.infinite import coupled_offset_norm
from pcelqr.linalg import matrix_2norm
from pcelqr.mc import sample_stationary, simulate_coupled
from pcelqr.stationary import bound_closed_form, bound_l2, bound_lyapunov, tail_covariance

from conftest import random_stable_system

seeds = st.integers(0, 2**32 - 1)


def golden():
    sys = LtiSystem([[1.0]], [[1.0]], [[1.0]])
    return sys, CostSpec([[1.0]], [[1.0]])


# ---- infinite horizon ---------------------------------------------------------


def test_infinite_gains_examples(cstr):
    K, F, g = infinite_gains(*golden())
    assert K[0, 0] == pytest.approx(-0.618034, abs=1e-6)
    K, F, g = infinite_gains(cstr.sys, cstr.cost)
    assert np.allclose(K, [[1.25283, -0.0344948]], atol=5e-6)


def test_zero_mean_disturbance_gives_plain_lqr(cstr, cstr_gains):
    dist = uniform_disturbance([-0.3], [0.3])
    rep = stationary_pair(cstr.sys, cstr.cost, dist, gains=cstr_gains)
    assert np.allclose(rep.mean_x, 0) and np.allclose(rep.mean_u, 0)


def test_cstr_stationary_moments(cstr_rep):
    assert np.allclose(cstr_rep.mean_x, [-0.436527, 0.553563], atol=5e-7)
    assert np.allclose(cstr_rep.mean_u, [0.390467], atol=5e-7)
    assert np.allclose(cstr_rep.cov_x, [[0.0502169, 0.0608486], [0.0608486, 0.077155]], atol=5e-7)
    assert np.allclose(cstr_rep.cov_u, [[0.0736519]], atol=5e-7)


def test_pair_invariants(cstr_rep, cstr):
    g = cstr_rep.gains
    assert np.allclose(cstr_rep.mean_x, g.A_cl @ cstr_rep.mean_x + g.F_cl @ cstr.mean_w, atol=1e-14)
    assert np.linalg.eigvalsh(cstr_rep.cov_x).min() >= 0
    assert stationarity_residual(cstr_rep, cstr.dist) <= 1e-10
    for j in range(1, cstr_rep.tail_gen.shape[0]):
        assert np.allclose(cstr_rep.tail_gen[j], g.A_cl @ cstr_rep.tail_gen[j - 1])
    # default tail length is the Lyapunov dimension for 1e-8
    assert cstr_rep.tail_gen.shape[0] == required_dim_lyapunov(g, cstr.dist, 1e-8) + 1


def test_deterministic_disturbance_pair(cstr, cstr_gains):
    dist = PceRandomVector([[0.3]], SourceBasis(()))
    rep = stationary_pair(cstr.sys, cstr.cost, dist, gains=cstr_gains)
    assert not rep.cov_x.any()
    assert stationarity_residual(rep, dist) <= 1e-15


def test_residual_detects_mean_perturbation(cstr_rep, cstr):
    bad = dataclasses.replace(cstr_rep, mean_x=cstr_rep.mean_x + np.array([0.1, 0.0]))
    floor = 0.1 * (1 - matrix_2norm(cstr_rep.gains.A_cl)) / 2
    r = stationarity_residual(bad, cstr.dist)
    assert r > 0 and r >= floor


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_random_pair_fixed_points(seed):
    sys, cost, dist = random_stable_system(np.random.default_rng(seed))
    rep = stationary_pair(sys, cost, dist)
    assert stationarity_residual(rep, dist) <= 1e-10 * max(1.0, np.abs(rep.cov_x).max())


def test_finite_horizon_midpoint_matches_stationary(cstr, cstr_rep):
    sol = solve_finite(cstr.with_horizon(60))
    assert np.abs(sol.state_mean(30) - cstr_rep.mean_x).max() <= 1e-3
    assert np.abs(sol.state_cov(30) - cstr_rep.cov_x).max() <= 1e-3


def test_ladder_gains_converge_to_stationary(cstr):
    cost = CostSpec(cstr.cost.Q, cstr.cost.R)
    lad = riccati_ladder(cstr.sys, cost, 200)
    K, F, _ = infinite_gains(cstr.sys, cost)
    assert np.abs(lad.K[200] - K).max() <= 1e-8
    assert np.abs(lad.F[200] - F).max() <= 1e-8


def test_certificate_examples(cstr, cstr_gains):
    c = convergence_certificate(cstr.sys, cstr.cost, 0.0, cstr_gains)
    assert c.beta == 0 and 0 <= c.rate < 1
    sys = LtiSystem(np.diag([1.1, 0.5]), np.eye(2), np.ones((2, 1)))
    g = stationary_gains(sys, CostSpec(np.eye(2), np.eye(2)))
    c = convergence_certificate(sys, g.cost, 2.0, g)
    assert c.eig_cond == pytest.approx(1.0, abs=1e-8)
    assert c.beta == pytest.approx(math.sqrt(1 + g.K_norm**2) * 2.0)
    with pytest.raises(ValueError):
        convergence_certificate(cstr.sys, cstr.cost, -1.0, cstr_gains)


def test_certificate_refuses_defective():
    A = np.array([[0.5, 1.0], [0.0, 0.5]])
    sys = LtiSystem(A, np.zeros((2, 1)), np.ones((2, 1)))
    with pytest.raises(DefectiveMatrixError):
        convergence_certificate(sys, CostSpec(np.eye(2), [[1.0]]), 1.0)


def test_coupled_paths_contract_exactly(cstr, cstr_gains):
    b = simulate_coupled(cstr, cstr_gains, 500, 1, 40)
    d = b.X - b.Xbar
    pred = d[:, :-1] @ cstr_gains.A_cl.T
    assert np.abs(d[:, 1:] - pred).max() <= 1e-12
    assert np.abs((b.U - b.Ubar) - d @ cstr_gains.K.T).max() <= 1e-12


def test_coupled_offset_norm_matches_batch(cstr, cstr_rep, cstr_gains):
    b = simulate_coupled(cstr, cstr_gains, 100_000, 2, 1)
    emp = math.sqrt(((b.X[:, 0] - b.Xbar[:, 0]) ** 2).sum(axis=1).mean())
    assert emp == pytest.approx(coupled_offset_norm(cstr.ini, cstr_rep), rel=1e-2)


# ---- stationary cost ----------------------------------------------------------


def test_stationary_cost_zero_disturbance(cstr, cstr_gains):
    dist = PceRandomVector([[0.0]], SourceBasis(()))
    assert stationary_cost(cstr_gains, dist) == 0.0


def test_stationary_cost_cstr(cstr_rep, cstr):
    a = stationary_cost(cstr_rep.gains, cstr.dist)
    assert a == pytest.approx(moment_stage_cost(cstr_rep), rel=1e-8)
    assert a == pytest.approx(0.850475888533, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=seeds)
def test_stationary_cost_identity_random(seed):
    sys, cost, dist = random_stable_system(np.random.default_rng(seed))
    rep = stationary_pair(sys, cost, dist)
    assert stationary_cost(rep.gains, dist) == pytest.approx(moment_stage_cost(rep), rel=1e-8)


def test_stationary_cost_golden_monte_carlo():
    sys, cost = golden()
    dist = uniform_disturbance([0.0], [0.6])
    g = stationary_gains(sys, cost)
    X, U = sample_stationary(g, dist, [60], 10**6, 17)[60]
    ell = X[:, 0] ** 2 + U[:, 0] ** 2
    se = ell.std(ddof=1) / math.sqrt(ell.size)
    assert abs(ell.mean() - stationary_cost(g, dist)) <= 3 * se


# ---- dimensions and bounds ----------------------------------------------------


def test_cstr_dimensions(cstr_gains, cstr):
    assert required_dim_closed_form(cstr_gains, cstr.dist, 0.1) == 5
    assert required_dim_closed_form(cstr_gains, cstr.dist, 0.01) == 11
    assert required_dim_lyapunov(cstr_gains, cstr.dist, 0.1) == 2
    assert required_dim_lyapunov(cstr_gains, cstr.dist, 0.01) == 4


def test_cstr_bound_values(cstr_gains, cstr):
    lyap = [bound_lyapunov(cstr_gains, cstr.dist, p) for p in range(6)]
    assert np.allclose(lyap, [0.204223, 0.108, 0.0474, 0.0198, 0.00818, 0.00337], rtol=5e-3)
    assert bound_lyapunov(cstr_gains, cstr.dist, 11) == pytest.approx(1.6416e-5, rel=1e-3)
    assert bound_closed_form(cstr_gains, cstr.dist, 0) == pytest.approx(0.885372, rel=1e-5)


def test_bound_relations(cstr_gains, cstr):
    s = math.sqrt(1 + cstr_gains.K_norm**2)
    for p in range(16):
        ly = bound_lyapunov(cstr_gains, cstr.dist, p)
        assert ly <= bound_closed_form(cstr_gains, cstr.dist, p)
        assert ly == pytest.approx(bound_l2(cstr_gains, cstr.dist, p) ** 2 / s, rel=1e-12)
    for d in (0.1, 0.01, 0.001):
        assert required_dim_lyapunov(cstr_gains, cstr.dist, d) <= required_dim_closed_form(cstr_gains, cstr.dist, d)


def test_large_delta_needs_no_tail(cstr_gains, cstr):
    assert required_dim_lyapunov(cstr_gains, cstr.dist, 10.0) == 0
    assert required_dim_closed_form(cstr_gains, cstr.dist, 10.0) == 0


def test_dimension_edge_cases(cstr, cstr_gains):
    det = PceRandomVector([[0.3]], SourceBasis(()))
    assert required_dim_closed_form(cstr_gains, det, 1e-6) == 0
    assert required_dim_lyapunov(cstr_gains, det, 1e-6) == 0
    with pytest.raises(ValueError):
        required_dim_closed_form(cstr_gains, cstr.dist, 0.0)
    with pytest.raises(ValueError):
        required_dim_lyapunov(cstr_gains, cstr.dist, -1.0)
    with pytest.raises(NotConvergedError):
        required_dim_lyapunov(cstr_gains, cstr.dist, 1e-30, max_p=10)


def test_dead_beat_closure():
    # x+ = u + w with Q = 0-ish weight on input: gain cancels A exactly -> rho = 0
    sys = LtiSystem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [[1.0], [0.0]])
    g = stationary_gains(sys, CostSpec(np.eye(2), [[1.0]]))
    assert g.rho == pytest.approx(0.0, abs=1e-12) or g.defective
    dist = uniform_disturbance([0.0], [1.0])
    assert required_dim_lyapunov(g, dist, 1e-9) <= 2


def test_defective_refuses_closed_form_only():
    A = np.array([[0.5, 1.0], [0.0, 0.5]])
    sys = LtiSystem(A, np.zeros((2, 1)), np.ones((2, 1)))
    g = stationary_gains(sys, CostSpec(np.eye(2), [[1.0]]))
    dist = uniform_disturbance([0.0], [1.0])
    with pytest.raises(DefectiveMatrixError):
        required_dim_closed_form(g, dist, 0.1)
    assert required_dim_lyapunov(g, dist, 0.1) >= 0
    ap = build_truncated_stationary(g, dist, 3)
    assert ap.bound_closed_form is None and ap.w2_bound == ap.bound_l2


@settings(max_examples=30, deadline=None)
@given(seed=seeds)
def test_random_monotone_bounds_and_dimension_order(seed):
    sys, cost, dist = random_stable_system(np.random.default_rng(seed))
    g = stationary_gains(sys, cost)
    ly = [bound_lyapunov(g, dist, p) for p in range(25)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(ly, ly[1:]))
    if not g.defective:
        cf = [bound_closed_form(g, dist, p) for p in range(25)]
        assert all(b <= a for a, b in zip(cf, cf[1:]))
        for d in (0.1, 0.01, 0.001):
            assert required_dim_lyapunov(g, dist, d) <= required_dim_closed_form(g, dist, d)


# ---- truncated approximation --------------------------------------------------


def test_truncated_structure(cstr_gains, cstr):
    ap = build_truncated_stationary(cstr_gains, cstr.dist, 6)
    assert ap.x_coeffs.shape == (2, 7) and ap.basis.L == 7
    for j in range(1, 6):
        assert np.allclose(ap.blocks[j], cstr_gains.A_cl @ ap.blocks[j - 1])
    assert np.allclose(ap.u_coeffs[:, 1:], cstr_gains.K @ ap.x_coeffs[:, 1:])
    assert np.allclose(ap.u_coeffs[:, 0], cstr_gains.K @ ap.mean_x + cstr_gains.F @ cstr.mean_w)
    with pytest.raises(ValueError):
        build_truncated_stationary(cstr_gains, cstr.dist, -1)


def test_p0_is_deterministic(cstr_gains, cstr, cstr_rep):
    ap = build_truncated_stationary(cstr_gains, cstr.dist, 0)
    assert ap.basis is None and ap.x_coeffs.shape == (2, 1)
    m = ap.moments()
    assert not m["cov_x"].any()
    s = math.sqrt(1 + cstr_gains.K_norm**2)
    assert ap.bound_l2 == pytest.approx(s * math.sqrt(np.trace(cstr_rep.cov_x)), rel=1e-10)


def test_w2_bound_monotone(cstr_gains, cstr):
    b = [build_truncated_stationary(cstr_gains, cstr.dist, p).w2_bound for p in range(20)]
    assert all(y <= x for x, y in zip(b, b[1:]))


def test_lyapunov_bound_at_pbar(cstr_gains, cstr):
    assert build_truncated_stationary(cstr_gains, cstr.dist, 4).bound_lyapunov <= 0.01


@pytest.mark.parametrize("p", [0, 1, 3, 8, 20])
def test_moment_convergence(cstr_gains, cstr, cstr_rep, p):
    ap = build_truncated_stationary(cstr_gains, cstr.dist, p)
    tail = tail_covariance(cstr_gains, cstr.dist, p)
    assert np.abs(ap.moments()["cov_x"] + tail - cstr_rep.cov_x).max() <= 1e-10


def test_sampled_approximation_moments(cstr_gains, cstr):
    ap = build_truncated_stationary(cstr_gains, cstr.dist, 5)
    X, U = sample_stationary(cstr_gains, cstr.dist, [5], 200_000, 3)[5]
    m = ap.moments()
    se = X.std(axis=0, ddof=1) / math.sqrt(X.shape[0])
    assert np.all(np.abs(X.mean(axis=0) - m["mean_x"]) <= 3 * se)
    assert np.allclose(np.cov(X.T), m["cov_x"], atol=2e-3)
