"""Battery of invariant checks shared by ``pcelqr validate`` and the test suite."""

from __future__ import annotations

import math

import numpy as np

from .finite import FiniteSolution, closed_form_state_coeff, min_cost_decomposition, truncation_error
from .infinite import (
    StationaryPairRep,
    convergence_certificate,
    stationarity_residual,
)
from .linalg import StationaryGains
from .mc import (
    empirical_w2_1d,
    sample_mean_cov,
    sample_stationary,
    simulate_closed_loop,
    simulate_coupled,
)
from .oracles import (
    CheckResult,
    accumulated_cost,
    sample_shift_triples,
    slot_for_index,
    slot_shift_residual,
    stacked_qp_solve,
    time_shift_residual,
    truncation_by_resolve,
)
from .stationary import build_truncated_stationary, stationary_cost

REFERENCE_OFFSET = 40


def _scale(a) -> float:
    return max(1.0, float(np.max(np.abs(a))))


def check_riccati(gains: StationaryGains, tol: float = 1e-9) -> CheckResult:
    r = gains.riccati_residual() / _scale(gains.P)
    return CheckResult("riccati fixed point", r <= tol, r, tol)


def check_dynamics(sol: FiniteSolution, tol: float = 1e-12) -> CheckResult:
    sc = sol.scenario
    A, B, E = sc.sys.A, sc.sys.B, sc.sys.E
    worst = 0.0
    for k in range(sol.N):
        res = sol.x_coeffs[k + 1] - (A @ sol.x_coeffs[k] + B @ sol.u_coeffs[k] + E @ sc.disturbance_coeffs(k))
        worst = max(worst, float(np.max(np.abs(res))))
    worst /= _scale(sol.x_coeffs)
    return CheckResult("coefficient dynamics residual", worst <= tol, worst, tol)


def check_closed_form(sol: FiniteSolution, tol: float = 1e-10) -> CheckResult:
    worst = 0.0
    for s in range(sol.basis.L):
        for k in range(sol.N + 1):
            d = closed_form_state_coeff(sol, s, k) - sol.x_coeffs[k][:, s]
            worst = max(worst, float(np.max(np.abs(d))))
    worst /= _scale(sol.x_coeffs)
    return CheckResult("product closed form", worst <= tol, worst, tol)


def check_stacked_qp(sol: FiniteSolution, tol: float = 1e-10) -> CheckResult:
    x, u = stacked_qp_solve(sol.scenario)
    dev = max(float(np.max(np.abs(x - sol.x_coeffs))), float(np.max(np.abs(u - sol.u_coeffs))))
    return CheckResult("dense stacked QP agreement", dev <= tol, dev, tol, "max abs deviation")


def check_cost_identity(sol: FiniteSolution, tol: float = 1e-9) -> CheckResult:
    acc = accumulated_cost(sol)
    dec = min_cost_decomposition(sol).total
    ref = max(abs(acc), 1e-300)
    rel = max(abs(sol.total_cost - acc), abs(dec - acc)) / ref
    return CheckResult("finite cost identity", rel <= tol, rel, tol, f"J={sol.total_cost:.10g}")


def check_truncation(sol: FiniteSolution, ps=(2, 5), tol: float = 1e-12) -> CheckResult:
    worst = 0.0
    used = [p for p in ps if 0 <= p <= sol.N]
    for p in used:
        ref = truncation_by_resolve(sol, p)
        worst = max(worst, float(np.max(np.abs(ref - truncation_error(sol, p).delta_coeffs))))
    return CheckResult("truncation re-solve", worst <= tol, worst, tol, f"p in {used}")


def ladder_is_constant(sol: FiniteSolution, tol: float = 1e-12) -> bool:
    K = sol.ladder.K[1:]
    return bool(np.max(np.abs(K - K[-1])) <= tol * _scale(K))


def check_shifts(sol: FiniteSolution, count: int = 100, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    """Time shift on initial/disturbance slots; slot shift when the gains are constant.

    The slot shift commutes products of closed-loop matrices, so it only
    holds for a constant gain sequence (e.g. a stationary terminal weight).
    """
    time_t, slot_t = sample_shift_triples(sol.N, count, seed)
    scale = _scale(sol.x_coeffs)
    worst = max(time_shift_residual(sol, slot_for_index(sol.basis, j), k, t) for j, k, t in time_t)
    detail = f"{count} time triples"
    if ladder_is_constant(sol):
        worst = max(worst, max(slot_shift_residual(sol, j, k, t) for j, k, t in slot_t))
        detail += f", {count} slot triples"
    else:
        detail += ", slot shift skipped (time-varying gains)"
    worst /= scale
    return CheckResult("shift identities", worst <= tol, worst, tol, detail)


def _zscore(diff, se, atol: float = 1e-12) -> float:
    """Largest ``|diff| / se``; zero-variance entries must match to ``atol``."""
    diff = np.abs(np.asarray(diff, dtype=float))
    se = np.asarray(se, dtype=float)
    z = np.divide(diff, se, out=np.zeros_like(diff), where=se > 0)
    z = np.where((se <= 0) & (diff > atol), np.inf, z)
    return float(z.max())


def check_mc_finite(sol: FiniteSolution, samples: int, seed: int, ks=(5, 15, 30), bands: float = 3.0) -> CheckResult:
    """Largest z-score of PCE moments and cost against the empirical batch."""
    batch = simulate_closed_loop(sol.scenario, sol.ladder, samples, seed)
    used = [k for k in ks if 0 <= k <= sol.N]
    z = 0.0
    for k in used:
        m, c, sm, sc = sample_mean_cov(batch.X[:, k, :])
        z = max(z, _zscore(m - sol.state_mean(k), sm), _zscore(c - sol.state_cov(k), sc))
    se = batch.cost.std(ddof=1) / math.sqrt(samples)
    z = max(z, _zscore(batch.cost.mean() - sol.total_cost, se))
    return CheckResult("MC moments and cost", z <= bands, z, bands, f"max z-score, k in {used}, n={samples}")


def check_mc_stationary(scenario, gains: StationaryGains, rep: StationaryPairRep, samples: int, seed: int,
                        k: int = 60, bands: float = 3.0) -> CheckResult:
    batch = simulate_closed_loop(scenario.with_horizon(k), gains, samples, seed)
    _, c, _, sc = sample_mean_cov(batch.X[:, k, :])
    z = _zscore(c - rep.cov_x, sc)
    return CheckResult("MC stationary covariance", z <= bands, z, bands, f"k={k}, n={samples}")


def check_stationarity(rep: StationaryPairRep, dist, tol: float = 1e-10) -> CheckResult:
    r = stationarity_residual(rep, dist)
    return CheckResult("stationary fixed point", r <= tol, r, tol)


def check_certificate(scenario, gains: StationaryGains, count: int = 1000, steps: int = 60,
                      seed: int = 0) -> CheckResult:
    """Empirical coupled L2 offset against ``beta rate^k`` for every ``k <= steps``.

    ``beta`` uses the empirical L2 norm of the initial state offset of the batch.
    """
    batch = simulate_coupled(scenario, gains, count, seed, steps)
    offset = float(np.sqrt(((batch.X[:, 0] - batch.Xbar[:, 0]) ** 2).sum(axis=1).mean()))
    cert = convergence_certificate(scenario.sys, scenario.cost, offset, gains)
    emp = batch.offset_l2()
    bound = cert.bound(np.arange(steps + 1))
    ratio = float(np.max(emp / np.where(bound > 0, bound, np.inf)))
    return CheckResult("convergence certificate", ratio <= 1.0, ratio, 1.0,
                       f"max offset/bound over k<={steps}, rate={cert.rate:.4g}")


def w2_table(gains: StationaryGains, dist, ps, samples: int, seed: int):
    """Per-component W2 between each window ``p`` and the ``p + 40`` reference."""
    ps = list(ps)
    draws = sample_stationary(gains, dist, ps + [p + REFERENCE_OFFSET for p in ps], samples, seed)
    rows = []
    for p in ps:
        X, U = draws[p]
        Xr, Ur = draws[p + REFERENCE_OFFSET]
        approx = build_truncated_stationary(gains, dist, p)
        comps = [("x", i, X[:, i], Xr[:, i]) for i in range(X.shape[1])]
        comps += [("u", i, U[:, i], Ur[:, i]) for i in range(U.shape[1])]
        for var, i, a, b in comps:
            rows.append({
                "p": p, "variable": var, "component": i, "w2": empirical_w2_1d(a, b),
                "bound": approx.w2_bound, "bound_lyapunov": approx.bound_lyapunov,
                "bound_l2": approx.bound_l2,
            })
    return rows


def check_w2(gains: StationaryGains, dist, ps=(0, 2, 4, 5, 11), samples: int = 100_000,
             seed: int = 0) -> CheckResult:
    rows = w2_table(gains, dist, ps, samples, seed)
    ratio = max(r["w2"] / r["bound"] if r["bound"] > 0 else (0.0 if r["w2"] == 0 else np.inf) for r in rows)
    return CheckResult("stationary W2 bound", ratio <= 1.0, float(ratio), 1.0,
                       f"max W2/bound, p in {list(ps)}, n={samples}")


def moment_stage_cost(rep: StationaryPairRep) -> float:
    cost = rep.gains.cost
    ex = rep.cov_x + np.outer(rep.mean_x, rep.mean_x)
    eu = rep.cov_u + np.outer(rep.mean_u, rep.mean_u)
    return float(np.trace(cost.Q @ ex) + np.trace(cost.R @ eu))


def check_stationary_cost(rep: StationaryPairRep, dist, tol: float = 1e-8) -> CheckResult:
    a = stationary_cost(rep.gains, dist)
    b = moment_stage_cost(rep)
    rel = abs(a - b) / max(abs(b), 1e-300)
    return CheckResult("stationary cost identity", rel <= tol, rel, tol, f"cost={a:.10g}")
