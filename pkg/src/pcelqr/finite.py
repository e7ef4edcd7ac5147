"""Finite-horizon stochastic LQ control through decoupled PCE coefficient problems.

Every slot of the joint basis is an independent deterministic LQ problem that
shares the Riccati ladder; only the constant slot sees the affine forcing
``E E[W]``.  Trajectories come from forward simulation under the optimal
gains; the product closed forms are exposed separately for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import RiccatiLadder, riccati_ladder
from .pce import JointBasis, StochasticScenario


@dataclass(frozen=True)
class FiniteSolution:
    """Optimal PCE coefficient trajectories.

    ``x_coeffs`` has shape ``(N+1, n_x, L)`` and ``u_coeffs`` ``(N, n_u, L)``.
    ``block_costs[s]`` is the optimal cost of the slot-``s`` subproblem and
    ``total_cost = sum_s block_costs[s] * |phi^s|^2``.
    """

    scenario: StochasticScenario
    ladder: RiccatiLadder
    basis: JointBasis
    slots: tuple
    x_coeffs: np.ndarray
    u_coeffs: np.ndarray
    block_costs: np.ndarray
    total_cost: float

    @property
    def N(self) -> int:
        return self.scenario.N

    def state_mean(self, k: int) -> np.ndarray:
        return self.x_coeffs[k][:, 0].copy()

    def state_cov(self, k: int) -> np.ndarray:
        c = self.x_coeffs[k][:, 1:]
        return (c * self.basis.norms[1:]) @ c.T

    def input_mean(self, k: int) -> np.ndarray:
        return self.u_coeffs[k][:, 0].copy()

    def input_cov(self, k: int) -> np.ndarray:
        c = self.u_coeffs[k][:, 1:]
        return (c * self.basis.norms[1:]) @ c.T


def slot_cost(ladder: RiccatiLadder, scenario: StochasticScenario, slot: int) -> float:
    """Optimal cost of one slot subproblem from the ladder (no simulation)."""
    basis = scenario.basis
    N = scenario.N
    kind, where = basis.block_of(slot)
    x0 = scenario.initial_coeffs()[:, slot]
    if kind == "const":
        ew = scenario.mean_w
        return float(x0 @ ladder.P[N] @ x0 + 2 * ew @ ladder.G[N].T @ x0 + ew @ ladder.S[N] @ ew)
    if kind == "ini":
        return float(x0 @ ladder.P[N] @ x0)
    k, n = where
    ew = scenario.sys.E @ scenario.dist.coeffs[:, n]
    return float(ew @ ladder.P[N - k - 1] @ ew)


def solve_finite(scenario: StochasticScenario, ladder: RiccatiLadder | None = None, slots=None) -> FiniteSolution:
    """Solve all slot subproblems (or only ``slots``; the rest stay zero)."""
    N = scenario.N
    sys = scenario.sys
    if ladder is None:
        ladder = riccati_ladder(sys, scenario.cost, N)
    elif ladder.N != N:
        raise ValueError(f"ladder horizon {ladder.N} differs from scenario horizon {N}")
    basis = scenario.basis
    L = basis.L
    active = np.zeros(L, dtype=bool)
    if slots is None:
        active[:] = True
    else:
        active[list(slots)] = True
    A, B, E = sys.A, sys.B, sys.E
    ew = scenario.mean_w

    x = np.zeros((N + 1, sys.n_x, L))
    u = np.zeros((N, sys.n_u, L))
    x[0] = scenario.initial_coeffs() * active
    for k in range(N):
        K, F = ladder.K[N - k], ladder.F[N - k]
        u[k] = K @ x[k]
        if active[0]:
            u[k][:, 0] += F @ ew
        w = scenario.disturbance_coeffs(k) * active
        x[k + 1] = A @ x[k] + B @ u[k] + E @ w

    costs = np.array([slot_cost(ladder, scenario, s) if active[s] else 0.0 for s in range(L)])
    total = float(costs @ basis.norms)
    for arr in (x, u, costs):
        arr.flags.writeable = False
    return FiniteSolution(scenario, ladder, basis, tuple(np.flatnonzero(active)), x, u, costs, total)


def closed_loop_product(sol: FiniteSolution, k1: int, k2: int) -> np.ndarray:
    """``prod_{k=k1}^{k2} (A + B K_{N-k})`` with later factors on the left; I if empty."""
    sys = sol.scenario.sys
    out = np.eye(sys.n_x)
    for k in range(max(k1, 0), k2 + 1):
        out = sol.ladder.closed_loop(sys, k) @ out
    return out


def closed_form_state_coeff(sol: FiniteSolution, slot: int, k: int) -> np.ndarray:
    """State coefficient of ``slot`` at time ``k`` from the product closed form."""
    N = sol.N
    if not 0 <= k <= N:
        raise IndexError(f"time {k} outside [0, {N}]")
    scenario = sol.scenario
    sys = scenario.sys
    kind, where = sol.basis.block_of(slot)
    x0 = scenario.initial_coeffs()[:, slot]
    if kind == "const":
        out = closed_loop_product(sol, 0, k - 1) @ x0
        ew = scenario.mean_w
        for i in range(k):
            F_cl = sys.B @ sol.ladder.F[N - i] + sys.E
            out = out + closed_loop_product(sol, i + 1, k - 1) @ F_cl @ ew
        return out
    if kind == "ini":
        return closed_loop_product(sol, 0, k - 1) @ x0
    j, n = where
    if k <= j:
        return np.zeros(sys.n_x)
    return closed_loop_product(sol, j + 1, k - 1) @ sys.E @ scenario.dist.coeffs[:, n]


@dataclass(frozen=True)
class TruncationReport:
    """Error of keeping only the last ``p`` disturbance blocks at each time.

    ``delta_coeffs[k]`` is the ``(n_x, L)`` coefficient matrix of
    ``X_k - X_k^trun`` in the full joint basis and ``delta_norms[k]`` its L2 norm.
    """

    p: int
    delta_coeffs: np.ndarray
    delta_norms: np.ndarray


def truncation_error(sol: FiniteSolution, p: int) -> TruncationReport:
    """Coefficients of the dropped disturbance blocks, built from the products."""
    N = sol.N
    if not 0 <= p <= N:
        raise ValueError(f"window length p must lie in [0, {N}], got {p}")
    scenario = sol.scenario
    sys = scenario.sys
    basis = sol.basis
    delta = np.zeros((N + 1, sys.n_x, basis.L))
    for k in range(p + 1, N + 1):
        for j in range(k - p):
            gain = closed_loop_product(sol, j + 1, k - 1) @ sys.E
            for n, s in enumerate(basis.dist_slots(j), start=1):
                delta[k][:, s] = gain @ scenario.dist.coeffs[:, n]
    norms = np.sqrt(np.einsum("kis,s->k", delta**2, basis.norms))
    return TruncationReport(p, delta, norms)


def truncated_slots(basis: JointBasis, k: int, p: int) -> list:
    """Slots of the moving window basis at time ``k``: const, ini, steps k-p..k-1."""
    out = [0, *basis.ini_slots]
    for j in range(max(0, k - p), min(k, basis.N)):
        out.extend(basis.dist_slots(j))
    return out


@dataclass(frozen=True)
class CostDecomposition:
    per_slot: np.ndarray
    constant: float
    initial: float
    disturbance: float
    total: float


def min_cost_decomposition(sol: FiniteSolution) -> CostDecomposition:
    """Split the optimal cost into mean, initial-condition and disturbance parts.

    ``initial`` and ``disturbance`` are evaluated from moments
    (``tr(P_N cov X_ini)`` and ``tr(sum_j P_j E cov W E')``), independently of
    the per-slot values.
    """
    scenario = sol.scenario
    ladder = sol.ladder
    N = sol.N
    E = scenario.sys.E
    per_slot = sol.block_costs * sol.basis.norms
    constant = float(per_slot[0])
    cov_ini = scenario.ini.cov
    initial = float(np.trace(ladder.P[N] @ cov_ini))
    EWE = E @ scenario.cov_w @ E.T
    disturbance = float(np.trace(ladder.P[:N].sum(axis=0) @ EWE))
    return CostDecomposition(per_slot, constant, initial, disturbance, constant + initial + disturbance)
