"""Independent cross-checks of the closed-form results.

These routines avoid the Riccati ladder where possible: the stacked
coefficient problem is solved as one dense least-squares problem, costs are
accumulated stage by stage, and truncation errors are recovered by re-solving
on the truncated slot set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .finite import FiniteSolution, closed_loop_product, solve_finite, truncated_slots


def _psd_root(M: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))).T


def stacked_qp_solve(scenario):
    """Solve every slot problem jointly as one dense least-squares problem.

    Causality is imposed by elimination: the input coefficient of the slot
    for the disturbance at time ``j`` is fixed to zero for ``k <= j``.
    Returns ``(x_coeffs, u_coeffs)`` shaped like :class:`FiniteSolution`.
    """
    sys, cost = scenario.sys, scenario.cost
    N, n_x, n_u = scenario.N, sys.n_x, sys.n_u
    basis = scenario.basis
    L = basis.L
    A, B, E = sys.A, sys.B, sys.E
    x0 = scenario.initial_coeffs()
    w = np.stack([scenario.disturbance_coeffs(k) for k in range(N)])
    rq, rr, rn = _psd_root(cost.Q), _psd_root(cost.R), _psd_root(cost.Q_N)

    # free input variables: (slot, k) pairs
    free = []
    for s in range(L):
        kind, where = basis.block_of(s)
        first = where[0] + 1 if kind == "dist" else 0
        free.extend((s, k) for k in range(first, N))
    col = {sk: i for i, sk in enumerate(free)}
    nv = len(free) * n_u

    rows_per_slot = (N + 1) * n_x + N * n_u
    H = np.zeros((L * rows_per_slot, nv))
    h = np.zeros(L * rows_per_slot)
    # affine maps x_k = gx[k] @ v + cx[k] per slot
    for s in range(L):
        wt = np.sqrt(basis.norms[s])
        gx = np.zeros((n_x, nv))
        cx = x0[:, s].copy()
        r0 = s * rows_per_slot
        for k in range(N + 1):
            root = rn if k == N else rq
            H[r0 + k * n_x: r0 + (k + 1) * n_x] = wt * root @ gx
            h[r0 + k * n_x: r0 + (k + 1) * n_x] = wt * root @ cx
            if k == N:
                break
            gu = np.zeros((n_u, nv))
            if (s, k) in col:
                c = col[(s, k)] * n_u
                gu[:, c: c + n_u] = np.eye(n_u)
                ru = r0 + (N + 1) * n_x + k * n_u
                H[ru: ru + n_u] = wt * rr @ gu
            gx = A @ gx + B @ gu
            cx = A @ cx + E @ w[k][:, s]
    v, *_ = np.linalg.lstsq(H, -h, rcond=None)

    u = np.zeros((N, n_u, L))
    for (s, k), i in col.items():
        u[k][:, s] = v[i * n_u: (i + 1) * n_u]
    x = np.zeros((N + 1, n_x, L))
    x[0] = x0
    for k in range(N):
        x[k + 1] = A @ x[k] + B @ u[k] + E @ w[k]
    return x, u


def accumulated_cost(sol: FiniteSolution) -> float:
    """``sum_k E[l(X_k, U_k)] + E[|X_N|^2_{Q_N}]`` from the coefficient trajectories."""
    cost = sol.scenario.cost
    nrm = sol.basis.norms
    total = 0.0
    for k in range(sol.N):
        xk, uk = sol.x_coeffs[k], sol.u_coeffs[k]
        total += np.einsum("is,ij,js,s->", xk, cost.Q, xk, nrm)
        total += np.einsum("is,ij,js,s->", uk, cost.R, uk, nrm)
    xN = sol.x_coeffs[sol.N]
    total += np.einsum("is,ij,js,s->", xN, cost.Q_N, xN, nrm)
    return float(total)


def truncation_by_resolve(sol: FiniteSolution, p: int) -> np.ndarray:
    """``X_k - X_k^trun`` coefficients obtained by re-solving on the window basis."""
    N = sol.N
    out = np.zeros_like(sol.x_coeffs)
    for k in range(N + 1):
        trun = solve_finite(sol.scenario, sol.ladder, truncated_slots(sol.basis, k, p))
        out[k] = sol.x_coeffs[k] - trun.x_coeffs[k]
    return out


def time_shift_residual(sol: FiniteSolution, slot: int, k: int, t: int) -> float:
    """``|x_{k+t} - Abar_k^{k+t-1} x_k|`` for one slot."""
    lhs = sol.x_coeffs[k + t][:, slot]
    rhs = closed_loop_product(sol, k, k + t - 1) @ sol.x_coeffs[k][:, slot]
    return float(np.max(np.abs(lhs - rhs)))


def slot_shift_residual(sol: FiniteSolution, j: int, k: int, t: int) -> float:
    """``|x_k^{j-t} - Abar_{j-t+1}^{j} x_k^{j}|`` for disturbance times ``j-t`` and ``j``."""
    basis = sol.basis
    a = basis.dist_slots(j - t)[0]
    b = basis.dist_slots(j)[0]
    lhs = sol.x_coeffs[k][:, a]
    rhs = closed_loop_product(sol, j - t + 1, j) @ sol.x_coeffs[k][:, b]
    return float(np.max(np.abs(lhs - rhs)))


def sample_shift_triples(N: int, count: int, seed: int):
    """Random valid ``(j, k, t)`` triples for the time and slot shift identities.

    Time shifts use the initial-condition slot (``j = -1``) or a disturbance
    time ``j`` with ``k >= j + 1``; slot shifts use ``k >= j + 1`` and
    ``0 <= t <= j``.
    """
    rng = np.random.default_rng(seed)
    time_triples, slot_triples = [], []
    while len(time_triples) < count:
        j = int(rng.integers(-1, N))
        k = int(rng.integers(max(0, j + 1), N + 1))
        t = int(rng.integers(0, N - k + 1))
        time_triples.append((j, k, t))
    while len(slot_triples) < count:
        j = int(rng.integers(0, N))
        k = int(rng.integers(j + 1, N + 1))
        t = int(rng.integers(0, j + 1))
        slot_triples.append((j, k, t))
    return time_triples, slot_triples


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name:<34s} value={self.value:.3e}  tol={self.tolerance:.1e}  {self.detail}"


def slot_for_index(basis, j: int) -> int:
    """First slot of the source with index ``j`` (-2 constant, -1 initial, else time)."""
    if j == -2:
        return 0
    if j == -1:
        return basis.ini_slots[0]
    return basis.dist_slots(j)[0]
