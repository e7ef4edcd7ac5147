"""Dense linear-algebra kernels: Riccati ladders, Lyapunov solves, spectra.

All arrays handed out by this module are read-only float64 copies, so the
dataclasses below can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DefectiveMatrixError,
    DimensionError,
    InvalidCostError,
    NotConvergedError,
    UnstableError,
)

PSD_TOL = 1e-10
PD_TOL = 1e-12
DEFECTIVE_COND = 1e12
RICCATI_RTOL = 1e-12
RICCATI_MAXITER = 100_000
LYAPUNOV_RTOL = 1e-14


def _frozen(a, name: str, ndim: int = 2) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 0 and ndim == 2:
        arr = arr.reshape(1, 1)
    if arr.ndim != ndim:
        raise DimensionError(f"{name} must be a {ndim}-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains non-finite entries")
    arr.flags.writeable = False
    return arr


def _stack(mats) -> np.ndarray:
    arr = np.array(mats, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LtiSystem:
    """Plant ``x+ = A x + B u + E w``."""

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        A = _frozen(self.A, "A")
        B = _frozen(self.B, "B")
        E = _frozen(self.E, "E")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n or B.shape[1] < 1:
            raise DimensionError(f"B must have {n} rows, got {B.shape}")
        if E.shape[0] != n or E.shape[1] < 1:
            raise DimensionError(f"E must have {n} rows, got {E.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "E", E)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_w(self) -> int:
        return self.E.shape[1]


def _check_symmetric(M: np.ndarray, name: str) -> None:
    scale = max(1.0, np.abs(M).max())
    if np.abs(M - M.T).max() > 1e-12 * scale:
        raise InvalidCostError(f"{name} is not symmetric")


@dataclass(frozen=True)
class CostSpec:
    """Quadratic stage weights ``Q``, ``R`` and terminal weight ``Q_N``.

    ``Q_N`` defaults to the zero matrix.
    """

    Q: np.ndarray
    R: np.ndarray
    Q_N: np.ndarray | None = None

    def __post_init__(self):
        Q = _frozen(self.Q, "Q")
        R = _frozen(self.R, "R")
        Q_N = np.zeros_like(Q) if self.Q_N is None else _frozen(self.Q_N, "Q_N")
        Q_N.flags.writeable = False
        for name, M in (("Q", Q), ("Q_N", Q_N), ("R", R)):
            if M.shape[0] != M.shape[1]:
                raise InvalidCostError(f"{name} must be square, got {M.shape}")
            _check_symmetric(M, name)
        if Q_N.shape != Q.shape:
            raise InvalidCostError(f"Q_N shape {Q_N.shape} differs from Q shape {Q.shape}")
        for name, M in (("Q", Q), ("Q_N", Q_N)):
            if np.linalg.eigvalsh(M).min() < -PSD_TOL:
                raise InvalidCostError(f"{name} is not positive semidefinite")
        if np.linalg.eigvalsh(R).min() < PD_TOL:
            raise InvalidCostError("R is not positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Q_N", Q_N)

    def check_against(self, sys: LtiSystem) -> None:
        if self.Q.shape != (sys.n_x, sys.n_x):
            raise DimensionError(f"Q must be {sys.n_x}x{sys.n_x}, got {self.Q.shape}")
        if self.R.shape != (sys.n_u, sys.n_u):
            raise DimensionError(f"R must be {sys.n_u}x{sys.n_u}, got {self.R.shape}")


@dataclass(frozen=True)
class RiccatiLadder:
    """Backward recursions of the affine LQR, indexed by steps-to-go.

    ``P[k]``, ``G[k]``, ``S[k]`` for ``k = 0..N`` and ``K[k]``, ``F[k]``,
    ``M[k]`` for ``k = 1..N``.  Entry 0 of ``K``, ``F`` and ``M`` is NaN so
    that ``K[N - k]`` is the gain applied at time ``k``; here ``M[k]`` is the
    innovation matrix ``R + B' P[k-1] B`` used to form ``K[k]``.
    """

    N: int
    P: np.ndarray
    G: np.ndarray
    S: np.ndarray
    K: np.ndarray
    F: np.ndarray
    M: np.ndarray

    def closed_loop(self, sys: LtiSystem, k: int) -> np.ndarray:
        """``A + B K[N-k]``, the closed-loop matrix in force at time ``k``."""
        if not 0 <= k < self.N:
            raise IndexError(f"time index {k} outside [0, {self.N - 1}]")
        return sys.A + sys.B @ self.K[self.N - k]


def _innovation_inverse(R, B, P, step):
    M = R + B.T @ P @ B
    M = 0.5 * (M + M.T)
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise InvalidCostError(
            f"innovation matrix R + B'P B is not positive definite at step {step}"
        ) from None
    return M, np.linalg.inv(M)


def riccati_step(sys: LtiSystem, cost: CostSpec, P: np.ndarray, step="stationary"):
    """One step of the P recursion; returns ``(P_next, K, M)``."""
    A, B = sys.A, sys.B
    M, Minv = _innovation_inverse(cost.R, B, P, step)
    PB = P @ B
    P_next = cost.Q + A.T @ (P - PB @ Minv @ PB.T) @ A
    K = -Minv @ B.T @ P @ A
    return 0.5 * (P_next + P_next.T), K, M


def riccati_ladder(sys: LtiSystem, cost: CostSpec, N: int) -> RiccatiLadder:
    """Run the affine-LQR recursions for ``N`` steps starting from ``P_0 = Q_N``."""
    if int(N) != N or N < 1:
        raise ValueError(f"horizon N must be a positive integer, got {N}")
    N = int(N)
    cost.check_against(sys)
    A, B, E = sys.A, sys.B, sys.E
    n_x, n_u, n_w = sys.n_x, sys.n_u, sys.n_w
    P = [cost.Q_N.copy()]
    G = [np.zeros((n_x, n_w))]
    S = [np.zeros((n_w, n_w))]
    nan = np.nan
    K = [np.full((n_u, n_x), nan)]
    F = [np.full((n_u, n_w), nan)]
    Ms = [np.full((n_u, n_u), nan)]
    for k in range(1, N + 1):
        Pp, Gp, Sp = P[-1], G[-1], S[-1]
        M, Minv = _innovation_inverse(cost.R, B, Pp, k - 1)
        PB = Pp @ B
        Kk = -Minv @ B.T @ Pp @ A
        forcing = Pp @ E + Gp
        Fk = -Minv @ B.T @ forcing
        Pk = cost.Q + A.T @ (Pp - PB @ Minv @ PB.T) @ A
        Gk = (A + B @ Kk).T @ forcing
        Sk = Sp + E.T @ Gp + Gp.T @ E + E.T @ Pp @ E - Fk.T @ M @ Fk
        P.append(0.5 * (Pk + Pk.T))
        G.append(Gk)
        S.append(0.5 * (Sk + Sk.T))
        K.append(Kk)
        F.append(Fk)
        Ms.append(M)
    return RiccatiLadder(N, _stack(P), _stack(G), _stack(S), _stack(K), _stack(F), _stack(Ms))


@dataclass(frozen=True)
class StationaryGains:
    """Limit of the Riccati ladder and the derived closed-loop quantities.

    ``eig_cond`` is ``inf`` and ``defective`` is set when the closed-loop
    matrix is numerically non-diagonalizable.
    """

    sys: LtiSystem
    cost: CostSpec
    P: np.ndarray
    G: np.ndarray
    S_delta: np.ndarray
    K: np.ndarray
    F: np.ndarray
    M: np.ndarray
    A_cl: np.ndarray
    F_cl: np.ndarray
    rho: float
    eig_cond: float
    iterations: int

    @property
    def defective(self) -> bool:
        return not np.isfinite(self.eig_cond)

    @property
    def K_norm(self) -> float:
        return matrix_2norm(self.K)

    def riccati_residual(self) -> float:
        """Relative Frobenius residual of the algebraic Riccati fixed point."""
        P_next, _, _ = riccati_step(self.sys, self.cost, self.P)
        return float(np.linalg.norm(P_next - self.P) / max(np.linalg.norm(self.P), 1e-300))


def stationary_gains(
    sys: LtiSystem,
    cost: CostSpec,
    rtol: float = RICCATI_RTOL,
    max_iter: int = RICCATI_MAXITER,
) -> StationaryGains:
    """Iterate the P recursion to its fixed point and derive K, F, G, etc.

    Raises NotConvergedError when the iteration stalls or diverges, which is
    how non-stabilizable / non-detectable data shows up.
    """
    cost.check_against(sys)
    A, B, E = sys.A, sys.B, sys.E
    P = np.zeros_like(A)
    for it in range(1, max_iter + 1):
        P_next, _, _ = riccati_step(sys, cost, P, it)
        change = np.linalg.norm(P_next - P)
        size = np.linalg.norm(P_next)
        # the Frobenius norm overflows well before the entries do
        if not (np.isfinite(change) and np.isfinite(size)):
            raise NotConvergedError(f"Riccati iteration diverged after {it} steps")
        P = P_next
        if change <= rtol * max(size, np.finfo(float).tiny):
            break
    else:
        raise NotConvergedError(
            f"Riccati iteration did not reach rtol={rtol} in {max_iter} steps"
        )
    M, Minv = _innovation_inverse(cost.R, B, P, "stationary")
    K = -Minv @ B.T @ P @ A
    A_cl = A + B @ K
    rho = spectral_radius(A_cl)
    if rho >= 1.0:
        raise UnstableError(f"stationary gain is not stabilizing (rho = {rho:.6g})")
    n_x = sys.n_x
    # G = A_cl' (P E + G)
    G = np.linalg.solve(np.eye(n_x) - A_cl.T, A_cl.T @ P @ E)
    F = -Minv @ B.T @ (P @ E + G)
    S_delta = E.T @ G + G.T @ E - F.T @ M @ F
    try:
        _, cond = eig_conditioning(A_cl)
    except DefectiveMatrixError:
        cond = np.inf
    return StationaryGains(
        sys=sys,
        cost=cost,
        P=_frozen(P, "P"),
        G=_frozen(G, "G"),
        S_delta=_frozen(0.5 * (S_delta + S_delta.T), "S_delta"),
        K=_frozen(K, "K"),
        F=_frozen(F, "F"),
        M=_frozen(M, "M"),
        A_cl=_frozen(A_cl, "A_cl"),
        F_cl=_frozen(B @ F + E, "F_cl"),
        rho=float(rho),
        eig_cond=float(cond),
        iterations=it,
    )


def solve_discrete_lyapunov(A: np.ndarray, Qc: np.ndarray, rtol: float = LYAPUNOV_RTOL) -> np.ndarray:
    """Solve ``A X A' - X + Qc = 0`` for Schur-stable ``A`` by doubling.

    The series ``sum_j A^j Qc A'^j`` is summed with ``X <- X + A_m X A_m'``,
    ``A_m <- A_m^2``, which doubles the number of terms per pass.
    """
    A = np.asarray(A, dtype=float)
    Qc = np.asarray(Qc, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or Qc.shape != A.shape:
        raise DimensionError(f"incompatible shapes A {A.shape}, Qc {Qc.shape}")
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise UnstableError(f"Lyapunov solve needs rho(A) < 1, got {rho:.6g}")
    X = 0.5 * (Qc + Qc.T)
    Am = A.copy()
    for _ in range(128):
        step = Am @ X @ Am.T
        X_next = X + step
        Am = Am @ Am
        if np.linalg.norm(step) <= rtol * np.linalg.norm(X_next) or not np.any(X_next):
            X = X_next
            break
        X = X_next
    else:  # pragma: no cover - needs rho within ~1e-38 of one
        raise NotConvergedError("Lyapunov doubling did not converge")
    X = 0.5 * (X + X.T)
    X.flags.writeable = False
    return X


def spectral_radius(M: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"spectral radius needs a square matrix, got {M.shape}")
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NotConvergedError(f"eigenvalue iteration failed: {exc}") from None
    return float(np.abs(ev).max())


def eig_conditioning(M: np.ndarray) -> tuple[float, float]:
    """Spectral radius and ``||V||_2 ||V^-1||_2`` for ``M = V diag(lam) V^-1``.

    Eigenvectors are unit-norm columns; symmetric input uses an orthonormal
    eigenbasis so the condition number is exactly one.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"eigen-conditioning needs a square matrix, got {M.shape}")
    scale = max(np.abs(M).max(), np.finfo(float).tiny)
    if np.abs(M - M.T).max() <= 1e-14 * scale:
        lam = np.linalg.eigvalsh(0.5 * (M + M.T))
        return float(np.abs(lam).max()), 1.0
    try:
        lam, V = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise NotConvergedError(f"eigenvalue iteration failed: {exc}") from None
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > DEFECTIVE_COND:
        raise DefectiveMatrixError(
            f"eigenvector matrix is numerically singular (cond = {cond:.3g})"
        )
    return float(np.abs(lam).max()), float(max(cond, 1.0))


def matrix_2norm(M: np.ndarray) -> float:
    """Spectral norm (largest singular value)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.linalg.norm(M, 2))
