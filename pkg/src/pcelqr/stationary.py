"""Optimal stationary pair: cost, truncated approximations and their error bounds.

Three tail measures are reported for a window of ``p`` retained disturbances,
all scaled by ``sqrt(1 + |K|_2^2)``:

``bound_closed_form``
    ``cond(V) tr(cov W E'E) rho^p / (1 - rho)``; inverting it for ``p`` gives
    ``required_dim_closed_form``.
``bound_lyapunov``
    ``tr(E' M(p) E cov W)`` with ``A_cl' M(p) A_cl - M(p) + A_cl^p' A_cl^p = 0``;
    the smallest ``p`` with this below delta is ``required_dim_lyapunov``.
``bound_l2``
    ``sqrt(tr(E' M(p) E cov W))``, the exact L2 norm of the dropped tail
    coupled with its input image, which upper-bounds the W2 distance.

The first two measure the disturbance spread through ``tr(cov)`` rather than
its square root, so ``bound_lyapunov == bound_l2 ** 2 / sqrt(1 + |K|^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DefectiveMatrixError, NotConvergedError
from .linalg import StationaryGains, solve_discrete_lyapunov
from .pce import JointBasis, PceRandomVector, pce_moments

LYAPUNOV_MAX_P = 10_000


def _moments(dist: PceRandomVector):
    return pce_moments(dist)


def stationary_cost(gains: StationaryGains, dist: PceRandomVector) -> float:
    """``|W|^2_{E'PE} + |E[W]|^2_{dS}``, the optimal stationary stage cost."""
    mean, cov = _moments(dist)
    E = gains.sys.E
    EPE = E.T @ gains.P @ E
    return float(mean @ EPE @ mean + np.trace(EPE @ cov) + mean @ gains.S_delta @ mean)


def _gain_scale(gains: StationaryGains) -> float:
    return math.sqrt(1.0 + gains.K_norm**2)


def _tail_trace(gains: StationaryGains, dist: PceRandomVector) -> float:
    _, cov = _moments(dist)
    E = gains.sys.E
    return float(np.trace(cov @ E.T @ E))


def tail_metric(gains: StationaryGains) -> np.ndarray:
    """``M(0)``: solution of ``A_cl' M A_cl - M + I = 0``."""
    return solve_discrete_lyapunov(gains.A_cl.T, np.eye(gains.sys.n_x))


def _lyap_quadratic(gains, dist, M):
    _, cov = _moments(dist)
    E = gains.sys.E
    return float(np.trace(E.T @ M @ E @ cov))


def bound_closed_form(gains: StationaryGains, dist: PceRandomVector, p: int) -> float:
    if gains.defective:
        raise DefectiveMatrixError("closed-form bound needs a diagonalizable closed loop")
    return (
        _gain_scale(gains) * gains.eig_cond * _tail_trace(gains, dist)
        * gains.rho**p / (1.0 - gains.rho)
    )


def _metric_at(gains, p, M0=None):
    M0 = tail_metric(gains) if M0 is None else M0
    Ap = np.linalg.matrix_power(gains.A_cl, p)
    return Ap.T @ M0 @ Ap


def bound_lyapunov(gains: StationaryGains, dist: PceRandomVector, p: int, M0=None) -> float:
    return _gain_scale(gains) * _lyap_quadratic(gains, dist, _metric_at(gains, p, M0))


def bound_l2(gains: StationaryGains, dist: PceRandomVector, p: int, M0=None) -> float:
    q = max(_lyap_quadratic(gains, dist, _metric_at(gains, p, M0)), 0.0)
    return _gain_scale(gains) * math.sqrt(q)


def required_dim_closed_form(gains: StationaryGains, dist: PceRandomVector, delta: float) -> int:
    """Smallest window guaranteed by the eigen-decomposition bound."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if gains.defective:
        raise DefectiveMatrixError(
            "closed-form dimension needs a diagonalizable closed loop; use required_dim_lyapunov"
        )
    trace = _tail_trace(gains, dist)
    if trace <= 0.0 or gains.rho == 0.0:
        return 0
    c = math.log(1.0 - gains.rho) - math.log(_gain_scale(gains) * trace * gains.eig_cond)
    p = math.ceil((math.log(delta) + c) / math.log(gains.rho))
    return max(p, 0)


def required_dim_lyapunov(
    gains: StationaryGains, dist: PceRandomVector, delta: float, max_p: int = LYAPUNOV_MAX_P
) -> int:
    """Smallest ``p`` whose Lyapunov tail measure is at most ``delta``.

    ``M(0)`` is solved once and advanced with ``M(p+1) = A_cl' M(p) A_cl``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    scale = _gain_scale(gains)
    A = gains.A_cl
    M = tail_metric(gains)
    for p in range(max_p + 1):
        if scale * _lyap_quadratic(gains, dist, M) <= delta:
            return p
        M = A.T @ M @ A
    raise NotConvergedError(f"Lyapunov dimension search exceeded p = {max_p}")


@dataclass(frozen=True)
class StationaryApprox:
    """Truncated stationary pair on a basis with ``1 + p (L_w - 1)`` slots.

    ``x_coeffs`` / ``u_coeffs`` are ``(n_x, L)`` / ``(n_u, L)``; slot 0 holds
    the means and the block of retained step ``j`` holds ``A_cl^j E w^n``.
    """

    p: int
    basis: JointBasis | None
    mean_x: np.ndarray
    mean_u: np.ndarray
    x_coeffs: np.ndarray
    u_coeffs: np.ndarray
    blocks: np.ndarray
    bound_closed_form: float | None
    bound_lyapunov: float
    bound_l2: float

    @property
    def w2_bound(self) -> float:
        """Closed-form bound when available, otherwise the L2 tail norm."""
        if self.bound_closed_form is None:
            return self.bound_l2
        return self.bound_closed_form

    @property
    def norms(self) -> np.ndarray:
        return np.ones(1) if self.basis is None else self.basis.norms

    def moments(self):
        w = self.norms[1:]
        cx = self.x_coeffs[:, 1:]
        cu = self.u_coeffs[:, 1:]
        return {
            "mean_x": self.mean_x,
            "mean_u": self.mean_u,
            "cov_x": (cx * w) @ cx.T,
            "cov_u": (cu * w) @ cu.T,
        }


def stationary_mean(gains: StationaryGains, dist: PceRandomVector):
    """Mean state ``(I - A_cl)^-1 F_cl E[W]`` and input ``K x + F E[W]``."""
    ew = dist.coeffs[:, 0]
    n_x = gains.sys.n_x
    mx = np.linalg.solve(np.eye(n_x) - gains.A_cl, gains.F_cl @ ew)
    return mx, gains.K @ mx + gains.F @ ew


def build_truncated_stationary(gains: StationaryGains, dist: PceRandomVector, p: int) -> StationaryApprox:
    if p < 0:
        raise ValueError("window length p must be >= 0")
    sys = gains.sys
    mx, mu = stationary_mean(gains, dist)
    L_w = dist.basis.L
    nonmean = dist.coeffs[:, 1:]
    basis = JointBasis(p, 1, L_w, (1.0,), tuple(dist.basis.norms)) if p >= 1 else None
    L = 1 + p * (L_w - 1)
    blocks = np.zeros((p, sys.n_x, L_w - 1))
    x_coeffs = np.zeros((sys.n_x, L))
    x_coeffs[:, 0] = mx
    gen = sys.E.copy()
    for j in range(p):
        blocks[j] = gen @ nonmean
        x_coeffs[:, 1 + j * (L_w - 1): 1 + (j + 1) * (L_w - 1)] = blocks[j]
        gen = gains.A_cl @ gen
    u_coeffs = gains.K @ x_coeffs
    u_coeffs[:, 0] = mu
    M0 = tail_metric(gains)
    cf = None if gains.defective else bound_closed_form(gains, dist, p)
    return StationaryApprox(
        p=p,
        basis=basis,
        mean_x=mx,
        mean_u=mu,
        x_coeffs=x_coeffs,
        u_coeffs=u_coeffs,
        blocks=blocks,
        bound_closed_form=cf,
        bound_lyapunov=bound_lyapunov(gains, dist, p, M0),
        bound_l2=bound_l2(gains, dist, p, M0),
    )


def tail_covariance(gains: StationaryGains, dist: PceRandomVector, p: int) -> np.ndarray:
    """Covariance of the dropped tail ``sum_{j>=p} A_cl^j E (W_j - E[W])``."""
    _, cov = _moments(dist)
    Ap = np.linalg.matrix_power(gains.A_cl, p)
    E = gains.sys.E
    return solve_discrete_lyapunov(gains.A_cl, Ap @ E @ cov @ E.T @ Ap.T)
