"""Infinite-horizon feedback, its limiting stationary measure and convergence rate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DefectiveMatrixError
from .linalg import CostSpec, LtiSystem, StationaryGains, stationary_gains, solve_discrete_lyapunov
from .pce import PceRandomVector, pce_moments
from .stationary import required_dim_lyapunov, stationary_mean

DEFAULT_TAIL_DELTA = 1e-8


def infinite_gains(sys: LtiSystem, cost: CostSpec):
    """Stationary ``(K, F, gains)``; the feedback is ``U = K X + F E[W]``."""
    gains = stationary_gains(sys, cost)
    return gains.K, gains.F, gains


@dataclass(frozen=True)
class StationaryPairRep:
    """Moments and tail generator of the limiting state/input measure.

    The state is ``mean_x + sum_j tail_gen[j] (W_j - E[W])``.
    """

    gains: StationaryGains
    mean_x: np.ndarray
    mean_u: np.ndarray
    tail_gen: np.ndarray
    cov_x: np.ndarray
    cov_u: np.ndarray


def stationary_pair(
    sys: LtiSystem, cost: CostSpec, dist: PceRandomVector, p_max: int | None = None,
    gains: StationaryGains | None = None,
) -> StationaryPairRep:
    if gains is None:
        gains = stationary_gains(sys, cost)
    _, cov_w = pce_moments(dist)
    if p_max is None:
        p_max = required_dim_lyapunov(gains, dist, DEFAULT_TAIL_DELTA)
    mx, mu = stationary_mean(gains, dist)
    gen = [sys.E.copy()]
    for _ in range(p_max):
        gen.append(gains.A_cl @ gen[-1])
    cov_x = solve_discrete_lyapunov(gains.A_cl, sys.E @ cov_w @ sys.E.T)
    cov_u = gains.K @ cov_x @ gains.K.T
    return StationaryPairRep(gains, mx, mu, np.array(gen), cov_x, 0.5 * (cov_u + cov_u.T))


def stationarity_residual(rep: StationaryPairRep, dist: PceRandomVector) -> float:
    """Mean plus covariance residual of the distributional fixed point."""
    g = rep.gains
    sys = g.sys
    ew, cov_w = pce_moments(dist)
    mean_res = rep.mean_x - (sys.A @ rep.mean_x + sys.B @ rep.mean_u + sys.E @ ew)
    cov_res = g.A_cl @ rep.cov_x @ g.A_cl.T + sys.E @ cov_w @ sys.E.T - rep.cov_x
    return float(np.linalg.norm(mean_res) + np.linalg.norm(cov_res))


@dataclass(frozen=True)
class ConvergenceCertificate:
    """``|(X_k, U_k) - (Xbar_k, Ubar_k)| <= beta * rate**k``."""

    beta: float
    rate: float
    eig_cond: float
    K_norm: float

    def bound(self, k) -> np.ndarray:
        return self.beta * self.rate ** np.asarray(k, dtype=float)


def convergence_certificate(
    sys: LtiSystem, cost: CostSpec, x0_offset_norm: float, gains: StationaryGains | None = None
) -> ConvergenceCertificate:
    if gains is None:
        gains = stationary_gains(sys, cost)
    if gains.defective:
        raise DefectiveMatrixError("convergence certificate needs a diagonalizable closed loop")
    if x0_offset_norm < 0:
        raise ValueError("offset norm must be nonnegative")
    k_norm = gains.K_norm
    beta = math.sqrt(1.0 + k_norm**2) * gains.eig_cond * x0_offset_norm
    return ConvergenceCertificate(beta, gains.rho, gains.eig_cond, k_norm)


def coupled_offset_norm(ini: PceRandomVector, rep: StationaryPairRep) -> float:
    """L2 norm of ``X_ini - Xbar_0`` when ``Xbar_0`` is drawn independently of ``X_ini``."""
    m_ini, cov_ini = pce_moments(ini)
    d = m_ini - rep.mean_x
    return math.sqrt(float(d @ d + np.trace(cov_ini) + np.trace(rep.cov_x)))
