"""Monte Carlo validation: closed-loop paths, coupled stationary paths, 1-D W2, histograms.

Nothing here uses PCE coefficients of the state or input; paths are simulated
from sampled germs through the plant equations only, which keeps this module
an independent check on the coefficient-level results.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .linalg import RiccatiLadder, StationaryGains
from .pce import (
    STREAM_PAST,
    PceRandomVector,
    StochasticScenario,
    sample_germ_paths,
    sample_realizations,
)
from .stationary import stationary_mean


def _schedule(feedback, N: int, k: int):
    if isinstance(feedback, RiccatiLadder):
        return feedback.K[N - k], feedback.F[N - k]
    if isinstance(feedback, StationaryGains):
        return feedback.K, feedback.F
    raise TypeError("feedback must be a RiccatiLadder or StationaryGains")


def sample_mean_cov(X: np.ndarray):
    """Sample mean, covariance and their standard errors for ``X`` of shape ``(n, d)``."""
    n = X.shape[0]
    m = X.mean(axis=0)
    Z = X - m
    prod = Z[:, :, None] * Z[:, None, :]
    cov = prod.sum(axis=0) / (n - 1)
    se_mean = Z.std(axis=0, ddof=1) / np.sqrt(n)
    se_cov = prod.std(axis=0, ddof=1) / np.sqrt(n)
    return m, cov, se_mean, se_cov


@dataclass(frozen=True)
class SimulationBatch:
    count: int
    seed: int
    X: np.ndarray  # (count, N+1, n_x)
    U: np.ndarray  # (count, N, n_u)
    W: np.ndarray  # (count, N, n_w)
    cost: np.ndarray  # (count,)

    def moments(self, k: int):
        """Mean, covariance and standard errors of ``X_k``."""
        return sample_mean_cov(self.X[:, k, :])

    def summary(self):
        rows = []
        for k in range(self.X.shape[1]):
            m, c, sm, sc = self.moments(k)
            rows.append({"k": k, "mean": m.tolist(), "cov": c.tolist(),
                         "se_mean": sm.tolist(), "se_cov": sc.tolist()})
        return rows

    def path_header(self):
        n_x, n_u = self.X.shape[2], self.U.shape[2]
        return ["sample_id", "k", *[f"x{i}" for i in range(n_x)], *[f"u{i}" for i in range(n_u)]]

    def path_rows(self, limit: int | None = None):
        """Rows ``(sample_id, k, x..., u...)`` at 17 significant digits; ``u`` is blank at k = N."""
        n = self.count if limit is None else min(limit, self.count)
        N = self.U.shape[1]
        n_u = self.U.shape[2]
        fmt = lambda v: format(float(v), ".17g")  # noqa: E731
        for s in range(n):
            for k in range(N + 1):
                us = [fmt(v) for v in self.U[s, k]] if k < N else [""] * n_u
                yield [s, k, *[fmt(v) for v in self.X[s, k]], *us]

    def write_paths_csv(self, path, limit: int | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.path_header())
            w.writerows(self.path_rows(limit))


def simulate_closed_loop(
    scenario: StochasticScenario, feedback, count: int, seed: int
) -> SimulationBatch:
    """Simulate ``X+ = A X + B U + E W`` under ``U_k = K X_k + F E[W]``.

    ``feedback`` is a ladder (time-varying ``K_{N-k}``, ``F_{N-k}``) or
    stationary gains.  The realized cost includes ``X_N' Q_N X_N``.
    """
    sys, cost = scenario.sys, scenario.cost
    N = scenario.N
    real = sample_realizations(scenario, count, seed)
    ew = scenario.mean_w
    X = np.empty((count, N + 1, sys.n_x))
    U = np.empty((count, N, sys.n_u))
    X[:, 0] = real.X_ini
    J = np.zeros(count)
    for k in range(N):
        K, F = _schedule(feedback, N, k)
        U[:, k] = X[:, k] @ K.T + F @ ew
        J += np.einsum("ni,ij,nj->n", X[:, k], cost.Q, X[:, k])
        J += np.einsum("ni,ij,nj->n", U[:, k], cost.R, U[:, k])
        X[:, k + 1] = X[:, k] @ sys.A.T + U[:, k] @ sys.B.T + real.W[:, k] @ sys.E.T
    J += np.einsum("ni,ij,nj->n", X[:, N], cost.Q_N, X[:, N])
    return SimulationBatch(count, seed, X, U, real.W, J)


def sample_stationary(gains: StationaryGains, dist: PceRandomVector, ps, count: int, seed: int):
    """Realizations of the truncated stationary pair for every window in ``ps``.

    All windows share the same germ draws, so larger windows extend smaller
    ones path by path.  Returns ``{p: (X, U)}`` with ``X`` of shape ``(count, n_x)``.
    """
    ps = sorted(set(int(p) for p in ps))
    p_max = ps[-1] if ps else 0
    mx, _ = stationary_mean(gains, dist)
    ew = dist.coeffs[:, 0]
    xi = sample_germ_paths(dist.basis, count, max(p_max, 1), seed, STREAM_PAST)
    E = gains.sys.E
    out = {}
    X = np.tile(mx, (count, 1))
    gen = E.copy()
    want = set(ps)
    for j in range(p_max + 1):
        if j in want:
            out[j] = (X.copy(), X @ gains.K.T + gains.F @ ew)
        if j == p_max:
            break
        dw = dist.realize(dist.basis.evaluate(xi[:, j, :])) - ew
        X = X + dw @ gen.T
        gen = gains.A_cl @ gen
    return out


@dataclass(frozen=True)
class CoupledBatch:
    """Optimal closed loop and its stationary companion driven by the same W_k."""

    X: np.ndarray
    U: np.ndarray
    Xbar: np.ndarray
    Ubar: np.ndarray

    def offset_l2(self) -> np.ndarray:
        """Empirical ``sqrt(mean |(X_k,U_k) - (Xbar_k,Ubar_k)|^2)`` for every k."""
        dx = ((self.X - self.Xbar) ** 2).sum(axis=2)
        du = ((self.U - self.Ubar) ** 2).sum(axis=2)
        du = np.concatenate([du, np.zeros((du.shape[0], 1))], axis=1) if du.shape[1] < dx.shape[1] else du
        return np.sqrt((dx + du).mean(axis=0))


def simulate_coupled(
    scenario: StochasticScenario, gains: StationaryGains, count: int, seed: int, steps: int,
    p_tail: int = 100,
) -> CoupledBatch:
    """Run ``steps`` steps of the stationary-gain loop from ``X_ini`` and from ``Xbar_0``.

    ``Xbar_0`` is an independent draw of the (``p_tail``-truncated) stationary
    measure built from a separate germ stream.
    """
    sys = gains.sys
    horizon = scenario.with_horizon(steps)
    real = sample_realizations(horizon, count, seed)
    ew = scenario.mean_w
    Xbar0, _ = sample_stationary(gains, scenario.dist, [p_tail], count, seed)[p_tail]
    X = np.empty((count, steps + 1, sys.n_x))
    Xb = np.empty_like(X)
    U = np.empty((count, steps + 1, sys.n_u))
    Ub = np.empty_like(U)
    X[:, 0] = real.X_ini
    Xb[:, 0] = Xbar0
    for k in range(steps + 1):
        U[:, k] = X[:, k] @ gains.K.T + gains.F @ ew
        Ub[:, k] = Xb[:, k] @ gains.K.T + gains.F @ ew
        if k == steps:
            break
        drive = real.W[:, k] @ sys.E.T
        X[:, k + 1] = X[:, k] @ sys.A.T + U[:, k] @ sys.B.T + drive
        Xb[:, k + 1] = Xb[:, k] @ sys.A.T + Ub[:, k] @ sys.B.T + drive
    return CoupledBatch(X, U, Xb, Ub)


def empirical_w2_1d(samples_a, samples_b) -> float:
    """Exact order-2 Wasserstein distance between two equal-size empirical measures."""
    a = np.sort(np.asarray(samples_a, dtype=float).ravel())
    b = np.sort(np.asarray(samples_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empirical W2 needs non-empty samples")
    if a.size != b.size:
        raise ValueError(f"sample sizes differ: {a.size} vs {b.size}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    masses: np.ndarray

    @property
    def density(self) -> np.ndarray:
        widths = np.diff(self.edges)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(widths > 0, self.masses / widths, np.inf)

    def rows(self):
        d = self.density
        return [
            {"left": float(self.edges[i]), "right": float(self.edges[i + 1]),
             "mass": float(self.masses[i]), "density": float(d[i])}
            for i in range(self.masses.size)
        ]


def emit_histogram(samples, bins: int) -> Histogram:
    """Equal-width bins over the sample range, masses summing to one."""
    if bins < 2:
        raise ValueError("need at least two bins")
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("histogram needs non-empty samples")
    lo, hi = x.min(), x.max()
    if lo == hi:
        return Histogram(np.array([lo, hi]), np.array([1.0]))
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    return Histogram(edges, counts / x.size)
