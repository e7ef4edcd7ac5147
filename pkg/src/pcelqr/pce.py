"""Germ families, the joint time-indexed basis, PCE moments and sampling.

A *source basis* is the basis of one random source (the initial condition or
the disturbance template).  It may combine several mutually independent
univariate germs; the germs share one constant function and contribute no
cross products, so a source with germs of sizes ``L_1, L_2, ...`` has
``1 + sum(L_i - 1)`` functions.

The *joint basis* stacks the constant, the non-constant initial-condition
functions and one copy of the non-constant disturbance functions per time
step::

    slot 0                          constant
    slots 1 .. L_ini-1              initial condition
    slots L_ini + k(L_w-1) + (0..L_w-2)   disturbance at time k

``source_index`` maps a slot to -2 (constant), -1 (initial condition) or the
time step ``k`` of its disturbance.  With ``L_ini = L_w = 2`` this is exactly
``slot - 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from numpy.polynomial import hermite_e, legendre

from .errors import DimensionError
from .linalg import CostSpec, LtiSystem

CHUNK = 8192


@dataclass(frozen=True)
class GermSpec:
    """One univariate germ with its first ``L`` orthogonal polynomials.

    ``evaluator(xi)`` maps an array of germ realizations of shape ``(n,)`` to
    the ``(n, L)`` matrix of basis values; ``sampler(rng, n)`` draws ``n``
    i.i.d. realizations.
    """

    family: str
    L: int
    norms: tuple
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    sampler: Callable[[np.random.Generator, int], np.ndarray] = field(repr=False, compare=False)

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("a germ basis needs at least one function")
        if len(self.norms) != self.L:
            raise DimensionError(f"expected {self.L} norms, got {len(self.norms)}")
        if self.norms[0] != 1.0:
            raise ValueError("the constant function must have unit norm")
        if any(n <= 0 for n in self.norms):
            raise ValueError("squared norms must be positive")

    def evaluate(self, xi) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(xi, dtype=float)), dtype=float)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return np.asarray(self.sampler(rng, count), dtype=float)


def _hermite_eval(L):
    return lambda xi: hermite_e.hermevander(xi, L - 1)


def _legendre_eval(L):
    return lambda xi: legendre.legvander(xi, L - 1)


def _std_normal(rng, n):
    return rng.standard_normal(n)


def _std_uniform(rng, n):
    return rng.uniform(-1.0, 1.0, n)


def hermite(L: int = 2) -> GermSpec:
    """Probabilists' Hermite polynomials of a standard normal germ."""
    return GermSpec(
        "hermite", L, tuple(float(math.factorial(j)) for j in range(L)), _hermite_eval(L), _std_normal
    )


def legendre_germ(L: int = 2) -> GermSpec:
    """Legendre polynomials of a germ uniform on [-1, 1]."""
    return GermSpec(
        "legendre", L, tuple(1.0 / (2 * j + 1) for j in range(L)), _legendre_eval(L), _std_uniform
    )


def custom_germ(norms: Sequence[float], evaluator, sampler) -> GermSpec:
    """User-supplied orthogonal family; ``evaluator`` must return φ⁰ ≡ 1 first."""
    norms = tuple(float(n) for n in norms)
    return GermSpec("custom", len(norms), norms, evaluator, sampler)


GERM_FAMILIES = {"hermite": hermite, "legendre": legendre_germ}


def make_germ(family: str, L: int) -> GermSpec:
    try:
        return GERM_FAMILIES[family](L)
    except KeyError:
        raise ValueError(f"unknown germ family {family!r}; expected one of {sorted(GERM_FAMILIES)}") from None


@dataclass(frozen=True)
class SourceBasis:
    """Basis of a single random source built from independent germs."""

    germs: tuple

    def __post_init__(self):
        object.__setattr__(self, "germs", tuple(self.germs))

    @property
    def L(self) -> int:
        return 1 + sum(g.L - 1 for g in self.germs)

    @property
    def n_germs(self) -> int:
        return len(self.germs)

    @property
    def norms(self) -> np.ndarray:
        out = [1.0]
        for g in self.germs:
            out.extend(g.norms[1:])
        return np.array(out)

    def evaluate(self, xi) -> np.ndarray:
        """Basis values for germ draws of shape ``(n, n_germs)`` -> ``(n, L)``."""
        xi = np.asarray(xi, dtype=float)
        if not self.germs:
            return np.ones((xi.shape[0] if xi.ndim else 1, 1))
        xi = xi.reshape(-1, self.n_germs)
        cols = [np.ones((xi.shape[0], 1))]
        for i, g in enumerate(self.germs):
            cols.append(g.evaluate(xi[:, i])[:, 1:])
        return np.hstack(cols)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if not self.germs:
            return np.zeros((count, 0))
        return np.column_stack([g.sample(rng, count) for g in self.germs])


BasisLike = Union[SourceBasis, "JointBasis"]


@dataclass(frozen=True)
class PceRandomVector:
    """Random vector ``Z = sum_j coeffs[:, j] phi^j`` on a finite basis."""

    coeffs: np.ndarray
    basis: object

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c.reshape(1, -1)
        if c.ndim != 2 or c.shape[1] != self.basis.L:
            raise DimensionError(
                f"coefficient matrix {c.shape} does not match basis size {self.basis.L}"
            )
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.coeffs[:, 0].copy()

    @property
    def cov(self) -> np.ndarray:
        return pce_moments(self)[1]

    def realize(self, basis_values: np.ndarray) -> np.ndarray:
        """Map ``(n, L)`` basis values to ``(n, dim)`` realizations."""
        return basis_values @ self.coeffs.T


def pce_moments(z: PceRandomVector):
    """Mean (column 0) and covariance ``sum_{j>=1} z^j z^j' |phi^j|^2``."""
    nz = z.coeffs[:, 1:]
    w = np.asarray(z.basis.norms, dtype=float)[1:]
    cov = (nz * w) @ nz.T
    return z.coeffs[:, 0].copy(), 0.5 * (cov + cov.T)


def pce_cross_covariance(z1: PceRandomVector, z2: PceRandomVector) -> np.ndarray:
    if z1.basis != z2.basis:
        raise DimensionError("cross covariance requires both vectors on the same basis")
    w = np.asarray(z1.basis.norms, dtype=float)[1:]
    return (z1.coeffs[:, 1:] * w) @ z2.coeffs[:, 1:].T


@dataclass(frozen=True)
class JointBasis:
    """Constant + initial-condition block + one disturbance block per step."""

    N: int
    L_ini: int
    L_w: int
    ini_norms: tuple = None
    w_norms: tuple = None

    def __post_init__(self):
        if self.L_ini < 1 or self.L_w < 1:
            raise ValueError("basis sizes L_ini and L_w must be >= 1")
        if self.N < 1:
            raise ValueError("horizon N must be >= 1")
        ini = (1.0,) * self.L_ini if self.ini_norms is None else tuple(map(float, self.ini_norms))
        w = (1.0,) * self.L_w if self.w_norms is None else tuple(map(float, self.w_norms))
        if len(ini) != self.L_ini or len(w) != self.L_w:
            raise DimensionError("norm vectors must match L_ini and L_w")
        object.__setattr__(self, "ini_norms", ini)
        object.__setattr__(self, "w_norms", w)

    @property
    def L(self) -> int:
        return self.L_ini + self.N * (self.L_w - 1)

    @property
    def norms(self) -> np.ndarray:
        return np.array(self.ini_norms + self.w_norms[1:] * self.N)

    @property
    def ini_slots(self) -> range:
        return range(1, self.L_ini)

    def dist_slots(self, k: int) -> range:
        if not 0 <= k < self.N:
            raise IndexError(f"disturbance time {k} outside [0, {self.N - 1}]")
        start = self.L_ini + k * (self.L_w - 1)
        return range(start, start + self.L_w - 1)

    def block_of(self, slot: int):
        """``("const", 0)``, ``("ini", i)`` or ``("dist", (k, n))`` for a slot.

        ``i`` and ``n`` index the source basis (1-based, 0 being the constant).
        """
        if not 0 <= slot < self.L:
            raise IndexError(f"slot {slot} outside [0, {self.L - 1}]")
        if slot == 0:
            return "const", 0
        if slot < self.L_ini:
            return "ini", slot
        k, r = divmod(slot - self.L_ini, self.L_w - 1)
        return "dist", (k, r + 1)

    def source_index(self, slot: int) -> int:
        kind, where = self.block_of(slot)
        if kind == "const":
            return -2
        if kind == "ini":
            return -1
        return where[0]


def build_joint_basis(L_ini: int, L_w: int, N: int, ini_norms=None, w_norms=None) -> JointBasis:
    return JointBasis(N=N, L_ini=L_ini, L_w=L_w, ini_norms=ini_norms, w_norms=w_norms)


@dataclass(frozen=True)
class StochasticScenario:
    """System, cost, exact finite PCEs of ``X_ini`` and of the disturbance template."""

    sys: LtiSystem
    cost: CostSpec
    ini: PceRandomVector
    dist: PceRandomVector
    N: int
    name: str = "scenario"

    def __post_init__(self):
        self.cost.check_against(self.sys)
        if self.ini.dim != self.sys.n_x:
            raise DimensionError(f"initial condition has dim {self.ini.dim}, expected n_x={self.sys.n_x}")
        if self.dist.dim != self.sys.n_w:
            raise DimensionError(f"disturbance has dim {self.dist.dim}, expected n_w={self.sys.n_w}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"horizon N must be a positive integer, got {self.N}")

    @property
    def basis(self) -> JointBasis:
        return JointBasis(
            self.N, self.ini.basis.L, self.dist.basis.L,
            tuple(self.ini.basis.norms), tuple(self.dist.basis.norms),
        )

    @property
    def mean_w(self) -> np.ndarray:
        return self.dist.mean

    @property
    def cov_w(self) -> np.ndarray:
        return pce_moments(self.dist)[1]

    def with_horizon(self, N: int) -> "StochasticScenario":
        return StochasticScenario(self.sys, self.cost, self.ini, self.dist, int(N), self.name)

    def initial_coeffs(self) -> np.ndarray:
        """``(n_x, L)`` coefficients of ``X_ini`` in the joint basis."""
        basis = self.basis
        out = np.zeros((self.sys.n_x, basis.L))
        out[:, : basis.L_ini] = self.ini.coeffs
        return out

    def disturbance_coeffs(self, k: int) -> np.ndarray:
        """``(n_w, L)`` coefficients of ``W_k`` in the joint basis."""
        basis = self.basis
        out = np.zeros((self.sys.n_w, basis.L))
        out[:, 0] = self.dist.coeffs[:, 0]
        out[:, list(basis.dist_slots(k))] = self.dist.coeffs[:, 1:]
        return out


def uniform_disturbance(low, high) -> PceRandomVector:
    """Independent uniform components on ``[low_i, high_i]`` via Legendre germs."""
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    if low.shape != high.shape or np.any(high < low):
        raise ValueError("uniform bounds must have equal shape and low <= high")
    n = low.size
    basis = SourceBasis(tuple(legendre_germ(2) for _ in range(n)))
    coeffs = np.zeros((n, basis.L))
    coeffs[:, 0] = 0.5 * (low + high)
    coeffs[np.arange(n), 1 + np.arange(n)] = 0.5 * (high - low)
    return PceRandomVector(coeffs, basis)


def gaussian_vector(mean, cov) -> PceRandomVector:
    """Gaussian vector ``mean + chol(cov) theta`` with independent Hermite germs."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = mean.size
    evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    if evals.min() < -1e-10 * max(1.0, abs(evals).max()):
        raise ValueError("covariance must be positive semidefinite")
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    basis = SourceBasis(tuple(hermite(2) for _ in range(n)))
    return PceRandomVector(np.column_stack([mean, root]), basis)


def germ_rng(seed: int, *labels: int) -> np.random.Generator:
    """Independent generator for the stream named by ``labels`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=labels)))


STREAM_INI, STREAM_DIST, STREAM_PAST = 0, 1, 2


def _chunks(count: int):
    for c, start in enumerate(range(0, count, CHUNK)):
        yield c, start, min(start + CHUNK, count)


@dataclass(frozen=True)
class Realizations:
    """Sampled germs and the realized initial states / disturbances.

    Shapes: ``xi_ini (n, g_ini)``, ``xi_w (n, N, g_w)``, ``X_ini (n, n_x)``,
    ``W (n, N, n_w)``.
    """

    xi_ini: np.ndarray
    xi_w: np.ndarray
    X_ini: np.ndarray
    W: np.ndarray

    @property
    def count(self) -> int:
        return self.X_ini.shape[0]


def sample_germ_paths(basis: SourceBasis, count: int, steps: int, seed: int, stream: int) -> np.ndarray:
    """``(count, steps, n_germs)`` i.i.d. germ draws, chunk-wise reproducible."""
    out = np.empty((count, steps, basis.n_germs))
    for c, a, b in _chunks(count):
        rng = germ_rng(seed, stream, c)
        out[a:b] = basis.sample(rng, (b - a) * steps).reshape(b - a, steps, basis.n_germs)
    return out


def sample_realizations(scenario: StochasticScenario, count: int, seed: int) -> Realizations:
    """Draw ``count`` independent paths of ``(X_ini, W_0..W_{N-1})``.

    Streams are keyed by (seed, source, chunk of 8192 sample indices), so the
    output does not depend on how chunks are scheduled.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    N = scenario.N
    xi_ini = sample_germ_paths(scenario.ini.basis, count, 1, seed, STREAM_INI)[:, 0, :]
    xi_w = sample_germ_paths(scenario.dist.basis, count, N, seed, STREAM_DIST)
    X_ini = scenario.ini.realize(scenario.ini.basis.evaluate(xi_ini))
    phi_w = scenario.dist.basis.evaluate(xi_w.reshape(count * N, -1))
    W = scenario.dist.realize(phi_w).reshape(count, N, scenario.sys.n_w)
    return Realizations(xi_ini, xi_w, X_ini, W)
