"""Linear-algebra kernel for finite Markov chains.

Stationary distributions, the centered resolvent (fundamental matrix), and
Poisson-equation solvers for transition matrices, discounted chains, and
continuous-time generators.  Every solve goes through dense LU with partial
pivoting (`numpy.linalg.solve` / `inv`), so repeated calls on identical
inputs return identical bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, ModelError
from .model import Pmf, StochasticMatrix, _adopt, _bless, _freeze

RESIDUAL_TOL = 1e-10
INVARIANCE_TOL = 1e-11
GENERATOR_ROW_TOL = 1e-12


def _eye(d, _cache={}):
    ident = _cache.get(d)
    if ident is None:
        ident = np.eye(d)
        ident.setflags(write=False)
        _cache[d] = ident
    return ident


@dataclass(frozen=True)
class PoissonSolution:
    """Normalized solution of Poisson's equation together with the mean.

    h solves P h = h - f + mean (or the generator analogue) and vanishes at
    the reference state exactly.
    """

    h: np.ndarray
    mean: float
    reference_state: int

    def __post_init__(self):
        h = _freeze(self.h)
        if h[self.reference_state] != 0.0:
            raise DegeneracyError("Poisson solution must vanish at the reference state")
        object.__setattr__(self, "h", h)


@dataclass(frozen=True)
class FundamentalMatrix:
    """Inverse of the centered chain operator, Z = (I - P + 1 (x) pi)^{-1}.

    Stores the matrix it was built from so the defining identities can be
    re-checked; construction fails if they miss 1e-10.
    """

    z: np.ndarray
    pi: Pmf
    p: StochasticMatrix

    def __post_init__(self):
        z = _freeze(self.z)
        d = self.p.d
        m = np.eye(d) - self.p.entries + self.pi.weights[None, :]
        if np.abs(z @ m - np.eye(d)).max() > RESIDUAL_TOL:
            raise DegeneracyError("fundamental matrix fails its defining identity")
        if np.abs(z.sum(axis=1) - 1.0).max() > RESIDUAL_TOL:
            raise DegeneracyError("fundamental matrix rows must sum to one")
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class GeneratorMatrix:
    """Transition-rate matrix: zero row sums, nonnegative off-diagonals."""

    entries: np.ndarray

    def __post_init__(self):
        m = _freeze(self.entries)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ModelError(f"generator must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ModelError("generator has non-finite entries")
        off = m - np.diag(np.diag(m))
        if off.min() < -GENERATOR_ROW_TOL:
            i, j = np.unravel_index(int(off.argmin()), off.shape)
            raise ModelError(f"negative off-diagonal rate {m[i, j]:.6g} at ({i}, {j})")
        sums = np.abs(m.sum(axis=1))
        if sums.max() > GENERATOR_ROW_TOL:
            i = int(sums.argmax())
            raise ModelError(f"generator row {i} sums to {m.sum(axis=1)[i]:.3g}, not 0")
        object.__setattr__(self, "entries", m)

    @property
    def d(self):
        return self.entries.shape[0]


def invariant_pmf(p: StochasticMatrix) -> Pmf:
    """Unique stationary distribution of an irreducible aperiodic chain.

    Solves (P^T - I) pi = 0 with the last balance equation replaced by the
    normalization sum(pi) = 1; the replaced row is redundant because the
    rows of P^T - I sum to zero.

    Parameters
    ----------
    p : StochasticMatrix
        Transition matrix, assumed irreducible and aperiodic.

    Returns
    -------
    Pmf
        Strictly positive pi with pi P = pi.
    """
    d = p.d
    system = p.entries.T - _eye(d)
    system[-1, :] = 1.0
    rhs = np.zeros(d)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError(f"stationary system is singular: {exc}") from None
    pi = pi / pi.sum()
    if pi.min() <= 0.0:
        raise DegeneracyError(
            f"stationary solve produced a non-positive mass {pi.min():.3g}; chain is numerically reducible"
        )
    if np.abs(pi @ p.entries - pi).max() > INVARIANCE_TOL:
        raise DegeneracyError("stationary solve failed its invariance residual")
    return _bless(Pmf, weights=_adopt(pi))


def fundamental_matrix(p: StochasticMatrix, pi: Pmf) -> FundamentalMatrix:
    """Dense inverse Z = (I - P + 1 (x) pi)^{-1} via LU.

    Parameters
    ----------
    p : StochasticMatrix
        Irreducible aperiodic transition matrix.
    pi : Pmf
        Its stationary distribution.

    Returns
    -------
    FundamentalMatrix
    """
    d = p.d
    m = np.eye(d) - p.entries + pi.weights[None, :]
    try:
        z = np.linalg.inv(m)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError(f"centered chain operator is singular: {exc}") from None
    if __debug__ and d <= 6:
        _debug_series_check(p.entries, pi.weights, z)
    return FundamentalMatrix(z=z, pi=pi, p=p)


def _debug_series_check(p, pi, z, tol=1e-8):
    # Z equals sum_n (P - 1 (x) pi)^n; truncate adaptively since the decay
    # rate is the subdominant eigenvalue, which n0 says nothing about.
    base = p - pi[None, :]
    acc = np.eye(p.shape[0])
    term = np.eye(p.shape[0])
    for _ in range(2000):
        term = term @ base
        acc += term
        if np.abs(term).max() < 1e-13:
            assert np.abs(acc - z).max() <= tol, (
                "fundamental matrix disagrees with its truncated power series"
            )
            return
    # series did not settle (very slow mixing); skip rather than misreport


def poisson_solve(p: StochasticMatrix, f, x0: int, pi: Pmf | None = None) -> PoissonSolution:
    """Solve P h = h - f + mean(f), normalized so h vanishes at ``x0``.

    The solution is the row difference of the fundamental-matrix image,
    h(x) = (Z f)(x) - (Z f)(x0), computed with one LU solve against the
    centered operator rather than by materializing Z.

    Parameters
    ----------
    p : StochasticMatrix
    f : array_like
        Cost/reward vector, finite.
    x0 : int
        Reference state.
    pi : Pmf, optional
        Stationary distribution of ``p``; computed when omitted.

    Returns
    -------
    PoissonSolution
    """
    f = np.asarray(f, dtype=float)
    d = p.d
    if f.shape != (d,):
        raise ModelError(f"cost vector must have length {d}, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ModelError("cost vector has non-finite entries")
    if not 0 <= x0 < d:
        raise ModelError(f"reference state {x0} out of range")
    if pi is None:
        pi = invariant_pmf(p)
    m = _eye(d) - p.entries + pi.weights[None, :]
    try:
        y = np.linalg.solve(m, f)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError(f"centered chain operator is singular: {exc}") from None
    h = y - y[x0]  # exactly zero at x0
    mean = float(pi.weights @ f)
    residual = np.abs(p.entries @ h - h + f - mean).max()
    if residual > RESIDUAL_TOL:
        raise DegeneracyError(f"Poisson residual {residual:.3e} exceeds {RESIDUAL_TOL:g}")
    return _bless(PoissonSolution, h=_adopt(h), mean=mean, reference_state=x0)


def discounted_solve(p: StochasticMatrix, f, beta: float) -> np.ndarray:
    """Solve the discounted fixed point H = f + beta P H.

    Parameters
    ----------
    p : StochasticMatrix
    f : array_like
    beta : float
        Discount factor in (0, 1).

    Returns
    -------
    numpy.ndarray
        H = (I - beta P)^{-1} f.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"discount factor must lie in (0, 1), got {beta}")
    f = np.asarray(f, dtype=float)
    d = p.d
    if f.shape != (d,):
        raise ModelError(f"cost vector must have length {d}, got shape {f.shape}")
    h = np.linalg.solve(np.eye(d) - beta * p.entries, f)
    residual = np.abs(f + beta * (p.entries @ h) - h).max()
    if residual > RESIDUAL_TOL:
        raise DegeneracyError(f"discounted residual {residual:.3e} exceeds {RESIDUAL_TOL:g}")
    return h


def generator_invariant(a: GeneratorMatrix) -> Pmf:
    """Stationary distribution of a conservative generator: pi A = 0, sum(pi) = 1."""
    d = a.d
    system = a.entries.T.copy()
    system[-1, :] = 1.0
    rhs = np.zeros(d)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError(f"generator stationary system is singular: {exc}") from None
    pi = pi / pi.sum()
    if pi.min() <= 0.0:
        raise DegeneracyError("generator stationary solve produced non-positive mass")
    if np.abs(pi @ a.entries).max() > INVARIANCE_TOL:
        raise DegeneracyError("generator stationary solve failed its residual")
    return _bless(Pmf, weights=_adopt(pi))


def generator_poisson(a: GeneratorMatrix, kappa, x0: int, pi: Pmf | None = None) -> PoissonSolution:
    """Solve A G = mean(kappa) - kappa with G(x0) = 0.

    The row for the reference state is replaced by the normalization
    G(x0) = 0; consistency of the replaced balance equation is verified
    afterwards against the full residual.
    """
    kappa = np.asarray(kappa, dtype=float)
    d = a.d
    if kappa.shape != (d,):
        raise ModelError(f"cost vector must have length {d}, got shape {kappa.shape}")
    if not 0 <= x0 < d:
        raise ModelError(f"reference state {x0} out of range")
    if pi is None:
        pi = generator_invariant(a)
    mean = float(pi.weights @ kappa)
    rhs = mean - kappa
    system = a.entries.copy()
    system[x0, :] = 0.0
    system[x0, x0] = 1.0
    rhs_mod = rhs.copy()
    rhs_mod[x0] = 0.0
    try:
        g = np.linalg.solve(system, rhs_mod)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError(f"generator Poisson system is singular: {exc}") from None
    g = g - g[x0]  # exactly zero at x0
    residual = np.abs(a.entries @ g - rhs).max()
    if residual > RESIDUAL_TOL:
        raise DegeneracyError(
            f"generator Poisson residual {residual:.3e} exceeds {RESIDUAL_TOL:g}"
        )
    return _bless(PoissonSolution, h=_adopt(g), mean=mean, reference_state=x0)
