"""Discrete nonholonomic problem container and the pieces the solver needs.

An :class:`NhProblem` bundles a groupoid backend, a discrete Lagrangian on it,
the constraint submanifold (zero set of ``phi``) and the constraint
distribution on the base.  The dynamics is the projected discrete
Euler-Lagrange condition

    left_deriv(L, g, X_a(beta(g))) - right_deriv(L, h, X_a(beta(g))) = 0

over a basis X_a of the distribution at the matching point, together with
``phi(h) = 0`` for the next element.  ``residual`` stacks the projected rows
first and the constraint rows after them.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import groupoid as gpd
from .errors import ConstraintViolationError, RankDeficientAnnihilator

TOL_CONSTRAINT = 1e-9
NULLSPACE_RTOL = 1e-10


@dataclass(frozen=True)
class Distribution:
    """Constraint distribution on the base manifold.

    ``basis(x)`` returns an (n, r) array of fiber-chart directions spanning
    D_c at x; ``annihilator(x)`` returns (n, k) covector components with
    k = n - r, vanishing on the span.
    """

    rank: int
    basis: Callable
    annihilator: Callable


@dataclass(frozen=True)
class ConstraintSet:
    """Zero set of phi inside the groupoid, codimension ``codim``.

    ``left_jac(g)`` / ``right_jac(g)``, when given, return the (codim, n)
    arrays of exact left/right chart gradients of the components of phi.
    """

    codim: int
    phi: Callable
    left_jac: Optional[Callable] = None
    right_jac: Optional[Callable] = None


@dataclass(frozen=True)
class Lagrangian:
    """Scalar function on the groupoid with optional exact chart gradients."""

    eval: Callable
    left_grad: Optional[Callable] = None
    right_grad: Optional[Callable] = None


@dataclass
class NhProblem:
    name: str
    backend: object
    lagrangian: Lagrangian
    constraints: ConstraintSet
    distribution: Distribution
    h: Optional[float] = None
    params: dict = field(default_factory=dict)
    declared_reversible: Optional[bool] = None
    momentum_specs: dict = field(default_factory=dict)
    domain_guard: Optional[Callable] = None
    newton_jacobian: Optional[Callable] = None
    is_chaplygin: bool = False
    coord_names: Optional[list] = None
    to_row: Optional[Callable] = None
    initial_builder: Optional[Callable] = None
    sample_states: Optional[Callable] = None

    @property
    def n(self):
        return self.backend.fiber_dim

    @property
    def r(self):
        return self.distribution.rank

    @property
    def k(self):
        return self.constraints.codim

    # Lagrangian derivatives with analytic dispatch -------------------------
    def d_left(self, g, v):
        if self.lagrangian.left_grad is not None:
            return float(self.lagrangian.left_grad(g) @ np.asarray(v, dtype=float))
        return gpd.left_deriv(self.backend, self.lagrangian.eval, g, v)

    def d_right(self, g, v):
        if self.lagrangian.right_grad is not None:
            return float(self.lagrangian.right_grad(g) @ np.asarray(v, dtype=float))
        return gpd.right_deriv(self.backend, self.lagrangian.eval, g, v)

    def phi(self, g):
        return np.atleast_1d(np.asarray(self.constraints.phi(g), dtype=float))

    def phi_left_jac(self, g):
        if self.constraints.left_jac is not None:
            return np.asarray(self.constraints.left_jac(g), dtype=float)
        rows = np.empty((self.k, self.n))
        for i in range(self.k):
            fi = lambda el, i=i: float(self.phi(el)[i])
            for j in range(self.n):
                e = np.zeros(self.n)
                e[j] = 1.0
                rows[i, j] = gpd.left_deriv(self.backend, fi, g, e)
        return rows

    def phi_right_jac(self, g):
        if self.constraints.right_jac is not None:
            return np.asarray(self.constraints.right_jac(g), dtype=float)
        rows = np.empty((self.k, self.n))
        for i in range(self.k):
            fi = lambda el, i=i: float(self.phi(el)[i])
            for j in range(self.n):
                e = np.zeros(self.n)
                e[j] = 1.0
                rows[i, j] = gpd.right_deriv(self.backend, fi, g, e)
        return rows

    def cross(self, g, a, b):
        """Two-point form of the Lagrangian at g (analytic inner if present)."""
        return gpd.cross_form(
            self.backend, self.lagrangian.eval, g, a, b, left_rule=self.lagrangian.left_grad
        )

    def assert_on_constraint(self, g, tol=TOL_CONSTRAINT, label="element"):
        v = float(np.max(np.abs(self.phi(g)))) if self.k else 0.0
        if v > tol:
            raise ConstraintViolationError(
                f"{self.name}: {label} violates the discrete constraints (|phi| = {v:.3e})"
            )


# ---------------------------------------------------------------------------
# residual assembly


def del_covector(p, g, h):
    """Full difference covector F(v) = d_left(L, g, v) - d_right(L, h, v)
    as components over the fiber chart directions."""
    n = p.n
    out = np.empty(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        out[j] = p.d_left(g, e) - p.d_right(h, e)
    return out


def del_projected(p, g, h):
    """Projected discrete Euler-Lagrange rows over the distribution basis at
    the matching point beta(g)."""
    B = np.asarray(p.distribution.basis(p.backend.target(g)), dtype=float)
    out = np.empty(B.shape[1])
    for a in range(B.shape[1]):
        v = B[:, a]
        out[a] = p.d_left(g, v) - p.d_right(h, v)
    return out


def residual_at(p, g, h):
    """Stacked residual [projected DEL rows; phi(h) rows] for a candidate h."""
    return np.concatenate([del_projected(p, g, h), p.phi(h)])


def residual(p, g, u, center=None):
    """Residual as a function of fiber-chart coordinates u around ``center``
    (default: the unit over beta(g))."""
    if center is None:
        center = p.backend.identity(p.backend.target(g))
    return residual_at(p, g, p.backend.retract(center, np.asarray(u, dtype=float)))


def newton_jacobian_fd(p, g, center):
    """Central-difference Jacobian of the residual in the chart at ``center``."""
    n = p.n
    J = np.empty((n, n))
    t = gpd.FD_STEP
    for j in range(n):
        u = np.zeros(n)
        u[j] = t
        rp = residual_at(p, g, p.backend.retract(center, u))
        rm = residual_at(p, g, p.backend.retract(center, -u))
        J[:, j] = (rp - rm) / (2.0 * t)
    return J


def lagrange_multipliers(p, g, h):
    """Multipliers expanding the difference covector over the annihilator
    basis at beta(g); least squares, with the residual of the fit returned
    for consistency checks."""
    F = del_covector(p, g, h)
    A = np.asarray(p.distribution.annihilator(p.backend.target(g)), dtype=float)
    lam, res, rank, sv = np.linalg.lstsq(A, F, rcond=None)
    if rank < A.shape[1]:
        raise RankDeficientAnnihilator(
            f"{p.name}: annihilator basis has rank {rank} < {A.shape[1]}"
        )
    fit = F - A @ lam
    return lam, float(np.max(np.abs(fit)))


# ---------------------------------------------------------------------------
# tangent spaces of the constraint set and regularity matrices


def _nullspace(M, rtol=NULLSPACE_RTOL):
    """Orthonormal basis (columns) of the right null space of M."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    u, s, vh = np.linalg.svd(M)
    cutoff = rtol * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    return vh[rank:].T


def left_tangent_basis(p, g):
    """Basis of the left-invariant directions tangent to the constraint set
    at g (null space of the left chart gradient of phi)."""
    return _nullspace(p.phi_left_jac(g))


def right_tangent_basis(p, g):
    """Basis of the right-invariant directions tangent to the constraint set
    at g (null space of the right chart gradient of phi)."""
    return _nullspace(p.phi_right_jac(g))


def regularity_matrices(p, g):
    """The two nondegeneracy pairings of the two-point form at g.

    Returns (G_left, G_right):

    * ``G_left[a, j]  = cross(g, X_a(alpha(g)), W_j)`` with W_j spanning the
      left tangent directions at g; its right kernel must be trivial.
    * ``G_right[i, b] = cross(g, V_i, X_b(beta(g)))`` with V_i spanning the
      right tangent directions; its left kernel must be trivial.
    """
    bk = p.backend
    Xa = np.asarray(p.distribution.basis(bk.source(g)), dtype=float)
    Xb = np.asarray(p.distribution.basis(bk.target(g)), dtype=float)
    W = left_tangent_basis(p, g)
    V = right_tangent_basis(p, g)
    G_left = np.empty((Xa.shape[1], W.shape[1]))
    for a in range(Xa.shape[1]):
        for j in range(W.shape[1]):
            G_left[a, j] = p.cross(g, Xa[:, a], W[:, j])
    G_right = np.empty((V.shape[1], Xb.shape[1]))
    for i in range(V.shape[1]):
        for b in range(Xb.shape[1]):
            G_right[i, b] = p.cross(g, V[:, i], Xb[:, b])
    return G_left, G_right


def kernel_sigmas(M, rank_needed):
    """(sigma_{rank_needed}, sigma_max) of a two-point pairing matrix.

    The pairing is nondegenerate when it couples all rank_needed distribution
    directions, i.e. when its rank_needed-th singular value is positive.  In
    the generic square case this is the usual smallest singular value; when
    one leg of the pairing has extra admissible directions (a constraint
    function that does not see that leg, as for a holonomic arrival-point
    constraint) the matrix is rectangular and the surplus directions must not
    count as degeneracy.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    s = np.linalg.svd(M, compute_uv=False)
    smax = float(s[0]) if s.size else 0.0
    if s.size < rank_needed:
        return 0.0, smax
    return float(s[rank_needed - 1]), smax
