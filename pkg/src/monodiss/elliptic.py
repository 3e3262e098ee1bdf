"""Monotone semilinear elliptic solves by damped Newton-Krylov.

The generic modal problem is

    D c + P f(u) = b,

with ``D`` block-diagonal in the sine modes (one k x k block per mode) and
``P f(u)`` the dealiased Galerkin projection of the nonlinearity.  Newton
corrections are computed by GMRES preconditioned with ``D^{-1}``; steps are
damped by Armijo backtracking on the L2 residual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import ConfigurationError, DimensionError, SolverError
from .nonlinearity import approximate, as_spec, ApproxSpec
from .spectral import (
    SpectralField,
    from_fine,
    gradient_fine,
    hessian_fine,
    hs_norm,
    quadrature,
    to_fine,
)

__all__ = [
    "ModalOperator",
    "EllipticProblem",
    "RegularityReport",
    "newton_solve",
    "solve",
    "prepare_initial_data",
    "regularity_report",
    "check_diffusion_matrix",
]

ARMIJO = 1e-4
MIN_STEP = 2.0**-20


def check_diffusion_matrix(a, k):
    """Return ``a`` as a ``(k, k)`` array after checking ``a + a^T > 0``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape != (k, k):
        raise ConfigurationError("a", f"must be {k}x{k}, got shape {a.shape}")
    mu = float(np.linalg.eigvalsh(0.5 * (a + a.T)).min())
    if not mu > 0:
        raise ConfigurationError("a", f"a + a^T must be positive definite (min eigenvalue {2 * mu:g})")
    return a


class ModalOperator:
    """Block-diagonal modal operator ``c_m -> (s_m a + t_m I) c_m``."""

    def __init__(self, grid, a, a_mult, diag):
        self.grid = grid
        k = grid.k
        a_mult = np.broadcast_to(a_mult, grid.shape)
        diag = np.broadcast_to(diag, grid.shape)
        self.k = k
        if k == 1:
            self.scalar = a_mult * float(a[0, 0]) + diag
            self.inv_scalar = 1.0 / self.scalar
        else:
            blocks = a_mult[..., None, None] * a + diag[..., None, None] * np.eye(k)
            self.blocks = blocks
            self.inv_blocks = np.linalg.inv(blocks)

    def apply(self, c):
        if self.k == 1:
            return self.scalar[None] * c
        return np.einsum("...ij,j...->i...", self.blocks, c)

    def solve(self, c):
        if self.k == 1:
            return self.inv_scalar[None] * c
        return np.einsum("...ij,j...->i...", self.inv_blocks, c)


def _residual(op, spec, c, b):
    grid = op.grid
    r = op.apply(c) - b
    if not spec.is_zero:
        r = r + from_fine(spec.eval(to_fine(SpectralField(grid, c))), grid).coeffs
    return r


def _norm(c):
    return float(np.sqrt(np.sum(c * c)))


def newton_solve(op, f_spec, b, c0=None, tol=1e-10, max_iter=50, gmres_rtol=1e-11):
    """Damped Newton for ``D c + P f(c) = b``; returns ``(coeffs, residual_history)``."""
    spec = as_spec(f_spec)
    grid = op.grid
    b = np.asarray(b, dtype=float)
    if spec.is_zero:
        c = op.solve(b)
        return c, [_norm(_residual(op, spec, c, b))]
    c = op.solve(b) if c0 is None else np.array(c0, dtype=float)
    r = _residual(op, spec, c, b)
    rn = _norm(r)
    history = [rn]
    shape = grid.field_shape
    n = grid.size
    precond = LinearOperator((n, n), matvec=lambda x: op.solve(x.reshape(shape)).ravel())
    for _ in range(max_iter):
        if rn <= tol:
            return c, history
        J = spec.jac(to_fine(SpectralField(grid, c)))

        def matvec(x, J=J):
            w = x.reshape(shape)
            wf = to_fine(SpectralField(grid, w))
            Jw = np.einsum("ij...,j...->i...", J, wf)
            return (op.apply(w) + from_fine(Jw, grid).coeffs).ravel()

        A = LinearOperator((n, n), matvec=matvec)
        delta, info = gmres(A, -r.ravel(), rtol=gmres_rtol, atol=0.1 * tol, M=precond, restart=60, maxiter=20)
        if info < 0 or not np.all(np.isfinite(delta)):
            raise SolverError("GMRES breakdown in Newton correction", history)
        delta = delta.reshape(shape)
        t = 1.0
        while True:
            c_new = c + t * delta
            r_new = _residual(op, spec, c_new, b)
            rn_new = _norm(r_new)
            if np.isfinite(rn_new) and rn_new <= (1.0 - ARMIJO * t) * rn:
                break
            t *= 0.5
            if t < MIN_STEP:
                raise SolverError(f"line search failed at residual {rn:.3e}", history)
        c, r, rn = c_new, r_new, rn_new
        history.append(rn)
    if rn <= tol:
        return c, history
    raise SolverError(f"no convergence in {max_iter} Newton steps (residual {rn:.3e})", history)


@dataclass
class EllipticProblem:
    """``a Laplacian(v) - f(v) - shift v = rhs`` with Dirichlet conditions."""

    a: np.ndarray
    f_spec: object
    shift: float
    rhs: SpectralField
    grid: object = field(init=False)

    def __post_init__(self):
        self.grid = self.rhs.grid
        spec = as_spec(self.f_spec)
        if spec.k != self.grid.k:
            raise DimensionError(f"nonlinearity has k={spec.k}, grid has k={self.grid.k}")
        self.a = check_diffusion_matrix(self.a, self.grid.k)
        if self.shift < 0:
            raise ConfigurationError("shift", f"must be >= 0, got {self.shift}")
        mu = float(np.linalg.eigvalsh(0.5 * (self.a + self.a.T)).min())
        # strict monotonicity of -a Lap + f + shift on the discrete space
        if not self.grid.lambda1 * mu + self.shift - spec.K > 0:
            raise ConfigurationError(
                "shift",
                f"operator not strictly monotone: lambda1*min(a_sym) + shift - K = "
                f"{self.grid.lambda1 * mu + self.shift - spec.K:g}",
            )

    def operator(self):
        return ModalOperator(self.grid, self.a, self.grid.eigenvalues, self.shift)


def solve(problem, tol=1e-10, max_iter=50, guess=None, return_history=False):
    """Solve the monotone elliptic problem to L2 residual ``tol``."""
    if not tol > 0:
        raise ConfigurationError("tol", "must be > 0")
    op = problem.operator()
    c0 = None if guess is None else guess.coeffs
    c, history = newton_solve(op, problem.f_spec, -problem.rhs.coeffs, c0, tol, max_iter)
    u = SpectralField(problem.grid, c)
    return (u, history) if return_history else u


def prepare_initial_data(u0, f_spec, n=None, p1=None, tol=1e-10, a=None, approx=None, max_iter=50):
    """Regularized initial datum for the n-th approximate problem.

    Solves ``a Lap v - f_n(v) - K v = a Lap u0 - f(u0) - K u0`` so that v = u0
    whenever f_n = f on the range of u0.  Returns ``(v, approx_spec)``.
    """
    base = as_spec(f_spec)
    if approx is None:
        if n is None:
            raise ConfigurationError("n", "either n or approx must be given")
        approx = approximate(base, n, p1)
    grid = u0.grid
    a = np.eye(grid.k) if a is None else check_diffusion_matrix(a, grid.k)
    K = base.K
    lap_u0 = -np.einsum("ij,j...->i...", a, u0.coeffs * grid.multiplier(1))
    fu0 = from_fine(base.eval(to_fine(u0)), grid).coeffs
    G = SpectralField(grid, lap_u0 - fu0 - K * u0.coeffs)
    problem = EllipticProblem(a=a, f_spec=approx, shift=K, rhs=G)
    v = solve(problem, tol=tol, max_iter=max_iter, guess=u0)
    return v, approx


@dataclass
class RegularityReport:
    h2: float
    fl2: float
    g_l2: float
    ratio_2reg: float
    r: float | None
    mixed: float | None
    grad_lr: float | None
    admissible: bool
    flags: list

    def to_dict(self):
        return {
            "h2": self.h2,
            "fl2": self.fl2,
            "g_l2": self.g_l2,
            "ratio_2reg": self.ratio_2reg,
            "r": self.r,
            "mixed": self.mixed,
            "grad_lr": self.grad_lr,
            "admissible": self.admissible,
            "flags": list(self.flags),
        }


def regularity_report(u, g, f_spec, q=2.2, kappa=1.0):
    """Quantities of the second-order elliptic estimates for a solution ``u``.

    ``h2`` is ``||Laplacian u||``; ``mixed`` is ``|| |D^2 u| |grad u|^(r/2) ||_L2``
    with ``r = d (q - 2) / (d - q)``.  Inadmissible (q, d, kappa) are flagged,
    not refused.
    """
    from .exponents import elliptic_r

    grid = u.grid
    d = grid.d
    spec = as_spec(f_spec)
    fu = spec.eval(to_fine(u))
    fl2 = math.sqrt(quadrature(np.sum(fu**2, axis=0), grid))
    h2 = hs_norm(u, 2)
    g_l2 = hs_norm(g, 0)
    ratio = (h2 + fl2) / g_l2 if g_l2 > 0 else math.inf
    info = elliptic_r(d, q, kappa)
    flags = [] if info["admissible"] else ["INADMISSIBLE"]
    r = info["r"]
    mixed = grad_lr = None
    if r is not None and r > 0:
        grad = gradient_fine(u)
        gnorm = np.sqrt(np.sum(grad**2, axis=(0, 1)))
        hess = hessian_fine(u)
        hnorm = np.sqrt(np.sum(hess**2, axis=(0, 1, 2)))
        mixed = math.sqrt(quadrature(hnorm**2 * gnorm**r, grid))
        if d == 3:
            exp = d * (r + 2) / (d - 2)
            grad_lr = quadrature(gnorm**exp, grid) ** (1.0 / exp)
    return RegularityReport(
        h2=h2,
        fl2=fl2,
        g_l2=g_l2,
        ratio_2reg=ratio,
        r=r,
        mixed=mixed,
        grad_lr=grad_lr,
        admissible=info["admissible"],
        flags=flags,
    )
