"""Admissible nonlinearities f: R^k -> R^k and their certified constants.

A ``NonlinearSpec`` bundles ``f`` and its Jacobian with the constants of the
structural assumptions

    f(u).u >= -C,   sym f'(u) >= -K,   |f(u)| <= C_g (1 + |u|^p),

and optionally the derivative bound ``|f'(u)| <= C_fp (1 + |f(u)| + |u|)`` and
a convexity sandwich ``C2 (Psi(u) - 1 - |u|^2) <= |f(u)|^2 <= C1 (Psi(u) + |u|^2 + 1)``.

All callables act on arrays of shape ``(k, ...)``; Jacobians return ``(k, k, ...)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import ConfigurationError, ConstructionError, DimensionError
from .spectral import SpectralField, from_fine, quadrature, to_fine

__all__ = [
    "NonlinearSpec",
    "ConvexityCert",
    "CertificationReport",
    "ApproxSpec",
    "builtin",
    "from_config",
    "verify_constants",
    "verify_monotone_pairs",
    "approximate",
    "as_spec",
    "pointwise_fine",
    "eval_on_field",
    "jac_quadratic_form",
    "BUILTINS",
]


@dataclass(frozen=True)
class ConvexityCert:
    psi: Callable
    C1: float
    C2: float


@dataclass(frozen=True)
class NonlinearSpec:
    name: str
    k: int
    eval: Callable
    jac: Callable
    C: float
    K: float
    p: float
    C_g: float
    C_fp: float | None = None
    convexity: ConvexityCert | None = None
    params: dict = field(default_factory=dict)
    is_zero: bool = False

    def __call__(self, u):
        return self.eval(u)

    def with_constants(self, **kwargs):
        return replace(self, **kwargs)

    def to_dict(self):
        return {"name": self.name, "params": dict(self.params)}


def as_spec(f_spec):
    """Accept either a ``NonlinearSpec`` or an ``ApproxSpec``."""
    if isinstance(f_spec, ApproxSpec):
        return f_spec.spec
    return f_spec


# ---------------------------------------------------------------- builtins


def _zero(k=1):
    k = int(k)
    return NonlinearSpec(
        name="zero",
        k=k,
        eval=lambda u: np.zeros_like(u, dtype=float),
        jac=lambda u: np.zeros((k, k) + np.shape(u)[1:]),
        C=0.0,
        K=0.0,
        p=1.0,
        C_g=0.0,
        C_fp=0.0,
        params={"k": k},
        is_zero=True,
    )


def _linear(matrix):
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ConfigurationError("nonlinearity.params.matrix", "must be square")
    k = A.shape[0]
    lmin = float(np.linalg.eigvalsh(0.5 * (A + A.T)).min())

    def jac(u):
        return np.broadcast_to(A.reshape((k, k) + (1,) * (np.ndim(u) - 1)), (k, k) + np.shape(u)[1:]).copy()

    return NonlinearSpec(
        name="linear",
        k=k,
        eval=lambda u: np.tensordot(A, u, axes=(1, 0)),
        jac=jac,
        C=0.0 if lmin >= 0 else math.inf,
        K=max(0.0, -lmin),
        p=1.0,
        C_g=float(np.linalg.norm(A, 2)),
        C_fp=float(np.linalg.norm(A, 2)),
        params={"matrix": A.tolist()},
    )


def _cubic_scalar(lam=1.0):
    lam = float(lam)
    return NonlinearSpec(
        name="cubic_scalar",
        k=1,
        eval=lambda u: u**3 - lam * u,
        jac=lambda u: (3.0 * u**2 - lam)[None],
        C=lam**2 / 4.0 if lam > 0 else 0.0,
        K=max(lam, 0.0),
        p=3.0,
        C_g=1.0 + abs(lam),
        C_fp=3.0 + abs(lam),
        params={"lam": lam},
    )


def _ginzburg_landau():
    def f(u):
        return (np.sum(u**2, axis=0) - 1.0) * u

    def jac(u):
        z = np.sum(u**2, axis=0)
        eye = np.eye(2).reshape((2, 2) + (1,) * (u.ndim - 1))
        return (z - 1.0) * eye + 2.0 * u[:, None] * u[None, :]

    return NonlinearSpec(
        name="ginzburg_landau",
        k=2,
        eval=f,
        jac=jac,
        C=0.25,
        K=1.0,
        p=3.0,
        C_g=2.0,
        C_fp=3.0,
        # |f|^2 = z (z-1)^2 with z = |u|^2; the lower constant is below
        # min_{z>z*} z(z-1)^2/(z^3-z-1) ~ 0.3757, z* the root of z^3 - z - 1.
        convexity=ConvexityCert(psi=lambda u: np.sum(u**2, axis=0) ** 3, C1=1.0, C2=0.35),
        params={},
    )


def _power(p, name, params):
    p = float(p)
    if p < 1:
        raise ConfigurationError("nonlinearity.params.p", f"must be >= 1, got {p}")
    return NonlinearSpec(
        name=name,
        k=1,
        eval=lambda u: np.abs(u) ** (p - 1.0) * u,
        jac=lambda u: (p * np.abs(u) ** (p - 1.0))[None],
        C=0.0,
        K=0.0,
        p=p,
        C_g=1.0,
        C_fp=p,
        convexity=ConvexityCert(psi=lambda u: np.abs(u[0]) ** (2.0 * p), C1=1.0, C2=1.0),
        params=params,
    )


def _polynomial_odd(p=5):
    if int(p) != p or int(p) % 2 == 0:
        raise ConfigurationError("nonlinearity.params.p", f"must be an odd integer, got {p!r}")
    return _power(int(p), "polynomial_odd", {"p": int(p)})


def _supercritical_monotone(p=7.0, d=5):
    return _power(p, "supercritical_monotone", {"p": float(p), "d": int(d)})


BUILTINS = {
    "zero": _zero,
    "linear": _linear,
    "cubic_scalar": _cubic_scalar,
    "chafee_infante": _cubic_scalar,
    "ginzburg_landau": _ginzburg_landau,
    "polynomial_odd": _polynomial_odd,
    "supercritical_monotone": _supercritical_monotone,
}


def builtin(name, params=None):
    """Construct a built-in nonlinearity with analytically derived constants."""
    if name not in BUILTINS:
        raise ConfigurationError("nonlinearity.name", f"unknown nonlinearity {name!r}; known: {sorted(BUILTINS)}")
    try:
        spec = BUILTINS[name](**(params or {}))
    except TypeError as exc:
        raise ConfigurationError("nonlinearity.params", str(exc)) from exc
    if name == "chafee_infante":
        spec = replace(spec, name="chafee_infante")
    return spec


def from_config(data):
    """Build from ``{"name": ..., "params": {...}, "p1": optional, "n": optional}``."""
    if not isinstance(data, dict) or "name" not in data:
        raise ConfigurationError("nonlinearity", "expected an object with a 'name' entry")
    spec = builtin(data["name"], data.get("params"))
    if data.get("n") is not None:
        return approximate(spec, int(data["n"]), data.get("p1"))
    return spec


# ---------------------------------------------------------------- certification


@dataclass
class CertificationReport:
    margins: dict
    witnesses: dict
    tolerances: dict
    growth_fit: float
    passed: bool
    M: float
    n_samples: int
    seed: int

    def failed_checks(self):
        return [k for k, m in self.margins.items() if m < -self.tolerances[k]]

    def to_dict(self):
        return {
            "margins": self.margins,
            "witnesses": {k: np.asarray(v).tolist() for k, v in self.witnesses.items()},
            "tolerances": self.tolerances,
            "growth_fit": self.growth_fit,
            "passed": self.passed,
            "M": self.M,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }


def sample_ball(k, M, n_samples, seed):
    """Low-discrepancy points in the ball |u| <= M plus axes, diagonals and the origin."""
    m = max(1, int(math.ceil(math.log2(max(n_samples, 2)))))
    sob = qmc.Sobol(d=k, scramble=True, seed=seed).random_base2(m)
    pts = 2.0 * sob - 1.0
    if k > 1:
        pts = pts[np.sum(pts**2, axis=1) <= 1.0]
    extra = [np.zeros((1, k))]
    line = np.linspace(-1.0, 1.0, 257)
    radial = np.concatenate([-np.geomspace(1e-4, 1.0, 64), np.geomspace(1e-4, 1.0, 64)])
    for axis in range(k):
        e = np.zeros((line.size, k))
        e[:, axis] = line
        extra.append(e)
        r = np.zeros((radial.size, k))
        r[:, axis] = radial
        extra.append(r)
    if k > 1:
        diag = np.ones(k) / math.sqrt(k)
        extra.append(np.outer(radial, diag))
    pts = np.concatenate([pts] + extra, axis=0)
    return M * pts.T


def verify_constants(spec, M, n_samples=2048, seed=0, C=None, K=None, check_growth=True):
    """Sampled check of every certified inequality of ``spec`` on |u| <= M.

    Margins are minima over samples of (right side - left side); a check
    passes when its margin is >= -1e-9 (1 + scale).  ``C`` and ``K`` override
    the constants carried by ``spec``.
    """
    spec = as_spec(spec)
    C = spec.C if C is None else C
    K = spec.K if K is None else K
    u = sample_ball(spec.k, M, n_samples, seed)
    fu = spec.eval(u)
    J = spec.jac(u)
    norm_u = np.sqrt(np.sum(u**2, axis=0))
    norm_f = np.sqrt(np.sum(fu**2, axis=0))

    checks = {}
    fdotu = np.sum(fu * u, axis=0)
    checks["dissipativity"] = (fdotu + C, np.abs(fdotu))
    Jt = np.moveaxis(J, (0, 1), (-2, -1))
    sym = 0.5 * (Jt + np.swapaxes(Jt, -1, -2))
    emin = np.linalg.eigvalsh(sym)[..., 0]
    checks["monotonicity"] = (emin + K, np.abs(emin))
    with np.errstate(over="ignore", invalid="ignore"):
        growth_ratio = norm_f / (1.0 + norm_u**spec.p)
    growth_fit = float(np.max(growth_ratio))
    if check_growth:
        bound = spec.C_g * (1.0 + norm_u**spec.p)
        checks["growth"] = (bound - norm_f, np.maximum(bound, norm_f))
    if spec.C_fp is not None:
        jnorm = np.linalg.norm(Jt, ord=2, axis=(-2, -1))
        bound = spec.C_fp * (1.0 + norm_f + norm_u)
        checks["fprime"] = (bound - jnorm, np.maximum(bound, jnorm))
    if spec.convexity is not None:
        cv = spec.convexity
        psi = cv.psi(u)
        f2 = norm_f**2
        lower = cv.C2 * (psi - 1.0 - norm_u**2)
        upper = cv.C1 * (psi + norm_u**2 + 1.0)
        checks["convexity_lower"] = (f2 - lower, np.maximum(np.abs(lower), f2))
        checks["convexity_upper"] = (upper - f2, np.maximum(upper, f2))

    margins, witnesses, tols = {}, {}, {}
    for name, (margin, scale) in checks.items():
        i = int(np.argmin(margin))
        margins[name] = float(margin[i])
        witnesses[name] = u[:, i].copy()
        tols[name] = 1e-9 * (1.0 + float(np.max(scale)))
    passed = all(margins[n] >= -tols[n] for n in margins)
    return CertificationReport(
        margins=margins,
        witnesses=witnesses,
        tolerances=tols,
        growth_fit=growth_fit,
        passed=passed,
        M=float(M),
        n_samples=int(u.shape[1]),
        seed=int(seed),
    )


def verify_monotone_pairs(spec, M, n_pairs=2000, seed=0, K=None):
    """Min over sampled pairs of (f(u)-f(v)+K(u-v)).(u-v) + tol; >= 0 means consistent."""
    spec = as_spec(spec)
    K = spec.K if K is None else K
    rng = np.random.default_rng(seed)
    u = rng.uniform(-M, M, size=(spec.k, n_pairs))
    v = rng.uniform(-M, M, size=(spec.k, n_pairs))
    w = u - v
    val = np.sum((spec.eval(u) - spec.eval(v) + K * w) * w, axis=0)
    scale = np.sum(np.abs(spec.eval(u) - spec.eval(v)) * np.abs(w), axis=0)
    return float(np.min(val + 1e-9 * (1.0 + scale)))


# ---------------------------------------------------------------- approximations

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)


def _ramp(z, start, width):
    """1 below ``start``, 0 above ``start + width``, cosine in between; and its derivative."""
    s = np.clip((z - start) / width, 0.0, 1.0)
    val = 0.5 * (1.0 + np.cos(np.pi * s))
    inside = (z > start) & (z < start + width)
    der = np.where(inside, -0.5 * np.pi / width * np.sin(np.pi * s), 0.0)
    return val, der


class _CappedPotential:
    """Psi(z) = z^((p1+1)/2) with Psi'' cut off between 2R and 3R."""

    def __init__(self, p1, R):
        self.p1 = p1
        self.R = R
        self.a = 0.5 * (p1 + 1.0)
        self.top = float(self._d1_raw(2.0 * R) + self._ramp_integral(np.array([3.0 * R]))[0])

    def _d1_raw(self, z):
        return self.a * z ** (self.a - 1.0)

    def _d2_raw(self, z):
        return self.a * (self.a - 1.0) * z ** (self.a - 2.0)

    def _ramp_integral(self, upper):
        # int_{2R}^{upper} theta~(tau) Psi''(tau) dtau, Gauss-Legendre
        half = 0.5 * (upper - 2.0 * self.R)
        tau = 2.0 * self.R + half[:, None] * (_GL_NODES[None, :] + 1.0)
        theta, _ = _ramp(tau, 2.0 * self.R, self.R)
        return half * np.sum(_GL_WEIGHTS[None, :] * theta * self._d2_raw(tau), axis=1)

    def d1(self, z):
        z = np.asarray(z, dtype=float)
        R = self.R
        out = self._d1_raw(np.minimum(z, 2.0 * R))
        mid = (z > 2.0 * R) & (z < 3.0 * R)
        if np.any(mid):
            out[mid] = self._d1_raw(2.0 * R) + self._ramp_integral(z[mid])
        return np.where(z >= 3.0 * R, self.top, out)

    def d2(self, z):
        z = np.asarray(z, dtype=float)
        theta, _ = _ramp(z, 2.0 * self.R, self.R)
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = np.where(z > 0, self._d2_raw(np.maximum(z, 1e-300)), 0.0)
        return theta * raw


@dataclass(frozen=True)
class ApproxSpec:
    """The n-th regularized nonlinearity built from ``base``.

    ``spec`` evaluates f_n(u) = theta_R(|u|^2) f(u) + eps grad_u Psi_R(|u|^2)
    with eps = 1/n; for |u|^2 >= 3R it equals eps * sigma * u.
    """

    base: NonlinearSpec
    n: int
    p1: float
    R: float
    sigma: float
    spec: NonlinearSpec
    searched: tuple = ()

    @property
    def eps(self):
        return 1.0 / self.n

    @property
    def regimes(self):
        return (self.R, 2.0 * self.R, 3.0 * self.R)

    @property
    def k(self):
        return self.base.k

    def __call__(self, u):
        return self.spec.eval(u)


def _build_fn(base, n, p1, R):
    eps = 1.0 / n
    pot = _CappedPotential(p1, R)
    k = base.k

    def f(u):
        z = np.sum(u**2, axis=0)
        theta, _ = _ramp(z, R, R)
        return theta * base.eval(u) + 2.0 * eps * pot.d1(z) * u

    def jac(u):
        z = np.sum(u**2, axis=0)
        theta, dtheta = _ramp(z, R, R)
        fu = base.eval(u)
        eye = np.eye(k).reshape((k, k) + (1,) * (u.ndim - 1))
        outer_fu = fu[:, None] * u[None, :]
        outer_uu = u[:, None] * u[None, :]
        return (
            theta * base.jac(u)
            + 2.0 * dtheta * outer_fu
            + 2.0 * eps * pot.d1(z) * eye
            + 4.0 * eps * pot.d2(z) * outer_uu
        )

    spec = NonlinearSpec(
        name=f"{base.name}_approx",
        k=k,
        eval=f,
        jac=jac,
        C=base.C,
        K=base.K,
        p=p1,
        C_g=math.inf,
        params={"base": base.to_dict(), "n": n, "p1": p1, "R": R},
    )
    return spec, 2.0 * pot.top


def approximate(spec, n, p1=None, n_samples=4096, seed=0, R_max=1e18):
    """Regularized nonlinearity f_n, linear at infinity, with the base (C, K).

    The cut-off radius is the first value of the doubling search starting at
    max(1, n) for which the sampled certification on |u| <= 4 sqrt(R) passes
    with the base constants.  The growth constant of the result is the fitted
    sup |f_n(u)| / (1 + |u|^p1) over the same samples.
    """
    if isinstance(spec, ApproxSpec):
        raise ConfigurationError("nonlinearity", "cannot approximate an approximation")
    if p1 is None:
        p1 = spec.p + 0.5
    p1 = float(p1)
    if not p1 > spec.p:
        raise ConfigurationError("p1", f"must exceed p = {spec.p}, got {p1}")
    if n < 1:
        raise ConfigurationError("n", f"must be >= 1, got {n}")
    R = max(1.0, float(n))
    tried = []
    while R <= R_max:
        fn, sigma = _build_fn(spec, n, p1, R)
        rep = verify_constants(fn, 4.0 * math.sqrt(R), n_samples, seed, check_growth=False)
        tried.append(R)
        if rep.passed:
            C_g = rep.growth_fit * (1.0 + 1e-9)
            fn = replace(fn, C_g=C_g)
            return ApproxSpec(base=spec, n=int(n), p1=p1, R=R, sigma=sigma, spec=fn, searched=tuple(tried))
        R *= 2.0
    raise ConstructionError(f"no admissible cut-off radius up to {R_max:g} for n={n}")


# ---------------------------------------------------------------- fields


def pointwise_fine(f_spec, u):
    """f(u) on the padded grid, shape ``(k, M, .., M)``."""
    spec = as_spec(f_spec)
    if spec.k != u.grid.k:
        raise DimensionError(f"nonlinearity has k={spec.k}, field has k={u.grid.k}")
    return spec.eval(to_fine(u))


def eval_on_field(f_spec, u):
    """Galerkin projection of f(u) (dealiased)."""
    spec = as_spec(f_spec)
    if spec.is_zero:
        return SpectralField.zeros(u.grid)
    return from_fine(pointwise_fine(spec, u), u.grid)


def jac_quadratic_form(f_spec, u, v):
    """``(f'(u) v, v)`` by quadrature on the padded grid."""
    spec = as_spec(f_spec)
    if u.grid != v.grid:
        raise DimensionError("u and v live on different grids")
    uf = to_fine(u)
    vf = to_fine(v)
    J = spec.jac(uf)
    Jv = np.einsum("ij...,j...->i...", J, vf)
    return quadrature(np.sum(Jv * vf, axis=0), u.grid)
