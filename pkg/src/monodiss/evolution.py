"""Time integration of the modal reaction-diffusion / fractional Cahn-Hilliard system.

Semi-discrete right-hand side (``A = -Laplacian``, spectral):

    beta == 0:  du/dt = -a A^alpha u - f(u) + g
    beta  > 0:  du/dt = -A^beta (a A^alpha u + f(u) - g)

Schemes: ``imex_euler`` (linear part implicit per mode, f explicit),
``implicit_monotone_euler`` (fully implicit, damped Newton per step) and
``reference_rk4`` (classical explicit RK4, step bounded by the fastest mode;
used as the test oracle).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .elliptic import ModalOperator, check_diffusion_matrix, newton_solve
from .errors import ConfigurationError, DimensionError, SolverError
from .nonlinearity import as_spec
from .spectral import SpectralField, from_fine, to_fine

__all__ = [
    "SCHEMES",
    "EvolutionConfig",
    "Trajectory",
    "rhs",
    "step_imex",
    "step_implicit_monotone",
    "evolve",
    "reference_solve",
    "log_schedule",
]

SCHEMES = ("imex_euler", "implicit_monotone_euler", "reference_rk4")
MAX_REJECTIONS = 8
REFERENCE_GUARD = 20000


@dataclass(frozen=True)
class EvolutionConfig:
    grid: object
    a: np.ndarray
    f_spec: object
    g: SpectralField | None = None
    alpha: float = 1.0
    beta: float = 0.0
    scheme: str = "imex_euler"
    dt: float = 1e-3
    newton_tol: float = 1e-10
    newton_max_iter: int = 30

    def __post_init__(self):
        a = check_diffusion_matrix(self.a, self.grid.k)
        a.flags.writeable = False
        object.__setattr__(self, "a", a)
        spec = as_spec(self.f_spec)
        if spec.k != self.grid.k:
            raise DimensionError(f"nonlinearity has k={spec.k}, grid has k={self.grid.k}")
        if self.g is None:
            object.__setattr__(self, "g", SpectralField.zeros(self.grid))
        elif self.g.grid != self.grid:
            raise DimensionError("forcing g lives on a different grid")
        if not 0 < self.alpha <= 2:
            raise ConfigurationError("alpha", f"must lie in (0, 2], got {self.alpha}")
        if not 0 <= self.beta <= 1:
            raise ConfigurationError("beta", f"must lie in [0, 1], got {self.beta}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError("scheme", f"must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.dt > 0:
            raise ConfigurationError("dt", f"must be > 0, got {self.dt}")
        if self.scheme == "implicit_monotone_euler" and self.beta == 0 and spec.K > 0:
            if not self.dt < 1.0 / (2.0 * spec.K):
                raise ConfigurationError("dt", f"implicit scheme needs dt < 1/(2K) = {0.5 / spec.K:g}")

    @property
    def spec(self):
        return as_spec(self.f_spec)

    def with_grid(self, grid):
        """Same configuration on another grid (forcing resampled)."""
        return replace(self, grid=grid, g=self.g.resample(grid))

    def to_dict(self):
        return {
            "grid": self.grid.to_dict(),
            "a": self.a.tolist(),
            "nonlinearity": self.spec.to_dict(),
            "g": self.g.coeffs.ravel().tolist(),
            "alpha": self.alpha,
            "beta": self.beta,
            "scheme": self.scheme,
            "dt": self.dt,
            "newton_tol": self.newton_tol,
            "newton_max_iter": self.newton_max_iter,
        }


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    derivs: list
    config: EvolutionConfig
    steps: int = 0
    wall_time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def final(self):
        return self.states[-1]


def _nonlinear(config, c):
    spec = config.spec
    if spec.is_zero:
        return np.zeros_like(c)
    grid = config.grid
    return from_fine(spec.eval(to_fine(SpectralField(grid, c))), grid).coeffs


def _linear_apply(config, c):
    """a A^alpha c, modal."""
    lam = config.grid.multiplier(config.alpha)
    return np.einsum("ij,j...->i...", config.a, c * lam)


def _rhs_coeffs(config, c):
    inner = _linear_apply(config, c) + _nonlinear(config, c) - config.g.coeffs
    if config.beta > 0:
        inner = inner * config.grid.multiplier(config.beta)
    return -inner


def rhs(config, u):
    """Semi-discrete time derivative at the state ``u``."""
    if u.grid != config.grid:
        raise DimensionError("state and configuration live on different grids")
    return SpectralField(config.grid, _rhs_coeffs(config, u.coeffs))


def _max_fprime(config, c):
    spec = config.spec
    if spec.is_zero:
        return 0.0
    J = spec.jac(to_fine(SpectralField(config.grid, c)))
    Jt = np.moveaxis(J, (0, 1), (-2, -1))
    return float(np.max(np.linalg.norm(Jt, ord=2, axis=(-2, -1))))


_IMEX_CACHE = {}


def _imex_operator(config, dt):
    key = (id(config), dt)
    op = _IMEX_CACHE.get(key)
    if op is None or op[0] is not config:
        grid = config.grid
        op = (config, ModalOperator(grid, config.a, dt * grid.eigenvalues ** (config.alpha + config.beta), 1.0))
        if len(_IMEX_CACHE) > 64:
            _IMEX_CACHE.clear()
        _IMEX_CACHE[key] = op
    return op[1]


def _imex_coeffs(config, c, dt):
    op = _imex_operator(config, dt)
    explicit = config.g.coeffs - _nonlinear(config, c)
    if config.beta > 0:
        explicit = explicit * config.grid.multiplier(config.beta)
    return op.solve(c + dt * explicit)


def step_imex(config, u, dt=None):
    """One IMEX-Euler step: (I + dt A^(alpha+beta) a) u' = u + dt A^beta (g - f(u))."""
    dt = config.dt if dt is None else dt
    return SpectralField(config.grid, _imex_coeffs(config, u.coeffs, dt))


def _imex_guarded(config, c, dt, level=None):
    """IMEX step of length dt, split into substeps when the explicit part is too stiff."""
    K = config.spec.K
    lam_b = float(np.max(config.grid.eigenvalues)) ** config.beta if config.beta > 0 else 1.0
    limit = 0.5 / ((K + _max_fprime(config, c)) * lam_b) if not config.spec.is_zero else math.inf
    n_sub = 1 if dt <= limit else int(math.ceil(dt / limit))
    for _ in range(MAX_REJECTIONS + 1):
        h = dt / n_sub
        x = c
        ok = True
        for _ in range(n_sub):
            x = _imex_coeffs(config, x, h)
            e = float(np.sum(x * x))
            ref = max(float(np.sum(c * c)), level or 0.0, 1.0)
            if not math.isfinite(e) or e > 4.0 * ref:
                ok = False
                break
        if ok:
            return x, n_sub
        n_sub *= 2
    raise SolverError(f"IMEX step rejected {MAX_REJECTIONS} times (energy growth)")


def _implicit_operator(config, dt):
    grid = config.grid
    lam = grid.eigenvalues
    diag = lam ** (-config.beta) / dt if config.beta > 0 else np.full(grid.shape, 1.0 / dt)
    return ModalOperator(grid, config.a, lam**config.alpha, diag), diag


def _implicit_coeffs(config, c, dt, depth=0):
    op, diag = _implicit_operator(config, dt)
    b = diag[None] * c + config.g.coeffs
    try:
        out, _ = newton_solve(op, config.spec, b, c, config.newton_tol, config.newton_max_iter)
        return out, 1
    except SolverError:
        if depth >= MAX_REJECTIONS:
            raise
    half, n1 = _implicit_coeffs(config, c, 0.5 * dt, depth + 1)
    out, n2 = _implicit_coeffs(config, half, 0.5 * dt, depth + 1)
    return out, n1 + n2


def step_implicit_monotone(config, u, dt=None):
    """Backward Euler: A^-beta (u' - u)/dt + a A^alpha u' + f(u') = g, by damped Newton.

    A failed Newton solve is retried as two half steps, at most 8 levels deep.
    """
    dt = config.dt if dt is None else dt
    c, _ = _implicit_coeffs(config, u.coeffs, dt)
    return SpectralField(config.grid, c)


def _rk4_coeffs(config, c, h):
    k1 = _rhs_coeffs(config, c)
    k2 = _rhs_coeffs(config, c + 0.5 * h * k1)
    k3 = _rhs_coeffs(config, c + 0.5 * h * k2)
    k4 = _rhs_coeffs(config, c + h * k3)
    return c + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_stable_dt(config, c):
    grid = config.grid
    lam_max = float(np.max(grid.eigenvalues))
    rho = lam_max ** (config.alpha + config.beta) * float(np.linalg.norm(config.a, 2))
    rho += 2.0 * (config.spec.K + _max_fprime(config, c)) * lam_max**config.beta
    # 2.78 is the real-axis stability limit of classical RK4
    return 2.5 / rho


def log_schedule(t_min, t_max, per_decade=20):
    n = int(round(per_decade * math.log10(t_max / t_min))) + 1
    return np.geomspace(t_min, t_max, n)


def evolve(config, u0, T, schedule=None, scheme=None, absorbing_level=None):
    """Integrate from ``u0`` to ``T``; samples at t = 0 and at every schedule time.

    Between consecutive samples the step is shrunk so that an integer number
    of steps lands exactly on the sample time.
    """
    if u0.grid != config.grid:
        raise DimensionError("initial state and configuration live on different grids")
    if not T > 0:
        raise ConfigurationError("T", f"must be > 0, got {T}")
    scheme = scheme or config.scheme
    if scheme not in SCHEMES:
        raise ConfigurationError("scheme", f"unknown scheme {scheme!r}")
    sched = np.array([T] if schedule is None else schedule, dtype=float)
    if np.any(sched <= 0) or np.any(sched > T * (1 + 1e-12)) or np.any(np.diff(sched) <= 0):
        raise ConfigurationError("schedule", "must be strictly increasing within (0, T]")
    if scheme == "reference_rk4" and config.grid.size > REFERENCE_GUARD:
        raise ConfigurationError("grid", f"reference integrator limited to k*N^d <= {REFERENCE_GUARD}")
    start = time.perf_counter()
    c = u0.coeffs.copy()
    times = [0.0]
    states = [u0]
    t = 0.0
    steps = 0
    for ts in sched:
        span = ts - t
        if scheme == "reference_rk4":
            h_max = min(config.dt, _rk4_stable_dt(config, c))
        else:
            h_max = config.dt
        n = max(1, int(math.ceil(span / h_max - 1e-9)))
        h = span / n
        for _ in range(n):
            if scheme == "imex_euler":
                c, sub = _imex_guarded(config, c, h, absorbing_level)
                steps += sub
            elif scheme == "implicit_monotone_euler":
                c, sub = _implicit_coeffs(config, c, h)
                steps += sub
            else:
                c = _rk4_coeffs(config, c, h)
                steps += 1
        t = float(ts)
        times.append(t)
        states.append(SpectralField(config.grid, c))
    derivs = [rhs(config, s) for s in states]
    return Trajectory(
        times=np.array(times),
        states=states,
        derivs=derivs,
        config=config,
        steps=steps,
        wall_time=time.perf_counter() - start,
        meta={"scheme": scheme},
    )


def reference_solve(config, u0, T, schedule=None):
    """High-accuracy oracle trajectory (classical RK4), small grids only."""
    if config.grid.size > REFERENCE_GUARD:
        raise ConfigurationError("grid", f"reference integrator limited to k*N^d <= {REFERENCE_GUARD}")
    return evolve(config, u0, T, schedule, scheme="reference_rk4")
