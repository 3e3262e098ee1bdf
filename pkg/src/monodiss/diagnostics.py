"""Energy functionals along trajectories, fitted constants and PASS/FAIL verdicts."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, RefusalError
from .evolution import evolve
from .nonlinearity import as_spec
from .spectral import closed_values, gradient_fine, hs_norm, quadrature, to_fine, trapezoid

__all__ = [
    "COLUMNS",
    "EnergyReport",
    "Verdict",
    "energy_report",
    "ibp_residual",
    "check_dissipative",
    "check_lipschitz",
    "lipschitz_ratio",
    "squeezing_constant",
    "check_squeezing",
    "SqueezingResult",
    "fit_smoothing_rate",
    "SmoothingFit",
    "count_magnitudes",
]

COLUMNS = (
    "l2_sq",
    "h1_sq",
    "h2_sq",
    "fu_dot_u_abs",
    "fprime_grad_form",
    "fprime_grad_form_abs",
    "dt_l2_sq",
    "dt_lr",
    "d_norm_sq",
    "ibp_residual",
)


@dataclass
class EnergyReport:
    times: np.ndarray
    columns: dict
    r: float
    dt: float
    fitted: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.columns[name]

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(("time",) + COLUMNS) + "\n")
        for i, t in enumerate(self.times):
            row = [t] + [self.columns[c][i] for c in COLUMNS]
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()


@dataclass
class Verdict:
    id: str
    constants: dict
    margins: np.ndarray
    passed: bool
    witness: dict
    tolerance: float

    @property
    def min_margin(self):
        return float(np.min(self.margins)) if np.size(self.margins) else math.inf

    def to_dict(self):
        return {
            "id": self.id,
            "constants": {k: _plain(v) for k, v in self.constants.items()},
            "min_margin": self.min_margin,
            "passed": bool(self.passed),
            "verdict": "PASS" if self.passed else "FAIL",
            "witness": {k: _plain(v) for k, v in self.witness.items()},
            "tolerance": self.tolerance,
        }


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def _quad_forms(u, spec, fine=True):
    """(f(u), Lap u), (f'(u) grad u, grad u) signed and absolute, ||f(u)||^2, int |f(u).u|.

    Evaluated by the trapezoid rule on the closed grid: |grad u|^2 terms do
    not vanish on the boundary, so the interior-point rule would miss them.
    """
    grid = u.grid
    uf = closed_values(u, fine)
    lap = closed_values(u.__class__(grid, -u.coeffs * grid.multiplier(1)), fine)
    grad = gradient_fine(u, fine=fine, closed=True)
    fu = spec.eval(uf)
    J = spec.jac(uf)
    Jg = np.einsum("ab...,ib...->ia...", J, grad)
    density = np.sum(Jg * grad, axis=(0, 1))
    return {
        "f_lap": trapezoid(np.sum(fu * lap, axis=0), grid, fine),
        "form": trapezoid(density, grid, fine),
        "form_abs": trapezoid(np.abs(density), grid, fine),
        "f_l2_sq": trapezoid(np.sum(fu**2, axis=0), grid, fine),
        "fu_dot_u_abs": trapezoid(np.abs(np.sum(fu * uf, axis=0)), grid, fine),
    }


def ibp_residual(u, f_spec, dealias=True):
    """``|(f(u), Lap u) + (f'(u) grad u, grad u)|`` by quadrature.

    ``dealias=False`` uses the plain N-point collocation rule, which carries
    aliasing error for fields with modes near N.
    """
    q = _quad_forms(u, as_spec(f_spec), fine=dealias)
    return abs(q["f_lap"] + q["form"])


def energy_report(trajectory, f_spec=None, r=0.2):
    """Every estimate functional at every sample time of ``trajectory``."""
    if not r > 0:
        raise ValueError(f"r must be > 0, got {r}")
    config = trajectory.config
    spec = as_spec(f_spec if f_spec is not None else config.f_spec)
    cols = {c: np.zeros(len(trajectory)) for c in COLUMNS}
    for i, (u, th) in enumerate(zip(trajectory.states, trajectory.derivs)):
        if u.grid != config.grid:
            raise DimensionError("trajectory state on unexpected grid")
        lam = u.grid.multiplier(1)
        c2 = u.coeffs**2
        cols["l2_sq"][i] = np.sum(c2)
        cols["h1_sq"][i] = np.sum(lam * c2)
        cols["h2_sq"][i] = np.sum(lam**2 * c2)
        cols["dt_l2_sq"][i] = np.sum(th.coeffs**2)
        thf = np.sqrt(np.sum(to_fine(th) ** 2, axis=0))
        cols["dt_lr"][i] = quadrature(thf ** (r + 2), u.grid) ** (1.0 / (r + 2))
        if spec.is_zero:
            cols["d_norm_sq"][i] = cols["h2_sq"][i]
            continue
        q = _quad_forms(u, spec)
        cols["fu_dot_u_abs"][i] = q["fu_dot_u_abs"]
        cols["fprime_grad_form"][i] = q["form"]
        cols["fprime_grad_form_abs"][i] = q["form_abs"]
        cols["d_norm_sq"][i] = cols["h2_sq"][i] + q["f_l2_sq"]
        cols["ibp_residual"][i] = abs(q["f_lap"] + q["form"])
    return EnergyReport(times=np.asarray(trajectory.times, dtype=float), columns=cols, r=r, dt=config.dt)


def count_magnitudes(values, separation=0.1):
    """Number of clusters of log10(values) separated by more than ``separation``."""
    logs = np.sort(np.log10(np.asarray(values, dtype=float)))
    if logs.size == 0:
        return 0
    return int(1 + np.sum(np.diff(logs) > separation))


_WHICH = {"l2": "l2_sq", "h1": "h1_sq"}


def check_dissipative(reports, which="l2", alpha=None, c_max=1e3, tail=0.25):
    """Fit ``y(t) <= C e^(-alpha t) y(0) + B`` over an ensemble and check domination.

    ``B`` is the largest value over the final ``tail`` fraction of the horizon
    (the absorbing level).  ``alpha`` and ``log C`` come from least squares on
    ``log(y/y(0))`` over samples with ``y > 10 B`` (``2 B`` if too few); C is
    then raised to the least value dominating every sample (capped at
    ``c_max``).  Passing ``alpha`` forces the rate.
    """
    if which not in _WHICH:
        raise ValueError(f"which must be one of {sorted(_WHICH)}")
    col = _WHICH[which]
    y0 = np.array([rep[col][0] for rep in reports])
    if count_magnitudes(y0) < 3:
        raise RefusalError("ensemble must span at least 3 initial-data magnitudes")
    B = 0.0
    for rep in reports:
        t = rep.times
        B = max(B, float(np.max(rep[col][t >= (1.0 - tail) * t[-1]])))
    # rate from samples well above the absorbing level, where B is negligible
    for factor in (10.0, 2.0):
        ts, ls = [], []
        for rep in reports:
            y = rep[col]
            keep = y > factor * B
            ts.append(rep.times[keep])
            ls.append(np.log(y[keep] / y[0]))
        ts = np.concatenate(ts)
        ls = np.concatenate(ls)
        if ts.size >= 2 and np.ptp(ts) > 0:
            break
    if alpha is None:
        if ts.size < 2 or np.ptp(ts) == 0:
            raise RefusalError("not enough samples above the absorbing level to fit a rate")
        slope, icpt = np.polyfit(ts, ls, 1)
        alpha_fit = -float(slope)
        c_fit = float(np.exp(icpt))
    else:
        alpha_fit = float(alpha)
        c_fit = float(np.exp(np.mean(ls + alpha_fit * ts))) if ts.size else 1.0
    needed = c_fit
    for rep in reports:
        y = rep[col]
        with np.errstate(over="ignore"):
            need = (y - B) / (y[0] * np.exp(-alpha_fit * rep.times))
        needed = max(needed, float(np.max(need)))
    C = min(needed, c_max)
    scale = max(float(np.max(rep[col])) for rep in reports)
    dt = max(rep.dt for rep in reports)
    tol = 10.0 * dt * scale
    margins, witness, worst = [], {}, math.inf
    for j, rep in enumerate(reports):
        y = rep[col]
        m = C * np.exp(-alpha_fit * rep.times) * y[0] + B - y
        margins.append(m)
        i = int(np.argmin(m))
        if m[i] < worst:
            worst = float(m[i])
            witness = {"trajectory": j, "time": float(rep.times[i]), "margin": worst}
    margins = np.concatenate(margins)
    passed = alpha_fit > 0 and worst >= -tol
    for rep in reports:
        rep.fitted.update({f"C_{which}": C, f"alpha_{which}": alpha_fit, f"B_{which}": B})
    return Verdict(
        id=f"dissipative_{which}",
        constants={"C": C, "C_fit": c_fit, "alpha": alpha_fit, "B": B, "c_max": c_max},
        margins=margins,
        passed=bool(passed),
        witness=witness,
        tolerance=tol,
    )


def lipschitz_ratio(traj1, traj2):
    """``||u1(t) - u2(t)|| / ||u1(0) - u2(0)||`` at the common sample times (0 for identical data)."""
    if len(traj1) != len(traj2) or not np.allclose(traj1.times, traj2.times):
        raise DimensionError("trajectories must share their sample times")
    d0 = hs_norm(traj1.states[0] - traj2.states[0], 0)
    diffs = np.array([hs_norm(a - b, 0) for a, b in zip(traj1.states, traj2.states)])
    if d0 == 0:
        return np.zeros_like(diffs)
    return diffs / d0


def check_lipschitz(pairs, K, dt):
    """``ratio(t) <= (1 + 10 dt) e^(K t)`` for every pair of trajectories and sample time."""
    margins, worst, witness = [], math.inf, {}
    k1_fit = -math.inf
    for j, (t1, t2) in enumerate(pairs):
        ratio = lipschitz_ratio(t1, t2)
        bound = (1.0 + 10.0 * dt) * np.exp(K * t1.times)
        m = bound - ratio
        margins.append(m)
        i = int(np.argmin(m))
        if m[i] < worst:
            worst = float(m[i])
            witness = {"pair": j, "time": float(t1.times[i]), "ratio": float(ratio[i])}
        pos = (t1.times > 0) & (ratio > 0)
        if np.any(pos):
            k1_fit = max(k1_fit, float(np.max(np.log(ratio[pos]) / t1.times[pos])))
    margins = np.concatenate(margins) if margins else np.zeros(0)
    return Verdict(
        id="lipschitz",
        constants={"K": K, "K1_fit": k1_fit if math.isfinite(k1_fit) else None, "dt": dt},
        margins=margins,
        passed=bool(worst >= 0),
        witness=witness,
        tolerance=0.0,
    )


def squeezing_constant(config, pairs, T, eps_sob, ball_radius=None):
    """Max over pairs of ``||S(T)x1 - S(T)x2||_{H^eps} / ||x1 - x2||_{L2}``.

    Returns ``(K_hat, outside)`` where ``outside`` lists the pairs with a
    member outside the L2 ball of radius ``ball_radius``.
    """
    k_hat = 0.0
    outside = []
    for j, (x1, x2) in enumerate(pairs):
        x1 = x1.resample(config.grid)
        x2 = x2.resample(config.grid)
        if ball_radius is not None and max(hs_norm(x1, 0), hs_norm(x2, 0)) > ball_radius:
            outside.append(j)
        d0 = hs_norm(x1 - x2, 0)
        if d0 == 0:
            continue
        y1 = evolve(config, x1, T).final
        y2 = evolve(config, x2, T).final
        k_hat = max(k_hat, hs_norm(y1 - y2, eps_sob) / d0)
    return k_hat, outside


@dataclass
class SqueezingResult:
    K_hat: float
    K_hat_refined: float | None
    relative_change: float | None
    stable: bool | None
    outside_ball: list

    def to_dict(self):
        return dict(self.__dict__)


def check_squeezing(config, pairs, T, eps_sob, refined_config=None, ball_radius=None):
    """Squeezing constant on ``config`` and, if given, on a refined grid (<20% change = stable)."""
    k_hat, outside = squeezing_constant(config, pairs, T, eps_sob, ball_radius)
    if refined_config is None:
        return SqueezingResult(k_hat, None, None, None, outside)
    k_ref, _ = squeezing_constant(refined_config, pairs, T, eps_sob, ball_radius)
    change = abs(k_ref - k_hat) / max(k_hat, k_ref) if max(k_hat, k_ref) > 0 else 0.0
    return SqueezingResult(k_hat, k_ref, change, bool(math.isfinite(k_hat) and change < 0.2), outside)


@dataclass
class SmoothingFit:
    slope_dt: float
    slope_h1: float
    slope_lr: float
    window: tuple
    n_points: int

    def to_dict(self):
        return dict(self.__dict__)


def fit_smoothing_rate(report, window=(1e-3, 1e-1)):
    """Log-log slopes over ``window`` of ||u_t||^2, ||grad u||^2 and t ||u_t||_{L^(r+2)}^(r+2)."""
    t = report.times
    sel = (t >= window[0] * (1 - 1e-12)) & (t <= window[1] * (1 + 1e-12)) & (t > 0)
    if sel.sum() < 3 or math.log10(t[sel].max() / t[sel].min()) < 2 - 1e-9:
        raise RefusalError("smoothing fit needs samples spanning at least two decades")
    lt = np.log(t[sel])

    def slope(y):
        return float(np.polyfit(lt, np.log(y[sel]), 1)[0])

    r = report.r
    return SmoothingFit(
        slope_dt=slope(report["dt_l2_sq"]),
        slope_h1=slope(report["h1_sq"]),
        slope_lr=slope(t * report["dt_lr"] ** (r + 2)),
        window=tuple(window),
        n_points=int(sel.sum()),
    )
