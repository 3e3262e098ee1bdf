"""Named verification suites; each returns a JSON-ready result with a PASS/FAIL flag.

These are the ``verify --preset NAME`` suites of the command line and the
acceptance gate of the test suite.  Every suite is deterministic given its seed.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from . import attractor as att
from .diagnostics import (
    check_dissipative,
    check_lipschitz,
    check_squeezing,
    energy_report,
    fit_smoothing_rate,
    ibp_residual,
    lipschitz_ratio,
)
from .elliptic import EllipticProblem, prepare_initial_data, regularity_report, solve
from .evolution import EvolutionConfig, evolve, log_schedule, reference_solve, rhs
from .exponents import (
    bootstrap,
    critical_exponents,
    epsilon_window,
    smoothing_N,
    smoothing_exponents,
)
from .nonlinearity import approximate, builtin, eval_on_field, verify_constants
from .rng import random_field, rough_field, stream
from .spectral import SpectralField, hs_norm, make_grid

__all__ = ["PRESETS", "run_preset"]


def _check(name, passed, **values):
    return {"name": name, "passed": bool(passed), **values}


def _result(preset, checks, **extra):
    return {"preset": preset, "passed": all(c["passed"] for c in checks), "checks": checks, **extra}


def _unit_mode(grid, m=1):
    # sin(pi m x) in d = 1 is (1/sqrt 2) * phi_m for L = 1
    return SpectralField.mode(grid, m, amplitude=math.sqrt(grid.L / 2.0) ** grid.d)


def _slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# 1 ------------------------------------------------------------------------


def linear_oracle(seed=0):
    grid = make_grid(1, 1.0, 32)
    u0 = _unit_mode(grid)
    exact = u0 * math.exp(-math.pi**2 * 0.1)
    checks = []
    for scheme in ("imex_euler", "implicit_monotone_euler"):
        cfg = EvolutionConfig(grid, np.eye(1), builtin("zero"), scheme=scheme, dt=1e-4)
        err = hs_norm(evolve(cfg, u0, 0.1).final - exact, 0)
        checks.append(_check(f"{scheme} error <= 1e-6", err <= 1e-6, error=err, tolerance=1e-6))
    cfg = EvolutionConfig(grid, np.eye(1), builtin("zero"), scheme="reference_rk4", dt=1e-4)
    err = hs_norm(reference_solve(cfg, u0, 0.1).final - exact, 0)
    checks.append(_check("reference_rk4 error <= 1e-10", err <= 1e-10, error=err, tolerance=1e-10))
    return _result("linear_oracle", checks)


# 2 ------------------------------------------------------------------------


def convergence(seed=0):
    grid = make_grid(1, 1.0, 16)
    f = builtin("cubic_scalar", {"lam": 1.0})
    u0 = SpectralField.mode(grid, 1, amplitude=2.0) + random_field(grid, stream(seed), amplitude=0.3)
    T = 0.2
    ref = reference_solve(EvolutionConfig(grid, np.eye(1), f, scheme="reference_rk4", dt=1e-3), u0, T).final
    dts = np.array([4e-3, 2e-3, 1e-3, 5e-4])
    checks = []
    for scheme in ("imex_euler", "implicit_monotone_euler"):
        errs = []
        for dt in dts:
            cfg = EvolutionConfig(grid, np.eye(1), f, scheme=scheme, dt=float(dt))
            errs.append(hs_norm(evolve(cfg, u0, T).final - ref, 0))
        s = _slope(dts, errs)
        checks.append(_check(f"{scheme} order in [0.8, 1.2]", 0.8 <= s <= 1.2, slope=s, errors=errs))
    return _result("convergence", checks)


# 3 ------------------------------------------------------------------------


def _ensemble(grid, seed, magnitudes, per_magnitude):
    out = []
    for i, mag in enumerate(magnitudes):
        for j in range(per_magnitude):
            out.append(random_field(grid, stream(seed, i * per_magnitude + j), amplitude=mag))
    return out


def dissipativity(seed=0):
    grid = make_grid(1, 1.0, 64)
    f = builtin("cubic_scalar", {"lam": 1.0})
    cfg = EvolutionConfig(grid, np.eye(1), f, scheme="implicit_monotone_euler", dt=2e-3)
    u0s = _ensemble(grid, seed, (1.0, 4.0, 16.0), 3)
    T = 1.0
    sched = np.linspace(0.01, T, 100)
    reports = [energy_report(evolve(cfg, u0, T, sched), f) for u0 in u0s]
    checks = []
    for which in ("l2", "h1"):
        v = check_dissipative(reports, which)
        checks.append(_check(f"{which} envelope dominates with alpha > 0", v.passed, verdict=v.to_dict()))
    return _result("dissipativity", checks)


# 4 ------------------------------------------------------------------------


def lipschitz(seed=0):
    grid = make_grid(1, 1.0, 32)
    f = builtin("cubic_scalar", {"lam": 1.0})
    T, dt = 1.0, 1e-3
    cfg = EvolutionConfig(grid, np.eye(1), f, scheme="imex_euler", dt=dt)
    sched = np.linspace(0.05, T, 20)
    pairs = []
    for i in range(20):
        u1 = random_field(grid, stream(seed, 2 * i), amplitude=2.0)
        u2 = random_field(grid, stream(seed, 2 * i + 1), amplitude=2.0)
        pairs.append((evolve(cfg, u1, T, sched), evolve(cfg, u2, T, sched)))
    v = check_lipschitz(pairs, K=f.K, dt=dt)
    checks = [_check("ratio <= (1+10dt) e^(KT) for 20 pairs", v.passed, verdict=v.to_dict())]

    cfg0 = EvolutionConfig(grid, np.eye(1), builtin("zero"), scheme="imex_euler", dt=1e-4)
    base = random_field(grid, stream(seed, 99), amplitude=1.0)
    other = base + _unit_mode(grid) * 0.5
    ratio = lipschitz_ratio(evolve(cfg0, base, T), evolve(cfg0, other, T))[-1]
    exact = math.exp(-math.pi**2 * T)
    checks.append(_check("f = 0 contraction e^(-pi^2 T) within 1e-6", abs(ratio - exact) <= 1e-6, ratio=ratio, exact=exact))
    return _result("lipschitz", checks)


# 5 ------------------------------------------------------------------------


def approximation(seed=0):
    f = builtin("cubic_scalar", {"lam": 1.0})
    ns = (1, 4, 16, 64)
    approx = [approximate(f, n, 3.5, seed=seed) for n in ns]
    c_unif = [a.spec.C_g for a in approx]
    common = max(c_unif)
    checks = [
        _check(
            "growth constant n-independent (max within 2x of n=1)",
            common <= 2.0 * c_unif[0],
            C_unif=c_unif,
        )
    ]
    for a in approx:
        rep = verify_constants(a.spec.with_constants(C_g=common), 4.0 * math.sqrt(a.R), 4096, seed, C=0.25, K=1.0)
        checks.append(_check(f"n={a.n} certified with C=1/4, K=1", rep.passed, R=a.R, margins=rep.margins))
    grid = make_grid(1, 1.0, 32)
    u0 = _unit_mode(grid) * 2.0
    gaps = []
    for a in approx:
        v, _ = prepare_initial_data(u0, f, approx=a, tol=1e-11)
        gaps.append(hs_norm(v - u0, 1))
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    checks.append(_check("||u0^n - u0||_H1 decreasing in n", decreasing, gaps=gaps))
    checks.append(_check("||u0^n - u0||_H1 < 1e-3 at n = 64", gaps[-1] < 1e-3, gap=gaps[-1], tolerance=1e-3))
    return _result("approximation", checks)


# 6 ------------------------------------------------------------------------


def smoothing(seed=0):
    f = builtin("cubic_scalar", {"lam": 1.0})
    p1 = f.p + 0.5
    checks = []
    for d, N in ((1, 64), (2, 24)):
        grid = make_grid(d, 1.0, N)
        s, _, _, _ = smoothing_exponents(d, Fraction(repr(p1)))
        n_theory = float(smoothing_N(s))
        cfg = EvolutionConfig(grid, np.eye(1), f, scheme="imex_euler", dt=1e-5)
        sched = log_schedule(1e-4, 1e-1, 20)
        rep = energy_report(evolve(cfg, rough_field(grid, 1.1), 1e-1, sched), f)
        fit = fit_smoothing_rate(rep, (1e-3, 1e-1))
        checks.append(
            _check(
                f"d={d}: slope of log||u_t||^2 >= -(N_theory + 0.5)",
                fit.slope_dt >= -(n_theory + 0.5),
                slope=fit.slope_dt,
                N_theory=n_theory,
            )
        )
        checks.append(_check(f"d={d}: slope of log||grad u||^2 >= -1.1", fit.slope_h1 >= -1.1, slope=fit.slope_h1))
    return _result("smoothing", checks)


# 7 ------------------------------------------------------------------------


def exponents(seed=0):
    checks = [
        _check("p_crit_D(d=5) = 5", critical_exponents(5)["p_crit_D"] == 5),
        _check("p_crit_h1(d=3) = 5", critical_exponents(3)["p_crit_h1"] == 5),
        _check("p_crit_frac(d=3, alpha=1/2) = 3", critical_exponents(3, Fraction(1, 2))["p_crit_frac"] == 3),
    ]
    s, q1, res, _ = smoothing_exponents(3, 3)
    checks.append(_check("smoothing_exponents(3, 3) = (1/2, 4/3), residual 0", (s, q1, res) == (Fraction(1, 2), Fraction(4, 3), 0)))
    rng = stream(seed, 7)
    mismatches = 0
    for _ in range(1000):
        d = int(rng.integers(5, 12))
        p = float(rng.uniform(1.05, 8.0))
        kappa = float(rng.uniform(0.0, 0.99))
        q = float(rng.uniform(d / 2 + 0.01, 4 * d))
        q0 = float(rng.uniform(0.5, q * 0.999))
        res_b = bootstrap(d, p, q, kappa, q0=q0, max_iter=200)
        predicted = res_b.criterion < 1
        if predicted != res_b.increasing or predicted != (res_b.verdict == "REACHES_TARGET"):
            mismatches += 1
    checks.append(_check("bootstrap verdict matches criterion (1000 cases)", mismatches == 0, mismatches=mismatches))
    ew = epsilon_window(5, Fraction(1, 5), 0)
    checks.append(_check("epsilon_window(5, 0.2, 0) = 1.5", ew == Fraction(3, 2), value=float(ew)))
    return _result("exponents", checks)


# 8 ------------------------------------------------------------------------


def ibp(seed=0):
    f = builtin("cubic_scalar", {"lam": 1.0})
    grid = make_grid(1, 1.0, 16)
    fine = grid.with_N(32)
    worst = 0.0
    orders = []
    for i in range(50):
        u = random_field(grid, stream(seed, i), amplitude=float(1 + i % 5), n_modes=16, decay=1.0)
        res = ibp_residual(u, f)
        worst = max(worst, res / (hs_norm(u, 2) * hs_norm(u, 1)))
        coarse = ibp_residual(u, f, dealias=False)
        refined = ibp_residual(u.resample(fine), f, dealias=False)
        orders.append(math.log2(coarse / max(refined, 1e-300)))
    checks = [
        _check("dealiased residual < 1e-6 ||u||_H2 ||u||_H1", worst < 1e-6, worst_relative=worst),
        _check("collocation residual decreases at order >= 1 under N-doubling", min(orders) >= 1.0, min_order=min(orders)),
    ]
    return _result("ibp", checks)


# 9 ------------------------------------------------------------------------


def _ratios(grid, f, gs):
    out = []
    for g in gs:
        u = solve(EllipticProblem(np.eye(grid.k), f, 0.0, g.resample(grid)), tol=1e-10)
        out.append(regularity_report(u, g.resample(grid), f).ratio_2reg)
    return out


def elliptic_regularity(seed=0):
    f = builtin("cubic_scalar", {"lam": 1.0})
    checks = []
    for d, (n_lo, n_hi) in ((1, (32, 64)), (3, (6, 12))):
        lo = make_grid(d, 1.0, n_lo)
        gs = [random_field(lo, stream(seed, 100 * d + i), amplitude=1.0, n_modes=4) for i in range(50)]
        r_lo = max(_ratios(lo, f, gs))
        r_hi = max(_ratios(lo.with_N(n_hi), f, gs))
        change = abs(r_hi - r_lo) / max(r_lo, r_hi)
        checks.append(
            _check(f"d={d}: max ratio_2reg finite and stable within 20%", math.isfinite(r_hi) and change < 0.2, ratio=[r_lo, r_hi], change=change)
        )
    grid = make_grid(1, 1.0, 32)
    cube = builtin("polynomial_odd", {"p": 3})
    u = _unit_mode(grid) * 2.0
    lap = SpectralField(grid, -grid.multiplier(1) * u.coeffs)
    G = lap - eval_on_field(cube, u) - u
    v, hist = solve(EllipticProblem(np.eye(1), cube, 1.0, G), tol=1e-12, return_history=True)
    checks.append(_check("manufactured solution residual < 1e-8", hist[-1] < 1e-8, residual=hist[-1], error=hs_norm(v - u, 0)))
    return _result("elliptic_regularity", checks)


# 10 -----------------------------------------------------------------------


def squeezing(seed=0):
    f = builtin("cubic_scalar", {"lam": 1.0})
    T, eps_sob = 1.0, 0.25
    lo, hi = make_grid(1, 1.0, 32), make_grid(1, 1.0, 64)
    forcing = SpectralField.mode(lo, 1, amplitude=20.0) + SpectralField.mode(lo, 2, amplitude=-10.0)
    cfg_lo = EvolutionConfig(lo, np.eye(1), f, g=forcing, scheme="imex_euler", dt=1e-3)
    cfg_hi = cfg_lo.with_grid(hi)
    probe = _ensemble(lo, seed, (1.0, 4.0, 16.0), 1)
    ball = att.absorbing_radius(cfg_lo, probe, 2.0)
    pairs = []
    for i in range(20):
        r = ball.R_l2 * (0.2 + 0.8 * stream(seed, 500 + i).uniform())
        pairs.append(
            (
                random_field(lo, stream(seed, 1000 + 2 * i), amplitude=r, n_modes=16),
                random_field(lo, stream(seed, 1001 + 2 * i), amplitude=r, n_modes=16),
            )
        )
    res = check_squeezing(cfg_lo, pairs, T, eps_sob, refined_config=cfg_hi, ball_radius=ball.R_l2)
    checks = [
        _check("K_hat finite and stable within 20% (N = 32, 64)", bool(res.stable), **res.to_dict()),
        _check("all pairs inside the absorbing ball", not res.outside_ball, R_l2=ball.R_l2),
    ]
    return _result("squeezing", checks)


# 11 -----------------------------------------------------------------------


def attractor(seed=0):
    grid = make_grid(1, 1.0, 32)
    checks = []
    sub = builtin("chafee_infante", {"lam": 5.0})
    cfg = EvolutionConfig(grid, np.eye(1), sub, scheme="imex_euler", dt=1e-3)
    rate_lin = math.pi**2 - 5.0
    cloud = att.sample_cloud(cfg, 4.0, 10, 20, 1.0 / rate_lin, seed)
    max_norm = max(hs_norm(s, 0) for s in cloud.snapshots)
    checks.append(_check("lambda=5: cloud max L2 norm < 1e-4", max_norm < 1e-4, max_norm=max_norm))
    dim = att.box_counting_dimension(cloud, eps_range=(1e-3, 1e-1))
    checks.append(_check("lambda=5: box-counting dimension < 0.2", dim.dimension < 0.2, dimension=dim.dimension))
    probes = [random_field(grid, stream(seed, 300 + i), amplitude=0.5) for i in range(4)]
    rate = att.attraction_rate(cfg, cloud, probes, 3.0, t_min=1.0)
    rel = abs(rate.alpha - rate_lin) / rate_lin
    checks.append(_check("lambda=5: attraction rate within 10% of pi^2 - 5", rel < 0.1, alpha=rate.alpha, expected=rate_lin))

    sup = builtin("chafee_infante", {"lam": 15.0})
    cfg2 = EvolutionConfig(grid, np.eye(1), sup, scheme="imex_euler", dt=1e-3)
    cloud2 = att.sample_cloud(cfg2, 6.0, 10, 20, 0.2, seed + 1)
    cents, _ = att.cluster_centroids(cloud2, 2, seed=seed)
    resid = [att.equilibrium_residual(cfg2, c) for c in cents]
    checks.append(_check("lambda=15: centroid equilibrium residual < 1e-3", max(resid) < 1e-3, residuals=resid))
    return _result("attractor", checks)


# 12 -----------------------------------------------------------------------


def fractional(seed=0):
    grid = make_grid(1, 1.0, 8)
    u0 = _unit_mode(grid)
    lam1 = math.pi**2
    checks = []
    T = 0.05
    for alpha, beta in ((0.5, 0.0), (1.0, 1.0), (0.5, 1.0)):
        cfg = EvolutionConfig(grid, np.eye(1), builtin("zero"), alpha=alpha, beta=beta, scheme="reference_rk4", dt=1e-4)
        expected = lam1**beta * lam1**alpha
        r0 = -rhs(cfg, u0).coeffs[0, 0] / u0.coeffs[0, 0]
        uT = reference_solve(cfg, u0, T).final
        rate = -math.log(hs_norm(uT, 0) / hs_norm(u0, 0)) / T
        rel = abs(rate - expected) / expected
        checks.append(
            _check(
                f"alpha={alpha}, beta={beta}: decay rate lambda1^beta lambda1^alpha within 1e-6",
                rel < 1e-6 and abs(r0 - expected) / expected < 1e-12,
                rate=rate,
                expected=expected,
                relative_error=rel,
            )
        )
    return _result("fractional", checks)


PRESETS = {
    "linear_oracle": linear_oracle,
    "convergence": convergence,
    "dissipativity": dissipativity,
    "lipschitz": lipschitz,
    "approximation": approximation,
    "smoothing": smoothing,
    "exponents": exponents,
    "ibp": ibp,
    "elliptic_regularity": elliptic_regularity,
    "squeezing": squeezing,
    "attractor": attractor,
    "fractional": fractional,
}


def run_preset(name, seed=0):
    if name not in PRESETS:
        from .errors import ConfigurationError

        raise ConfigurationError("preset", f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return PRESETS[name](seed=seed)
