import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monodiss.diagnostics import (
    COLUMNS,
    check_dissipative,
    check_lipschitz,
    check_squeezing,
    count_magnitudes,
    energy_report,
    fit_smoothing_rate,
    ibp_residual,
    lipschitz_ratio,
)
from monodiss.errors import RefusalError
from monodiss.evolution import EvolutionConfig, evolve, log_schedule, reference_solve
from monodiss.nonlinearity import builtin
from monodiss.rng import random_field, rough_field, stream
from monodiss.spectral import SpectralField, hs_norm, make_grid

ZERO = builtin("zero")
CUBIC = builtin("cubic_scalar", {"lam": 1.0})
LAM1 = math.pi**2


def _cfg(grid, f=ZERO, **kw):
    return EvolutionConfig(grid, np.eye(grid.k), f, **kw)


def _ensemble(grid, mags=(1.0, 4.0, 16.0)):
    return [random_field(grid, stream(i), amplitude=m) for i, m in enumerate(mags)]


class TestEnergyReport:
    def test_zero_nonlinearity_columns(self):
        g = make_grid(1, 1.0, 16)
        tr = evolve(_cfg(g, dt=1e-3), random_field(g, stream(0)), 0.1, np.linspace(0.01, 0.1, 10))
        rep = energy_report(tr)
        assert np.all(rep["fu_dot_u_abs"] == 0)
        assert np.all(rep["ibp_residual"] == 0)
        np.testing.assert_allclose(rep["d_norm_sq"], rep["h2_sq"])

    def test_heat_mode_decay(self):
        g = make_grid(1, 1.0, 16)
        u0 = SpectralField.mode(g, 1)
        tr = reference_solve(_cfg(g, scheme="reference_rk4", dt=1e-4), u0, 0.2, np.linspace(0.02, 0.2, 10))
        rep = energy_report(tr)
        np.testing.assert_allclose(rep["l2_sq"], np.exp(-2 * LAM1 * rep.times), atol=1e-6)

    def test_monotone_form_sign(self):
        g = make_grid(1, 1.0, 32)
        tr = evolve(_cfg(g, CUBIC, dt=1e-3), random_field(g, stream(1), amplitude=8.0), 0.5, np.linspace(0.01, 0.5, 50))
        rep = energy_report(tr)
        tol = 1e-10 * (1 + rep["fprime_grad_form_abs"])
        assert np.all(rep["fprime_grad_form"] >= -CUBIC.K * rep["h1_sq"] - tol)

    def test_csv_layout(self):
        g = make_grid(1, 1.0, 8)
        tr = evolve(_cfg(g, CUBIC, dt=1e-3), SpectralField.mode(g, 1), 0.01, [0.005, 0.01])
        lines = energy_report(tr).to_csv().splitlines()
        assert lines[0] == ",".join(("time",) + COLUMNS)
        assert len(lines) == 4
        row = lines[2].split(",")
        assert len(row) == len(COLUMNS) + 1
        assert float(row[0]) == 0.005
        assert all(v == f"{float(v):.17g}" for v in row)

    def test_r_must_be_positive(self):
        g = make_grid(1, 1.0, 8)
        tr = evolve(_cfg(g, dt=1e-3), SpectralField.mode(g, 1), 0.01)
        with pytest.raises(ValueError):
            energy_report(tr, r=0.0)


class TestIbp:
    @given(st.integers(0, 10_000), st.floats(0.1, 10.0), st.sampled_from([(1, 16), (2, 8)]))
    def test_identity_for_band_limited_fields(self, seed, amp, dn):
        d, N = dn
        g = make_grid(d, 1.0, N)
        u = random_field(g, stream(seed), amplitude=amp, n_modes=N, decay=1.0)
        assert ibp_residual(u, CUBIC) < 1e-6 * hs_norm(u, 2) * hs_norm(u, 1)

    def test_collocation_residual_refines(self):
        g = make_grid(1, 1.0, 12)
        u = random_field(g, stream(2), amplitude=3.0, n_modes=12, decay=0.5)
        coarse = ibp_residual(u, CUBIC, dealias=False)
        fine = ibp_residual(u.resample(g.with_N(24)), CUBIC, dealias=False)
        assert coarse > 0
        assert fine <= coarse / 2

    def test_vector_nonlinearity(self):
        g = make_grid(2, 1.0, 6, k=2)
        u = random_field(g, stream(3), amplitude=2.0, n_modes=6)
        assert ibp_residual(u, builtin("ginzburg_landau")) < 1e-6 * hs_norm(u, 2) * hs_norm(u, 1)


@pytest.fixture(scope="module")
def heat_reports():
    g = make_grid(1, 1.0, 16)
    cfg = _cfg(g, scheme="implicit_monotone_euler", dt=1e-4)
    sched = np.linspace(0.01, 0.3, 30)
    return [energy_report(evolve(cfg, SpectralField.mode(g, 1, amplitude=m), 0.3, sched)) for m in (1.0, 4.0, 16.0)]


class TestDissipative:
    def test_heat_rate_and_constant(self, heat_reports):
        v = check_dissipative(heat_reports, "l2")
        assert v.passed
        assert v.constants["alpha"] == pytest.approx(2 * LAM1, rel=0.05)
        assert v.constants["C_fit"] == pytest.approx(1.0, rel=0.05)

    def test_impossible_rate_fails_with_witness(self, heat_reports):
        v = check_dissipative(heat_reports, "l2", alpha=10 * LAM1)
        assert not v.passed
        assert v.witness["time"] > 0
        assert v.to_dict()["verdict"] == "FAIL"

    def test_envelope_recheckable_from_reports(self, heat_reports):
        v = check_dissipative(heat_reports, "h1")
        assert v.passed
        for rep in heat_reports:
            C, a, B = rep.fitted["C_h1"], rep.fitted["alpha_h1"], rep.fitted["B_h1"]
            y = rep["h1_sq"]
            assert np.all(C * np.exp(-a * rep.times) * y[0] + B - y >= -v.tolerance)

    def test_refuses_narrow_ensemble(self, heat_reports):
        with pytest.raises(RefusalError):
            check_dissipative(heat_reports[:2], "l2")

    def test_cubic_ensemble_passes(self):
        g = make_grid(1, 1.0, 32)
        cfg = _cfg(g, CUBIC, scheme="implicit_monotone_euler", dt=2e-3)
        sched = np.linspace(0.01, 1.0, 50)
        reps = [energy_report(evolve(cfg, u0, 1.0, sched)) for u0 in _ensemble(g)]
        for which in ("l2", "h1"):
            v = check_dissipative(reps, which)
            assert v.passed and v.constants["alpha"] > 0

    def test_count_magnitudes(self):
        assert count_magnitudes([1, 1.1, 4, 16]) == 3
        assert count_magnitudes([]) == 0


class TestLipschitz:
    def test_identical_pair(self):
        g = make_grid(1, 1.0, 8)
        cfg = _cfg(g, CUBIC, dt=1e-3)
        tr = evolve(cfg, SpectralField.mode(g, 1), 0.1, [0.05, 0.1])
        assert np.all(lipschitz_ratio(tr, tr) == 0)
        assert check_lipschitz([(tr, tr)], K=1.0, dt=1e-3).passed

    def test_heat_contraction(self):
        g = make_grid(1, 1.0, 16)
        cfg = _cfg(g, scheme="reference_rk4", dt=1e-4)
        base = random_field(g, stream(4))
        a = reference_solve(cfg, base, 0.5)
        b = reference_solve(cfg, base + SpectralField.mode(g, 1, amplitude=0.3), 0.5)
        assert lipschitz_ratio(a, b)[-1] == pytest.approx(math.exp(-LAM1 * 0.5), rel=1e-8)

    def test_violation_detected(self):
        g = make_grid(1, 1.0, 8)
        cfg = _cfg(g, builtin("chafee_infante", {"lam": 30.0}), dt=1e-3)
        a = evolve(cfg, SpectralField.mode(g, 1, amplitude=1e-3), 0.5, [0.25, 0.5])
        b = evolve(cfg, SpectralField.mode(g, 1, amplitude=2e-3), 0.5, [0.25, 0.5])
        # the unstable mode grows at rate 30 - pi^2 > K = 0 claimed below
        v = check_lipschitz([(a, b)], K=0.0, dt=1e-3)
        assert not v.passed and v.witness["pair"] == 0


def test_squeezing_constant_stable_under_refinement():
    f = CUBIC
    lo = make_grid(1, 1.0, 16)
    cfg = _cfg(lo, f, dt=1e-3)
    pairs = [(random_field(lo, stream(2 * i)), random_field(lo, stream(2 * i + 1))) for i in range(3)]
    res = check_squeezing(cfg, pairs, 0.2, 0.25, refined_config=cfg.with_grid(lo.with_N(32)), ball_radius=1.5)
    assert math.isfinite(res.K_hat) and res.stable
    assert res.outside_ball == []


class TestSmoothing:
    def test_smooth_data_has_flat_time_derivative(self):
        g = make_grid(1, 1.0, 32)
        u0 = SpectralField.mode(g, 1, amplitude=0.5)
        tr = evolve(_cfg(g, CUBIC, dt=1e-5), u0, 1e-2, log_schedule(1e-4, 1e-2, 10))
        fit = fit_smoothing_rate(energy_report(tr), (1e-4, 1e-2))
        assert abs(fit.slope_dt) < 0.05

    def test_linear_rough_data_against_eigen_sum(self):
        g = make_grid(1, 1.0, 64)
        u0 = rough_field(g, 1.1)
        sched = log_schedule(1e-3, 1e-1, 10)
        tr = reference_solve(_cfg(g, scheme="reference_rk4", dt=1e-4), u0, 1e-1, sched)
        fit = fit_smoothing_rate(energy_report(tr))
        lam = g.eigenvalues
        c2 = u0.coeffs[0] ** 2
        oracle = [np.sum(lam * c2 * np.exp(-2 * lam * t)) for t in sched]
        slope = np.polyfit(np.log(sched), np.log(oracle), 1)[0]
        assert fit.slope_h1 == pytest.approx(slope, abs=1e-6)
        assert fit.slope_h1 >= -1.1

    def test_refuses_short_window(self):
        g = make_grid(1, 1.0, 8)
        tr = evolve(_cfg(g, dt=1e-3), SpectralField.mode(g, 1), 0.05, np.linspace(0.01, 0.05, 5))
        with pytest.raises(RefusalError):
            fit_smoothing_rate(energy_report(tr), (1e-2, 5e-2))
