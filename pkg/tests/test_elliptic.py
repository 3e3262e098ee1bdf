import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monodiss.elliptic import (
    EllipticProblem,
    ModalOperator,
    check_diffusion_matrix,
    newton_solve,
    prepare_initial_data,
    regularity_report,
    solve,
)
from monodiss.errors import ConfigurationError, DimensionError, SolverError
from monodiss.exponents import elliptic_r
from monodiss.nonlinearity import approximate, builtin, eval_on_field
from monodiss.rng import random_field, stream
from monodiss.spectral import SpectralField, hs_norm, make_grid, to_physical

CUBIC = builtin("cubic_scalar", {"lam": 1.0})


def _sin1(grid, amp=1.0):
    return SpectralField.mode(grid, 1, amplitude=amp * math.sqrt(0.5))


def _lap(u):
    return SpectralField(u.grid, -u.coeffs * u.grid.multiplier(1))


class TestLinear:
    def test_single_mode_solution_is_exact(self):
        g = make_grid(1, 1.0, 16)
        phi = SpectralField.mode(g, 1)
        rhs = phi * (-g.lambda1)
        v = solve(EllipticProblem(np.eye(1), builtin("zero"), 0.0, rhs))
        np.testing.assert_allclose(v.coeffs, phi.coeffs, atol=1e-15)

    def test_matrix_diffusion_system(self):
        g = make_grid(2, 1.0, 6, k=2)
        a = np.array([[2.0, 0.5], [-0.5, 1.0]])
        rhs = random_field(g, stream(1))
        v = solve(EllipticProblem(a, builtin("zero", {"k": 2}), 0.3, rhs))
        lhs = np.einsum("ij,j...->i...", a, _lap(v).coeffs) - 0.3 * v.coeffs
        np.testing.assert_allclose(lhs, rhs.coeffs, atol=1e-12)

    def test_modal_operator_inverse(self):
        g = make_grid(1, 1.0, 8, k=2)
        op = ModalOperator(g, np.array([[1.0, 0.2], [0.1, 2.0]]), g.eigenvalues, 0.5)
        c = random_field(g, stream(2)).coeffs
        np.testing.assert_allclose(op.solve(op.apply(c)), c, atol=1e-13)


class TestNonlinear:
    def test_manufactured_cubic(self):
        g = make_grid(1, 1.0, 32)
        cube = builtin("polynomial_odd", {"p": 3})
        u = _sin1(g, 2.0)
        G = _lap(u) - eval_on_field(cube, u) - u
        v, hist = solve(EllipticProblem(np.eye(1), cube, 1.0, G), tol=1e-12, return_history=True)
        assert hist[-1] < 1e-8
        assert hs_norm(v - u, 0) < 1e-10

    def test_two_guesses_agree(self):
        g = make_grid(1, 1.0, 24)
        G = random_field(g, stream(3), amplitude=5.0)
        prob = EllipticProblem(np.eye(1), CUBIC, 0.0, G)
        v1 = solve(prob, tol=1e-10)
        v2 = solve(prob, tol=1e-10, guess=random_field(g, stream(4), amplitude=10.0))
        assert hs_norm(v1 - v2, 0) < 10 * 1e-10

    @given(st.integers(0, 10_000), st.floats(0.5, 20.0))
    def test_residual_strictly_decreasing(self, seed, amp):
        g = make_grid(1, 1.0, 16)
        G = random_field(g, stream(seed), amplitude=amp)
        _, hist = solve(EllipticProblem(np.eye(1), CUBIC, 0.0, G), return_history=True)
        assert all(b < a for a, b in zip(hist, hist[1:]))
        assert hist[-1] <= 1e-10

    def test_comparison_principle(self):
        g = make_grid(1, 1.0, 32)
        f = builtin("polynomial_odd", {"p": 3})
        g1 = random_field(g, stream(5), amplitude=3.0)
        # sin(pi x) > 0 in the interior, so g2 >= g1 at every grid point
        g2 = g1 + _sin1(g, 2.0)
        v1 = solve(EllipticProblem(np.eye(1), f, 0.0, g1))
        v2 = solve(EllipticProblem(np.eye(1), f, 0.0, g2))
        assert np.all(to_physical(v1) >= to_physical(v2) - 1e-9)

    def test_non_monotone_operator_rejected(self):
        g = make_grid(1, 1.0, 16)
        with pytest.raises(ConfigurationError) as err:
            EllipticProblem(np.eye(1), builtin("chafee_infante", {"lam": 15.0}), 0.0, SpectralField.zeros(g))
        assert err.value.field == "shift"

    def test_shape_mismatch(self):
        g = make_grid(1, 1.0, 16, k=2)
        with pytest.raises(DimensionError):
            EllipticProblem(np.eye(2), CUBIC, 0.0, SpectralField.zeros(g))

    def test_nonconvergence_raises_with_history(self):
        g = make_grid(1, 1.0, 16)
        op = ModalOperator(g, np.eye(1), g.eigenvalues, 0.0)
        b = random_field(g, stream(6), amplitude=1e4).coeffs
        with pytest.raises(SolverError) as err:
            newton_solve(op, CUBIC, b, tol=1e-14, max_iter=1)
        assert len(err.value.history) >= 1

    def test_diffusion_matrix_checks(self):
        with pytest.raises(ConfigurationError):
            check_diffusion_matrix(np.array([[1.0, 0.0], [0.0, -1.0]]), 2)
        with pytest.raises(ConfigurationError):
            check_diffusion_matrix(np.eye(3), 2)


class TestInitialData:
    def test_fixed_point_when_nonlinearity_unchanged(self):
        g = make_grid(1, 1.0, 32)
        u0 = _sin1(g, 0.5)
        v, _ = prepare_initial_data(u0, CUBIC, approx=CUBIC, tol=1e-12)
        assert hs_norm(v - u0, 0) < 10 * 1e-12

    def test_gap_decreases_and_graph_norm_bounded(self):
        g = make_grid(1, 1.0, 32)
        u0 = _sin1(g, 2.0)
        gaps, ratios = [], []
        G_norm = hs_norm(_lap(u0) - eval_on_field(CUBIC, u0) - u0 * CUBIC.K, 0)
        for n in (1, 4, 16, 64):
            v, a = prepare_initial_data(u0, CUBIC, n=n, p1=3.5)
            gaps.append(hs_norm(v - u0, 1))
            ratios.append((hs_norm(v, 2) + hs_norm(eval_on_field(a, v), 0)) / G_norm)
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert max(ratios) <= 2.0 * min(ratios)

    def test_requires_n_or_approx(self):
        with pytest.raises(ConfigurationError):
            prepare_initial_data(_sin1(make_grid(1, 1.0, 8)), CUBIC)

    def test_approx_passthrough(self):
        g = make_grid(1, 1.0, 16)
        a = approximate(CUBIC, 4)
        _, back = prepare_initial_data(_sin1(g), CUBIC, approx=a)
        assert back is a


class TestRegularity:
    def test_exponent_r(self):
        info = elliptic_r(3, 2.2, 1)
        assert info["r"] == pytest.approx(0.75)
        assert info["admissible"]
        assert info["bound"] == pytest.approx(2.25)

    def test_ratio_one_for_linear_single_mode(self):
        g = make_grid(1, 1.0, 16)
        rhs = SpectralField.mode(g, 1)
        u = solve(EllipticProblem(np.eye(1), builtin("zero"), 0.0, rhs))
        rep = regularity_report(u, rhs, builtin("zero"))
        assert rep.ratio_2reg == pytest.approx(1.0, rel=1e-14)

    def test_three_dimensional_report(self):
        g = make_grid(3, 1.0, 6)
        rhs = random_field(g, stream(7), n_modes=4)
        u = solve(EllipticProblem(np.eye(1), CUBIC, 0.0, rhs))
        rep = regularity_report(u, rhs, CUBIC, q=2.2, kappa=1.0)
        assert rep.admissible and rep.flags == []
        assert rep.r == pytest.approx(0.75)
        assert rep.mixed is not None and rep.grad_lr is not None
        assert math.isfinite(rep.ratio_2reg)

    def test_inadmissible_is_flagged(self):
        g = make_grid(1, 1.0, 8)
        rhs = SpectralField.mode(g, 1)
        u = solve(EllipticProblem(np.eye(1), CUBIC, 0.0, rhs))
        rep = regularity_report(u, rhs, CUBIC, q=2.2)
        assert "INADMISSIBLE" in rep.flags
        assert rep.grad_lr is None


def test_prepared_data_gap_scales_like_one_over_n():
    f = builtin("cubic_scalar", {"lam": 1.0})
    grid = make_grid(1, 1.0, 32)
    u0 = SpectralField.mode(grid, 1, amplitude=2.0 * math.sqrt(0.5))
    scaled = []
    for n in (64, 256, 1024):
        v, _ = prepare_initial_data(u0, f, approx=approximate(f, n, 3.5), tol=1e-11)
        scaled.append(n * hs_norm(v - u0, 1))
    assert max(scaled) / min(scaled) < 1.1
