import math

import numpy as np
import pytest

from monodiss import attractor as att
from monodiss.errors import RefusalError
from monodiss.evolution import EvolutionConfig
from monodiss.nonlinearity import builtin
from monodiss.rng import random_field, stream
from monodiss.spectral import SpectralField, hs_norm, make_grid

LAM1 = math.pi**2


def _cfg(grid, f=builtin("zero"), **kw):
    return EvolutionConfig(grid, np.eye(grid.k), f, **kw)


class TestBoxCounting:
    def test_single_point(self):
        pts = np.zeros((300, 8))
        assert att.box_counting_dimension(pts).dimension < 0.2

    def test_segment(self):
        rng = np.random.default_rng(0)
        pts = np.zeros((4000, 3))
        pts[:, 0] = rng.uniform(0, 1, 4000)
        assert att.box_counting_dimension(pts).dimension == pytest.approx(1.0, abs=0.2)

    def test_square(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(0, 1, (20000, 2))
        assert att.box_counting_dimension(pts).dimension == pytest.approx(2.0, abs=0.2)

    def test_circle_in_mode_space(self):
        rng = np.random.default_rng(2)
        th = rng.uniform(0, 2 * np.pi, 5000)
        pts = np.zeros((5000, 8))
        pts[:, 2], pts[:, 5] = np.cos(th), np.sin(th)
        assert 0.8 <= att.box_counting_dimension(pts).dimension <= 1.2

    def test_refuses_small_cloud(self):
        with pytest.raises(RefusalError):
            att.box_counting_dimension(np.zeros((50, 2)))

    def test_explicit_range_and_csv(self):
        rng = np.random.default_rng(3)
        pts = np.zeros((1000, 2))
        pts[:, 0] = rng.uniform(0, 1, 1000)
        fit = att.box_counting_dimension(pts, eps_range=(1e-2, 1e-1), n_eps=5)
        assert len(fit.eps) == 5
        assert fit.to_csv().splitlines()[0] == "eps,count"


class TestAbsorbing:
    def test_heat_entry_times(self):
        g = make_grid(1, 1.0, 8)
        u0s = [SpectralField.mode(g, 1, amplitude=m) for m in (1.0, 10.0, 100.0)]
        R = 0.1
        res = att.absorbing_radius(_cfg(g, dt=1e-4), u0s, 1.0, np.linspace(0.005, 1.0, 200), R_l2=R, R_h1=10.0)
        for m, t in zip((1.0, 10.0, 100.0), res.entry_l2):
            assert t == pytest.approx(math.log(m / R) / LAM1, abs=0.006)

    def test_refuses_unreached_radius(self):
        g = make_grid(1, 1.0, 8)
        u0s = [SpectralField.mode(g, 1, amplitude=m) for m in (1.0, 10.0, 100.0)]
        with pytest.raises(RefusalError):
            att.absorbing_radius(_cfg(g, dt=1e-3), u0s, 0.1, R_l2=1e-6)

    def test_refuses_narrow_ensemble(self):
        g = make_grid(1, 1.0, 8)
        with pytest.raises(RefusalError):
            att.absorbing_radius(_cfg(g), [SpectralField.mode(g, 1)] * 3, 0.1)

    def test_permanence_and_forcing_growth(self):
        g = make_grid(1, 1.0, 16)
        f = builtin("cubic_scalar", {"lam": 1.0})
        u0s = [random_field(g, stream(i), amplitude=m) for i, m in enumerate((1.0, 4.0, 16.0))]
        radii = []
        for amp in (0.0, 1.0, 4.0):
            cfg = _cfg(g, f, g=SpectralField.mode(g, 1, amplitude=amp), dt=1e-3)
            res = att.absorbing_radius(cfg, u0s, 2.0)
            radii.append(res.R_l2)
            for tr, t_in in zip(res.trajectories, res.entry_l2):
                norms = np.array([hs_norm(s, 0) for s in tr.states])
                assert np.all(norms[tr.times >= t_in] <= res.R_l2)
        assert radii[0] < radii[1] < radii[2]
        # the envelope C (1 + ||g||^2) bounds the squared radius
        C = radii[2] ** 2 / 17.0
        assert radii[1] ** 2 <= C * 2.0 * 1.5


class TestCloud:
    @pytest.fixture(scope="class")
    def cloud(self):
        g = make_grid(1, 1.0, 16)
        cfg = _cfg(g, builtin("chafee_infante", {"lam": 5.0}), dt=1e-3)
        return cfg, att.sample_cloud(cfg, 1.0, 3, 5, 0.1, seed=11)

    def test_deterministic(self, cloud):
        cfg, c = cloud
        again = att.sample_cloud(cfg, 1.0, 3, 5, 0.1, seed=11)
        assert np.array_equal(c.matrix(), again.matrix())
        assert len(c) == 15 and len(c.projection) == 8

    def test_json_round_trip(self, cloud):
        _, c = cloud
        back = att.AttractorCloud.from_json(c.to_json())
        assert np.array_equal(back.matrix(), c.matrix())
        assert back.ensemble == c.ensemble and back.burn_in == c.burn_in

    def test_burn_in_refusal(self, cloud):
        cfg, _ = cloud
        with pytest.raises(RefusalError):
            att.sample_cloud(cfg, 1.0, 1, 2, 0.1, seed=0, entry_time=0.8)

    def test_distance_to_cloud(self, cloud):
        _, c = cloud
        assert att.distance_to_cloud(c.snapshots[3], c) == 0.0


class TestRate:
    def test_heat_rate_against_origin(self):
        g = make_grid(1, 1.0, 16)
        cfg = _cfg(g, scheme="reference_rk4", dt=1e-3)
        origin = att.AttractorCloud([SpectralField.zeros(g)], 0.0, {}, list(range(8)))
        probes = [random_field(g, stream(i)) for i in range(3)]
        fit = att.attraction_rate(cfg, origin, probes, 1.0)
        assert LAM1 * 0.95 <= fit.alpha <= LAM1 * 1.05
        assert np.all(fit.distances <= fit.Q * np.exp(-fit.alpha * fit.times) * (1 + 1e-12))

    def test_probes_on_invariant_cloud_stay(self):
        g = make_grid(1, 1.0, 16)
        cfg = _cfg(g, builtin("chafee_infante", {"lam": 5.0}), dt=1e-3)
        origin = att.AttractorCloud([SpectralField.zeros(g)], 0.0, {}, list(range(8)))
        with pytest.raises(RefusalError):
            # the origin is an equilibrium: every distance is 0, nothing to fit
            att.attraction_rate(cfg, origin, [SpectralField.zeros(g)], 1.0)


def test_centroids_and_equilibria():
    g = make_grid(1, 1.0, 32)
    f = builtin("chafee_infante", {"lam": 15.0})
    cfg = _cfg(g, f, dt=1e-3)
    cloud = att.sample_cloud(cfg, 6.0, 6, 3, 0.2, seed=4)
    cents, labels = att.cluster_centroids(cloud, 2, seed=0)
    assert set(labels) == {0, 1}
    res = [att.equilibrium_residual(cfg, c) for c in cents]
    assert max(res) < 1e-3
    # the two equilibria are mirror images
    np.testing.assert_allclose(cents[0].coeffs, -cents[1].coeffs, atol=1e-6)
