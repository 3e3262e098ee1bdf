"""Empirical attractor study: absorbing radii, snapshot clouds, box counting, attraction rates."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2

from .diagnostics import count_magnitudes
from .errors import RefusalError
from .evolution import evolve, rhs
from .rng import random_field, stream
from .spectral import SpectralField, hs_norm

__all__ = [
    "AbsorbingResult",
    "AttractorCloud",
    "DimensionFit",
    "RateFit",
    "absorbing_radius",
    "sample_cloud",
    "box_counting_dimension",
    "attraction_rate",
    "distance_to_cloud",
    "cluster_centroids",
    "equilibrium_residual",
]


@dataclass
class AbsorbingResult:
    R_l2: float
    R_h1: float
    entry_l2: list
    entry_h1: list
    trajectories: list = field(repr=False, default_factory=list)

    def to_dict(self):
        return {"R_l2": self.R_l2, "R_h1": self.R_h1, "entry_l2": self.entry_l2, "entry_h1": self.entry_h1}


def _entry_time(times, values, R):
    inside = values <= R
    if not inside[-1]:
        return None
    outside = np.nonzero(~inside)[0]
    return float(times[0]) if outside.size == 0 else float(times[min(outside[-1] + 1, len(times) - 1)])


def absorbing_radius(config, initial_states, T, schedule=None, R_l2=None, R_h1=None, margin=0.1, trajectories=None):
    """Radii (L2 and H1 norms) that every trajectory enters and does not leave within [0, T].

    Radii not supplied are estimated as (1 + margin) times the largest norm over
    the last quarter of the horizon.  A supplied radius that some trajectory
    never enters raises ``RefusalError``.
    """
    if count_magnitudes([max(hs_norm(u, 0), 1e-300) for u in initial_states]) < 3:
        raise RefusalError("ensemble must span at least 3 initial-data magnitudes")
    if schedule is None:
        schedule = np.linspace(T / 200, T, 200)
    trajs = trajectories or [evolve(config, u0, T, schedule) for u0 in initial_states]
    l2 = [np.array([hs_norm(s, 0) for s in tr.states]) for tr in trajs]
    h1 = [np.array([hs_norm(s, 1) for s in tr.states]) for tr in trajs]

    def estimate(series):
        tail = [v[tr.times >= 0.75 * tr.times[-1]] for v, tr in zip(series, trajs)]
        return (1.0 + margin) * max(float(np.max(t)) for t in tail)

    R_l2 = estimate(l2) if R_l2 is None else float(R_l2)
    R_h1 = estimate(h1) if R_h1 is None else float(R_h1)
    e_l2 = [_entry_time(tr.times, v, R_l2) for tr, v in zip(trajs, l2)]
    e_h1 = [_entry_time(tr.times, v, R_h1) for tr, v in zip(trajs, h1)]
    missing = [i for i, (a, b) in enumerate(zip(e_l2, e_h1)) if a is None or b is None]
    if missing:
        raise RefusalError(f"horizon too short: trajectories {missing} never enter the ball")
    return AbsorbingResult(R_l2, R_h1, e_l2, e_h1, trajs)


@dataclass
class AttractorCloud:
    snapshots: list
    burn_in: float
    ensemble: dict
    projection: list
    outside_ball: list = field(default_factory=list)

    def __len__(self):
        return len(self.snapshots)

    def matrix(self):
        return np.stack([s.coeffs.ravel() for s in self.snapshots])

    def projected(self):
        return self.matrix()[:, self.projection]

    def to_json(self):
        return json.dumps(
            {
                "header": {
                    "burn_in": self.burn_in,
                    "ensemble": self.ensemble,
                    "projection": list(map(int, self.projection)),
                    "outside_ball": self.outside_ball,
                    "count": len(self.snapshots),
                },
                "snapshots": [s.to_dict() for s in self.snapshots],
            }
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        h = data["header"]
        snaps = [SpectralField.from_dict(s) for s in data["snapshots"]]
        return cls(snaps, h["burn_in"], h["ensemble"], h["projection"], h.get("outside_ball", []))


def leading_modes(snapshots, n_modes=8):
    """Flat indices of the ``n_modes`` coordinates with the largest mean energy."""
    X = np.stack([s.coeffs.ravel() for s in snapshots])
    energy = np.mean(X**2, axis=0)
    order = np.argsort(-energy, kind="stable")
    return sorted(int(i) for i in order[:n_modes])


def sample_cloud(config, T0, n_traj, n_snap, spacing, seed, amplitude=1.0, n_modes=8, entry_time=None, ball_radius=None):
    """Snapshots at ``T0, T0 + spacing, ...`` from ``n_traj`` seeded random initial data."""
    if entry_time is not None and T0 < 2.0 * entry_time:
        raise RefusalError(f"burn-in {T0} shorter than twice the entry time {entry_time}")
    schedule = T0 + spacing * np.arange(n_snap)
    snaps = []
    for i in range(n_traj):
        u0 = random_field(config.grid, stream(seed, i), amplitude=amplitude)
        tr = evolve(config, u0, float(schedule[-1]), schedule)
        snaps.extend(tr.states[1:])
    outside = []
    if ball_radius is not None:
        outside = [j for j, s in enumerate(snaps) if hs_norm(s, 0) > ball_radius]
    return AttractorCloud(
        snapshots=snaps,
        burn_in=float(T0),
        ensemble={"seed": int(seed), "n_traj": n_traj, "n_snap": n_snap, "spacing": spacing, "amplitude": amplitude},
        projection=leading_modes(snaps, n_modes),
        outside_ball=outside,
    )


@dataclass
class DimensionFit:
    dimension: float
    r2: float
    eps: np.ndarray
    counts: np.ndarray
    warnings: list

    def to_csv(self):
        lines = ["eps,count"] + [f"{e:.17g},{int(c)}" for e, c in zip(self.eps, self.counts)]
        return "\n".join(lines) + "\n"


def _box_count(points, eps):
    keys = np.floor(points / eps).astype(np.int64)
    return len(np.unique(keys, axis=0))


def box_counting_dimension(cloud, eps_range=None, n_eps=10, min_snapshots=200):
    """Slope of log N(eps) against log(1/eps) for the projected cloud.

    ``cloud`` is an ``AttractorCloud`` or an array of points.  Without
    ``eps_range`` the scales run from diam/2 down by factors of 2 while the
    box count stays below a tenth of the number of points.
    """
    pts = cloud.projected() if isinstance(cloud, AttractorCloud) else np.asarray(cloud, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    warnings = []
    if len(pts) < min_snapshots:
        raise RefusalError(f"box counting needs >= {min_snapshots} points, got {len(pts)}")
    if eps_range is None:
        diam = float(np.max(np.ptp(pts, axis=0)))
        if diam == 0:
            return DimensionFit(0.0, 1.0, np.array([1.0]), np.array([1]), ["single point"])
        eps = diam / 2.0 ** np.arange(1, 30)
        counts = np.array([_box_count(pts, e) for e in eps])
        keep = counts <= len(pts) / 10
        if keep.sum() < 3:
            keep[: 3] = True
            warnings.append("range truncated: too few points for fine boxes")
        eps, counts = eps[keep], counts[keep]
    else:
        eps = np.geomspace(eps_range[0], eps_range[1], n_eps)
        counts = np.array([_box_count(pts, e) for e in eps])
        if counts.max() > len(pts) / 10:
            warnings.append("range truncation: finest boxes nearly one point each")
    x = np.log(1.0 / eps)
    y = np.log(counts)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return DimensionFit(float(slope), r2, eps, counts, warnings)


def distance_to_cloud(u, cloud):
    X = cloud.matrix()
    return float(np.min(np.sqrt(np.sum((X - u.coeffs.ravel()) ** 2, axis=1))))


@dataclass
class RateFit:
    alpha: float
    Q: float
    times: np.ndarray
    distances: np.ndarray
    window: tuple

    def to_dict(self):
        return {"alpha": self.alpha, "Q": self.Q, "window": list(self.window)}


def attraction_rate(config, cloud, probes, T, n_samples=100, t_min=None, floor=None):
    """Fit ``dist(u(t), cloud) <= Q e^(-alpha t)`` over an ensemble of probes.

    The rate comes from least squares on log-distances with t >= t_min
    (default T/4) and distance above ``floor``; Q is the least value that
    dominates every sample.
    """
    schedule = np.linspace(T / n_samples, T, n_samples)
    t_min = T / 4 if t_min is None else t_min
    ts, ds = [], []
    for u0 in probes:
        tr = evolve(config, u0, T, schedule)
        ts.append(tr.times)
        ds.append(np.array([distance_to_cloud(s, cloud) for s in tr.states]))
    times = np.stack(ts)
    dists = np.stack(ds)
    if floor is None:
        floor = 1e-10 * float(np.max(dists))
    sel = (times >= t_min) & (dists > floor)
    if sel.sum() < 3:
        raise RefusalError("too few samples above the distance floor; enlarge the horizon or the cloud")
    slope = float(np.polyfit(times[sel], np.log(dists[sel]), 1)[0])
    if slope >= 0:
        raise RefusalError("distances do not decrease; enlarge the cloud")
    alpha = -slope
    Q = float(np.max(dists * np.exp(alpha * times)))
    return RateFit(alpha, Q, times, dists, (float(t_min), float(T)))


def cluster_centroids(cloud, n_clusters=2, seed=0):
    X = cloud.matrix()
    centroids, labels = kmeans2(X, n_clusters, seed=seed, minit="++")
    grid = cloud.snapshots[0].grid
    return [SpectralField(grid, c.reshape(grid.field_shape)) for c in centroids], labels


def equilibrium_residual(config, u):
    """L2 norm of the stationary residual (the semi-discrete right-hand side)."""
    return hs_norm(rhs(config, u), 0)
