"""Experiment configuration: validated JSON in, fully resolved JSON out.

A field (forcing ``g`` or initial datum ``u0``) is given either as a modal
list ``{"modes": [{"index": [1], "component": 0, "amplitude": 2.0}, ...]}``
or as a named profile ``{"profile": NAME, ...}`` with profiles

    zero                         the zero field
    sine     mode, amplitude     amplitude * prod_i sin(pi m x_i / L) in component 0
    random   amplitude, n_modes, decay   seeded Gaussian low modes (needs a seed)
    rough    exponent, amplitude         coefficients prod_i m_i^-exponent
"""
from __future__ import annotations

import copy
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigurationError
from .evolution import SCHEMES, EvolutionConfig, log_schedule
from .nonlinearity import builtin, from_config
from .rng import random_field, rough_field, stream
from .spectral import Grid, SpectralField

__all__ = ["ExperimentConfig", "build_field", "expand_sweep", "set_path"]

PROFILES = ("zero", "sine", "random", "rough")
SCHEDULE_KINDS = ("linear", "log", "list")


def _default_grid():
    return {"d": 1, "L": 1.0, "N": 32, "k": 1}


@dataclass
class ExperimentConfig:
    grid: dict = field(default_factory=_default_grid)
    a: list | None = None
    nonlinearity: dict = field(default_factory=lambda: {"name": "cubic_scalar", "params": {"lam": 1.0}})
    g: dict = field(default_factory=lambda: {"profile": "zero"})
    u0: dict = field(default_factory=lambda: {"profile": "sine", "mode": 1, "amplitude": 1.0})
    alpha: float = 1.0
    beta: float = 0.0
    scheme: str = "imex_euler"
    dt: float = 1e-3
    T: float = 1.0
    schedule: dict = field(default_factory=lambda: {"kind": "linear", "n": 100})
    seed: int | None = None
    n_traj: int = 1
    r: float = 0.2
    elliptic: dict = field(default_factory=lambda: {"shift": 0.0, "n_rhs": 1, "q": 2.2, "kappa": 1.0, "tol": 1e-10})
    attractor: dict = field(
        default_factory=lambda: {"T0": 4.0, "n_snap": 20, "spacing": 0.2, "eps_range": None, "n_probes": 4, "T_rate": 3.0}
    )
    suites: list = field(default_factory=list)
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        self._validate()

    # -------------------------------------------------------------- validation

    def _validate(self):
        grid = self.build_grid()
        k = grid.k
        if self.a is None:
            self.a = np.eye(k).tolist()
        a = np.asarray(self.a, dtype=float) if _is_matrix(self.a) else None
        if a is None or a.shape != (k, k):
            raise ConfigurationError("a", f"must be a {k}x{k} list of lists")
        if not np.all(np.isfinite(a)):
            raise ConfigurationError("a", "entries must be finite")
        if float(np.linalg.eigvalsh(0.5 * (a + a.T)).min()) <= 0:
            raise ConfigurationError("a", "symmetric part must be positive definite")
        if not isinstance(self.nonlinearity, dict) or "name" not in self.nonlinearity:
            raise ConfigurationError("nonlinearity.name", "missing")
        self.nonlinearity.setdefault("params", {})
        spec = builtin(self.nonlinearity["name"], self.nonlinearity["params"])
        if spec.k != k:
            raise ConfigurationError("nonlinearity.name", f"has k={spec.k}, grid has k={k}")
        n = self.nonlinearity.get("n")
        if n is not None and (not _is_int(n) or n < 1):
            raise ConfigurationError("nonlinearity.n", f"must be an integer >= 1, got {n!r}")
        for name in ("g", "u0"):
            _validate_field_spec(getattr(self, name), name, grid)
        for name, lo, hi, lo_open in (("alpha", 0.0, 2.0, True), ("beta", 0.0, 1.0, False)):
            v = getattr(self, name)
            if not _is_real(v) or v > hi or v < lo or (lo_open and v == lo):
                raise ConfigurationError(name, f"must lie in {'(' if lo_open else '['}{lo}, {hi}], got {v!r}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError("scheme", f"must be one of {list(SCHEMES)}, got {self.scheme!r}")
        for name in ("dt", "T", "r"):
            v = getattr(self, name)
            if not _is_real(v) or not v > 0:
                raise ConfigurationError(name, f"must be a positive real, got {v!r}")
        if self.seed is not None and (not _is_int(self.seed) or not 0 <= self.seed < 2**64):
            raise ConfigurationError("seed", f"must be an unsigned 64-bit integer, got {self.seed!r}")
        if not _is_int(self.n_traj) or self.n_traj < 1:
            raise ConfigurationError("n_traj", f"must be an integer >= 1, got {self.n_traj!r}")
        _validate_schedule(self.schedule, self.T)
        for key in ("n_rhs",):
            if not _is_int(self.elliptic.get(key, 1)) or self.elliptic.get(key, 1) < 1:
                raise ConfigurationError(f"elliptic.{key}", "must be an integer >= 1")
        if not _is_real(self.elliptic.get("shift", 0.0)) or self.elliptic.get("shift", 0.0) < 0:
            raise ConfigurationError("elliptic.shift", "must be a real >= 0")
        for key in ("T0", "spacing", "T_rate"):
            if not _is_real(self.attractor.get(key, 1.0)) or not self.attractor.get(key, 1.0) > 0:
                raise ConfigurationError(f"attractor.{key}", "must be a positive real")
        if not isinstance(self.suites, list):
            raise ConfigurationError("suites", "must be a list of preset names")
        if not isinstance(self.sweep, dict) or not all(isinstance(v, list) and v for v in self.sweep.values()):
            raise ConfigurationError("sweep", "must map dotted parameter paths to non-empty lists")
        for path in self.sweep:
            try:
                set_path(self.to_dict(), path, None)
            except KeyError:
                raise ConfigurationError(f"sweep.{path}", "unknown parameter path") from None

    # ------------------------------------------------------------ serialization

    def to_dict(self):
        return copy.deepcopy(asdict(self))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigurationError("config", "top level must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(unknown[0], "unknown configuration field")
        data = copy.deepcopy(data)
        # partial objects are merged into the defaults
        for f in fields(cls):
            if f.name in ("grid", "elliptic", "attractor") and isinstance(data.get(f.name), dict):
                data[f.name] = {**f.default_factory(), **data[f.name]}
        return cls(**data)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError("config", f"invalid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_json(fh.read())
        except OSError as exc:
            raise ConfigurationError("config", f"cannot read {path}: {exc.strerror}") from None

    # ------------------------------------------------------------------ builders

    def build_grid(self):
        g = self.grid
        if not isinstance(g, dict):
            raise ConfigurationError("grid", "must be an object with d, L, N, k")
        return Grid(d=g.get("d", 1), L=g.get("L", 1.0), N=g.get("N"), k=g.get("k", 1))

    def build_nonlinearity(self):
        return from_config(self.nonlinearity)

    def build_field(self, which, index=0):
        return build_field(getattr(self, which), self.build_grid(), self.seed, which, index)

    def build_evolution(self):
        grid = self.build_grid()
        return EvolutionConfig(
            grid=grid,
            a=np.asarray(self.a, dtype=float),
            f_spec=self.build_nonlinearity(),
            g=self.build_field("g"),
            alpha=float(self.alpha),
            beta=float(self.beta),
            scheme=self.scheme,
            dt=float(self.dt),
        )

    def build_schedule(self):
        s = self.schedule
        if s["kind"] == "linear":
            n = int(s.get("n", 100))
            return np.linspace(self.T / n, self.T, n)
        if s["kind"] == "log":
            return log_schedule(float(s.get("t_min", self.T * 1e-3)), self.T, int(s.get("per_decade", 20)))
        return np.array(s["times"], dtype=float)

    def needs_seed(self):
        return any(getattr(self, w).get("profile") == "random" for w in ("g", "u0"))


def _is_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_matrix(a):
    return isinstance(a, list) and all(isinstance(row, list) and all(_is_real(x) for x in row) for row in a)


def _validate_field_spec(spec, name, grid):
    if not isinstance(spec, dict):
        raise ConfigurationError(name, "must be an object with 'profile' or 'modes'")
    if "modes" in spec:
        if not isinstance(spec["modes"], list):
            raise ConfigurationError(f"{name}.modes", "must be a list")
        for i, m in enumerate(spec["modes"]):
            where = f"{name}.modes[{i}]"
            idx = m.get("index") if isinstance(m, dict) else None
            if isinstance(idx, int):
                idx = [idx] * grid.d
            if not (isinstance(idx, list) and len(idx) == grid.d and all(_is_int(j) and 1 <= j <= grid.N for j in idx)):
                raise ConfigurationError(f"{where}.index", f"must be {grid.d} integers in 1..{grid.N}")
            comp = m.get("component", 0)
            if not _is_int(comp) or not 0 <= comp < grid.k:
                raise ConfigurationError(f"{where}.component", f"must be in 0..{grid.k - 1}")
            if not _is_real(m.get("amplitude", 1.0)):
                raise ConfigurationError(f"{where}.amplitude", "must be a finite real")
        return
    profile = spec.get("profile")
    if profile not in PROFILES:
        raise ConfigurationError(f"{name}.profile", f"must be one of {list(PROFILES)}, got {profile!r}")
    if not _is_real(spec.get("amplitude", 1.0)):
        raise ConfigurationError(f"{name}.amplitude", "must be a finite real")
    if profile == "sine":
        m = spec.get("mode", 1)
        if not _is_int(m) or not 1 <= m <= grid.N:
            raise ConfigurationError(f"{name}.mode", f"must be an integer in 1..{grid.N}")


def _validate_schedule(s, T):
    if not isinstance(s, dict) or s.get("kind") not in SCHEDULE_KINDS:
        raise ConfigurationError("schedule.kind", f"must be one of {list(SCHEDULE_KINDS)}")
    if s["kind"] == "linear" and (not _is_int(s.get("n", 100)) or s.get("n", 100) < 1):
        raise ConfigurationError("schedule.n", "must be an integer >= 1")
    if s["kind"] == "log":
        t_min = s.get("t_min", T * 1e-3)
        if not _is_real(t_min) or not 0 < t_min < T:
            raise ConfigurationError("schedule.t_min", f"must lie in (0, T={T})")
    if s["kind"] == "list":
        times = s.get("times")
        if not (isinstance(times, list) and times and all(_is_real(t) for t in times)):
            raise ConfigurationError("schedule.times", "must be a non-empty list of reals")
        arr = np.array(times)
        if np.any(arr <= 0) or np.any(arr > T) or np.any(np.diff(arr) <= 0):
            raise ConfigurationError("schedule.times", "must be strictly increasing within (0, T]")


def build_field(spec, grid, seed=None, name="field", index=0):
    """Materialize a field specification on ``grid``; ``index`` selects the random stream."""
    if "modes" in spec:
        out = SpectralField.zeros(grid)
        for m in spec["modes"]:
            out = out + SpectralField.mode(grid, tuple(np.broadcast_to(m["index"], (grid.d,))), m.get("component", 0), m.get("amplitude", 1.0))
        return out
    profile = spec["profile"]
    amp = float(spec.get("amplitude", 1.0))
    if profile == "zero":
        return SpectralField.zeros(grid)
    if profile == "sine":
        # prod sin(pi m x_i / L) = (L/2)^(d/2) phi_m
        return SpectralField.mode(grid, int(spec.get("mode", 1)), amplitude=amp * (grid.L / 2.0) ** (grid.d / 2.0))
    if profile == "rough":
        return rough_field(grid, float(spec.get("exponent", 1.1)), amp)
    if seed is None:
        raise ConfigurationError("seed", f"{name} uses the random profile; a seed is required")
    # separate stream families for forcing and initial data
    offset = 0 if name == "u0" else 1 << 32
    return random_field(
        grid, stream(seed, offset + index), amplitude=amp, n_modes=int(spec.get("n_modes", 8)), decay=float(spec.get("decay", 2.0))
    )


def set_path(data, path, value):
    """Set a dotted path (``"grid.N"``) in a nested dict; raises KeyError for unknown paths."""
    keys = path.split(".")
    node = data
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise KeyError(path)
        node = node[key]
    if not isinstance(node, dict) or (keys[-1] not in node and node is data):
        raise KeyError(path)
    node[keys[-1]] = value
    return data


def expand_sweep(config):
    """One resolved configuration per point of the Cartesian product in ``config.sweep``."""
    paths = sorted(config.sweep)
    points = []
    for values in itertools.product(*(config.sweep[p] for p in paths)):
        data = config.to_dict()
        data["sweep"] = {}
        for p, v in zip(paths, values):
            set_path(data, p, v)
        points.append((dict(zip(paths, values)), ExperimentConfig.from_dict(data)))
    return points
