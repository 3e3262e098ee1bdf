"""Closed-form exponents: critical growth rates, smoothing exponents, bootstrap.

Integer and ``Fraction`` inputs are evaluated exactly; floats are read as the
decimal they print as (``0.2`` is 1/5), so results such as ``1.5`` come out
exact.  ``math.inf`` is the explicit infinity of the capped bootstrap, and
``None`` marks an entry whose hypotheses fail.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .errors import ConfigurationError

__all__ = [
    "INF",
    "ExponentTable",
    "critical_exponents",
    "smoothing_exponents",
    "smoothing_N",
    "bootstrap",
    "BootstrapResult",
    "epsilon_window",
    "elliptic_r",
    "exponent_table",
]

INF = math.inf


def _q(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite exponent input {x}")
        return Fraction(repr(x))
    return Fraction(str(x))


def critical_exponents(d, alpha=1):
    """Critical growth exponents for dimension ``d`` (None where undefined)."""
    d = _q(d)
    alpha = _q(alpha)
    out = {
        "p_crit_energy": 1 + 4 / d if d > 0 else None,
        "p_crit_h1": 1 + 4 / (d - 2) if d > 2 else None,
        "p_crit_D": 1 + 4 / (d - 4) if d > 4 else None,
        "p_crit_frac": None,
    }
    if 0 < alpha <= 1 and d > 4 * alpha:
        out["p_crit_frac"] = 1 + 4 * alpha / (d - 4 * alpha)
    return out


def smoothing_exponents(d, p1):
    """Exponents (s, q1) of the weak-to-strong smoothing argument.

    Returns ``(s, q1, residual, in_range)`` where ``residual`` is
    ``1/q1 + (2 - s)(1/2 - 1/d) - 1`` (zero by construction).
    """
    d = _q(d)
    p1 = _q(p1)
    if not (p1 > 1 and d >= 1):
        raise ConfigurationError("p1", f"need p1 > 1 and d >= 1 (d={d}, p1={p1})")
    denom = d * (p1 - 1) + 2
    s = Fraction(4) / denom
    q1 = denom / (2 * p1)
    residual = 1 / q1 + (2 - s) * (Fraction(1, 2) - 1 / d) - 1
    in_range = 0 < s < 2 and 1 < q1
    return s, q1, residual, in_range


def smoothing_N(s):
    """Least real N with 2 (N - 1) / (2 - s) >= N, i.e. N = 2 / s (for 0 < s < 2)."""
    s = _q(s)
    if not 0 < s < 2:
        raise ConfigurationError("s", f"need 0 < s < 2, got {s}")
    return 2 / s


@dataclass
class BootstrapResult:
    q0: object
    sequence: list
    verdict: str
    steps: int | None
    criterion: object
    increasing: bool

    def to_dict(self):
        return {
            "q0": float(self.q0),
            "sequence": [float(x) for x in self.sequence],
            "verdict": self.verdict,
            "steps": self.steps,
            "criterion": float(self.criterion),
            "increasing": self.increasing,
        }


def bootstrap_seed(d, r):
    d, r = _q(d), _q(r)
    if not d > r + 4:
        raise ConfigurationError("r", f"seed exponent needs d > r + 4 (d={d}, r={r})")
    return d * (r + 2) / (d - r - 4)


def bootstrap(d, p, q, kappa, r=None, max_iter=100, q0=None):
    """Iterate the L^q bootstrap until the nonlinearity lands in L^q or it stalls.

    ``q_{k+1} = s_k d / (d - s_k (2 - kappa))`` with ``s_k = min(q, q_k / p)``;
    a non-positive denominator gives infinity.  The target is met once
    ``q_k >= p q``, i.e. once ``s_k`` saturates at ``q``.  ``q0`` overrides the
    seed ``d (r + 2) / (d - r - 4)``.
    """
    d, p, q, kappa = _q(d), _q(p), _q(q), _q(kappa)
    if q0 is None:
        if r is None:
            raise ConfigurationError("r", "either r or q0 is required")
        q0 = bootstrap_seed(d, r)
    q0 = _q(q0)
    criterion = p - q0 * (2 - kappa) / d
    target = float(p * q)
    seq = [q0]
    verdict, steps = "STALLS", None
    if q0 >= p * q:
        verdict, steps = "REACHES_TARGET", 0
    qk = float(q0)
    two_k = float(2 - kappa)
    for k in range(1, max_iter + 1):
        if verdict == "REACHES_TARGET":
            break
        sk = min(float(q), qk / float(p))
        den = float(d) - sk * two_k
        nxt = INF if den <= 0 else sk * float(d) / den
        seq.append(nxt)
        if nxt >= target:
            verdict, steps = "REACHES_TARGET", k
            break
        if nxt <= qk:
            break
        qk = nxt
    increasing = len(seq) > 1 and float(seq[1]) > float(seq[0])
    return BootstrapResult(q0=q0, sequence=seq, verdict=verdict, steps=steps, criterion=criterion, increasing=increasing)


def epsilon_window(d, r, kappa):
    """Largest epsilon with 4/(d-4) + eps - (2-kappa)(r+2)/(d-r-4) < 0, clamped at 0.

    ``kappa`` may be a number or an iterable; None is returned when d <= max(4, r+4).
    """
    d, r = _q(d), _q(r)
    if not (d > 4 and d > r + 4):
        return None
    if isinstance(kappa, (list, tuple)):
        return [epsilon_window(d, r, k) for k in kappa]
    kappa = _q(kappa)
    val = (2 - kappa) * (r + 2) / (d - r - 4) - Fraction(4) / (d - 4)
    return max(val, Fraction(0))


def elliptic_r(d, q, kappa):
    """Exponent r = d (q - 2)/(d - q) and the admissibility q < d - d(d-2)/(kappa+d)."""
    d, q, kappa = _q(d), _q(q), _q(kappa)
    r = d * (q - 2) / (d - q) if d != q else None
    admissible = bool(d > 2 and q > 2 and q < d - d * (d - 2) / (kappa + d))
    return {"r": r, "admissible": admissible, "bound": d - d * (d - 2) / (kappa + d)}


def _jsonable(x):
    if x is None:
        return None
    if isinstance(x, Fraction):
        return float(x)
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return x


@dataclass
class ExponentTable:
    d: int
    alpha: float
    critical: dict
    smoothing: dict = field(default_factory=dict)
    bootstrap: dict = field(default_factory=dict)
    epsilon_window: object = None
    elliptic: dict = field(default_factory=dict)

    def to_dict(self):
        def conv(obj):
            if isinstance(obj, dict):
                return {k: conv(v) for k, v in obj.items()}
            if isinstance(obj, list):
                return [conv(v) for v in obj]
            return _jsonable(obj)

        return conv(asdict(self))

    def to_text(self):
        rows = []

        def walk(prefix, obj):
            if isinstance(obj, dict):
                for k, v in obj.items():
                    walk(f"{prefix}.{k}" if prefix else k, v)
            else:
                rows.append((prefix, "UNDEFINED" if obj is None else str(obj)))

        walk("", self.to_dict())
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def exponent_table(d, alpha=1, p1=None, p=None, q=None, kappa=None, r=None):
    """Assemble every exponent that the given inputs determine."""
    table = ExponentTable(d=d, alpha=alpha, critical=critical_exponents(d, alpha))
    if p1 is not None:
        s, q1, res, ok = smoothing_exponents(d, p1)
        table.smoothing = {"s": s, "q1": q1, "holder_residual": res, "in_range": ok, "N": smoothing_N(s)}
    if r is not None and kappa is not None:
        table.epsilon_window = epsilon_window(d, r, kappa)
        if p is not None and q is not None:
            try:
                table.bootstrap = bootstrap(d, p, q, kappa, r).to_dict()
            except ValueError as exc:
                table.bootstrap = {"error": str(exc)}
    if q is not None and kappa is not None:
        table.elliptic = elliptic_r(d, q, kappa)
    return table
