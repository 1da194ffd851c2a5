"""Problem parameters, critical-exponent algebra and similarity variables.

Everything here is immutable and pure; the other modules consume these
values without copying them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

#: Default cap on the spatial dimension; all solvers are 1-D or radial.
DEFAULT_MAX_DIM = 3

#: Relative tolerance used to decide ``sigma == critical_sigma``.
SIGMA_EQ_RTOL = 1e-12


class ParameterError(ValueError):
    """Raised when exponents or coefficients leave their valid domain."""


def critical_sigma(p: float, q: float) -> float:
    """Zero order of ``a(x)`` at which ``u_t = Δu + μu^p - |x|^σ u^q`` is
    invariant under ``t -> λt, x -> λ^{1/2} x, u -> λ^{-1/(p-1)} u``.

    Returns ``2 (q - p) / (p - 1)``.
    """
    if not p > 1:
        raise ParameterError(f"p must exceed 1, got {p}")
    if q < p:
        raise ParameterError(f"q must satisfy q >= p, got q={q} < p={p}")
    return 2.0 * (q - p) / (p - 1.0)


def sigma_is_critical(sigma: float, p: float, q: float) -> bool:
    sc = critical_sigma(p, q)
    return abs(sigma - sc) <= SIGMA_EQ_RTOL * max(1.0, abs(sc))


def power(u, e: float):
    """``u**e`` for non-negative ``u`` with multiplication fast paths for
    small integer exponents."""
    if e == 2:
        return u * u
    if e == 3:
        return u * u * u
    if e == 1:
        return u * 1.0
    if e == 4:
        u2 = u * u
        return u2 * u2
    if e == 5:
        u2 = u * u
        return u2 * u2 * u
    return np.power(u, e)


@dataclass(frozen=True)
class ProblemParams:
    """Exponents and coefficients of ``u_t = dΔu + μu^p - a(x)u^q``.

    ``big_m`` is the bound ``M`` in ``a(x) <= M|x - x0|^σ`` and ``x0`` the
    zero of ``a``. ``d`` is the diffusion coefficient (1 for the plain
    Laplacian).
    """

    p: float
    q: float
    sigma: float
    mu: float = 1.0
    n: int = 1
    d: float = 1.0
    big_m: float = 1.0
    x0: tuple[float, ...] = (0.0,)
    max_dim: int = field(default=DEFAULT_MAX_DIM, compare=False)

    def __post_init__(self):
        x0 = self.x0
        if np.isscalar(x0):
            x0 = (float(x0),)
        object.__setattr__(self, "x0", tuple(float(c) for c in x0))
        for name in ("p", "q", "sigma", "mu", "d", "big_m"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if isinstance(self.n, float) and not self.n.is_integer():
            raise ParameterError(f"n must be an integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

        if not self.p > 1:
            raise ParameterError(f"p must exceed 1, got {self.p}")
        if self.q < self.p:
            raise ParameterError(f"q must satisfy q >= p, got q={self.q} < p={self.p}")
        if not self.mu > 0:
            raise ParameterError(f"mu must be positive, got {self.mu}")
        if self.sigma < 0:
            raise ParameterError(f"sigma must be non-negative, got {self.sigma}")
        if not self.big_m > 0:
            raise ParameterError(f"big_m must be positive, got {self.big_m}")
        if self.d < 0:
            raise ParameterError(f"d must be non-negative, got {self.d}")
        if not 1 <= self.n <= self.max_dim:
            raise ParameterError(f"n must lie in [1, {self.max_dim}], got {self.n}")
        if len(self.x0) not in (1, self.n):
            raise ParameterError(f"x0 has {len(self.x0)} coordinates for n={self.n}")
        if len(self.x0) == 1 and self.n > 1:
            object.__setattr__(self, "x0", self.x0 * self.n)

    @property
    def sigma_crit(self) -> float:
        return critical_sigma(self.p, self.q)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.x0, dtype=float)

    def replace(self, **changes) -> "ProblemParams":
        data = self.to_dict()
        data.update(changes)
        return ProblemParams(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("max_dim")
        out["x0"] = list(self.x0)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemParams":
        data = dict(data)
        if "x0" in data and not np.isscalar(data["x0"]):
            data["x0"] = tuple(data["x0"])
        return cls(**data)


@dataclass(frozen=True)
class HypothesisReport:
    """Named pass/fail flags. ``required`` lists the flags a profile-based
    run needs; the rest are informational."""

    flags: dict
    required: tuple[str, ...] = ("sigma_threshold", "sobolev_subcritical")

    @property
    def ok(self) -> bool:
        return all(self.flags[k] for k in self.required)

    @property
    def failed(self) -> list[str]:
        return [k for k in self.required if not self.flags[k]]

    def __getitem__(self, key):
        return self.flags[key]

    def to_dict(self) -> dict:
        return {"flags": dict(self.flags), "ok": self.ok, "failed": self.failed}


def check_hypotheses(params: ProblemParams, sigma: float | None = None) -> HypothesisReport:
    """Check the exponent conditions under which the seeded lower solution exists.

    ``sigma`` overrides ``params.sigma`` when the zero order of ``a(x)``
    differs from the coupling exponent (systems where ``a = |m - v0|^σ``).

    Flags
    -----
    sigma_threshold       σ >= 2(q-p)/(p-1)
    sigma_critical        σ equals the threshold (any t0 < 0 admissible)
    sigma_supercritical   σ exceeds it (t0 restricted to [-1, 0))
    sobolev_subcritical   q < (n+2)/(n-2) when n >= 3, vacuous otherwise
    fujita_range          p <= 1 + 2/n (informational)
    """
    s = params.sigma if sigma is None else float(sigma)
    sc = params.sigma_crit
    crit = abs(s - sc) <= SIGMA_EQ_RTOL * max(1.0, abs(sc))
    n = params.n
    sobolev = True if n < 3 else params.q < (n + 2) / (n - 2)
    flags = {
        "sigma_threshold": crit or s > sc,
        "sigma_critical": crit,
        "sigma_supercritical": (not crit) and s > sc,
        "sobolev_subcritical": sobolev,
        "fujita_range": params.p <= 1.0 + 2.0 / n,
    }
    return HypothesisReport(flags=flags)


@dataclass(frozen=True)
class SimilarityPoint:
    r: float
    t: float

    def __post_init__(self):
        if self.r < 0:
            raise ParameterError(f"similarity radius must be >= 0, got {self.r}")
        if not self.t < 0:
            raise ParameterError(f"backward time must be negative, got {self.t}")


def _as_vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def to_similarity(x, t: float, x0=0.0) -> SimilarityPoint:
    """Map ``(x, t)`` with ``t < 0`` to ``r = |x - x0| / sqrt(-t)``."""
    if not t < 0:
        raise ParameterError(f"t must be negative, got {t}")
    dx = _as_vec(x) - _as_vec(x0)
    return SimilarityPoint(r=float(np.linalg.norm(dx) / math.sqrt(-t)), t=float(t))


def from_similarity(point: SimilarityPoint, x0=0.0, direction: Sequence[float] | float = 1.0):
    """Inverse of :func:`to_similarity` along a unit ``direction``."""
    e = _as_vec(direction)
    norm = np.linalg.norm(e)
    if norm == 0:
        raise ParameterError("direction must be non-zero")
    x = _as_vec(x0) + point.r * math.sqrt(-point.t) * (e / norm)
    return x if x.size > 1 else float(x[0])


def distance(x, x0, n: int) -> np.ndarray:
    """``|x - x0|`` for scalar/array input (n = 1) or arrays whose last
    axis has length ``n``."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(x0, dtype=float).reshape(-1)
    if n == 1:
        return np.abs(x - c[0])
    if x.shape[-1] != n:
        raise ParameterError(f"expected last axis of length {n}, got shape {x.shape}")
    return np.linalg.norm(x - c, axis=-1)
