"""Blowing-up lower solution built from a certified profile.

    ũ(x, t) = M^{-1/(q-1)} (-t)^{-1/(p-1)} w(|x - x0| / sqrt(-t)),   t0 <= t < 0.

Its support is the ball of radius ``r0 sqrt(-t)`` about ``x0``; inside it
ũ is a classical solution of the PDE (σ critical) or a strict lower
solution (σ supercritical, ``t >= -1``), and across the moving interface
the normal-derivative jump is ``w0'(r0) < 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .profile import Profile, ExtendedProfile
from .scaling import ProblemParams, ParameterError, distance, sigma_is_critical

#: Multiplier on the profile certificate for residual checks.
CERT_FACTOR = 10.0


def admissible_t0(params: ProblemParams, sigma: float | None = None) -> tuple[float, float]:
    """Interval of anchor times: ``(-inf, 0)`` at the critical σ, ``[-1, 0)``
    above it."""
    s = params.sigma if sigma is None else sigma
    sc = params.sigma_crit
    if sigma_is_critical(s, params.p, params.q):
        return (-math.inf, 0.0)
    if s > sc:
        return (-1.0, 0.0)
    raise ParameterError(f"sigma={s} below the critical value {sc}")


@dataclass(frozen=True, eq=False)
class LowerSolution:
    profile: Profile
    t0: float = -1.0
    big_m: float = 1.0
    x0: tuple = (0.0,)
    _w: ExtendedProfile = field(init=False, repr=False)

    def __post_init__(self):
        p = self.profile.params
        lo, _ = admissible_t0(p)
        if not (lo <= self.t0 < 0):
            raise ParameterError(f"t0={self.t0} outside the admissible interval [{lo}, 0)")
        if not self.big_m > 0:
            raise ParameterError("big_m must be positive")
        x0 = np.atleast_1d(np.asarray(self.x0, float))
        if x0.size == 1 and p.n > 1:
            x0 = np.repeat(x0, p.n)
        object.__setattr__(self, "x0", tuple(x0.tolist()))
        object.__setattr__(self, "_w", ExtendedProfile(self.profile))

    @property
    def params(self) -> ProblemParams:
        return self.profile.params

    @property
    def amplitude(self) -> float:
        """``M^{-1/(q-1)}``"""
        return self.big_m ** (-1.0 / (self.params.q - 1.0))

    @property
    def mu_required(self) -> float:
        """Smallest admissible reaction coefficient ``M^{(p-1)/(q-1)} μ0``."""
        p = self.params
        return self.big_m ** ((p.p - 1.0) / (p.q - 1.0)) * self.profile.mu0

    def support_radius(self, t: float) -> float:
        return self.profile.r0 * math.sqrt(-t)

    def sup(self, t: float) -> float:
        self._check_time(t)
        return self.amplitude * (-t) ** (-1.0 / (self.params.p - 1.0)) * self.profile.alpha0

    def _check_time(self, t):
        t = np.asarray(t, float)
        if np.any(t >= 0) or np.any(t < self.t0):
            raise ParameterError(f"time outside [t0={self.t0}, 0)")

    def evaluate(self, x, t):
        """ũ at points ``x`` (scalars for n = 1, trailing axis n otherwise)
        and backward time(s) ``t``."""
        self._check_time(t)
        s = -np.asarray(t, float)
        rad = distance(x, self.x0, self.params.n)
        beta = 1.0 / (self.params.p - 1.0)
        out = self.amplitude * s ** (-beta) * self._w(rad / np.sqrt(s))
        return out if np.ndim(out) else float(out)

    def radial(self, r, t):
        """ũ as a function of the distance ``r`` to ``x0``."""
        self._check_time(t)
        s = -float(t)
        beta = 1.0 / (self.params.p - 1.0)
        return self.amplitude * s ** (-beta) * self._w(np.asarray(r, float) / math.sqrt(s))

    def terms(self, x, t):
        """Physical-space pieces ``(ũ, ũ_t, Δũ)`` from the chain rule."""
        self._check_time(t)
        s = -np.asarray(t, float)
        rad = distance(x, self.x0, self.params.n)
        n = self.params.n
        beta = 1.0 / (self.params.p - 1.0)
        r = rad / np.sqrt(s)
        w = self._w(r)
        w1 = self._w.derivative(r, 1)
        w2 = self._w.derivative(r, 2)
        amp = self.amplitude
        u = amp * s ** (-beta) * w
        u_t = amp * s ** (-beta - 1.0) * (beta * w + 0.5 * r * w1)
        u_rr = amp * s ** (-beta - 1.0) * w2
        if n > 1:
            with np.errstate(divide="ignore", invalid="ignore"):
                drift = np.where(rad > 0, (n - 1) * amp * s ** (-beta - 0.5) * w1 / rad,
                                 (n - 1) * amp * s ** (-beta - 1.0) * w2)
            lap = u_rr + drift
        else:
            lap = u_rr
        return u, u_t, lap


@dataclass
class ResidualReport:
    """Signed lower-solution slack ``Δũ + μũ^p - M|x-x0|^σ ũ^q - ũ_t``
    (non-negative for a lower solution). ``scaled`` divides by
    ``M^{-1/(q-1)} (-t)^{-p/(p-1)}`` so all samples share the profile's
    units; ``tol_cert`` is in those units."""

    min_raw: float
    min_scaled: float
    max_abs_scaled: float
    tol_cert: float
    samples: int
    worst_point: tuple

    @property
    def passed(self) -> bool:
        return self.min_scaled >= -self.tol_cert


def interior_residual(ls: LowerSolution, x, t, mu: float | None = None) -> ResidualReport:
    """Evaluate the PDE slack of ũ at space-time samples strictly inside the
    support cone. ``mu`` defaults to ``M^{(p-1)/(q-1)} μ0``."""
    p = ls.params
    mu = ls.mu_required if mu is None else float(mu)
    if mu < ls.mu_required * (1 - 1e-14):
        raise ParameterError(f"mu={mu} below the required {ls.mu_required}")
    x = np.asarray(x, float)
    t = np.asarray(t, float)
    ls._check_time(t)
    rad = distance(x, ls.x0, p.n)
    if np.any(rad >= ls.profile.r0 * np.sqrt(-t)):
        raise ParameterError("samples must lie strictly inside the support cone")
    u, u_t, lap = ls.terms(x, t)
    slack = lap + mu * u ** p.p - ls.big_m * rad ** p.sigma * u ** p.q - u_t
    scale = ls.amplitude * (-t) ** (-p.p / (p.p - 1.0))
    scaled = slack / scale
    k = int(np.argmin(scaled))
    xk = x.reshape(-1, p.n)[k] if p.n > 1 else np.ravel(x)[k]
    return ResidualReport(
        min_raw=float(np.min(slack)), min_scaled=float(scaled.ravel()[k]),
        max_abs_scaled=float(np.max(np.abs(scaled))),
        tol_cert=CERT_FACTOR * ls.profile.residual_max, samples=int(scaled.size),
        worst_point=(np.atleast_1d(xk).tolist(), float(np.ravel(t)[k])))


@dataclass
class JumpReport:
    t: float
    inner: float
    outer: float = 0.0

    @property
    def total(self) -> float:
        return self.inner + self.outer

    @property
    def negative(self) -> bool:
        return self.total < 0


def jump_condition(ls: LowerSolution, t: float) -> JumpReport:
    """Sum of outward normal derivatives of ũ on both sides of the
    interface ``|x - x0| = r0 sqrt(-t)``; the outer piece is identically 0."""
    ls._check_time(t)
    beta = 1.0 / (ls.params.p - 1.0)
    inner = ls.amplitude * (-t) ** (-beta - 0.5) * ls.profile.derivs[-1]
    return JumpReport(t=float(t), inner=float(inner))


def sample_cone(ls: LowerSolution, count: int, rng: np.random.Generator,
                s_min: float = 1e-3, edge: float = 1e-9):
    """Random points strictly inside the support cone. Backward time is
    log-uniform in ``-t ∈ [s_min·|t0|, |t0|]`` (``|t0|`` capped at 1e3)."""
    p = ls.params
    s_hi = min(-ls.t0, 1e3)
    s = np.exp(rng.uniform(math.log(s_min * s_hi), math.log(s_hi), count))
    frac = rng.uniform(0.0, 1.0 - edge, count) ** (1.0 / p.n)
    rad = frac * ls.profile.r0 * np.sqrt(s)
    c = np.asarray(ls.x0)
    if p.n == 1:
        sign = rng.choice([-1.0, 1.0], count)
        x = c[0] + sign * rad
    else:
        e = rng.normal(size=(count, p.n))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        x = c + rad[:, None] * e
    return x, -s


def certification_report(ls: LowerSolution, samples: int = 10_000, jumps: int = 100,
                         seed: int = 0, mu: float | None = None) -> dict:
    """JSON-ready certificate ``{t0, M, min_residual, samples, jump_values, pass}``."""
    rng = np.random.default_rng(seed)
    x, t = sample_cone(ls, samples, rng)
    res = interior_residual(ls, x, t, mu=mu)
    s_hi = min(-ls.t0, 1e3)
    times = -np.geomspace(s_hi, 1e-3 * s_hi, jumps)
    jv = [jump_condition(ls, float(tt)).total for tt in times]
    return {
        "t0": ls.t0, "M": ls.big_m, "min_residual": res.min_scaled,
        "tol_cert": res.tol_cert, "samples": res.samples, "jump_times": times.tolist(),
        "jump_values": jv, "pass": bool(res.passed and all(v < 0 for v in jv)),
    }
