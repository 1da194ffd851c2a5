"""Radial backward self-similar profile by shooting.

The profile ``w0`` solves

    w'' + ((n-1)/r - r/2) w' - w/(p-1) + μ w^p - r^σ w^q = 0,   w'(0) = 0,

on ``[0, r0]`` with ``w0(r0) = 0`` and ``w0 > 0`` inside. The height
``alpha0 = w0(0)`` and the coefficient ``μ`` are searched for; ``r0`` is
whatever the first certified crossing produces. Beyond ``r0`` the profile
is extended by zero.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .scaling import ProblemParams, ParameterError, check_hypotheses

DEGENERATE_SLOPE = 1e-8
OVERFLOW_GUARD = 1e8


class HypothesisError(ParameterError):
    """The exponent conditions needed for a profile-based run fail."""


class SearchExhausted(RuntimeError):
    """No certified crossing within the search budget."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def radial_rhs(r: float, w: float, wp: float, params: ProblemParams) -> float:
    """Second derivative of the profile from the radial ODE."""
    if not r > 0:
        raise ValueError(f"radial_rhs needs r > 0, got {r}")
    if w < 0:
        raise ValueError(f"radial_rhs needs w >= 0, got {w}")
    return _rhs(r, w, wp, params)


def _rhs(r, w, wp, params):
    p, q, s, mu, n = params.p, params.q, params.sigma, params.mu, params.n
    return (-((n - 1) / r - 0.5 * r) * wp + w / (p - 1.0)
            - mu * w ** p + r ** s * w ** q)


def _center_laplacian(alpha0: float, params: ProblemParams) -> float:
    # Δw(0); the r^σ w^q term only survives at the origin when σ = 0
    c = alpha0 / (params.p - 1.0) - params.mu * alpha0 ** params.p
    if params.sigma == 0:
        c += alpha0 ** params.q
    return c


def expand_at_origin(alpha0: float, params: ProblemParams, eps: float):
    """Second-order series start ``w = alpha0 + c r^2/(2n)`` evaluated at
    ``r = eps``. Returns ``(w(eps), w'(eps))``."""
    if not alpha0 > 0:
        raise ValueError(f"alpha0 must be positive, got {alpha0}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    c = _center_laplacian(alpha0, params)
    n = params.n
    return alpha0 + c * eps * eps / (2 * n), c * eps / n


class ShotKind(enum.Enum):
    CROSSED = "CROSSED"
    POSITIVE_EXIT = "POSITIVE_EXIT"
    BLEW_UP = "BLEW_UP"
    DEGENERATE = "DEGENERATE"
    STEP_FAILURE = "STEP_FAILURE"


@dataclass
class ShotOutcome:
    kind: ShotKind
    alpha0: float
    r_end: float
    w_end: float
    wp_end: float
    max_step: float = 0.0
    message: str = ""
    sol: object = field(default=None, repr=False)

    @property
    def r0(self) -> float:
        if self.kind is not ShotKind.CROSSED:
            raise AttributeError(f"no crossing radius for a {self.kind.value} shot")
        return self.r_end


def shoot(alpha0: float, params: ProblemParams, r_max: float = 20.0, *,
          rtol: float = 1e-11, atol: float = 1e-13, eps: float | None = None,
          overflow: float = OVERFLOW_GUARD, max_step: float = np.inf,
          dense: bool = False) -> ShotOutcome:
    """Integrate the radial ODE outward from the series start at ``eps``.

    The crossing radius is located by the integrator's event root finder,
    which resolves ``r`` to a few ulps.
    """
    if not alpha0 > 0:
        raise ValueError(f"alpha0 must be positive, got {alpha0}")
    if not r_max > 0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    if eps is None:
        eps = 1e-6 * max(1.0, r_max)
    y0 = expand_at_origin(alpha0, params, eps)

    def fun(r, y):
        w = y[0] if y[0] > 0 else 0.0
        return (y[1], _rhs(r, w, y[1], params))

    def crossed(r, y):
        return y[0]
    crossed.terminal = True
    crossed.direction = -1

    def overflowed(r, y):
        return y[0] - overflow
    overflowed.terminal = True
    overflowed.direction = 1

    sol = solve_ivp(fun, (eps, r_max), y0, method="DOP853", rtol=rtol, atol=atol,
                    events=(crossed, overflowed), dense_output=dense,
                    max_step=max_step)
    steps = np.diff(sol.t)
    hmax = float(steps.max()) if steps.size else 0.0
    if sol.status == -1 or not np.all(np.isfinite(sol.y[:, -1])):
        return ShotOutcome(ShotKind.STEP_FAILURE, alpha0, float(sol.t[-1]),
                           float(sol.y[0, -1]), float(sol.y[1, -1]), hmax, sol.message)
    if sol.t_events[0].size:
        r0 = float(sol.t_events[0][0])
        wp0 = float(sol.y_events[0][0][1])
        kind = ShotKind.CROSSED if abs(wp0) > DEGENERATE_SLOPE else ShotKind.DEGENERATE
        return ShotOutcome(kind, alpha0, r0, 0.0, wp0, hmax, sol=sol if dense else None)
    if sol.t_events[1].size:
        return ShotOutcome(ShotKind.BLEW_UP, alpha0, float(sol.t_events[1][0]),
                           overflow, float(sol.y_events[1][0][1]), hmax)
    return ShotOutcome(ShotKind.POSITIVE_EXIT, alpha0, float(sol.t[-1]),
                       float(sol.y[0, -1]), float(sol.y[1, -1]), hmax)


@dataclass(frozen=True)
class SearchControls:
    mu_min: float = 0.1
    mu_max: float = 1000.0
    mu_per_decade: int = 4
    alpha_min: float = 1e-2
    alpha_max: float = 1e3
    alpha_per_decade: int = 4
    margin: float = 2.0
    bisect_rtol: float = 1e-9
    r_max: float = 20.0
    grid_points: int = 2001
    rtol: float = 1e-11
    atol: float = 1e-13
    residual_rtol: float = 1e-6

    def mu_grid(self) -> np.ndarray:
        return _log_grid(self.mu_min, self.mu_max, self.mu_per_decade)

    def alpha_grid(self) -> np.ndarray:
        return _log_grid(self.alpha_min, self.alpha_max, self.alpha_per_decade)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _log_grid(lo, hi, per_decade):
    k = int(round(math.log10(hi / lo) * per_decade))
    return np.logspace(math.log10(lo), math.log10(hi), k + 1)


@dataclass(frozen=True, eq=False)
class Profile:
    """Tabulated profile on ``0 = grid[0] < ... < grid[-1] = r0``.
    ``params.mu`` is the coefficient the profile was built with (μ0)."""

    params: ProblemParams
    alpha0: float
    r0: float
    grid: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    residual_max: float = float("nan")
    tolerances: dict = field(default_factory=dict)
    search: dict = field(default_factory=dict)

    @property
    def mu0(self) -> float:
        return self.params.mu

    @property
    def weight(self) -> np.ndarray:
        return np.exp(-self.grid ** 2 / 4.0)

    @property
    def residual_bound(self) -> float:
        return self.tolerances.get("residual_rtol", 1e-6) * (1.0 + self.alpha0 ** self.params.q)

    def weighted_norm(self) -> float:
        """``(∫ w^2 ρ r^{n-1} dr)^{1/2}`` over the table."""
        g = self.grid
        f = self.values ** 2 * self.weight * g ** (self.params.n - 1)
        return float(np.sqrt(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(g))))

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "alpha0": self.alpha0,
            "mu0": self.mu0,
            "r0": self.r0,
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
            "derivs": self.derivs.tolist(),
            "residual_max": self.residual_max,
            "tolerances": dict(self.tolerances),
            "search": dict(self.search),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Profile":
        params = ProblemParams.from_dict(data["params"])
        if not math.isclose(params.mu, data["mu0"], rel_tol=0, abs_tol=0):
            params = params.replace(mu=data["mu0"])
        return cls(params=params, alpha0=float(data["alpha0"]), r0=float(data["r0"]),
                   grid=np.asarray(data["grid"], float),
                   values=np.asarray(data["values"], float),
                   derivs=np.asarray(data["derivs"], float),
                   residual_max=float(data["residual_max"]),
                   tolerances=dict(data.get("tolerances", {})),
                   search=dict(data.get("search", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Profile":
        return cls.from_dict(json.loads(Path(path).read_text()))


def tabulate(outcome: ShotOutcome, params: ProblemParams, grid_points: int,
             tolerances: dict | None = None) -> Profile:
    """Sample a dense CROSSED shot on a uniform grid over ``[0, r0]``."""
    if outcome.kind is not ShotKind.CROSSED or outcome.sol is None:
        raise ValueError("tabulate needs a CROSSED shot integrated with dense=True")
    r0 = outcome.r0
    grid = np.linspace(0.0, r0, grid_points)
    y = outcome.sol.sol(grid[1:-1])
    values = np.concatenate(([outcome.alpha0], y[0], [0.0]))
    derivs = np.concatenate(([0.0], y[1], [outcome.wp_end]))
    prof = Profile(params=params, alpha0=outcome.alpha0, r0=r0, grid=grid,
                   values=values, derivs=derivs, tolerances=dict(tolerances or {}))
    object.__setattr__(prof, "residual_max", ode_residual(prof))
    return prof


def ode_residual(profile: Profile) -> float:
    """Max over interior nodes of the ODE residual with ``w''`` taken as a
    centered difference of the tabulated ``w'``."""
    g, w, wp = profile.grid, profile.values, profile.derivs
    wpp = (wp[2:] - wp[:-2]) / (g[2:] - g[:-2])
    r = g[1:-1]
    p = profile.params
    rest = (-((p.n - 1) / r - 0.5 * r) * wp[1:-1] + w[1:-1] / (p.p - 1.0)
            - p.mu * np.maximum(w[1:-1], 0) ** p.p
            + r ** p.sigma * np.maximum(w[1:-1], 0) ** p.q)
    return float(np.max(np.abs(wpp - rest)))


def certify(profile: Profile) -> dict:
    """Check the Profile invariants; returns named flags."""
    w, wp = profile.values, profile.derivs
    flags = {
        "head": w[0] == profile.alpha0 and wp[0] == 0.0,
        "tail_zero": w[-1] == 0.0,
        "interior_positive": bool(np.all(w[:-1] > 0)),
        "outflow": wp[-1] < -DEGENERATE_SLOPE,
        "residual": profile.residual_max <= profile.residual_bound,
        "grid_increasing": bool(np.all(np.diff(profile.grid) > 0)),
    }
    flags["ok"] = all(flags.values())
    return flags


def find_profile(params_template: ProblemParams, search: SearchControls | None = None) -> Profile:
    """Scan μ on a log grid (ascending); for the first μ whose α0-scan
    produces a crossing, bisect to the onset height of crossing and take
    ``alpha0 = margin * onset``. Falls back to the crossing scan heights in
    order if that candidate does not certify."""
    search = search or SearchControls()
    report = check_hypotheses(params_template)
    if not report.ok:
        raise HypothesisError(f"hypotheses fail: {', '.join(report.failed)}")

    shot_kw = dict(r_max=search.r_max, rtol=search.rtol, atol=search.atol)
    tolerances = {"residual_rtol": search.residual_rtol, "shot_rtol": search.rtol,
                  "shot_atol": search.atol, "degenerate_slope": DEGENERATE_SLOPE,
                  "r_max": search.r_max}
    trace = []
    alphas = search.alpha_grid()
    for mu in search.mu_grid():
        params = params_template.replace(mu=float(mu))
        kinds = []
        for a in alphas:
            kind = shoot(float(a), params, **shot_kw).kind
            kinds.append(kind)
            trace.append((float(mu), float(a), kind.value))
        hits = [i for i, k in enumerate(kinds) if k is ShotKind.CROSSED]
        if not hits:
            continue
        i = hits[0]
        if i > 0:
            lo, hi = float(alphas[i - 1]), float(alphas[i])
            while hi / lo - 1.0 > search.bisect_rtol:
                mid = math.sqrt(lo * hi)
                if shoot(mid, params, **shot_kw).kind is ShotKind.CROSSED:
                    hi = mid
                else:
                    lo = mid
            onset = hi
        else:
            onset = float(alphas[0])
        candidates = [search.margin * onset] + [float(alphas[j]) for j in hits]
        for a in candidates:
            out = shoot(a, params, dense=True, **shot_kw)
            trace.append((float(mu), a, out.kind.value))
            if out.kind is not ShotKind.CROSSED:
                continue
            prof = tabulate(out, params, search.grid_points, tolerances)
            if certify(prof)["ok"]:
                object.__setattr__(prof, "search", {
                    "alpha_onset": onset, "margin": search.margin,
                    "shots": len(trace), "max_step": out.max_step})
                return prof
    raise SearchExhausted(
        f"no certified crossing for mu in [{search.mu_min}, {search.mu_max}] and "
        f"alpha0 in [{search.alpha_min}, {search.alpha_max}]", trace)


def refinement_check(profile: Profile, factor: float = 2.0) -> dict:
    """Re-shoot with every step at most ``1/factor`` of the largest step of
    the original shot and a tighter tolerance; compare ``r0`` and the
    table."""
    tol = profile.tolerances
    rtol = tol.get("shot_rtol", 1e-11)
    hmax = profile.search.get("max_step") or profile.r0 / 20
    out = shoot(profile.alpha0, profile.params, r_max=tol.get("r_max", 20.0),
                rtol=rtol / 2 ** 8, atol=tol.get("shot_atol", 1e-13) / 2 ** 8,
                max_step=hmax / factor, dense=True)
    if out.kind is not ShotKind.CROSSED:
        return {"kind": out.kind.value, "ok": False}
    rel = abs(out.r0 - profile.r0) / profile.r0
    fine = tabulate(out, profile.params, len(profile.grid), tol)
    return {"kind": out.kind.value, "r0": out.r0, "r0_rel_change": rel,
            "max_value_change": float(np.max(np.abs(fine.values - profile.values))),
            "ok": rel <= 1e-6}


class ExtendedProfile:
    """Profile extended by zero beyond ``r0``.

    ``w`` is a cubic Hermite interpolant of (values, derivs); ``w'`` is a
    cubic Hermite interpolant of (derivs, w'') with ``w''`` at the nodes
    taken from the ODE, so ``w''`` off the nodes is the derivative of that
    interpolant.
    """

    def __init__(self, profile: Profile):
        self.profile = profile
        self.r0 = profile.r0
        g, w, wp = profile.grid, profile.values, profile.derivs
        p = profile.params
        wpp = np.empty_like(g)
        wpp[0] = _center_laplacian(profile.alpha0, p) / p.n
        wpp[1:] = _rhs(g[1:], np.maximum(w[1:], 0), wp[1:], p)
        self._w = CubicHermiteSpline(g, w, wp)
        self._wp = CubicHermiteSpline(g, wp, wpp)
        self._wpp = self._wp.derivative()

    def _split(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("profile evaluated at negative radius")
        return r, r <= self.r0

    def __call__(self, r):
        r, _ = self._split(r)
        inside = r < self.r0  # exactly zero from r0 on
        out = np.zeros_like(r)
        out[inside] = np.maximum(self._w(r[inside]), 0.0)
        return out if out.ndim else float(out)

    def derivative(self, r, order: int = 1):
        """Derivative of order 1 or 2; at ``r0`` the left derivative."""
        r, inside = self._split(r)
        out = np.zeros_like(r)
        f = {1: self._wp, 2: self._wpp}[order]
        out[inside] = f(r[inside])
        return out if out.ndim else float(out)


def extend(profile: Profile) -> ExtendedProfile:
    return ExtendedProfile(profile)
