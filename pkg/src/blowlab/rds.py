"""Method-of-lines solver for scalar and two-component reaction-diffusion
problems on intervals and radial balls, with blowup detection.

Spatial operator: second-order central differences; Neumann by reflected
ghost nodes, Dirichlet by pinned zero boundary values, and at the radial
centre the regularized ``2n (u1 - u0) / h^2``. Time stepping: an explicit
embedded pair with the step additionally capped by the diffusion limit
``safety h^2 / (2 n d)`` and the reaction limit
``c_react / (1 + sup(μ p u^{p-1} + a q u^{q-1}))``.
"""
from __future__ import annotations

import csv
import enum
import math
from functools import cached_property
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .integrators import PAIRS, attempt, error_norm
from .scaling import power


class SolverFault(RuntimeError):
    """Non-finite state that is not explained by growth."""


class StepUnderflow(RuntimeError):
    pass


class InsufficientData(ValueError):
    """A fit was requested on a series that cannot support it."""


@dataclass(frozen=True)
class Geometry:
    """Uniform grid on an interval ``[lo, hi]`` or on radii ``[0, hi]`` of an
    ``dim``-dimensional ball. ``cauchy`` marks a truncated whole-space
    problem: homogeneous Dirichlet far boundary plus a margin monitor."""

    kind: str = "interval"
    lo: float = 0.0
    hi: float = 1.0
    nodes: int = 201
    dim: int = 1
    bc: str = "neumann"
    cauchy: bool = False

    def __post_init__(self):
        if self.kind not in ("interval", "radial"):
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        if self.bc not in ("neumann", "dirichlet"):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.cauchy and self.bc != "dirichlet":
            object.__setattr__(self, "bc", "dirichlet")
        if self.kind == "radial" and self.lo != 0.0:
            raise ValueError("radial grids start at r = 0")
        if self.nodes < 3 or not self.hi > self.lo:
            raise ValueError("need at least 3 nodes on a non-empty interval")

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.nodes)

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.nodes - 1)

    @property
    def n_dim(self) -> int:
        return self.dim if self.kind == "radial" else 1

    @property
    def pinned(self) -> np.ndarray:
        mask = np.zeros(self.nodes, dtype=bool)
        if self.bc == "dirichlet":
            mask[-1] = True
            if self.kind == "interval":
                mask[0] = True
        return mask

    def refined(self, factor: int = 2) -> "Geometry":
        return replace(self, nodes=(self.nodes - 1) * factor + 1)

    def laplacian(self, u: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        h2 = self.h * self.h
        if out is None:
            out = np.empty_like(u)
        out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h2
        if self.kind == "radial":
            if self.dim > 1:
                r = self._r_inner
                out[1:-1] += (self.dim - 1) * (u[2:] - u[:-2]) / (2.0 * self.h * r)
            out[0] = 2.0 * self.dim * (u[1] - u[0]) / h2
        else:
            out[0] = 2.0 * (u[1] - u[0]) / h2
        out[-1] = 2.0 * (u[-2] - u[-1]) / h2
        return out

    @cached_property
    def _r_inner(self):
        return self.x[1:-1]

    def integrate(self, u: np.ndarray) -> float:
        """Trapezoid integral (weight ``r^{n-1}`` on radial grids)."""
        x = self.x
        f = u * x ** (self.dim - 1) if self.kind == "radial" else u
        return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(x)))


@dataclass
class Field:
    geometry: Geometry
    values: np.ndarray
    time: float = 0.0

    @property
    def u(self) -> np.ndarray:
        """The component monitored for blowup."""
        return self.values if self.values.ndim == 1 else self.values[-1]


class ScalarProblem:
    """``u_t = d Δu + μ u^p - a(x) u^q`` on a grid. ``a`` is a node array."""

    components = 1

    def __init__(self, geometry: Geometry, mu: float, p: float, q: float,
                 a: np.ndarray | float = 0.0, d: float = 1.0):
        self.geometry = geometry
        self.mu, self.p, self.q, self.d = float(mu), float(p), float(q), float(d)
        self.a = np.broadcast_to(np.asarray(a, float), (geometry.nodes,)).copy()
        self._absorb = bool(np.any(self.a != 0))
        self._pin = geometry.pinned
        self._lap = np.empty(geometry.nodes)

    @property
    def d_max(self) -> float:
        return self.d

    def rhs(self, t: float, u: np.ndarray) -> np.ndarray:
        if self.d:
            out = self.geometry.laplacian(u)
            out *= self.d
        else:
            out = np.zeros_like(u)
        if self.mu or self._absorb:
            up = np.maximum(u, 0.0)
            if self.mu:
                out += self.mu * power(up, self.p)
            if self._absorb:
                out -= self.a * power(up, self.q)
        out[self._pin] = 0.0
        return out

    def reaction_rate(self, u: np.ndarray) -> float:
        if not (self.mu or self._absorb):
            return 0.0
        up = np.maximum(u, 0.0)
        rate = self.mu * self.p * power(up, self.p - 1.0)
        if self._absorb:
            rate = rate + self.a * self.q * power(up, self.q - 1.0)
        return float(np.max(rate))


class SystemProblem:
    """Two components stacked as ``y[0] = v``, ``y[1] = u``::

        v_t = d1 Δv + f(v)
        u_t = d2 Δu + μ u^p - |m - v|^σ u^q
    """

    components = 2

    def __init__(self, geometry: Geometry, mu: float, p: float, q: float, sigma: float,
                 m: float, f: Callable, d1: float, d2: float, f_rate: Callable | None = None):
        self.geometry = geometry
        self.mu, self.p, self.q, self.sigma = float(mu), float(p), float(q), float(sigma)
        self.m, self.f, self.d1, self.d2 = float(m), f, float(d1), float(d2)
        self.f_rate = f_rate
        self._pin = geometry.pinned
        self._lap = np.empty(geometry.nodes)

    @property
    def d_max(self) -> float:
        return max(self.d1, self.d2)

    def absorption(self, v: np.ndarray) -> np.ndarray:
        return power(np.abs(self.m - v), self.sigma)

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        v, u = y[0], y[1]
        up = np.maximum(u, 0.0)
        out = np.empty_like(y)
        out[0] = self.f(v)
        if self.d1:
            out[0] += self.d1 * self.geometry.laplacian(v, self._lap)
        out[1] = self.mu * power(up, self.p) - self.absorption(v) * power(up, self.q)
        if self.d2:
            out[1] += self.d2 * self.geometry.laplacian(u, self._lap)
        out[:, self._pin] = 0.0
        return out

    def reaction_rate(self, y: np.ndarray) -> float:
        up = np.maximum(y[1], 0.0)
        rate = (self.mu * self.p * power(up, self.p - 1.0)
                + self.absorption(y[0]) * self.q * power(up, self.q - 1.0))
        fr = abs(self.f_rate(y[0])) if self.f_rate is not None else 0.0
        return float(np.max(rate + fr))


@dataclass
class SolverControls:
    pair: str = "bs32"
    rtol: float = 1e-6
    atol: float = 1e-9
    safety: float = 0.9
    c_react: float = 0.1
    u_cap: float = 1e8
    dt_floor: float = 1e-15
    sample_dt: float | None = None
    growth: float = 0.01
    fit_decades: float = 2.0
    rate_window: tuple = (1e-7, 1e-1)
    rate_resolve: float = 10.0  # fit only while T - t >= rate_resolve * h^2 / d
    margin_ratio: float = 1e-6
    positivity_floor: float = -1e-12
    max_steps: int = 20_000_000

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["rate_window"] = list(self.rate_window)
        return d


class Stepper:
    """Adaptive explicit stepping with FSAL reuse and the diffusion and
    reaction step caps."""

    def __init__(self, problem, controls: SolverControls | None = None):
        self.problem = problem
        self.controls = controls or SolverControls()
        self.tab = PAIRS[self.controls.pair]
        g = problem.geometry
        d = problem.d_max
        self.dt_diff = (self.controls.safety * g.h ** 2 / (2.0 * g.n_dim * d)) if d > 0 else math.inf
        self.h_prop = None
        self._k0 = None
        self._t_k0 = None
        self.rejected = 0

    def step_cap(self, y) -> float:
        return min(self.dt_diff, self.controls.c_react / (1.0 + self.problem.reaction_rate(y)))

    def step(self, fld: Field, t_end: float = math.inf) -> Field:
        c = self.controls
        t, y = fld.time, fld.values
        if self._k0 is None or self._t_k0 != t:
            self._k0 = self.problem.rhs(t, y)
        k0 = self._k0
        if not np.all(np.isfinite(k0)):
            raise SolverFault(f"non-finite right-hand side at t={t}")
        cap = min(self.step_cap(y), t_end - t)
        h = cap if self.h_prop is None else min(self.h_prop, cap)
        expo = 1.0 / self.tab.order
        while True:
            if h < c.dt_floor * max(1.0, abs(t)):
                raise StepUnderflow(f"step {h:.3e} below floor at t={t}")
            y_new, err, k_last = attempt(self.tab, self.problem.rhs, t, y, h, k0)
            if np.all(np.isfinite(y_new)):
                e = error_norm(err, y, y_new, c.rtol, c.atol)
            else:
                e = math.inf
            if e <= 1.0:
                break
            self.rejected += 1
            h *= max(0.1, 0.9 * e ** (-expo)) if math.isfinite(e) else 0.1
        self.h_prop = h * min(5.0, max(0.2, 0.9 * (e if e > 0 else 1e-10) ** (-expo)))
        t_new = t + h if t_end - t - h > 1e-14 * max(1.0, abs(t_end)) else t_end
        self._k0 = k_last if self.tab.fsal else None
        self._t_k0 = t_new
        return Field(fld.geometry, y_new, t_new)


def step(fld: Field, problem, controls: SolverControls | None = None) -> Field:
    """One accepted adaptive step."""
    return Stepper(problem, controls).step(fld)


class Status(enum.Enum):
    GLOBAL_UP_TO_HORIZON = "GLOBAL_UP_TO_HORIZON"
    BLOWUP = "BLOWUP"
    ABORTED = "ABORTED"


@dataclass
class RateFit:
    slope: float
    stderr: float
    samples: int
    span_decades: float


@dataclass
class SimResult:
    status: Status
    t: np.ndarray
    sup: np.ndarray
    argmax_x: np.ndarray
    geometry: Geometry
    p: float
    t_star_hat: float | None = None
    ci: float | None = None
    rate_fit: RateFit | None = None
    min_cmp: np.ndarray | None = None
    final: Field | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def supnorm_series(self):
        return self.t, self.sup, self.argmax_x

    @property
    def blowup_point_trace(self) -> np.ndarray:
        return self.argmax_x

    def summary(self, settings_digest: str = "") -> dict:
        bp = None
        if self.status is Status.BLOWUP and self.argmax_x.size:
            bp = float(self.argmax_x[-1])
        return {
            "status": self.status.value,
            "t_star_hat": self.t_star_hat,
            "ci": self.ci,
            "rate_exponent": self.rate_fit.slope if self.rate_fit else None,
            "rate_stderr": self.rate_fit.stderr if self.rate_fit else None,
            "blowup_point": bp,
            "settings_digest": settings_digest,
        }

    def write_csv(self, path, digest: str = "") -> None:
        with open(path, "w", newline="") as fh:
            if digest:
                fh.write(f"# scenario_digest={digest}\n")
            w = csv.writer(fh)
            w.writerow(["t", "sup_u", "argmax_x", "min_cmp"])
            for i in range(self.t.size):
                mc = "" if self.min_cmp is None or not np.isfinite(self.min_cmp[i]) \
                    else repr(float(self.min_cmp[i]))
                w.writerow([repr(float(self.t[i])), repr(float(self.sup[i])),
                            repr(float(self.argmax_x[i])), mc])


class ComparisonMonitor:
    """Records ``min_x (u(x, t) - ũ(x, t + t0))`` at every sample."""

    def __init__(self, lower, x0: float = 0.0, tol_cmp: float = 0.0):
        self.lower = lower
        self.x0 = float(x0)
        self.tol_cmp = float(tol_cmp)

    def __call__(self, fld: Field) -> float:
        tb = fld.time + self.lower.t0
        if tb >= 0:
            return math.nan
        g = fld.geometry
        pts = g.x if g.kind == "radial" else g.x - self.x0
        ref = self.lower.evaluate(self.lower.x0[0] + pts, tb) if g.kind == "interval" \
            else self.lower.radial(pts, tb)
        return float(np.min(fld.u - ref))


def _sup_argmax(fld: Field):
    u = fld.u
    k = int(np.argmax(u))  # lowest index wins on ties
    return float(u[k]), float(fld.geometry.x[k])


def run(problem, initial: Field, horizon: float, controls: SolverControls | None = None,
        monitor: ComparisonMonitor | None = None, log: Callable | None = None) -> SimResult:
    """Integrate until ``horizon`` or until ``sup u >= u_cap``."""
    c = controls or SolverControls()
    g = initial.geometry
    stepper = Stepper(problem, c)
    sample_dt = c.sample_dt if c.sample_dt else horizon / 1000.0
    ts, sups, args, cmps = [], [], [], []
    diag = {"min_value": math.inf, "margin_max": 0.0, "steps": 0}
    band = max(2, g.nodes // 20)

    def record(fld):
        s, xa = _sup_argmax(fld)
        ts.append(fld.time)
        sups.append(s)
        args.append(xa)
        if monitor is not None:
            cmps.append(monitor(fld))
        return s

    fld = initial
    last_t, last_s = fld.time, record(fld)
    status, message = None, ""
    while True:
        if fld.time >= horizon:
            status = Status.GLOBAL_UP_TO_HORIZON
            break
        if diag["steps"] >= c.max_steps:
            status, message = Status.ABORTED, "max_steps exceeded"
            break
        try:
            fld = stepper.step(fld, horizon)
        except StepUnderflow as exc:
            tail = np.asarray(sups[-20:])
            growing = (tail.size >= 20 and bool(np.all(np.diff(tail) > 0))
                       and sups[-1] >= 100.0 * max(sups[0], 1e-300))
            status = Status.BLOWUP if growing else Status.ABORTED
            message = str(exc)
            break
        except SolverFault as exc:
            status, message = Status.ABORTED, str(exc)
            break
        diag["steps"] += 1
        u = fld.u
        umin = float(np.min(u))
        diag["min_value"] = min(diag["min_value"], umin)
        s = float(np.max(u))
        if g.cauchy and s > 0:
            diag["margin_max"] = max(diag["margin_max"], float(np.max(u[-band:])) / s)
        if (s >= c.u_cap or fld.time - last_t >= sample_dt or s >= (1.0 + c.growth) * last_s
                or fld.time >= horizon):
            last_s = record(fld)
            last_t = fld.time
            if log is not None:
                log(fld.time, last_s)
        if s >= c.u_cap:
            status = Status.BLOWUP
            break
    diag.update(message=message, rejected=stepper.rejected,
                positivity_ok=diag["min_value"] >= c.positivity_floor,
                margin_ok=(not g.cauchy) or diag["margin_max"] <= c.margin_ratio)
    res = SimResult(status=status, t=np.array(ts), sup=np.array(sups), argmax_x=np.array(args),
                    geometry=g, p=getattr(problem, "p"), final=fld,
                    min_cmp=np.array(cmps) if monitor is not None else None, diagnostics=diag)
    if status is Status.BLOWUP:
        _finish_blowup(res, problem, c)
    return res


def extrapolate_blowup_time(t, sup, p: float):
    """Zero of the least-squares line through ``(t, sup^{-(p-1)})``.
    Returns ``(T, stderr)``."""
    t = np.asarray(t, float)
    y = np.asarray(sup, float) ** (-(p - 1.0))
    if t.size < 3:
        raise InsufficientData("need at least 3 samples to extrapolate")
    tm = t.mean()
    A = np.vstack([np.ones_like(t), t - tm]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    a, b = coef
    if not b < 0:
        raise InsufficientData("sup-norm is not growing over the window")
    T = tm - a / b
    dof = max(t.size - 2, 1)
    resid = y - A @ coef
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    grad = np.array([-1.0 / b, a / b ** 2])
    se = float(np.sqrt(max(grad @ cov @ grad, 0.0)))
    return float(T), se


def _finish_blowup(res: SimResult, problem, c: SolverControls) -> None:
    p = res.p
    t, sup = res.t, res.sup
    top = sup[-1]

    def window(lo, hi):
        sel = (sup >= lo) & (sup <= hi)
        if sel.sum() < 5:
            sel = np.zeros_like(sup, dtype=bool)
            sel[-min(20, sup.size):] = True
        return sel

    sel = window(top * 10 ** (-c.fit_decades), top)
    try:
        T, se = extrapolate_blowup_time(t[sel], sup[sel], p)
        sel2 = window(top * 10 ** (-c.fit_decades - 2), top * 1e-2)
        T2, _ = extrapolate_blowup_time(t[sel2], sup[sel2], p)
        sens = abs(T - T2)
    except InsufficientData:
        T, se, sens = math.nan, math.inf, math.inf
    t_last = float(t[-1])
    if not (T > t_last):
        # remaining lifetime of the pure-reaction ODE from the last sample
        T = t_last + top ** (-(p - 1.0)) / (problem.mu * (p - 1.0))
    res.t_star_hat = float(T)
    res.ci = float(1.96 * se + sens)
    res.diagnostics["threshold_sensitivity"] = float(sens)
    lo, hi = c.rate_window
    hi_abs = min(top * hi, resolved_ceiling(problem, c.rate_resolve))
    res.diagnostics["rate_window_abs"] = [float(top * lo), float(hi_abs)]
    sel = (sup >= top * lo) & (sup <= hi_abs) & (res.t_star_hat - t > 0)
    try:
        res.rate_fit = fit_blowup_rate(t[sel], sup[sel], res.t_star_hat)
    except InsufficientData as exc:
        res.diagnostics["rate_fit_error"] = str(exc)


def resolved_ceiling(problem, factor: float) -> float:
    """Largest sup-norm whose pure-reaction remaining lifetime still exceeds
    ``factor * h^2 / d``; beyond it the peak is a few cells wide and the
    discrete solution follows the node ODE instead of the PDE."""
    d = problem.d_max
    if d <= 0 or factor <= 0:
        return math.inf
    p, h = problem.p, problem.geometry.h
    return (d / (factor * problem.mu * (p - 1.0) * h * h)) ** (1.0 / (p - 1.0))


def fit_blowup_rate(t, sup, t_star_hat: float, min_samples: int = 20,
                    min_decades: float = 2.0) -> RateFit:
    """Least-squares slope of ``log sup`` against ``log(T - t)``."""
    t = np.asarray(t, float)
    sup = np.asarray(sup, float)
    keep = t_star_hat - t > 0
    t, sup = t[keep], sup[keep]
    if t.size < min_samples:
        raise InsufficientData(f"{t.size} samples in the fit window, need {min_samples}")
    span = math.log10(sup.max() / sup.min())
    if span < min_decades:
        raise InsufficientData(f"sup-norm spans {span:.2f} decades, need {min_decades}")
    X = np.log(t_star_hat - t)
    Y = np.log(sup)
    A = np.vstack([np.ones_like(X), X]).T
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = Y - A @ coef
    s2 = float(resid @ resid) / max(X.size - 2, 1)
    cov = s2 * np.linalg.inv(A.T @ A)
    return RateFit(slope=float(coef[1]), stderr=float(np.sqrt(cov[1, 1])),
                   samples=int(X.size), span_decades=float(span))


@dataclass
class LocalizationReport:
    status: str  # PASS | FAIL | NONCONVERGENT
    cluster_x: float | None
    nearest_zero: float | None
    distance_cells: float | None
    spread_cells: float

    @property
    def passed(self) -> bool:
        return self.status == "PASS"


def locate_blowup_points(result: SimResult, zero_set, tol_cells: float = 2.0,
                         terminal: int = 20) -> LocalizationReport:
    """Distance (in grid cells) from the terminal argmax cluster to the
    nearest zero of ``a(x)``."""
    if result.status is not Status.BLOWUP:
        raise ValueError("localization needs a BLOWUP result")
    h = result.geometry.h
    tail = np.asarray(result.argmax_x[-terminal:], float)
    spread = float((tail.max() - tail.min()) / h)
    if spread > 2.0 * tol_cells:
        return LocalizationReport("NONCONVERGENT", None, None, None, spread)
    centre = float(np.median(tail))
    zeros = np.atleast_1d(np.asarray(zero_set, float))
    if zeros.size == 0:
        return LocalizationReport("FAIL", centre, None, math.inf, spread)
    k = int(np.argmin(np.abs(zeros - centre)))
    dist = float(abs(zeros[k] - centre) / h)
    return LocalizationReport("PASS" if dist <= tol_cells else "FAIL", centre,
                              float(zeros[k]), dist, spread)
