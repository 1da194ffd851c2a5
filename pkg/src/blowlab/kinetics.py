"""Space-free kinetic system and its boundedness certificate.

    v' = f(v),   u' = μ u^p - |m - v|^σ u^q,   v(0) = ξ, u(0) = η.

Boundedness is certified only up to a horizon and a cap. The transformed
form ``w = u^{-(q-1)}`` turns blowup of ``u`` into ``w`` reaching 0 and is
used as an independent cross-check.
"""
from __future__ import annotations

import csv
import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .scaling import ParameterError

U_KIN = 1e6
HORIZON = 50.0
DELTA_FLOOR = 1e-3


class Verdict(str, enum.Enum):
    BOUNDED = "BOUNDED"
    SUSPECT_BLOWUP = "SUSPECT_BLOWUP"
    UNCERTIFIED = "UNCERTIFIED"


@dataclass(frozen=True)
class KineticLaw:
    """Right-hand side ``f(v)`` of the v-equation at the fixed point x0.

    kind ``linear``: λv; ``logistic``: λv - h0 v^l; ``tabulated``: linear
    interpolation through ``table = ((v0, f0), (v1, f1), ...)``, held
    constant outside the table.
    """

    kind: str = "linear"
    lam: float = 1.0
    h0: float = 0.0
    l: float = 2.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in ("linear", "logistic", "tabulated"):
            raise ParameterError(f"unknown kinetic law {self.kind!r}")
        if self.kind == "logistic" and not self.l > 1:
            raise ParameterError("logistic exponent l must exceed 1")
        if self.kind == "tabulated":
            tab = np.asarray(self.table, float)
            if tab.ndim != 2 or tab.shape[1] != 2 or tab.shape[0] < 2:
                raise ParameterError("tabulated law needs at least two (v, f) pairs")
            if np.any(np.diff(tab[:, 0]) <= 0):
                raise ParameterError("tabulated v values must increase")

    def __call__(self, v):
        if self.kind == "linear":
            return self.lam * v
        if self.kind == "logistic":
            return self.lam * v - self.h0 * np.power(np.maximum(v, 0.0), self.l)
        tab = np.asarray(self.table, float)
        return np.interp(v, tab[:, 0], tab[:, 1])

    def rate(self, v) -> float:
        """Bound on ``|df/dv|`` used by the PDE step cap."""
        if self.kind == "linear":
            return abs(self.lam)
        if self.kind == "logistic":
            vp = np.maximum(np.abs(v), 0.0)
            return float(np.max(abs(self.lam) + self.h0 * self.l * np.power(vp, self.l - 1.0)))
        tab = np.asarray(self.table, float)
        return float(np.max(np.abs(np.diff(tab[:, 1]) / np.diff(tab[:, 0]))))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("linear", "logistic"):
            out["lam"] = self.lam
        if self.kind == "logistic":
            out.update(h0=self.h0, l=self.l)
        if self.kind == "tabulated":
            out["table"] = [list(map(float, row)) for row in self.table]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "KineticLaw":
        data = dict(data)
        if "table" in data:
            data["table"] = tuple(tuple(row) for row in data["table"])
        return cls(**data)


@dataclass(frozen=True)
class KineticSpec:
    """Coefficients of the kinetic system; ``m`` is the interface level
    ``v0(x0)`` and ``sigma`` the coupling exponent."""

    p: float
    q: float
    mu: float = 1.0
    m: float = 3.0
    sigma: float = 2.0
    law: KineticLaw = field(default_factory=KineticLaw)
    u_kin: float = U_KIN
    rtol: float = 1e-12
    atol: float = 1e-16

    def __post_init__(self):
        if not self.p > 1:
            raise ParameterError(f"p must exceed 1, got {self.p}")
        if self.q < self.p:
            raise ParameterError(f"q must satisfy q >= p, got q={self.q}")
        if self.mu < 0 or self.sigma < 0:
            raise ParameterError("mu and sigma must be non-negative")

    def hypotheses(self) -> dict:
        fm = float(self.law(self.m))
        return {"q_gt_p": self.q > self.p, "q_gt_1": self.q > 1,
                "sigma_nonneg": self.sigma >= 0, "f_at_m_nonzero": fm != 0.0,
                "f_at_m": fm}

    def certifiable(self) -> bool:
        h = self.hypotheses()
        return h["q_gt_p"] and h["q_gt_1"] and h["sigma_nonneg"] and h["f_at_m_nonzero"]

    def absorption(self, v):
        return np.power(np.abs(self.m - v), self.sigma)

    def rhs(self, t, y):
        v, u = y
        up = max(u, 0.0)
        return [float(self.law(v)), self.mu * up ** self.p - float(self.absorption(v)) * up ** self.q]

    def rhs_w(self, t, y):
        v, w = y
        e = (self.q - self.p) / (self.q - 1.0)
        return [float(self.law(v)),
                (self.q - 1.0) * (-self.mu * max(w, 0.0) ** e + float(self.absorption(v)))]


@dataclass
class KineticResult:
    xi: float
    eta: float
    t: np.ndarray
    v: np.ndarray
    u: np.ndarray
    verdict: Verdict
    sup_u: float
    sup_v: float
    horizon: float
    message: str = ""
    t_blow: float | None = None
    hypotheses: dict = field(default_factory=dict)
    mode: np.ndarray | None = None  # 1 where the transformed form was used

    def write_csv(self, path, digest: str = "") -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# scenario_digest={digest}\n")
            w = csv.writer(fh)
            w.writerow(["t", "v", "u"])
            for row in zip(self.t, self.v, self.u):
                w.writerow([repr(float(c)) for c in row])


def _samples(horizon, count):
    return np.linspace(0.0, horizon, count)


def _check_initial(xi, eta):
    if xi < 0 or eta < 0:
        raise ParameterError(f"initial data must be non-negative, got ({xi}, {eta})")


def integrate(xi: float, eta: float, spec: KineticSpec, horizon: float = HORIZON,
              samples: int = 2001, method: str = "DOP853") -> KineticResult:
    """Direct integration with an explicit adaptive pair. BOUNDED means
    ``sup u <= u_kin`` up to ``horizon`` without step underflow."""
    _check_initial(xi, eta)

    def cap(t, y):
        return y[1] - spec.u_kin
    cap.terminal = True
    cap.direction = 1

    sol = solve_ivp(spec.rhs, (0.0, horizon), [xi, eta], method=method, rtol=spec.rtol,
                    atol=spec.atol, dense_output=True, events=cap)
    t_end = float(sol.t[-1])
    ts = _samples(horizon, samples)
    ts = ts[ts <= t_end]
    y = sol.sol(ts) if ts.size else np.empty((2, 0))
    sup_u = max(float(np.max(sol.y[1])), float(np.max(y[1], initial=0.0)))
    sup_v = max(float(np.max(sol.y[0])), float(np.max(y[0], initial=0.0)))
    if sol.status == 1:
        verdict, msg, tb = Verdict.SUSPECT_BLOWUP, f"u reached cap {spec.u_kin:g}", t_end
    elif sol.status < 0:
        verdict, msg, tb = Verdict.SUSPECT_BLOWUP, f"integration failed: {sol.message}", t_end
    elif sup_u > spec.u_kin:
        verdict, msg, tb = Verdict.SUSPECT_BLOWUP, "sup u above cap", None
    else:
        verdict, msg, tb = Verdict.BOUNDED, "", None
    hyp = spec.hypotheses()
    if not spec.certifiable():
        verdict = Verdict.UNCERTIFIED
        msg = (msg + "; " if msg else "") + "kinetic hypotheses not met"
    return KineticResult(xi=xi, eta=eta, t=ts, v=y[0], u=y[1], verdict=verdict, sup_u=sup_u,
                         sup_v=sup_v, horizon=horizon, message=msg, t_blow=tb, hypotheses=hyp)


def integrate_w_transform(xi: float, eta: float, spec: KineticSpec, horizon: float = HORIZON,
                          samples: int = 2001, delta_floor: float = DELTA_FLOOR,
                          method: str = "DOP853") -> KineticResult:
    """Integrate ``w = u^{-(q-1)}`` while ``u >= delta_floor`` and the direct
    form below it; ``w`` reaching ``u_kin^{-(q-1)}`` flags blowup."""
    _check_initial(xi, eta)
    if not eta > 0:
        raise ParameterError("the transformed form needs eta > 0")
    k = spec.q - 1.0
    if not k > 0:
        raise ParameterError("the transformed form needs q > 1")
    w_floor_u = delta_floor ** (-k)   # w at u = delta_floor
    w_cap = spec.u_kin ** (-k)         # w at u = u_kin

    def leave_w(t, y):
        return y[1] - w_floor_u
    leave_w.terminal = True
    leave_w.direction = 1

    def blow(t, y):
        return y[1] - w_cap
    blow.terminal = True
    blow.direction = -1

    def enter_w(t, y):
        return y[1] - delta_floor
    enter_w.terminal = True
    enter_w.direction = 1

    segments = []  # (t0, t1, dense, transformed)
    t, v, u = 0.0, float(xi), float(eta)
    transformed = u >= delta_floor
    status_msg, tb = "", None
    for _ in range(10_000):
        if t >= horizon:
            break
        if transformed:
            sol = solve_ivp(spec.rhs_w, (t, horizon), [v, u ** (-k)], method=method,
                            rtol=spec.rtol, atol=spec.atol * w_cap, dense_output=True,
                            events=(leave_w, blow))
        else:
            sol = solve_ivp(spec.rhs, (t, horizon), [v, u], method=method, rtol=spec.rtol,
                            atol=spec.atol, dense_output=True, events=enter_w)
        t1 = float(sol.t[-1])
        segments.append((t, t1, sol.sol, transformed))
        if sol.status < 0:
            status_msg, tb = f"integration failed: {sol.message}", t1
            break
        v = float(sol.y[0, -1])
        last = float(sol.y[1, -1])
        if transformed and sol.status == 1 and sol.t_events[1].size:
            status_msg, tb = f"w reached the cap level (u = {spec.u_kin:g})", t1
            break
        u = last ** (-1.0 / k) if transformed else last
        t = t1
        if sol.status == 1:
            transformed = not transformed
    else:
        status_msg = "too many mode switches"

    t_end = segments[-1][1]
    ts = _samples(horizon, samples)
    ts = ts[ts <= t_end]
    vs = np.empty_like(ts)
    us = np.empty_like(ts)
    mode = np.zeros(ts.size, dtype=np.int8)
    for a, b, dense, tr in segments:
        sel = (ts >= a) & (ts <= b)
        if not sel.any():
            continue
        y = dense(ts[sel])
        vs[sel] = y[0]
        us[sel] = np.power(np.maximum(y[1], 1e-300), -1.0 / k) if tr else y[1]
        mode[sel] = 1 if tr else 0
    sup_u = float(np.max(us, initial=eta))
    if tb is not None:
        verdict = Verdict.SUSPECT_BLOWUP
        sup_u = max(sup_u, spec.u_kin)
    else:
        verdict = Verdict.BOUNDED if sup_u <= spec.u_kin else Verdict.SUSPECT_BLOWUP
    if status_msg and tb is None:
        verdict = Verdict.SUSPECT_BLOWUP
    if not spec.certifiable():
        verdict = Verdict.UNCERTIFIED
    return KineticResult(xi=xi, eta=eta, t=ts, v=vs, u=us, verdict=verdict, sup_u=sup_u,
                         sup_v=float(np.max(vs, initial=xi)), horizon=horizon,
                         message=status_msg, t_blow=tb, hypotheses=spec.hypotheses(), mode=mode)


def compare_forms(direct: KineticResult, transformed: KineticResult,
                  delta_floor: float = DELTA_FLOOR) -> float:
    """Largest relative gap in ``u`` between the two integrations over the
    common samples where ``u >= delta_floor`` in both."""
    n = min(direct.t.size, transformed.t.size)
    ud, ut = direct.u[:n], transformed.u[:n]
    sel = (ud >= delta_floor) & (ut >= delta_floor)
    if not sel.any():
        return 0.0
    return float(np.max(np.abs(ud[sel] - ut[sel]) / np.abs(ud[sel])))


@dataclass
class SweepResult:
    xi: np.ndarray
    eta: np.ndarray
    cells: list  # row-major over (xi, eta)

    @property
    def verdicts(self) -> np.ndarray:
        return np.array([c["verdict"] for c in self.cells]).reshape(self.xi.size, self.eta.size)

    @property
    def all_bounded(self) -> bool:
        return all(c["verdict"] == Verdict.BOUNDED.value for c in self.cells)

    def counts(self) -> dict:
        out = {v.value: 0 for v in Verdict}
        for c in self.cells:
            out[c["verdict"]] += 1
        return out

    def write_csv(self, path, digest: str = "") -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# scenario_digest={digest}\n")
            w = csv.writer(fh)
            w.writerow(["xi", "eta", "verdict", "sup_u", "sup_v"])
            for c in self.cells:
                w.writerow([repr(c["xi"]), repr(c["eta"]), c["verdict"],
                            repr(c["sup_u"]), repr(c["sup_v"])])


def _cell(args):
    xi, eta, spec, horizon = args
    r = integrate(xi, eta, spec, horizon, samples=2)
    return {"xi": float(xi), "eta": float(eta), "verdict": r.verdict.value,
            "sup_u": r.sup_u, "sup_v": r.sup_v, "message": r.message}


def sweep_boundedness(xi_values, eta_values, spec: KineticSpec, horizon: float = HORIZON,
                      jobs: int = 1) -> SweepResult:
    """Verdict for every ``(ξ, η)`` pair; cells are independent and run in
    ``jobs`` worker processes, joined in grid order."""
    xi = np.asarray(xi_values, float)
    eta = np.asarray(eta_values, float)
    tasks = [(float(a), float(b), spec, horizon) for a in xi for b in eta]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as ex:
            cells = list(ex.map(_cell, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        cells = [_cell(t) for t in tasks]
    return SweepResult(xi=xi, eta=eta, cells=cells)


def steady_level(spec: KineticSpec) -> float:
    """Positive root of ``μ = m^σ u^{q-p}`` (the u-equilibrium when v ≡ 0)."""
    base = spec.m ** spec.sigma
    if base == 0 or spec.q == spec.p:
        return math.inf
    return (spec.mu / base) ** (1.0 / (spec.q - spec.p))
