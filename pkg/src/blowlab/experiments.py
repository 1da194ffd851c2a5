"""Named experiments: each runs the relevant modules on a scenario, writes
its artifacts plus a deterministic ``verdict.json`` and a separate
``metadata.json`` holding timestamps and runtimes."""
from __future__ import annotations

import json
import math
import platform
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import kinetics as kin
from .lower import LowerSolution, certification_report
from .profile import certify, refinement_check
from .rds import SimResult, Status, locate_blowup_points, run
from .scenario import Scenario, ScenarioError, build, dumps, resolve_profile

EXPERIMENTS = ("thm1.2", "thm1.3", "rate", "dib", "profile-only")

PASS, FAIL, FAULT = "PASS", "FAIL", "FAULT"


class StageError(RuntimeError):
    """A stage failed; ``stage`` names it and ``fault`` marks solver faults."""

    def __init__(self, stage: str, message: str, fault: bool = False):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.fault = fault


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if hasattr(obj, "value"):
        return obj.value
    return obj


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")


def _check(value, bound, ok, note=""):
    out = {"value": value, "bound": bound, "pass": bool(ok)}
    if note:
        out["note"] = note
    return out


class Bundle:
    """Output directory plus the artifact list of one experiment."""

    def __init__(self, out_dir, scenario: Scenario, experiment: str):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.scenario = scenario
        self.experiment = experiment
        self.digest = scenario.digest
        self.artifacts: list[str] = []
        self.stage_times: dict = {}
        (self.dir / "scenario.yaml").write_text(
            f"# scenario_digest={self.digest}\n" + dumps(scenario))
        self.artifacts.append("scenario.yaml")

    def path(self, name: str) -> Path:
        if name not in self.artifacts:
            self.artifacts.append(name)
        return self.dir / name

    def json(self, name: str, data: dict) -> None:
        write_json(self.path(name), {**data, "scenario_digest": self.digest})

    def stage(self, name, fn, *args, **kwargs):
        t = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except ScenarioError:
            raise
        except Exception as exc:  # labelled and re-raised
            raise StageError(name, f"{type(exc).__name__}: {exc}") from exc
        finally:
            self.stage_times[name] = time.perf_counter() - t


def _simulate(bundle: Bundle, setup, stage="simulate") -> SimResult:
    res = bundle.stage(stage, run, setup.problem, setup.initial, setup.horizon,
                       setup.controls, setup.monitor)
    res.write_csv(bundle.path("supnorm.csv"), bundle.digest)
    summary = res.summary(bundle.digest)
    summary["diagnostics"] = {k: v for k, v in res.diagnostics.items()}
    summary["setup"] = setup.notes
    summary["final_time"] = float(res.t[-1])
    if res.rate_fit is not None:
        summary["rate_fit"] = res.rate_fit.__dict__
    if setup.tol_cmp is not None:
        summary["tol_cmp"] = setup.tol_cmp
        summary["min_cmp"] = float(np.nanmin(res.min_cmp)) if res.min_cmp is not None else None
    bundle.json("summary.json", summary)
    if res.status is Status.ABORTED:
        raise StageError(stage, f"solver aborted: {res.diagnostics.get('message')}", fault=True)
    return res


def _rate_checks(scn: Scenario, res: SimResult) -> dict:
    p = scn.data["params"]["p"]
    target = scn.data["checks"]["rate_target"]
    target = -1.0 / (p - 1.0) if target is None else target
    tol = scn.data["checks"]["rate_tol"]
    if res.rate_fit is None:
        return {"rate": _check(None, [target, tol], False,
                               res.diagnostics.get("rate_fit_error", "no fit"))}
    slope = res.rate_fit.slope
    return {"rate": _check(slope, [target, tol], abs(slope - target) <= tol * abs(target))}


def _exp_thm12(scn, bundle):
    seed = scn.seed()
    if seed is None:
        raise ScenarioError("initial_data", "thm1.2 needs a lower_solution(t0, scale) seed")
    setup = bundle.stage("build", build, scn)
    bundle.json("profile.json", setup.profile.to_dict())
    cert = bundle.stage("certify", certification_report, setup.lower)
    bundle.json("lower_certificate.json", cert)
    res = _simulate(bundle, setup)
    t0 = seed[0]
    bound = -t0 * scn.data["checks"]["t_star_bound"]
    checks = {
        "lower_solution": _check(cert["min_residual"], -cert["tol_cert"], cert["pass"]),
        "status": _check(res.status.value, "BLOWUP", res.status is Status.BLOWUP),
        "t_star": _check(res.t_star_hat, bound,
                         res.t_star_hat is not None and res.t_star_hat <= bound),
        "positivity": _check(res.diagnostics["min_value"], setup.controls.positivity_floor,
                             res.diagnostics["positivity_ok"]),
    }
    if setup.monitor is not None:
        mc = float(np.nanmin(res.min_cmp))
        checks["comparison"] = _check(mc, -setup.tol_cmp, mc >= -setup.tol_cmp)
    if setup.geometry.cauchy:
        checks["margin"] = _check(res.diagnostics["margin_max"], setup.controls.margin_ratio,
                                  res.diagnostics["margin_ok"])
    return checks, res


def _exp_rate(scn, bundle):
    setup = bundle.stage("build", build, scn)
    res = _simulate(bundle, setup)
    checks = {"status": _check(res.status.value, "BLOWUP", res.status is Status.BLOWUP)}
    checks.update(_rate_checks(scn, res))
    return checks, res


def _exp_thm13(scn, bundle):
    setup = bundle.stage("build", build, scn)
    res = _simulate(bundle, setup)
    checks = {"status": _check(res.status.value, "BLOWUP", res.status is Status.BLOWUP)}
    if res.status is Status.BLOWUP:
        rep = bundle.stage("localize", locate_blowup_points, res, scn.zero_set(),
                           scn.data["checks"]["tol_cells"])
        bundle.json("localization.json", rep.__dict__)
        checks["localization"] = _check(rep.distance_cells, scn.data["checks"]["tol_cells"],
                                        rep.passed, rep.status)
    hyp = scn.hypotheses.get("neumann_boundary_slope")
    if hyp is False:
        checks["neumann_boundary_slope"] = _check(False, True, True,
                                                  "hypothesis violated; reported only")
    return checks, res


def _exp_dib(scn, bundle, jobs=1):
    if scn.problem not in ("morgan", "system"):
        raise ScenarioError("problem", "dib needs a two-component (morgan/system) scenario")
    spec = scn.kinetic_spec()
    xi, eta = scn.kinetic_grid()
    horizon = scn.data["kinetics"]["horizon"]
    sweep = bundle.stage("kinetics", kin.sweep_boundedness, xi, eta, spec, horizon, jobs)
    sweep.write_csv(bundle.path("kinetics.csv"), bundle.digest)
    setup = bundle.stage("build", build, scn)
    res = _simulate(bundle, setup)
    counts = sweep.counts()
    checks = {
        "kinetic_hypotheses": _check(spec.hypotheses(), "certifiable", spec.certifiable()),
        "kinetics_bounded": _check(counts, f"all {len(sweep.cells)} BOUNDED", sweep.all_bounded),
        "pde_status": _check(res.status.value, "BLOWUP", res.status is Status.BLOWUP),
        "pde_t_star": _check(res.t_star_hat, setup.horizon,
                             res.t_star_hat is not None and res.t_star_hat < setup.horizon),
        "positivity": _check(res.diagnostics["min_value"], setup.controls.positivity_floor,
                             res.diagnostics["positivity_ok"]),
    }
    return checks, res


def _exp_profile(scn, bundle):
    prof = bundle.stage("profile", resolve_profile, scn)
    bundle.json("profile.json", prof.to_dict())
    flags = certify(prof)
    ref = bundle.stage("refine", refinement_check, prof)
    ls = LowerSolution(prof, t0=-1.0)
    cert = bundle.stage("certify", certification_report, ls)
    bundle.json("profile_report.json", {"certify": flags, "refinement": ref,
                                        "lower_certificate": cert,
                                        "alpha0": prof.alpha0, "r0": prof.r0,
                                        "mu0": prof.mu0, "residual_max": prof.residual_max,
                                        "residual_bound": prof.residual_bound})
    checks = {
        "certify": _check(flags, "all true", flags["ok"]),
        "refinement": _check(ref.get("r0_rel_change"), 1e-6, ref["ok"]),
        "lower_solution": _check(cert["min_residual"], -cert["tol_cert"], cert["pass"]),
    }
    return checks, None


def run_experiment(name: str, scn: Scenario, out_dir, jobs: int = 1,
                   horizon: float | None = None) -> dict:
    """Run ``name`` on ``scn``; returns the verdict dict (also written)."""
    if name not in EXPERIMENTS:
        raise ScenarioError("experiment", f"unknown experiment {name!r}; have {list(EXPERIMENTS)}")
    if horizon is not None:
        scn = scn.replace(horizon=float(horizon))
    if scn.problem == "kinetic" and name != "profile-only":
        raise ScenarioError("problem", f"{name} needs a PDE scenario")
    bundle = Bundle(out_dir, scn, name)
    started = datetime.now(timezone.utc).isoformat()
    t_start = time.perf_counter()
    verdict = {"experiment": name, "scenario": scn.name, "hypotheses": scn.hypotheses,
               "warnings": list(scn.warnings)}
    try:
        if name == "thm1.2":
            checks, _ = _exp_thm12(scn, bundle)
        elif name == "thm1.3":
            checks, _ = _exp_thm13(scn, bundle)
        elif name == "rate":
            checks, _ = _exp_rate(scn, bundle)
        elif name == "dib":
            checks, _ = _exp_dib(scn, bundle, jobs)
        else:
            checks, _ = _exp_profile(scn, bundle)
        verdict["checks"] = checks
        verdict["verdict"] = PASS if all(c["pass"] for c in checks.values()) else FAIL
    except StageError as exc:
        verdict["verdict"] = FAULT if exc.fault else FAIL
        verdict["failed_stage"] = exc.stage
        verdict["error"] = str(exc)
        verdict["fault"] = exc.fault
    verdict["artifacts"] = sorted(set(bundle.artifacts) | {"verdict.json", "metadata.json"})
    bundle.json("verdict.json", verdict)
    write_json(bundle.dir / "metadata.json", {
        "started": started, "finished": datetime.now(timezone.utc).isoformat(),
        "runtime_s": time.perf_counter() - t_start, "stage_runtime_s": bundle.stage_times,
        "python": platform.python_version(), "numpy": np.__version__,
        "scenario_digest": bundle.digest,
    })
    return _clean({**verdict, "scenario_digest": bundle.digest, "out_dir": str(bundle.dir)})
