"""Command-line entry point.

Exit codes: 0 pass, 1 fail, 2 configuration error, 3 solver fault.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import experiments as ex
from . import kinetics as kin
from .plotdata import emit_plot_data
from .profile import HypothesisError, SearchControls, SearchExhausted, certify, find_profile, \
    refinement_check
from .rds import Status, run
from .scaling import ParameterError, ProblemParams
from .scenario import ScenarioError, build, load_preset, load_scenario, preset_names

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_FAULT = 0, 1, 2, 3

log = logging.getLogger("blowlab")


def open_scenario(ref: str, strict: bool | None = None):
    """``ref`` is a YAML path or the name of a shipped preset."""
    path = Path(ref)
    if path.is_file():
        return load_scenario(path, strict=strict)
    if ref in preset_names():
        return load_preset(ref, strict=strict)
    raise ScenarioError(ref, f"no such file or preset (presets: {', '.join(preset_names())})")


def _strict(args):
    return True if args.strict else None


def cmd_profile_find(args) -> int:
    if args.scenario:
        scn = open_scenario(args.scenario, _strict(args))
        pr = scn.data["params"]
        template = ProblemParams(p=pr["p"], q=pr["q"], sigma=pr["sigma"], n=pr["n"])
    else:
        template = ProblemParams(p=args.p, q=args.q, sigma=args.sigma, n=args.n)
    prof = find_profile(template, SearchControls(r_max=args.r_max))
    flags = certify(prof)
    ref = refinement_check(prof)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prof.save(out / "profile.json")
    report = {"params": template.to_dict(), "mu0": prof.mu0, "alpha0": prof.alpha0,
              "r0": prof.r0, "wp_r0": float(prof.derivs[-1]),
              "residual_max": prof.residual_max, "residual_bound": prof.residual_bound,
              "certify": flags, "refinement": ref}
    ex.write_json(out / "profile_report.json", report)
    print(json.dumps(ex._clean({k: report[k] for k in ("mu0", "alpha0", "r0", "wp_r0")})))
    return EXIT_PASS if flags["ok"] and ref["ok"] else EXIT_FAIL


def cmd_simulate(args) -> int:
    scn = open_scenario(args.scenario, _strict(args))
    if args.horizon:
        scn = scn.replace(horizon=args.horizon)
    setup = build(scn)
    res = run(setup.problem, setup.initial, setup.horizon, setup.controls, setup.monitor,
              log=(lambda t, s: log.debug("t=%.6g sup=%.6g", t, s)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.write_csv(out / "supnorm.csv", scn.digest)
    summary = res.summary(scn.digest)
    summary["diagnostics"] = res.diagnostics
    if res.rate_fit is not None:
        summary["rate_fit"] = res.rate_fit.__dict__
    ex.write_json(out / "summary.json", summary)
    print(json.dumps(ex._clean(res.summary(scn.digest))))
    return EXIT_FAULT if res.status is Status.ABORTED else EXIT_PASS


def cmd_kinetics_sweep(args) -> int:
    scn = open_scenario(args.scenario, _strict(args))
    spec = scn.kinetic_spec()
    xi, eta = scn.kinetic_grid()
    horizon = args.horizon or scn.data["kinetics"]["horizon"]
    sweep = kin.sweep_boundedness(xi, eta, spec, horizon, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sweep.write_csv(out / "kinetics.csv", scn.digest)
    print(json.dumps({"counts": sweep.counts(), "all_bounded": sweep.all_bounded}))
    return EXIT_PASS if sweep.all_bounded else EXIT_FAIL


def _one_experiment(job):
    name, ref, out, jobs, horizon, strict = job
    scn = open_scenario(ref, strict)
    return ex.run_experiment(name, scn, out, jobs=jobs, horizon=horizon)


def _verdict_code(v) -> int:
    return {ex.PASS: EXIT_PASS, ex.FAIL: EXIT_FAIL, ex.FAULT: EXIT_FAULT}[v["verdict"]]


def cmd_experiment(args) -> int:
    refs = args.scenario or []
    if not refs:
        raise ScenarioError("--scenario", "at least one scenario is required")
    out = Path(args.out)
    if len(refs) == 1:
        jobs = [(args.name, refs[0], out, args.jobs, args.horizon, _strict(args))]
    else:
        # one isolated output directory per scenario
        jobs = [(args.name, r, out / Path(r).stem, 1, args.horizon, _strict(args)) for r in refs]
    if len(jobs) > 1 and args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            verdicts = list(pool.map(_one_experiment, jobs))
    else:
        verdicts = [_one_experiment(j) for j in jobs]
    for v in verdicts:
        line = {k: v.get(k) for k in ("experiment", "scenario", "verdict", "out_dir")}
        if "error" in v:
            line["error"] = v["error"]
        print(json.dumps(line))
    return max(_verdict_code(v) for v in verdicts)


def cmd_plotdata(args) -> int:
    manifest = emit_plot_data(args.bundle, args.out)
    print(json.dumps({"figures": [f["file"] for f in manifest["figures"]]}))
    return EXIT_PASS


def cmd_presets(args) -> int:
    for name in preset_names():
        print(name)
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--strict", action="store_true",
                        help="treat hypothesis failures as configuration errors")
    common.add_argument("--seedless", action="store_true",
                        help="no-op: every run is deterministic and uses no random seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="blowlab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    prof = sub.add_parser("profile", help="self-similar profile tools")
    psub = prof.add_subparsers(dest="action", required=True)
    pf = psub.add_parser("find", parents=[common], help="shoot for a certified profile")
    pf.add_argument("--scenario")
    pf.add_argument("--p", type=float, default=2.0)
    pf.add_argument("--q", type=float, default=3.0)
    pf.add_argument("--sigma", type=float, default=2.0)
    pf.add_argument("--n", type=int, default=1)
    pf.add_argument("--r-max", type=float, default=20.0)
    pf.add_argument("--out", default="out/profile")
    pf.set_defaults(func=cmd_profile_find)

    sim = sub.add_parser("simulate", parents=[common], help="run the PDE of a scenario")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--out", default="out/simulate")
    sim.add_argument("--horizon", type=float)
    sim.set_defaults(func=cmd_simulate)

    k = sub.add_parser("kinetics", help="kinetic-system tools")
    ksub = k.add_subparsers(dest="action", required=True)
    ks = ksub.add_parser("sweep", parents=[common], help="boundedness verdict grid")
    ks.add_argument("--scenario", required=True)
    ks.add_argument("--out", default="out/kinetics")
    ks.add_argument("--jobs", type=int, default=1)
    ks.add_argument("--horizon", type=float)
    ks.set_defaults(func=cmd_kinetics_sweep)

    e = sub.add_parser("experiment", parents=[common], help="run a named experiment")
    e.add_argument("name", choices=ex.EXPERIMENTS)
    e.add_argument("--scenario", action="append",
                   help="YAML path or preset name; repeat to run several")
    e.add_argument("--out", default="out/experiment")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--horizon", type=float)
    e.set_defaults(func=cmd_experiment)

    pd = sub.add_parser("plotdata", parents=[common], help="emit plot-ready files")
    pd.add_argument("bundle")
    pd.add_argument("--out")
    pd.set_defaults(func=cmd_plotdata)

    pr = sub.add_parser("presets", help="list shipped scenarios")
    pr.set_defaults(func=cmd_presets, verbose=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, ParameterError, HypothesisError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SearchExhausted as exc:
        print(f"profile search failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ex.StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_FAULT if exc.fault else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
