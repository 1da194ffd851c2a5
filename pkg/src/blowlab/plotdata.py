"""Turn an experiment bundle into plot-ready CSV files plus a manifest."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

VERDICT_CODES = {"BOUNDED": 0, "SUSPECT_BLOWUP": 1, "UNCERTIFIED": 2}


def _read_csv(path):
    """Rows of a CSV written by this package, plus the embedded digest."""
    digest = ""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if lines and lines[0].startswith("# scenario_digest="):
        digest = lines[0].split("=", 1)[1]
        lines = lines[1:]
    return list(csv.DictReader(lines)), digest


def _write(path, header, rows, digest):
    with open(path, "w", newline="") as fh:
        fh.write(f"# scenario_digest={digest}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else repr(float(v)) if isinstance(v, (float, np.floating))
                        else v for v in r])


def emit_plot_data(bundle_dir, out_dir=None) -> dict:
    """Write figure CSVs for whatever the bundle contains and a
    ``manifest.json`` listing them. Missing inputs simply yield fewer
    figures; an empty bundle yields an empty manifest."""
    src = Path(bundle_dir)
    out = Path(out_dir) if out_dir else src / "plots"
    out.mkdir(parents=True, exist_ok=True)
    figures = []
    digest = ""
    summary = {}
    if (src / "summary.json").is_file():
        summary = json.loads((src / "summary.json").read_text())
        digest = summary.get("scenario_digest", "")

    sup_file = src / "supnorm.csv"
    if sup_file.is_file():
        rows, digest = _read_csv(sup_file)
        t = np.array([float(r["t"]) for r in rows])
        sup = np.array([float(r["sup_u"]) for r in rows])
        arg = np.array([float(r["argmax_x"]) for r in rows])
        _write(out / "fig_supnorm.csv", ["t", "sup_u"], zip(t, sup), digest)
        figures.append({"file": "fig_supnorm.csv", "kind": "supnorm",
                        "x": "t", "y": "sup_u", "yscale": "log"})
        _write(out / "fig_argmax.csv", ["t", "argmax_x"], zip(t, arg), digest)
        figures.append({"file": "fig_argmax.csv", "kind": "argmax_trace",
                        "x": "t", "y": "argmax_x"})
        t_star = summary.get("t_star_hat")
        if summary.get("status") == "BLOWUP" and t_star is not None:
            keep = t_star - t > 0
            lt = np.log10(t_star - t[keep])
            ls = np.log10(sup[keep])
            fit = summary.get("rate_fit")
            fitted = [None] * lt.size
            if fit is not None:
                # line through the window centroid with the fitted slope
                lo, hi = summary.get("diagnostics", {}).get("rate_window_abs", [0, math.inf])
                sel = (sup[keep] >= lo) & (sup[keep] <= hi)
                if sel.any():
                    b = float(np.mean(ls[sel] - fit["slope"] * lt[sel]))
                    fitted = (b + fit["slope"] * lt).tolist()
            _write(out / "fig_rate.csv", ["log10_tstar_minus_t", "log10_sup_u", "log10_fit"],
                   zip(lt, ls, fitted), digest)
            figures.append({"file": "fig_rate.csv", "kind": "rate_loglog",
                            "x": "log10_tstar_minus_t", "y": ["log10_sup_u", "log10_fit"],
                            "slope": fit["slope"] if fit else None})

    kin_file = src / "kinetics.csv"
    if kin_file.is_file():
        rows, digest = _read_csv(kin_file)
        _write(out / "fig_kinetics_heatmap.csv", ["xi", "eta", "verdict_code"],
               ((float(r["xi"]), float(r["eta"]), VERDICT_CODES[r["verdict"]]) for r in rows),
               digest)
        figures.append({"file": "fig_kinetics_heatmap.csv", "kind": "heatmap",
                        "x": "xi", "y": "eta", "value": "verdict_code",
                        "codes": VERDICT_CODES})

    manifest = {"scenario_digest": digest, "figures": figures, "count": len(figures)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
