"""Command-line front end.

    hbrownian <subcommand> [--config FILE] [flags]

Subcommands: geometry-check, simulate, moments, sandwich, positivity,
hvolume, loopflow, report. Values come from defaults, then the config file,
then explicit flags. Each run writes ``result.json`` (plus CSV curves where
relevant) and ``manifest.json`` into the output directory.

Exit status: 0 on success, 1 when a check fails (geometry-check), 2 on usage
errors, 3 on numerical failures.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import fields

import numpy as np

from . import montecarlo as mc
from .config import RunConfig, RunManifest, dumps, format_float, now_iso, output_dir
from .curvature import criterion_report
from .errors import DomainError, EstimationError, IntegrationError, NotApplicable
from .geometry import CatalogError, invariant_report, make_manifold, make_potential, make_system
from .geometry.catalog import SYSTEM_ONLY, parse_entry
from .integrator import IntegratorConfig, representation_residual, simulate_batch, write_trajectory_csv
from .loops import make_loop, mean_length_curve, write_loop_csv
from .rng import IncrementStream

COMMANDS = ("geometry-check", "simulate", "moments", "sandwich", "positivity", "hvolume", "loopflow", "report")

FLAGS = {
    "manifold": (str, "catalog manifold, e.g. sphere:2, ellipsoid:1,1,1.5, line-sincos"),
    "h": (str, "potential: zero, height[:scale[,axis]], quadratic[:scale], gaussian, sums"),
    "drift": (str, "extra drift field, e.g. rotation:1"),
    "diffusion_scale": (float, "scale of the diffusion fields"),
    "x0": (str, "start point as comma-separated coordinates (default: catalog base point)"),
    "p": (float, "moment order"),
    "dt": (float, "time step"),
    "T": (float, "horizon"),
    "grid": (float, "spacing of the recorded time grid"),
    "n_paths": (int, "number of paths (realizations for loopflow)"),
    "seed": (int, "master seed"),
    "workers": (int, "worker processes"),
    "fit_window": (float, "trailing fraction of the grid used for exponent fits"),
    "explosion_radius": (float, "ambient radius cutoff"),
    "region_size": (int, "points in the region sample"),
    "functional": (str, "functional for positivity: -h_p, h_p, h_p_lower, rho_h, const:c"),
    "resolution": (int, "Gauss-Legendre nodes per panel for hvolume"),
    "loop": (str, "initial loop: equator, latitude:z, waist, circle:r"),
    "loop_points": (int, "initial loop point count"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="hbrownian", description="Simulation laboratory for h-Brownian systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration; flags override its values")
        sp.add_argument("--out", help="output directory (env HBROWNIAN_OUT otherwise)")
        for key, (typ, text) in FLAGS.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None, help=text)
        sp.add_argument("--dump-paths", dest="dump_paths", action="store_true", default=None, help="write per-path CSV files")
        sp.add_argument("--frame-sup", dest="frame_sup", action="store_true", default=None, help="also evolve an orthonormal frame")
    return parser


def resolve_config(args):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    data["command"] = args.command
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is None or f.name == "command":
            continue
        if f.name == "x0":
            val = [float(a) for a in val.split(",")]
        data[f.name] = val
    return RunConfig.from_dict(data).validate()


# -- helpers ------------------------------------------------------------------------
def _system(cfg):
    return make_system(cfg.manifold, cfg.h, cfg.drift, cfg.diffusion_scale)


def _start(cfg, S):
    if cfg.x0 is not None:
        x0 = np.asarray(cfg.x0, dtype=float)
        if x0.shape != (S.state_dim,):
            raise DomainError(f"--x0 needs {S.state_dim} coordinates")
        return S.check_point(x0)
    return S.manifold.base_point()


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, float) else v for v in row])


class Outputs:
    def __init__(self, directory):
        self.dir = directory
        os.makedirs(directory, exist_ok=True)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.dir, name)

    def json(self, name, obj):
        with open(self.path(name), "w") as fh:
            fh.write(dumps(obj) + "\n")

    def csv(self, name, header, rows):
        _write_csv(self.path(name), header, rows)


# -- commands -----------------------------------------------------------------------
def cmd_geometry_check(cfg, out):
    if parse_entry(cfg.manifold)[0] in SYSTEM_ONLY:
        raise NotApplicable(f"{cfg.manifold} is not a catalog manifold")
    M = make_manifold(cfg.manifold)
    gen = np.random.default_rng(cfg.seed)
    pts = M.sample(max(cfg.region_size, 100), gen)
    report = invariant_report(M, pts, gen)
    rows = {k: {"worst": v, "tolerance": tol, "pass": bool(v <= tol)} for k, (v, tol) in report.items()}
    ok = all(r["pass"] for r in rows.values())
    width = max(len(k) for k in rows)
    lines = [f"{M.describe()}: {len(pts)} points"]
    lines += [f"{k:<{width}}  {'PASS' if r['pass'] else 'FAIL'}  {r['worst']:.3e} <= {r['tolerance']:.0e}" for k, r in rows.items()]
    print("\n".join(lines))
    out.json("result.json", {"kind": "GeometryCheck", "schema_version": 1, "manifold": M.describe(), "n_points": len(pts), "checks": rows, "passed": ok})
    return 0 if ok else 1, {}


def cmd_simulate(cfg, out):
    S = _system(cfg)
    x0 = _start(cfg, S)
    icfg = IntegratorConfig(dt=cfg.dt, explosion_radius=cfg.explosion_radius, p=cfg.p, functionals=True, track_hp=True)
    every, _ = mc._grid(cfg.T, cfg.dt, cfg.grid)
    v0 = np.stack([mc.initial_vector(S, x0, cfg.seed, i) for i in range(cfg.n_paths)])
    streams = [IncrementStream(cfg.seed, i, S.noise_dim, cfg.dt) for i in range(cfg.n_paths)]
    tr = simulate_batch(S, np.tile(x0, (cfg.n_paths, 1)), v0, cfg.T, icfg, streams, every)
    alive = tr.alive[-1]
    resid = [float(representation_residual(tr.path(i), cfg.p)) if tr.alive[:, i].all() else None for i in range(cfg.n_paths)]
    summary = {
        "kind": "SimulationSummary",
        "schema_version": 1,
        "system": S.describe(),
        "n_paths": cfg.n_paths,
        "n_censored": int((~alive).sum()),
        "terminal_x": tr.x[-1].tolist(),
        "terminal_vnorm": tr.vnorm[-1].tolist(),
        "representation_residual": resid,
    }
    if cfg.dump_paths:
        for i in range(cfg.n_paths):
            write_trajectory_csv(tr.path(i), out.path(f"path_{i:05d}.csv"))
    out.json("result.json", summary)
    ok = [r for r in resid if r is not None]
    print(f"{S.describe()}: {cfg.n_paths} paths, median representation residual {np.median(ok) if ok else float('nan'):.3e}")
    return 0, {"n_censored": summary["n_censored"], "n_paths": cfg.n_paths}


def _moments(cfg, S, x0):
    est = mc.estimate_moment(
        S, x0, cfg.p, cfg.T, cfg.n_paths, cfg.seed, dt=cfg.dt, grid=cfg.grid,
        fit_window=cfg.fit_window, frame_sup=cfg.frame_sup, workers=cfg.workers,
        explosion_radius=cfg.explosion_radius,
    )
    return est


def cmd_moments(cfg, out):
    S = _system(cfg)
    est = _moments(cfg, S, _start(cfg, S))
    d = est.to_dict()
    d["integrability"] = mc.integrability_diagnostic(est).to_dict()
    out.json("result.json", d)
    out.csv("moments.csv", *est.csv_rows())
    lo, hi = est.fitted_mu_ci
    print(f"p={est.p:g}: fitted mu = {est.fitted_mu:.6f}  95% CI [{lo:.6f}, {hi:.6f}]  censored {est.n_censored}/{est.n_paths}")
    for w in est.warnings:
        print("warning:", w)
    return 0, {"n_censored": est.n_censored, "n_paths": est.n_paths}


def cmd_sandwich(cfg, out):
    S = _system(cfg)
    res = mc.sandwich_check(S, _start(cfg, S), cfg.p, cfg.T, cfg.n_paths, cfg.seed, dt=cfg.dt, workers=cfg.workers)
    out.json("result.json", res.to_dict())
    print(f"lower {res.lower:.6g}  middle {res.middle:.6g} [{res.middle_ci[0]:.6g}, {res.middle_ci[1]:.6g}]  upper {res.upper:.6g}  pass={res.passed}")
    return 0, {"n_censored": res.n_censored, "n_paths": res.n_paths}


def cmd_positivity(cfg, out):
    S = _system(cfg)
    pts = S.manifold.region_sample(cfg.region_size) if cfg.x0 is None else np.atleast_2d(_start(cfg, S))
    res = mc.stochastic_positivity_rate(
        S, pts, cfg.functional, cfg.T, cfg.n_paths, cfg.seed, p=cfg.p, dt=cfg.dt, grid=cfg.grid,
        fit_window=cfg.fit_window, workers=cfg.workers,
    )
    out.json("result.json", res.to_dict())
    print(f"sup rate {res.sup_rate:.6f}  CI [{res.sup_rate_ci[0]:.6f}, {res.sup_rate_ci[1]:.6f}]  strongly positive on sample: {res.strongly_positive}")
    return 0, {}


def cmd_hvolume(cfg, out):
    if parse_entry(cfg.manifold)[0] in SYSTEM_ONLY:
        raise NotApplicable(f"{cfg.manifold} has no chart quadrature")
    res = mc.h_volume(make_manifold(cfg.manifold), make_potential(cfg.h), cfg.resolution)
    out.json("result.json", res.to_dict())
    print("infinite (diverged)" if res.diverged else f"{res.value:.10f}")
    return 0, {}


def cmd_loopflow(cfg, out):
    S = _system(cfg)
    loop0 = make_loop(S.manifold, cfg.loop, cfg.loop_points)
    curve, run = mean_length_curve(S, loop0, cfg.T, cfg.n_paths, cfg.seed, dt=cfg.dt, grid=cfg.grid, workers=cfg.workers, return_run=True)
    out.json("result.json", curve.to_dict())
    out.csv("length_curve.csv", *curve.csv_rows())
    if cfg.dump_paths:
        for r in range(cfg.n_paths):
            write_loop_csv(run, out.path(f"loop_{r:05d}.csv"), r)
    print(
        f"E length: {curve.mean_length[0]:.6f} -> {curve.mean_length[-1]:.6f}; "
        f"contractible fraction at T: {curve.contractible_fraction[-1]:.4f}; min length {curve.min_length:.6f}"
    )
    return 0, {}


def cmd_report(cfg, out):
    S = _system(cfg)
    x0 = _start(cfg, S)
    crit = criterion_report(S, S.manifold.region_sample(cfg.region_size), cfg.p)
    est = _moments(cfg, S, x0)
    sand = mc.sandwich_check(S, x0, cfg.p, min(cfg.T, 2.0), cfg.n_paths, cfg.seed, dt=cfg.dt, workers=cfg.workers)
    lo, hi = est.fitted_mu_ci
    verdict = {
        "kind": "Report",
        "schema_version": 1,
        "criteria": crit.to_dict(),
        "moments": est.to_dict(),
        "sandwich": sand.to_dict(),
        "predictions": {
            "moment_stable_predicted": crit.moment_stable_sufficient,
            "pi1_trivial_predicted": crit.pi1_vanishing_sufficient,
            "measured_mu_negative": bool(hi < 0),
            "measured_mu_ci": [lo, hi],
            "consistent": (not crit.moment_stable_sufficient) or bool(est.fitted_mu < 0),
            "rate_bracket_from_curvature": [0.5 * crit.inf_hp_lower, 0.5 * crit.sup_hp],
        },
    }
    out.json("result.json", verdict)
    print(crit.table())
    print(f"fitted mu({cfg.p:g}) = {est.fitted_mu:.6f}  CI [{lo:.6f}, {hi:.6f}]; sandwich pass={sand.passed}")
    return 0, {"n_censored": est.n_censored, "n_paths": est.n_paths}


HANDLERS = {
    "geometry-check": cmd_geometry_check,
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "sandwich": cmd_sandwich,
    "positivity": cmd_positivity,
    "hvolume": cmd_hvolume,
    "loopflow": cmd_loopflow,
    "report": cmd_report,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ValueError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    outs = Outputs(output_dir(args.out, cfg))
    manifest = RunManifest(config_hash=cfg.digest(), seed=cfg.seed, config=cfg.to_dict())
    manifest_path = os.path.join(outs.dir, "manifest.json")
    try:
        status, censoring = HANDLERS[cfg.command](cfg, outs)
        manifest.status = "ok" if status == 0 else "check-failed"
    except (CatalogError, DomainError, NotApplicable, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        status, censoring = 2, {}
        manifest.status, manifest.error = "usage-error", str(exc)
    except (IntegrationError, EstimationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc} (manifest: {manifest_path})", file=sys.stderr)
        status, censoring = 3, {}
        manifest.status, manifest.error = "numerical-failure", str(exc)
    manifest.censoring = censoring
    manifest.outputs = list(outs.files)
    manifest.finished = now_iso()
    with open(manifest_path, "w") as fh:
        fh.write(manifest.to_json() + "\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
