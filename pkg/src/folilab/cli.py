"""Experiment driver: folilab check-geometry|simulate|lyapunov|measure-action.

Every command is a deterministic function of its config file (plus --out and
--seed overrides): CSV/JSON artifacts and PNG figures are byte-identical
across repeat runs.  Exit codes: 0 pass, 1 scientific tolerance failure,
2 usage or config failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import ergodic, figures, geometry, sde
from .config import load_config
from .errors import ConfigError, FolilabError
from .models import test_function_set

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_CONFIG = 2


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                              for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _out_dir(cfg, *parts):
    out = Path(cfg.out_dir).joinpath(*parts)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_check_geometry(cfg):
    model = cfg.model()
    n_axis = cfg.geometry_axis or (128 if model.dim == 1 else 12)
    axes = [np.linspace(0.0, per, n_axis, endpoint=False) + per / (2 * n_axis)
            for per in model.periods]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    tfs = test_function_set(model, cfg.tf_set)
    report = geometry.geometry_identities(model, grid, tfs)

    oracle_dev = {}
    if model.oracle is not None:
        h_sq = np.einsum("...m,...m->...", report.mean_curvature, report.mean_curvature)
        if model.oracle.h_norm_sq is not None:
            oracle_dev["h_norm_sq"] = float(np.abs(h_sq - model.oracle.h_norm_sq(grid)).max())
        if model.oracle.kappa_norm is not None:
            k_norm = np.linalg.norm(report.tension, axis=-1)
            oracle_dev["kappa_norm"] = float(np.abs(k_norm - model.oracle.kappa_norm(grid)).max())

    max_res = report.max_residuals()
    worst = max(list(max_res.values()) + list(oracle_dev.values()))
    passed = worst <= cfg.tol_geometry
    out = _out_dir(cfg)
    _write_json(out / "geometry_report.json", {
        "model": model.name, "params": model.params,
        "grid_points": int(grid.size // model.dim),
        "residual_max": max_res, "oracle_deviation_max": oracle_dev,
        "tolerance": cfg.tol_geometry, "pass": bool(passed),
    })
    if cfg.figures:
        figures.geometry_figure(model, axes, report.residuals,
                                out / "geometry_residuals.png")
    print(f"check-geometry {model.name}: worst residual {worst:.3e} "
          f"(tolerance {cfg.tol_geometry:g}) -> {'pass' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_TOLERANCE


def _run_dir(cfg):
    return _out_dir(cfg, f"run_{cfg.seed}")


def cmd_simulate(cfg):
    model = cfg.model()
    ensemble = sde.simulate_ensemble(model, cfg.sim_config())
    run = _run_dir(cfg)
    d = model.dim
    header = (["t"] + [f"x_{k + 1}" for k in range(d)]
              + ["logdet_full", "logdet_leaf"])
    for k in range(ensemble.n_paths):
        rows = []
        for i, t in enumerate(ensemble.t_record):
            rows.append([float(t)] + [float(v) for v in ensemble.coords[i, k]]
                        + [float(ensemble.logdet_full[i, k]),
                           float(ensemble.logdet_leaf[i, k])])
        _write_csv(run / f"path_{k}.csv", header, rows)

    hist = ergodic.occupation_measure(ensemble, cfg.grid_dims)
    centers = hist.centers()
    mass = hist.mass.ravel()
    idx = np.stack(np.unravel_index(np.arange(hist.n_cells), hist.grid_dims), axis=-1)
    occ_header = ([f"i_{k + 1}" for k in range(d)]
                  + [f"center_{k + 1}" for k in range(d)] + ["mass"])
    occ_rows = [[int(v) for v in idx[c]] + [float(v) for v in centers[c]]
                + [float(mass[c])] for c in range(hist.n_cells)]
    _write_csv(run / "occupation.csv", occ_header, occ_rows)
    if cfg.figures:
        figures.occupation_figure(hist, run / "occupation.png",
                                  title=f"{model.name}: occupation measure")
        figures.path_figure(ensemble, run / "paths.png")
    print(f"simulate {model.name}: {ensemble.n_paths} paths, T={ensemble.t_final:g} "
          f"-> {run}")
    return EXIT_OK


def cmd_lyapunov(cfg):
    model = cfg.model()
    report, ensemble, hist = ergodic.estimator_report(
        model, cfg.sim_config(), cfg.grid_dims, tf_name=cfg.tf_set)
    run = _run_dir(cfg)
    _write_json(run / "estimator_report.json", report.to_dict())
    if cfg.figures:
        figures.lyapunov_figure(ensemble, report, run / "lyapunov.png")
        figures.occupation_figure(hist, run / "occupation.png",
                                  title=f"{model.name}: occupation measure")
    gaps = ergodic.concordance_gaps(report)
    concordant = all(g <= 1.0 for g in gaps.values())
    print(f"lyapunov {model.name}: pathwise {report.lambda_pathwise['mean']:.5f} "
          f"+- {report.lambda_pathwise['stderr']:.5f}, "
          f"ergodic {report.lambda_baxendale['value']:.5f}, "
          f"curvature {report.lambda_geometric['value']:.5f} "
          f"-> {'concordant' if concordant else 'DISCORDANT'}")
    return EXIT_OK if concordant else EXIT_TOLERANCE


def cmd_measure_action(cfg):
    model = cfg.model()
    if cfg.candidate == "lebesgue":
        particles = ergodic.lebesgue_particles(model, cfg.n_particles)
    else:
        particles = ergodic.bump_particles(model, cfg.n_particles, cfg.seed,
                                           sigma=cfg.bump_sigma)
    is_invariant_candidate = cfg.candidate == "lebesgue"
    result = ergodic.measure_action_test(
        model, particles, None, cfg.t_measure, seed=cfg.seed, dt=cfg.dt,
        grid_dims=cfg.grid_dims, drift_spec=cfg.drift,
        compute_cocycle=is_invariant_candidate)
    if is_invariant_candidate:
        passed = (result.tv_fixed_point <= cfg.tol_tv_invariant
                  and result.cocycle_defect <= cfg.tol_cocycle)
        expectation = f"TV <= {cfg.tol_tv_invariant:g} (invariant candidate)"
    else:
        passed = result.tv_fixed_point >= cfg.tol_tv_control
        expectation = f"TV >= {cfg.tol_tv_control:g} (negative control)"
    run = _run_dir(cfg)
    _write_json(run / "measure_action_report.json", {
        "model": model.name, "params": model.params, "seed": cfg.seed,
        "candidate": cfg.candidate, "t": cfg.t_measure,
        "n_particles": int(np.shape(particles)[0]),
        "tv_fixed_point": result.tv_fixed_point,
        "cocycle_defect": (None if np.isnan(result.cocycle_defect)
                           else result.cocycle_defect),
        "effective_sample_fraction": result.ess,
        "weight_range": list(result.weight_range),
        "mass_ratio": result.mass_ratio,
        "thresholds": {"tv_invariant": cfg.tol_tv_invariant,
                       "tv_control": cfg.tol_tv_control,
                       "cocycle": cfg.tol_cocycle},
        "pass": bool(passed),
    })
    if cfg.figures:
        figures.measure_action_figure(result, run / "measure_action.png")
    print(f"measure-action {model.name} [{cfg.candidate}]: "
          f"TV={result.tv_fixed_point:.4f}, cocycle defect="
          f"{result.cocycle_defect:.4f}; expected {expectation} "
          f"-> {'pass' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_TOLERANCE


_COMMANDS = {
    "check-geometry": cmd_check_geometry,
    "simulate": cmd_simulate,
    "lyapunov": cmd_lyapunov,
    "measure-action": cmd_measure_action,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="folilab",
        description="Leafwise Brownian motion laboratory: geometry checks, "
                    "SDE simulation, exponent estimators, measure actions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="experiment config file")
        cmd.add_argument("--out", default=None, help="output directory override")
        cmd.add_argument("--seed", type=int, default=None, help="seed override")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, out_dir=args.out, seed=args.seed)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FolilabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
