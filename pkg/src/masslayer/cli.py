"""Command-line front end: ``masslayer <command> --config run.json``.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 assumption
failure. Every command writes ``config.resolved.json``, ``summary.json``
and ``meta.json`` into the output directory; data files go to
``profiles/``, ``spectra/`` and ``traces/``.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import logging
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .asymptotics import admissible_xi_range, analyze
from .dynamics import (decay_rate_fit, displaced_initial, drift_rate, ignition_initial,
                       simulate)
from .errors import (ConfigError, DegeneratePotential, FitFailed, FoldNotFound,
                     MassLayerError, MultipleMaxwellPoints, NoMaxwellPoint, NotBistable,
                     XiOutOfRange)
from .io import ResultsDir, write_profile, write_table
from .model import fold_points, maxwell_integral_at_fold, verify_assumptions
from .spectrum import (assemble_linearization, constrained_spectrum, scaling_study,
                       scalar_principal_eigenvalue, window_thresholds)
from .stationary import (Grid, continuation_in_eps, initial_guess, layer_level,
                         newton_solve)

log = logging.getLogger("masslayer")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSUMPTION = 0, 2, 3, 4
COMMANDS = ("check", "analyze", "solve", "spectrum", "simulate", "sweep")


class AssumptionFailure(MassLayerError):
    """(A1)-(A3) do not hold for the configured model."""


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, XiOutOfRange)):
        return EXIT_CONFIG
    if isinstance(exc, (AssumptionFailure, NotBistable, FoldNotFound, NoMaxwellPoint,
                        MultipleMaxwellPoints, DegeneratePotential)):
        return EXIT_ASSUMPTION
    return EXIT_NUMERIC


def _xi(cfg):
    if cfg["xi"] is None:
        raise ConfigError("'xi' is required for this command")
    return cfg["xi"]


def _asym(cfg, model):
    return analyze(model, cfg["d"], _xi(cfg), cfg["direction"],
                   half_width=cfg["profile"]["half_width"], n_points=cfg["profile"]["n_points"],
                   tol=cfgmod.build_tolerances(cfg), select=cfg["maxwell_select"])


def _grid(cfg, eps):
    if cfg["grid_n"]:
        return Grid.uniform(cfg["grid_n"])
    return Grid.for_eps(eps, cfg["cells_per_eps"])


def _newton_opts(cfg):
    t = cfg["tolerances"]
    return {"tol": t["newton"], "max_iter": t["newton_max_iter"]}


def _solve(cfg, model, asym, eps, grid=None):
    grid = grid or _grid(cfg, eps)
    u0, c0 = initial_guess(asym, eps, grid)
    return newton_solve(u0, c0, model, eps, cfg["d"], cfg["xi"], grid, asym.direction,
                        level_fallback=asym.h_zero, **_newton_opts(cfg))


def _eps_tag(eps):
    return f"{eps:.6g}"


# each command takes (cfg, model, out) and returns its results dict

def cmd_check(cfg, model, out: ResultsDir):
    tol = cfgmod.build_tolerances(cfg)
    rep = verify_assumptions(model, cfg["check"]["n_samples"], tol)
    res = rep.to_dict()
    res["all_hold"] = rep.all_hold
    res["model"] = model.describe()
    try:
        iv = fold_points(model, tol)
        res["v_lower"], res["v_upper"] = iv.v_lower, iv.v_upper
        res["j_at_v_lower"] = maxwell_integral_at_fold(model, "lower", tol)
        res["j_at_v_upper"] = maxwell_integral_at_fold(model, "upper", tol)
    except MassLayerError as exc:
        res["messages"].append(f"fold evaluation: {exc}")
    if not rep.all_hold:
        raise AssumptionFailure("; ".join(rep.messages) or "assumptions (A1)-(A3) fail", res)
    return res


def cmd_analyze(cfg, model, out: ResultsDir):
    asym = _asym(cfg, model)
    res = asym.summary()
    lo, hi = admissible_xi_range(model, asym.v_star)
    res["xi_range"] = [lo, hi]
    q = asym.q_profile
    write_table(out.sub("profiles") / "q_profile.csv",
                (("zeta", "-"), ("q", "conc"), ("q_prime", "conc")),
                {"zeta": q.zeta, "q": q.q, "q_prime": q.q_prime})
    return res


def cmd_solve(cfg, model, out: ResultsDir):
    asym = _asym(cfg, model)
    prof = out.sub("profiles")
    if cfg["eps_list"]:
        eps_list = sorted(cfg["eps_list"], reverse=True)
        grid = _grid(cfg, min(eps_list))
        steps = continuation_in_eps(eps_list, model, cfg["d"], cfg["xi"], grid,
                                    asym.direction, asym, **_newton_opts(cfg))
        rows = [s.row() for s in steps]
        for s in steps:
            st = s.state
            write_profile(grid.x, st.u, st.v, prof / f"profile_eps{_eps_tag(st.eps)}.csv")
        keys = list(rows[0])
        write_table(prof / "continuation.csv", [(k, "-") for k in keys],
                    {k: [r[k] for r in rows] for k in keys})
        return {"asymptotics": asym.summary(), "continuation": rows}
    eps = cfg["eps"]
    state = _solve(cfg, model, asym, eps)
    write_profile(state.grid.x, state.u, state.v, prof / "profile.csv")
    return {"asymptotics": asym.summary(), "solution": state.summary(),
            "x_star_eps": asym.layer_position_eps(eps)}


def cmd_spectrum(cfg, model, out: ResultsDir):
    asym = _asym(cfg, model)
    sp = cfg["spectrum"]
    opts = {"re_min": sp["re_min"], "count": sp["count"], "method": sp["method"]}
    spec_dir = out.sub("spectra")
    if cfg["eps_list"]:
        fit = scaling_study(model, cfg["d"], cfg["xi"], cfg["eps_list"], asym.direction,
                            cfg["cells_per_eps"], asym, **opts)
        keys = list(fit.table[0])
        write_table(spec_dir / "scaling.csv", [(k, "-") for k in keys],
                    {k: [r[k] for r in fit.table] for k in keys})
        res = {"scaling": fit.to_dict(), "thresholds": window_thresholds(asym),
               "predicted_slope": asym.lambda_slope}
        if fit.failures:
            raise MassLayerError(f"{len(fit.failures)} eps value(s) failed", res)
        return res
    eps = cfg["eps"]
    state = _solve(cfg, model, asym, eps)
    op = assemble_linearization(state)
    sr = constrained_spectrum(op, **opts)
    mu0, phi0 = scalar_principal_eigenvalue(op)
    ev = sr.eigenvalues
    write_table(spec_dir / "eigenvalues.csv",
                (("re", "1/time"), ("im", "1/time"), ("mass_functional", "-")),
                {"re": ev.real, "im": ev.imag, "mass_functional": sr.mass_functionals})
    write_profile(state.grid.x, state.u, state.v, out.sub("profiles") / "profile.csv")
    res = sr.to_dict()
    res.update({
        "eps": eps,
        "n": state.grid.n,
        "lambda_over_eps": sr.critical.real / eps,
        "predicted_slope": asym.lambda_slope,
        "phi0_integral_scaled": op.grid.integrate(phi0) / math.sqrt(eps),
        "kappa_jump": asym.kappa_star * asym.jump,
        "left_annihilation": op.left_annihilation(),
        "thresholds": window_thresholds(asym),
        "solution": state.summary(),
    })
    return res


def cmd_simulate(cfg, model, out: ResultsDir):
    asym = _asym(cfg, model)
    sim = cfg["simulate"]
    eps = cfg["eps"]
    grid = _grid(cfg, eps)
    state = _solve(cfg, model, asym, eps, grid)
    kind = sim["initial"]
    if kind == "stationary":
        u0, v0 = state.u, state.v
    elif kind == "displaced":
        u0, v0 = displaced_initial(asym, eps, grid, sim["shift"])
    else:
        u0, v0 = ignition_initial(asym, eps, grid, sim["ignition_width"])
    if sim["frozen_v"]:
        v0 = np.full(grid.n, asym.v_star)
        level = asym.h_zero
    else:
        level = layer_level(model, state.v_plateau, asym.h_zero)
    trace = simulate(u0, v0, model, eps, cfg["d"], grid, sim["t_end"], dt=sim["dt"],
                     snapshot_every=sim["snapshot_every"], level=level,
                     direction=asym.direction, frozen_v=sim["frozen_v"],
                     record_every=sim["record_every"])
    write_table(out.sub("traces") / "trace.csv",
                (("t", "time"), ("mass", "conc"), ("layer_x", "-")),
                {"t": trace.times, "mass": trace.mass, "layer_x": trace.layer_x})
    prof = out.sub("profiles")
    for k, (t, u, v) in enumerate(trace.snapshots):
        write_profile(grid.x, u, v, prof / f"snapshot_{k:04d}.csv")
    res = {
        "eps": eps,
        "n": grid.n,
        "t_end": float(trace.times[-1]),
        "steps_recorded": int(trace.times.size),
        "mass_initial": float(trace.mass[0]),
        "max_mass_drift": float(np.max(np.abs(trace.mass - trace.mass[0]))),
        "max_mass_error": float(np.max(np.abs(trace.mass - cfg["xi"]))),
        "layer_x_initial": float(trace.layer_x[0]),
        "layer_x_final": float(trace.layer_x[-1]),
        "layer_x_stationary": state.layer_x,
        "level": level,
        "frozen_v": sim["frozen_v"],
    }
    disp = trace.layer_x[0] - state.layer_x
    if sim["fit_window"] is not None:
        window = tuple(sim["fit_window"])
        if sim["frozen_v"]:
            res["drift_rate"] = drift_rate(trace, disp, window)
        else:
            try:
                res["decay_fit"] = decay_rate_fit(trace, state.layer_x, window).to_dict()
            except FitFailed as exc:
                res["decay_fit"] = None
                res["decay_fit_error"] = str(exc)
    return res


RUNNERS = {
    "check": cmd_check,
    "analyze": cmd_analyze,
    "solve": cmd_solve,
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
}


def run_single(command, cfg, out_dir) -> tuple[int, dict]:
    """Run one non-sweep command with a resolved config; return (code, summary)."""
    out = ResultsDir(out_dir)
    out.write_config(cfg)
    t0 = time.time()
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    model = cfgmod.build_model(cfg)
    summary = {"command": command, "status": "ok", "results": {}}
    code = EXIT_OK
    try:
        summary["results"] = RUNNERS[command](cfg, model, out)
    except MassLayerError as exc:
        code = exit_code_for(exc)
        partial = exc.args[1] if len(exc.args) > 1 and isinstance(exc.args[1], dict) else {}
        summary.update(status="failed", results=partial,
                       error={"type": type(exc).__name__, "message": str(exc.args[0]),
                              "exit_code": code})
    except ValueError as exc:
        code = EXIT_CONFIG
        summary.update(status="failed", error={"type": "ValueError", "message": str(exc),
                                               "exit_code": code})
    out.write_summary(summary)
    out.write_meta({"started": started, "elapsed_s": time.time() - t0,
                    "python": platform.python_version(), "platform": platform.platform(),
                    "numpy": np.__version__})
    return code, summary


def _sweep_worker(args):
    command, cfg, out_dir = args
    try:
        return run_single(command, cfg, out_dir)
    except Exception as exc:  # unexpected crash in a worker is recorded, not fatal
        return EXIT_NUMERIC, {"command": command, "status": "failed", "results": {},
                              "error": {"type": type(exc).__name__, "message": str(exc),
                                        "exit_code": EXIT_NUMERIC}}


def _scalar_columns(results):
    return {k: v for k, v in results.items()
            if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool)}


def cmd_sweep(cfg, out_dir, workers=1):
    block = cfg.get("sweep")
    if not block:
        raise ConfigError("sweep command needs a 'sweep' block with 'command' and 'axes'")
    axes = sorted(block["axes"].items())
    names = [k for k, _ in axes]
    base = copy.deepcopy(cfg)
    del base["sweep"]
    jobs = []
    for i, combo in enumerate(itertools.product(*[vals for _, vals in axes])):
        run_cfg = copy.deepcopy(base)
        for name, val in zip(names, combo):
            cfgmod.set_path(run_cfg, name, val)
        raw = copy.deepcopy(run_cfg)
        run_cfg = cfgmod.resolve(raw)
        jobs.append((dict(zip(names, combo)), (block["command"], run_cfg,
                                               str(Path(out_dir) / "runs" / f"run_{i:04d}"))))
    out = ResultsDir(out_dir)
    out.write_config(cfg)
    t0 = time.time()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_worker, [j for _, j in jobs]))
    else:
        outcomes = [_sweep_worker(j) for _, j in jobs]
    index, rows = [], []
    for i, ((params, job), (code, summ)) in enumerate(zip(jobs, outcomes)):
        entry = {"key": i, "params": params, "dir": f"runs/run_{i:04d}",
                 "status": summ["status"], "exit_code": code}
        if "error" in summ:
            entry["error"] = summ["error"]
        index.append(entry)
        row = {f"{k}": v for k, v in params.items()}
        row.update(_scalar_columns(summ.get("results", {})))
        rows.append(row)
    out.write_index({"command": block["command"], "axes": dict(axes), "runs": index})
    cols = list(names)
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    write_table(out.path / "sweep.csv", [(c, "-") for c in cols],
                {c: [float(r.get(c, math.nan)) for r in rows] for c in cols})
    failed = [e for e in index if e["exit_code"] != EXIT_OK]
    summary = {"command": "sweep", "status": "failed" if failed else "ok",
               "results": {"runs": len(index), "failed": len(failed)}}
    out.write_summary(summary)
    out.write_meta({"elapsed_s": time.time() - t0, "workers": workers,
                    "python": platform.python_version()})
    code = max((e["exit_code"] for e in failed), default=EXIT_OK)
    return code, summary


def _print_summary(command, summary, stream):
    res = summary.get("results") or {}
    print(f"{command}: {summary['status']}", file=stream)
    if "error" in summary:
        print(f"  {summary['error']['type']}: {summary['error']['message']}", file=stream)
    if command == "analyze" and "verdict" in res:
        print(f"  x* = {res['x_star']:.6f}  v* = {res['v_star']:.6f}", file=stream)
        print(f"  {res['verdict']}", file=stream)
    elif command == "check" and "v_star" in res:
        print(f"  v* = {res['v_star']}  all_hold = {res.get('all_hold')}", file=stream)
    elif command == "solve" and "solution" in res:
        s = res["solution"]
        print(f"  layer_x = {s['layer_x']:.6f}  v_plateau = {s['v_plateau']:.6g}", file=stream)
    elif command == "spectrum" and "critical" in res:
        print(f"  lambda_crit = {res['critical'][0]:.6g}  (lambda/eps = {res['lambda_over_eps']:.5f})",
              file=stream)
    elif command == "spectrum" and "scaling" in res:
        print(f"  slope = {res['scaling']['slope']:.5f}  predicted = {res['predicted_slope']:.5f}",
              file=stream)
    elif command == "simulate" and "layer_x_final" in res:
        print(f"  layer_x: {res['layer_x_initial']:.6f} -> {res['layer_x_final']:.6f}"
              f"  max mass drift = {res['max_mass_drift']:.3g}", file=stream)
    elif command == "sweep":
        print(f"  runs = {res.get('runs')}  failed = {res.get('failed')}", file=stream)


def build_parser():
    p = argparse.ArgumentParser(prog="masslayer",
                                description="Transition layers in mass-conserving reaction-diffusion systems.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
        sp.add_argument("--out", metavar="DIR", default=None,
                        help="results directory (default: results/<command>)")
        sp.add_argument("--quiet", action="store_true")
        if name == "sweep":
            sp.add_argument("--workers", type=int, default=1, metavar="N")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = args.out or str(Path("results") / args.command)
    try:
        cfg = cfgmod.load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "sweep":
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            code, summary = cmd_sweep(cfg, out_dir, args.workers)
        else:
            code, summary = run_single(args.command, cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet:
        _print_summary(args.command, summary, sys.stdout)
    elif code:
        print(f"{args.command}: failed (exit {code})", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
