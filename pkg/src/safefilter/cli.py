"""Command-line front end.

Exit codes: 0 success with every check passing, 2 infeasible problem or a
failed check (outputs are still written), 1 usage or configuration error,
3 numerical failure.
"""
import argparse
import itertools
import json
import logging
import os
import sys
import time

import numpy as np

from . import io
from .config import load_config, load_grid
from .ellipsoid import ellipse_points, project_onto
from .errors import (ConditioningError, ConfigError, DimensionError, DivergenceError,
                     ExtractionError, InfeasibleError, NumericalError, SolverFailure,
                     StabilityError)
from .lti import FilterRealization, build_extended_system, frequency_response, series_model
from .synthesis import analyze_reachable_set, grid_search, synthesize_filter
from .verify import (boundary_random_policy, constant_policy, full_verify,
                     greedy_attack_policy, monte_carlo_invariance, write_trace_csv)

EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_NUMERICAL = 0, 1, 2, 3
BOUNDARY_POINTS = 720
BODE_POINTS = 400
CERT_FLOOR = -1e-6


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def save_filter(path, filt, Q, extra=None):
    doc = {"A_f": filt.A_f, "B_f": filt.B_f, "C_f": filt.C_f, "D_f": filt.D_f,
           "gamma_f": np.diag(filt.gamma_f), "gamma_c": np.diag(filt.gamma_c), "Q": Q}
    doc.update(extra or {})
    io.write_json(path, doc)


def load_filter(path):
    """``(FilterRealization, Q)`` from a ``filter.json`` file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read filter file {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: "
                          f"{exc.msg}") from None
    missing = [k for k in ("A_f", "B_f", "C_f", "D_f", "Q") if k not in doc]
    if missing:
        raise ConfigError(f"filter.{missing[0]}: missing")
    m = len(doc["D_f"])
    n_f = len(doc["A_f"])

    def mat(key, rows, cols):
        M = np.array(doc[key], dtype=float).reshape(rows, cols)
        return M

    try:
        filt = FilterRealization(mat("A_f", n_f, n_f), mat("B_f", n_f, m), mat("C_f", m, n_f),
                                 mat("D_f", m, m), doc.get("gamma_f"), doc.get("gamma_c"))
        Q = np.array(doc["Q"], dtype=float)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"filter file {path}: {exc}") from None
    return filt, Q


def _filter_arg(cfg, path):
    if path is None:
        return None, None
    filt, Q = load_filter(path)
    if filt.m != cfg.plant.m:
        raise ConfigError(f"filter has {filt.m} channels, plant has {cfg.plant.m} inputs")
    n = cfg.plant.n + filt.n_f
    if Q.shape != (n, n):
        raise ConfigError(f"filter.Q: expected {n} x {n}")
    return filt, Q


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def cmd_analyze(cfg, out_dir):
    out_dir = _outdir(out_dir)
    res = analyze_reachable_set(cfg.plant, cfg.sets, cfg.alpha_analysis,
                                solver=cfg.solver["backend"], tol=cfg.solver["tol"],
                                max_iter=cfg.solver["max_iter"])
    lines = [f"alpha: {cfg.alpha_analysis!r}", f"status: {res.status}",
             f"stealthy: {str(cfg.stealthy).lower()}"]
    if not res.feasible:
        lo, hi = res.guidance
        lines += ["contained: false", f"guidance: try alpha in ({lo!r}, {hi!r})"]
        io.atomic_write(os.path.join(out_dir, "containment.txt"), "\n".join(lines) + "\n")
        return EXIT_NUMERICAL if res.status == "numerical-failure" else EXIT_FAILED
    io.matrix_csv(os.path.join(out_dir, "invariant_Q.csv"), res.Q)
    rows = []
    n = cfg.plant.n
    safe = cfg.sets.safe
    for i, j in itertools.combinations(range(n), 2):
        for label, E in (("invariant", res.projection), ("safe", safe)):
            try:
                pts = ellipse_points(project_onto(E, [i, j]), BOUNDARY_POINTS)
            except ConditioningError:
                # unbounded (rank-deficient) shadow: nothing to trace
                continue
            rows += [(label, i + 1, j + 1, k, float(p[0]), float(p[1]))
                     for k, p in enumerate(pts)]
    io.write_csv(os.path.join(out_dir, "projection_boundary.csv"),
                 ["set", "axis_i", "axis_j", "point", "x_i", "x_j"], rows)
    lines += [f"contained: {str(res.safe).lower()}",
              f"margin_min_eig: {res.diagnostics['containment_margin']!r}",
              f"trace_Q: {res.diagnostics['trace_Q']!r}",
              f"beta: {res.diagnostics['beta']!r}"]
    if "lam" in res.diagnostics:
        lines.append(f"lambda: {res.diagnostics['lam']!r}")
    io.atomic_write(os.path.join(out_dir, "containment.txt"), "\n".join(lines) + "\n")
    return EXIT_OK if res.safe else EXIT_FAILED


def _outcome_checks(out):
    d = out.diagnostics
    return {
        "containment": bool(d["containment"]),
        "hinf": bool(d["hinf_ok"]),
        "filter_hurwitz": bool(d["filter_hurwitz"]),
        "extended_hurwitz": bool(d["extended_hurwitz"]),
        "certificate": bool(min(d["certificate_min_eigs"].values()) >= CERT_FLOOR),
    }


def cmd_synthesize(cfg, out_dir):
    out_dir = _outdir(out_dir)
    scfg = cfg.synthesis_config()
    report = {"scalars": scfg.scalars(), "stealthy": cfg.stealthy}
    t0 = time.perf_counter()
    try:
        out = synthesize_filter(cfg.plant, cfg.sets, scfg, cfg.gamma_f, cfg.gamma_c)
    except InfeasibleError as exc:
        status = exc.result.status if exc.result is not None else "infeasible"
        report.update(status=status, message=str(exc),
                      timing={"total_s": time.perf_counter() - t0})
        io.write_json(os.path.join(out_dir, "report.json"), report)
        return EXIT_NUMERICAL if status == "numerical-failure" else EXIT_FAILED
    except ExtractionError as exc:
        report.update(status="extraction-failed", message=str(exc),
                      condition_number=exc.indicator)
        io.write_json(os.path.join(out_dir, "report.json"), report)
        return EXIT_NUMERICAL
    checks = _outcome_checks(out)
    d = dict(out.diagnostics)
    timing = {"solve_s": d.pop("solve_time"), "total_s": time.perf_counter() - t0,
              "iterations": d.pop("iterations")}
    report.update(status=d.pop("status"), objective=out.objective, beta=out.beta,
                  checks=checks, diagnostics=d, timing=timing,
                  X=out.X, Y=out.Y, Ah=out.Ah, Bh=out.Bh, Ch=out.Ch, Dh=out.Dh)
    save_filter(os.path.join(out_dir, "filter.json"), out.filter, out.Q,
                {"X": out.X, "objective": out.objective, "beta": out.beta})
    io.matrix_csv(os.path.join(out_dir, "Q.csv"), out.Q)
    io.write_json(os.path.join(out_dir, "report.json"), report)
    return EXIT_OK if all(checks.values()) else EXIT_FAILED


def cmd_verify(cfg, filter_file, out_dir):
    out_dir = _outdir(out_dir)
    filt, Q = _filter_arg(cfg, filter_file)
    t0 = time.perf_counter()
    rep = full_verify(cfg.plant, filt, Q, cfg.sets, cfg.scalars["gamma"],
                      t_end=cfg.sim["t_end"], dt=cfg.sim["dt"], solver=cfg.solver["backend"])
    doc = {"passed": rep.passed, "checks": rep.checks(),
           "invariance_feasible": rep.invariance_feasible, "containment": rep.containment,
           "hinf_value": rep.hinf_value, "gamma": rep.gamma, "max_level": rep.max_level,
           "first_escape_time": rep.first_escape_time,
           "residuals": {**rep.residuals, "invariance_margins":
                         {repr(k): v for k, v in rep.residuals["invariance_margins"].items()}},
           "timing": {"total_s": time.perf_counter() - t0}}
    io.write_json(os.path.join(out_dir, "report.json"), doc)
    return EXIT_OK if rep.passed else EXIT_FAILED


def _policy(kind, ext, Q, cfg):
    if kind == "greedy":
        return greedy_attack_policy(ext, Q, cfg.sets.input)
    if kind == "random":
        return boundary_random_policy(cfg.sets.input, seed=cfg.sim["seed"])
    return constant_policy(cfg.sets.input)


def cmd_simulate(cfg, filter_file, out_dir, policy="greedy"):
    """Attack simulation from the origin; without a filter the plant alone
    is driven and ``V`` uses the analysis ellipsoid."""
    out_dir = _outdir(out_dir)
    filt, Q = _filter_arg(cfg, filter_file)
    if filt is None:
        filt = FilterRealization.passthrough(cfg.plant.m)
        res = analyze_reachable_set(cfg.plant, cfg.sets, cfg.alpha_analysis,
                                    solver=cfg.solver["backend"], tol=cfg.solver["tol"])
        if not res.feasible:
            return EXIT_NUMERICAL if res.status == "numerical-failure" else EXIT_FAILED
        Q = res.Q
    ext = build_extended_system(cfg.plant, filt)
    pol = _policy(policy, ext, Q, cfg)
    mc = monte_carlo_invariance(ext, Q, pol, t_end=cfg.sim["t_end"], dt=cfg.sim["dt"],
                                seed=cfg.sim["seed"], sets=cfg.sets, n_plant=cfg.plant.n,
                                keep_trajectories=True)
    if not mc.trajectories:
        return EXIT_NUMERICAL
    write_trace_csv(os.path.join(out_dir, "trace.csv"), mc.trajectories[0], Q, cfg.sets,
                    cfg.plant.n)
    return EXIT_OK if mc.first_escape_time is None else EXIT_FAILED


def _bode_rows(sys, omegas):
    G = frequency_response(sys, omegas)
    mag = np.full(G.shape, -np.inf)
    nz = np.abs(G) > 0
    mag[nz] = 20.0 * np.log10(np.abs(G[nz]))
    phase = np.degrees(np.unwrap(np.angle(G), axis=0))
    header, cols = [], []
    for i in range(G.shape[1]):
        for j in range(G.shape[2]):
            header += [f"ch_{i + 1}_{j + 1}_mag_db", f"ch_{i + 1}_{j + 1}_phase_deg"]
            cols += [mag[:, i, j], phase[:, i, j]]
    rows = [[float(w)] + [float(c[k]) for c in cols] for k, w in enumerate(omegas)]
    return ["omega"] + header, rows


def cmd_bode(cfg, filter_file, out_dir):
    """``bode.csv``: input to plant state, through the filter when one is
    given. With a filter, ``filter_bode.csv`` holds the filter alone."""
    out_dir = _outdir(out_dir)
    filt, _ = _filter_arg(cfg, filter_file)
    omegas = np.logspace(-1, 4, BODE_POINTS)
    header, rows = _bode_rows(series_model(cfg.plant, filt), omegas)
    io.write_csv(os.path.join(out_dir, "bode.csv"), header, rows)
    if filt is not None:
        header, rows = _bode_rows(filt.as_model(), omegas)
        io.write_csv(os.path.join(out_dir, "filter_bode.csv"), header, rows)
    return EXIT_OK


def cmd_sweep(cfg, grid_file, out_dir, workers=None):
    out_dir = _outdir(out_dir)
    grids = load_grid(grid_file)
    res = grid_search(cfg.plant, cfg.sets, cfg.synthesis_config(), grids, cfg.gamma_f,
                      cfg.gamma_c, max_workers=workers)
    header = list(res.columns)
    rows = [[r[c] for c in header] for r in res.table]
    io.write_csv(os.path.join(out_dir, "sweep_table.csv"), header, rows)
    if res.best is None:
        return EXIT_FAILED
    save_filter(os.path.join(out_dir, "best_filter.json"), res.best.filter, res.best.Q,
                {"X": res.best.X, "objective": res.best.objective, "beta": res.best.beta,
                 "grid_index": res.best_index, "scalars": res.best.config.scalars()})
    return EXIT_OK


def build_parser():
    p = _Parser(prog="safefilter", description="Safety filters against actuator attacks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_, filter_mode=None):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config")
        if filter_mode == "required":
            s.add_argument("filter_file")
        elif filter_mode == "optional":
            s.add_argument("--filter", dest="filter_file", default=None)
        s.add_argument("-o", "--out", default=".", help="output directory")
        return s

    add("analyze", "invariant ellipsoid of the unfiltered plant")
    add("synthesize", "filter synthesis")
    add("verify", "post-hoc checks of a filter file", "required")
    s = add("simulate", "attack simulation trace", "optional")
    s.add_argument("--policy", choices=("greedy", "random", "constant"), default="greedy")
    add("bode", "frequency responses", "optional")
    s = add("sweep", "grid search over the synthesis scalars")
    s.add_argument("grid_file")
    s.add_argument("--workers", type=int, default=None)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.out)
        if args.command == "synthesize":
            return cmd_synthesize(cfg, args.out)
        if args.command == "verify":
            return cmd_verify(cfg, args.filter_file, args.out)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.filter_file, args.out, args.policy)
        if args.command == "bode":
            return cmd_bode(cfg, args.filter_file, args.out)
        return cmd_sweep(cfg, args.grid_file, args.out, args.workers)
    except (ConfigError, DimensionError, StabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, SolverFailure, ConditioningError, DivergenceError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
