"""Command-line entry point: ``solve``, ``sweep``, ``validate`` and ``pattern``.

Exit codes: 0 success, 2 invalid configuration, 3 solver non-convergence,
4 failed oracle validation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import ConfigError, NumericalError
from .scenario import orientation_average

__all__ = ["CSV_COLUMNS", "run_experiment", "validate", "pattern_table", "main"]

log = logging.getLogger("espar_cr")

CSV_COLUMNS = ["P_bar_dB", "I_bar_dB", "n_b", "M", "m_PU", "m_SR", "C_LB", "C_LB_omni",
               "Lambda", "P_out", "P_e", "T_sen_opt", "converged"]

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VALIDATION = 0, 2, 3, 4


def _fmt(v) -> str:
    if v is None:
        return "inf"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not serializable: {type(o)}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _fixed_point(cfg: ExperimentConfig, scenario, omni_scenario) -> dict:
    from .metrics import outage_probability, symbol_error_probability

    con = cfg.constraints()
    phi_SR = cfg.phi_SR()
    pol, rep = scenario.solve(con, cfg.n_b, phi_SR, cfg.m_PU_star, cfg.N_fixed)
    prob = scenario.problem(rep.N, phi_SR, cfg.m_PU_star)
    row = {"C_LB": rep.C_LB,
           "P_out": outage_probability(pol, prob.dist),
           "P_e": symbol_error_probability(pol, prob.dist, prob.alpha0, prob.beta0, cfg.rho,
                                           prob.sigma_w2, prob.sigma_p2),
           "T_sen_opt": rep.T_sen, "converged": bool(rep.converged)}
    C_omni = math.nan
    if omni_scenario is not None:
        _, rep_o = omni_scenario.solve(con, cfg.n_b, 0.0, 1, cfg.N_fixed)
        C_omni = rep_o.C_LB
        row["converged"] = row["converged"] and bool(rep_o.converged)
    row["C_LB_omni"] = C_omni
    row["Lambda"] = rep.C_LB / C_omni if C_omni > 0 else math.nan
    return row, pol, rep


def _average_point(cfg: ExperimentConfig, scenario) -> dict:
    avg = orientation_average(scenario, cfg.constraints(), cfg.n_b, cfg.n_phi_SR, cfg.n_phi_PU,
                              cfg.rho)
    T_sen = sum(p["weight"] * scenario.plan(p["N"]).T_sen for p in avg.points)
    return {"C_LB": avg.C_mean, "C_LB_omni": avg.C_omni, "Lambda": avg.Lambda,
            "P_out": avg.P_out_mean, "P_e": avg.P_e_mean, "T_sen_opt": T_sen,
            "converged": avg.all_converged}


def _evaluate(cfg: ExperimentConfig, scenario, omni_scenario) -> dict:
    row = {"P_bar_dB": cfg.P_bar_dB, "I_bar_dB": cfg.I_bar_dB, "n_b": cfg.n_b, "M": cfg.M,
           "m_PU": cfg.m_PU_star if cfg.orientation == "fixed" else "avg",
           "m_SR": cfg.m_SR_star if cfg.orientation == "fixed" else "avg"}
    try:
        if cfg.orientation == "fixed":
            row.update(_fixed_point(cfg, scenario, omni_scenario)[0])
        else:
            row.update(_average_point(cfg, scenario))
    except NumericalError as exc:
        log.warning("solver failed at P_bar_dB=%s I_bar_dB=%s n_b=%s: %s",
                    cfg.P_bar_dB, cfg.I_bar_dB, cfg.n_b, exc)
        row.update({k: math.nan for k in ("C_LB", "C_LB_omni", "Lambda", "P_out", "P_e",
                                          "T_sen_opt")})
        row["converged"] = False
    return row


def manifest(cfg: ExperimentConfig, outputs: list) -> dict:
    """Run metadata; contains no timestamps so reruns are byte-identical."""
    return {"config": cfg.to_dict(), "config_sha256": cfg.digest(), "seed": cfg.seed,
            "outputs": outputs,
            "versions": {"espar_cr": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()}}


def rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, out_dir, threads: int = 1) -> list:
    """Solve every sweep point and write ``sweep.csv`` and ``manifest.json``.

    Rows appear in sweep order whatever the completion order.  A point whose
    solver fails is written with NaN values and ``converged=false``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario = cfg.scenario()
    omni = scenario.omni() if cfg.compare_omni and cfg.orientation == "fixed" else None
    points = cfg.sweep_points()
    if threads > 1 and len(points) > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(lambda p: _evaluate(p, scenario, omni), points))
    else:
        rows = [_evaluate(p, scenario, omni) for p in points]
    (out / "sweep.csv").write_text(rows_to_csv(rows))
    (out / "manifest.json").write_text(_dumps(manifest(cfg, ["sweep.csv"])))
    return rows


def solve_point(cfg: ExperimentConfig, out_dir) -> dict:
    """Solve the configured point and write ``solution.json`` plus a one-row CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario = cfg.scenario()
    if cfg.orientation == "average":
        rows = run_experiment(cfg.replace(sweep={}), out)
        return {"row": rows[0]}
    omni = scenario.omni() if cfg.compare_omni else None
    base = {"P_bar_dB": cfg.P_bar_dB, "I_bar_dB": cfg.I_bar_dB, "n_b": cfg.n_b, "M": cfg.M,
            "m_PU": cfg.m_PU_star, "m_SR": cfg.m_SR_star}
    row, pol, rep = _fixed_point(cfg, scenario, omni)
    row = dict(base, **row)
    result = {"row": row, "policy": pol.to_dict(), "report": rep.to_dict()}
    (out / "solution.json").write_text(_dumps(result))
    (out / "sweep.csv").write_text(rows_to_csv([row]))
    (out / "manifest.json").write_text(_dumps(manifest(cfg, ["solution.json", "sweep.csv"])))
    return result


def validate(cfg: ExperimentConfig, out_dir, threads: int = 1):
    """Run the oracle agreement suite at the configured point.

    Writes ``oracle_report.json`` and returns ``(passed, checks)``.
    """
    from . import mc_oracle as mc

    if cfg.n_b is None:
        raise ConfigError("validation needs a finite n_b", ["n_b"])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario = cfg.scenario()
    con = cfg.constraints()
    phi_SR = cfg.phi_SR()
    pol, rep = scenario.solve(con, cfg.n_b, phi_SR, cfg.m_PU_star, cfg.N_fixed)
    N = rep.N
    setup = mc.setup_for(scenario, pol, N, phi_SR, cfg.m_PU_star, cfg.rho, sensing="bernoulli")
    report = mc.run_trials(setup, cfg.trials, cfg.seed, threads)
    closed = mc.closed_forms(setup, scenario, con)
    checks = mc.oracle_checks(report, setup, closed)
    det = mc.detector_trials(scenario.plan(N), scenario.prior, scenario.model,
                             scenario.detector(N), cfg.detector_trials, cfg.seed + 1, threads)
    for key in ("P_fa", "P_d"):
        emp, cf = det[key], closed[key]
        checks.append(mc.Check(key, emp, cf, 0.01, abs(emp - cf) <= 0.01, det["se_" + key]))
    report.checks = checks
    payload = json.loads(report.to_json())
    payload["detector"] = det
    payload["point"] = {"N": N, "C_LB": rep.C_LB, "policy": pol.to_dict()}
    (out / "oracle_report.json").write_text(_dumps(payload))
    (out / "manifest.json").write_text(_dumps(manifest(cfg, ["oracle_report.json"])))
    return all(c.passed for c in checks), checks


def pattern_table(cfg: ExperimentConfig, points: int = 721) -> str:
    """CSV of the sector gains ``p_m(phi)`` over ``[-180, 180]`` degrees."""
    model = cfg.model()
    phi_deg = np.linspace(-180.0, 180.0, points)
    gains = model.gains(np.radians(phi_deg))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["phi_deg"] + [f"p_{m + 1}" for m in range(model.M)])
    for p, row in zip(phi_deg, gains):
        w.writerow([repr(float(p))] + [repr(float(v)) for v in row])
    return buf.getvalue()


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="espar-cr",
                                 description="Sensing-aware capacity design for ESPAR cognitive radios.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "solve the configured point"),
                        ("sweep", "solve every point of the configured sweep"),
                        ("validate", "compare closed forms with Monte Carlo"),
                        ("pattern", "dump beam pattern samples")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", nargs="?", help="YAML or JSON config (defaults if omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out-dir", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "pattern":
            p.add_argument("--points", type=int, default=721)
    return ap


def main(argv: Optional[list] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1", ["threads"])
        out = Path(args.out_dir)
        if args.command == "pattern":
            out.mkdir(parents=True, exist_ok=True)
            (out / "pattern.csv").write_text(pattern_table(cfg, args.points))
            return EXIT_OK
        if args.command == "solve":
            result = solve_point(cfg, out)
            sys.stdout.write(_dumps(result["row"]))
            return EXIT_OK if result["row"]["converged"] else EXIT_SOLVER
        if args.command == "sweep":
            rows = run_experiment(cfg, out, args.threads)
            sys.stdout.write(rows_to_csv(rows))
            return EXIT_OK if all(r["converged"] for r in rows) else EXIT_SOLVER
        passed, checks = validate(cfg, out, args.threads)
        for c in checks:
            print(c.line())
        if not passed:
            failed = ", ".join(c.name for c in checks if not c.passed)
            print(f"validation failed: {failed}", file=sys.stderr)
            return EXIT_VALIDATION
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
