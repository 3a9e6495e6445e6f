"""Command-line frontend: ``drcc-ots solve | evaluate | curtail | sweep``.

Settings resolve as flags over a JSON ``--config`` file over built-in
defaults, and the resolved settings are embedded in every output file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import SCHEMA_VERSIONS, __version__
from .case import bundled_case, build_operators, load_case
from .errors import DimensionMismatch, DrccOtsError, InputError, MalformedDocument, NoFeasibleStart
from .evaluate import curtailment, oos_evaluate, plotdata_csv
from .milp.bnb import MilpOptions, MilpStatus
from .reformulate import (
    build_deterministic,
    build_gaussian,
    build_mad,
    build_saa,
    build_wasserstein,
    load_solution,
    solve,
    solve_multimodal_bcd,
)
from .uncertainty import (
    Gaussian,
    MeanMad,
    MultiMad,
    box_support,
    fit_gaussian,
    load_scenarios,
    moment_stats,
    parse_ambiguity,
    partition_modes,
    placement_matrix,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INFEASIBLE = 2
EXIT_LIMIT = 3
EXIT_INPUT = 4

METHODS = ("det", "saa", "gauss", "mad", "mad-multi", "wass")
BUNDLED_WIND_BUSES = {"case3": [3], "case14": [3, 6, 13]}

logger = logging.getLogger("drcc_ots")


class Infeasible(DrccOtsError):
    pass


class LimitReached(DrccOtsError):
    pass


@dataclass
class RunConfig:
    case: str = "case3"
    scenarios: str | None = None
    ambiguity: str | None = None
    method: str = "det"
    eps: float = 0.05
    lo: int = 0
    radius: float = 0.0
    modes: int = 2
    omega: float = 1e-2
    t_max: int = 20
    seed: int = 0
    gap_tol: float = 1e-2
    node_limit: int = 200_000
    time_limit: float | None = None
    wind_buses: list | None = None
    margin: float = 0.05
    flow_limit_scale: float = 1.0
    paper_exact: bool = False
    threads: int = 1
    out: str = "solution.json"
    log: str | None = None
    solution: str | None = None
    test: str | None = None
    out_dir: str = "."
    cross_check: float = 0.0
    no_curtailment: bool = False
    xi: list | None = None
    sweep_eps: str | None = None
    sweep_lo: list | None = None

    def validate(self) -> RunConfig:
        if self.method not in METHODS:
            raise MalformedDocument(f"method must be one of {', '.join(METHODS)}")
        if self.method != "det":
            lower_ok = self.eps >= 0 if self.method == "mad" else self.eps > 0
            if not (lower_ok and self.eps <= 0.5):
                raise MalformedDocument(f"eps must lie in (0, 0.5] for method {self.method}, got {self.eps}")
        if self.method in ("saa", "wass") and self.scenarios is None:
            raise MalformedDocument(f"method {self.method} needs --scenarios")
        if self.method in ("gauss", "mad", "mad-multi") and self.scenarios is None and self.ambiguity is None:
            raise MalformedDocument(f"method {self.method} needs --scenarios or --ambiguity")
        if self.method == "wass" and self.radius < 0:
            raise MalformedDocument("--radius must be nonnegative")
        if self.lo < 0:
            raise MalformedDocument("--lo must be nonnegative")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _parse_list(text, kind=float):
    if text is None or isinstance(text, list):
        return text
    return [kind(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the ``--config`` file, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"config file is not JSON: {exc}") from None
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise MalformedDocument(f"unknown config keys: {', '.join(unknown)}")
    for name in known:
        v = getattr(args, name, None)
        if v is not None and v is not False:
            values[name] = v
    cfg = RunConfig(**values)
    cfg.wind_buses = _parse_list(cfg.wind_buses, int)
    cfg.xi = _parse_list(cfg.xi, float)
    cfg.sweep_lo = _parse_list(cfg.sweep_lo, int)
    return cfg


# Building blocks -------------------------------------------------------------


def load_grid(cfg: RunConfig):
    path = Path(cfg.case)
    case = load_case(path) if path.suffix in (".json", ".m") or path.exists() else bundled_case(cfg.case)
    if cfg.flow_limit_scale != 1.0:
        case = case.with_flow_limit_scale(cfg.flow_limit_scale)
    return case


def wind_buses(cfg: RunConfig, K: int) -> list:
    buses = cfg.wind_buses
    if buses is None:
        buses = BUNDLED_WIND_BUSES.get(Path(cfg.case).stem)
    if buses is None:
        raise MalformedDocument("--wind-buses is required for a non-bundled case")
    if len(buses) != K:
        raise DimensionMismatch(f"{len(buses)} wind buses given but the uncertainty has K={K}")
    return list(buses)


def milp_options(cfg: RunConfig) -> MilpOptions:
    limit = float("inf") if cfg.time_limit is None else float(cfg.time_limit)
    return MilpOptions(gap_tol=cfg.gap_tol, node_limit=cfg.node_limit, time_limit=limit)


def _ambiguity(cfg: RunConfig):
    return None if cfg.ambiguity is None else parse_ambiguity(Path(cfg.ambiguity).read_text())


def solve_config(cfg: RunConfig):
    """Build and solve the configured model; returns ``(solution, limit_hit)``."""
    cfg.validate()
    case = load_grid(cfg)
    ops = build_operators(case)
    opts = milp_options(cfg)
    if cfg.method == "det":
        out = solve(build_deterministic(case, ops, cfg.lo), opts)
        return _finish(out.solution, out.result)

    scen = load_scenarios(cfg.scenarios) if cfg.scenarios else None
    amb = _ambiguity(cfg)
    if cfg.method in ("saa", "wass"):
        F = placement_matrix(case, wind_buses(cfg, scen.K))
        support = box_support(scen, cfg.margin)
        if cfg.method == "saa":
            problem = build_saa(case, ops, scen, cfg.eps, cfg.lo, F, support=support)
        else:
            problem = build_wasserstein(case, ops, scen, cfg.radius, cfg.eps, cfg.lo, F, support=support)
    elif cfg.method == "mad":
        if not isinstance(amb, MeanMad):
            mu, sigma = moment_stats(scen)
            amb = MeanMad(mu, sigma, box_support(scen, cfg.margin))
        F = placement_matrix(case, wind_buses(cfg, amb.K))
        problem = build_mad(case, ops, amb, cfg.eps, cfg.lo, F)
    elif cfg.method == "gauss":
        if not isinstance(amb, Gaussian):
            amb = Gaussian(*fit_gaussian(scen))
        F = placement_matrix(case, wind_buses(cfg, amb.mu.size))
        problem = build_gaussian(case, ops, amb, cfg.eps, cfg.lo, F)
    else:
        pooled = None
        if scen is not None:
            mu, sigma = moment_stats(scen)
            pooled = MeanMad(mu, sigma, box_support(scen, cfg.margin))
        if not isinstance(amb, MultiMad):
            amb = partition_modes(scen, cfg.modes, seed=cfg.seed, margin=cfg.margin)
        F = placement_matrix(case, wind_buses(cfg, amb.K))
        try:
            state = solve_multimodal_bcd(case, ops, amb, cfg.eps, cfg.lo, F, cfg.omega, cfg.t_max,
                                         pooled=pooled, options=opts, threads=cfg.threads)
        except NoFeasibleStart as exc:
            raise Infeasible(str(exc)) from None
        return state.solution, state.capped
    out = solve(problem, opts)
    return _finish(out.solution, out.result)


def _finish(solution, result):
    if result.status is MilpStatus.INFEASIBLE:
        raise Infeasible("the model has no feasible solution")
    if solution is None:
        raise LimitReached(f"{result.status.value} reached before any incumbent")
    return solution, result.status is MilpStatus.FEASIBLE


def _write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def solution_log(sol, wall: float) -> str:
    d = sol.diagnostics
    lines = [
        f"method: {sol.method}",
        f"status: {sol.status}",
        f"objective: {sol.objective:.6f}",
        "switching decision: [" + ";".join(map(str, sol.opened_lines)) + "]",
        f"nodes: {d.get('nodes', '-')}",
        f"wall time: {wall:.3f} s",
    ]
    if "bcd_iterations" in d:
        lines.append(f"bcd iterations: {d['bcd_iterations']} (converged: {d['bcd_converged']})")
    return "\n".join(lines) + "\n"


# Subcommands -----------------------------------------------------------------


def cmd_solve(cfg: RunConfig) -> int:
    start = time.perf_counter()
    sol, limit_hit = solve_config(cfg)
    wall = time.perf_counter() - start
    sol.config = cfg.to_dict()
    _write(cfg.out, sol.to_json())
    log_text = solution_log(sol, wall)
    _write(cfg.log or str(Path(cfg.out).with_suffix(".log")), log_text)
    sys.stdout.write(log_text)
    return EXIT_LIMIT if limit_hit else EXIT_OK


def _evaluation_inputs(cfg: RunConfig):
    if cfg.solution is None or cfg.test is None:
        raise MalformedDocument("evaluate needs --solution and --test")
    sol = load_solution(cfg.solution)
    source = RunConfig(**{k: v for k, v in sol.config.items() if k in {f.name for f in fields(RunConfig)}})
    if cfg.case == RunConfig.case and sol.config.get("case"):
        cfg.case = source.case
        cfg.flow_limit_scale = source.flow_limit_scale
    if cfg.wind_buses is None:
        cfg.wind_buses = source.wind_buses
    return sol, load_grid(cfg), load_scenarios(cfg.test)


def evaluate_config(cfg: RunConfig):
    sol, case, test = _evaluation_inputs(cfg)
    ops = F = None
    if cfg.cross_check > 0:
        ops = build_operators(case)
        F = placement_matrix(case, wind_buses(cfg, test.K))
    report = oos_evaluate(sol, test, case, ops, with_curtailment=not cfg.no_curtailment,
                          paper_exact=cfg.paper_exact, F=F, cross_check_fraction=cfg.cross_check, seed=cfg.seed)
    report.config = {"evaluate": cfg.to_dict(), "solve": sol.config}
    return report


def cmd_evaluate(cfg: RunConfig) -> int:
    report = evaluate_config(cfg)
    out = Path(cfg.out_dir)
    _write(out / "report.json", report.to_json())
    _write(out / "report.csv", report.to_csv())
    sys.stdout.write(report.to_csv())
    return EXIT_OK


def cmd_curtail(cfg: RunConfig) -> int:
    if cfg.solution is None:
        raise MalformedDocument("curtail needs --solution")
    sol = load_solution(cfg.solution)
    if cfg.case == RunConfig.case and sol.config.get("case"):
        cfg.case = sol.config["case"]
        cfg.flow_limit_scale = sol.config.get("flow_limit_scale", 1.0)
    case = load_grid(cfg)
    if cfg.xi is not None:
        rows = [np.asarray(cfg.xi, dtype=float)]
    elif cfg.test is not None:
        rows = list(load_scenarios(cfg.test).samples)
    else:
        raise MalformedDocument("curtail needs --xi or --test")
    results = []
    for xi in rows:
        entry = {"xi": xi.tolist()}
        try:
            c = curtailment(sol, xi, case, cfg.paper_exact)
            entry.update(curtailment=c.tolist(), total=float(c.sum()))
        except DrccOtsError as exc:
            if isinstance(exc, InputError):
                raise
            entry.update(curtailment=None, total=None, error=type(exc).__name__)
        results.append(entry)
    text = json.dumps({"config": cfg.to_dict(), "scenarios": results}, indent=2, sort_keys=True) + "\n"
    if cfg.out != RunConfig.out:
        _write(cfg.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def parse_range(text: str) -> list[float]:
    """``start:step:stop`` (inclusive) or a comma list."""
    if ":" in text:
        try:
            start, step, stop = (float(v) for v in text.split(":"))
        except ValueError:
            raise MalformedDocument(f"range must be start:step:stop, got {text!r}") from None
        if step <= 0:
            raise MalformedDocument("range step must be positive")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(n)]
    return _parse_list(text, float)


def cmd_sweep(cfg: RunConfig) -> int:
    eps_values = parse_range(cfg.sweep_eps) if cfg.sweep_eps else [cfg.eps]
    lo_values = cfg.sweep_lo or [cfg.lo]
    test = load_scenarios(cfg.test) if cfg.test else None
    records = []
    for L_o in lo_values:
        for eps in eps_values:
            run = RunConfig(**{**cfg.to_dict(), "eps": eps, "lo": L_o})
            rec = {"eps": eps, "L_o": L_o}
            try:
                sol, limit_hit = solve_config(run)
                rec.update(objective=sol.objective, status=sol.status)
                if test is not None:
                    rep = oos_evaluate(sol, test, load_grid(run), with_curtailment=not cfg.no_curtailment,
                                       paper_exact=cfg.paper_exact)
                    rec.update(oos_cost=rep.oos_cost, average_violation_rate=rep.average_violation_rate,
                               curtailment_mean=rep.curtailment_mean)
            except Infeasible:
                rec["status"] = "Infeasible"
            except InputError as exc:
                rec["status"] = f"Invalid: {exc}"
            records.append(rec)
    out = Path(cfg.out_dir)
    _write(out / "plotdata.csv", plotdata_csv(records))
    _write(out / "sweep.json", json.dumps({"config": cfg.to_dict(), "records": records}, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(plotdata_csv(records))
    return EXIT_OK


# Argument parsing ------------------------------------------------------------


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", help="case JSON/MATPOWER path or a bundled name (case3, case14)")
    p.add_argument("--scenarios", help="training scenario CSV (MW)")
    p.add_argument("--ambiguity", help="ambiguity.json sidecar")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--eps", type=float)
    p.add_argument("--lo", type=int, help="maximum number of open lines")
    p.add_argument("--radius", type=float, help="Wasserstein radius in MW")
    p.add_argument("--modes", type=int, help="mode count for mad-multi")
    p.add_argument("--omega", type=float, help="BCD convergence threshold")
    p.add_argument("--t-max", dest="t_max", type=int, help="BCD iteration cap")
    p.add_argument("--gap-tol", dest="gap_tol", type=float)
    p.add_argument("--node-limit", dest="node_limit", type=int)
    p.add_argument("--time-limit", dest="time_limit", type=float)
    p.add_argument("--wind-buses", dest="wind_buses", help="comma list of bus ids hosting the sources")
    p.add_argument("--margin", type=float, help="support box margin as a fraction of the sample range")
    p.add_argument("--flow-limit-scale", dest="flow_limit_scale", type=float)
    p.add_argument("--threads", type=int)


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with settings (flags take precedence)")
    p.add_argument("--seed", type=int)
    p.add_argument("--paper-exact", dest="paper_exact", action="store_true", default=None,
                   help="drop the physical cap on curtailment")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drcc-ots", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="store_true", help="print package and file-format versions")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("solve", help="build and solve one model")
    _model_flags(p)
    _common_flags(p)
    p.add_argument("--out", help="solution file (default solution.json)")
    p.add_argument("--log", help="log file (default next to the solution)")

    p = sub.add_parser("evaluate", help="out-of-sample evaluation of a solution")
    _common_flags(p)
    p.add_argument("--solution")
    p.add_argument("--test", help="test scenario CSV (MW)")
    p.add_argument("--case")
    p.add_argument("--wind-buses", dest="wind_buses")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--cross-check", dest="cross_check", type=float,
                   help="fraction of scenarios re-solved through the dc equations")
    p.add_argument("--no-curtailment", dest="no_curtailment", action="store_true", default=None)

    p = sub.add_parser("curtail", help="curtailment for given scenarios")
    _common_flags(p)
    p.add_argument("--solution")
    p.add_argument("--case")
    p.add_argument("--xi", help="comma list, one value per source (MW)")
    p.add_argument("--test", help="scenario CSV (MW)")
    p.add_argument("--out")

    p = sub.add_parser("sweep", help="solve over a grid of eps and L_o")
    _model_flags(p)
    _common_flags(p)
    p.add_argument("--sweep-eps", dest="sweep_eps", help="start:step:stop or a comma list")
    p.add_argument("--sweep-lo", dest="sweep_lo", help="comma list of L_o values")
    p.add_argument("--test", help="optional test CSV evaluated at every point")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--no-curtailment", dest="no_curtailment", action="store_true", default=None)
    return parser


COMMANDS = {"solve": cmd_solve, "evaluate": cmd_evaluate, "curtail": cmd_curtail, "sweep": cmd_sweep}


def _error(exc: Exception, code: int) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.version:
        sys.stdout.write(f"drcc-ots {__version__}\n")
        for name, version in SCHEMA_VERSIONS.items():
            sys.stdout.write(f"{name} schema {version}\n")
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_INPUT
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except Infeasible as exc:
        return _error(exc, EXIT_INFEASIBLE)
    except LimitReached as exc:
        return _error(exc, EXIT_LIMIT)
    except (InputError, FileNotFoundError, IsADirectoryError) as exc:
        return _error(exc, EXIT_INPUT)
    except DrccOtsError as exc:
        return _error(exc, EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())
