"""Command-line front end.

    metrocover solve     --network FILE [variant flags] [--backend ...] [--format ...]
    metrocover enumerate --network FILE [variant flags] [--max-solutions N]
    metrocover validate  --network FILE --journey FILE [variant flags]
    metrocover export    --network FILE --journey FILE --format geojson|table|tsv
    metrocover prune     --network FILE
    metrocover info      --network FILE

Exit codes: 0 success, 1 infeasible (or invalid journey), 2 usage or input
error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

from metrocover import oracle
from metrocover.backend import (DEFAULT_TIME_LIMIT, SOLVER_ENV, BackendError, SolverConfig,
                                config_from_env, preset)
from metrocover.formulation import FormulationError
from metrocover.ingest import SpecError, canonical_serialize, load_network
from metrocover.network import CORRIDOR_MODES, Network, NetworkError, prune_termini
from metrocover.solution import (GeoJsonError, ReconstructionError, SolveReport, enumerate_solutions,
                                 export_geojson, export_table, parse_journey, solve,
                                 validate_journey)
from metrocover.variant import VariantConfig

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE, EXIT_BACKEND = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="metrocover",
                                 description="Shortest journeys that ride every line of a transit network.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--network", required=True, help="network description file")
        p.add_argument("--prune", action="store_true", help="drop dead-end stations first")
        p.add_argument("--corridors", choices=CORRIDOR_MODES, default="merge",
                       help="merge corridor-linked stations into one, or keep them apart "
                            "joined by free walkways (default merge)")
        p.add_argument("-v", "--verbose", action="store_true")

    def variant(p):
        p.add_argument("--variant", choices=("walk", "path", "cycle"), default="walk")
        p.add_argument("--require-lines", default="all", metavar="LIST",
                       help="comma-separated line ids that must be ridden, or 'all'")
        p.add_argument("--no-station-reuse", action="store_true")
        p.add_argument("--no-line-reuse", action="store_true")
        p.add_argument("--anchor", help="start/end station of a cycle")

    def solver(p):
        p.add_argument("--backend", choices=("auto", "milp", "oracle"), default="auto")
        p.add_argument("--solver", help=f"cbc, highs, auto or a command template (default ${SOLVER_ENV} or auto)")
        p.add_argument("--config", help="INI file with a [solver] section: template, time_limit, threads, workdir")
        p.add_argument("--time-limit", type=float, help="seconds per solver call")
        p.add_argument("--threads", type=int)
        p.add_argument("--big-m", choices=("safe", "vertices"), default="safe")
        p.add_argument("--node-budget", type=int, default=oracle.DEFAULT_NODE_BUDGET,
                       help="node limit of the exact search")

    p = sub.add_parser("solve", help="find one optimal journey")
    common(p), variant(p), solver(p)
    p.add_argument("--format", choices=("table", "tsv", "json", "geojson"), default="table")

    p = sub.add_parser("enumerate", help="list every optimal arc set")
    common(p), variant(p), solver(p)
    p.add_argument("--format", choices=("table", "tsv", "json"), default="table")
    p.add_argument("--max-solutions", type=int, help="stop after this many solutions")
    p.add_argument("--max-seconds", type=float, help="wall-clock limit of the whole loop")

    p = sub.add_parser("validate", help="check a journey file")
    common(p), variant(p)
    p.add_argument("--journey", required=True)

    p = sub.add_parser("export", help="convert a journey file")
    common(p)
    p.add_argument("--journey", required=True)
    p.add_argument("--format", choices=("table", "tsv", "geojson"), default="geojson")

    p = sub.add_parser("prune", help="remove dead-end stations and print the result")
    common(p)

    p = sub.add_parser("info", help="print network counts")
    common(p)
    return ap


def _variant(args, network: Network) -> VariantConfig:
    req = frozenset()
    if args.require_lines and args.require_lines.strip().lower() != "all":
        req = frozenset(x.strip() for x in args.require_lines.split(",") if x.strip())
    try:
        v = VariantConfig(args.variant, req, args.no_station_reuse, args.no_line_reuse, args.anchor)
        return v.resolve(network)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _solver_config(args) -> SolverConfig:
    kw = {}
    template = None
    if args.config:
        cp = configparser.ConfigParser(interpolation=None)
        if not cp.read(args.config, encoding="utf-8"):
            raise UsageError(f"cannot read config file {args.config}")
        if "solver" not in cp:
            raise UsageError(f"{args.config} has no [solver] section")
        sec = cp["solver"]
        template = sec.get("template")
        if "time_limit" in sec:
            kw["time_limit"] = sec.getfloat("time_limit")
        if "threads" in sec:
            kw["threads"] = sec.getint("threads")
        if "workdir" in sec:
            kw["workdir"] = sec.get("workdir")
    if args.time_limit is not None:
        kw["time_limit"] = args.time_limit
    if args.threads is not None:
        kw["threads"] = args.threads
    choice = args.solver or template
    try:
        if choice is None:
            return config_from_env(**kw)
        if "{model}" in choice:
            return SolverConfig(choice, **kw)
        return preset(choice, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _backend(args, network: Network, variant: VariantConfig) -> str:
    if args.backend != "auto":
        return args.backend
    if variant.forbid_station_reuse or variant.forbid_line_reuse:
        return "milp"
    need = 3 * len(network.stations) * (1 << len(variant.required_colors))
    return "oracle" if need <= oracle.DEFAULT_MEMORY_BUDGET else "milp"


def _report_dict(rep: SolveReport, network: Network) -> dict:
    return {
        "network": network.name,
        "variant": rep.variant.describe(),
        "required_lines": sorted(rep.variant.required_colors),
        "backend": rep.backend,
        "status": rep.status,
        "objective": rep.objective,
        "index": rep.enumeration_index,
        "steps": [{"step": i, "departure": s.shown_from, "arrival": s.shown_to, "line": s.line}
                  for i, s in enumerate(rep.journey.steps, start=1)],
    }


def _print_report(rep: SolveReport, network: Network, fmt: str, out) -> None:
    if fmt == "json":
        out.write(json.dumps(_report_dict(rep, network), ensure_ascii=False) + "\n")
        return
    if fmt == "geojson":
        out.write(export_geojson(rep, network) + "\n")
        return
    idx = f"solution {rep.enumeration_index}  " if rep.enumeration_index else ""
    out.write(f"# {idx}network {network.name}  variant {rep.variant.describe()}  backend {rep.backend}\n")
    out.write(f"# status {rep.status}  steps {rep.objective}\n")
    out.write(export_table(rep, machine=(fmt == "tsv")))


def _load(args) -> Network:
    net = load_network(args.network, corridors=args.corridors)
    if args.prune:
        net, removed = prune_termini(net)
        logging.getLogger("metrocover").info("pruned %d station(s)", len(removed))
    return net


def _cmd_solve(args, net, out, err) -> int:
    variant = _variant(args, net)
    backend = _backend(args, net, variant)
    cfg = _solver_config(args) if backend == "milp" else None
    rep = solve(net, variant, backend, cfg, big_m_rule=args.big_m, node_budget=args.node_budget)
    if args.verbose:
        err.write(f"solved in {rep.solve_seconds:.2f}s\n")
    if not rep.found:
        err.write(f"{rep.status}: no {variant.describe()} journey covers the required lines\n"
                  if rep.status == "infeasible" else f"{rep.status}: no journey found within the limits\n")
        if args.format == "json":
            _print_report(rep, net, "json", out)
        else:
            out.write(f"{rep.status}\n")
        return EXIT_INFEASIBLE if rep.status == "infeasible" else EXIT_BACKEND
    _print_report(rep, net, args.format, out)
    return EXIT_OK


def _cmd_enumerate(args, net, out, err) -> int:
    variant = _variant(args, net)
    backend = _backend(args, net, variant)
    cfg = _solver_config(args) if backend == "milp" else None

    def emit(rep):
        _print_report(rep, net, args.format, out)
        out.flush()

    res = enumerate_solutions(net, variant, backend, cfg, max_iterations=args.max_solutions,
                              time_limit=args.max_seconds, big_m_rule=args.big_m,
                              node_budget=args.node_budget, on_report=emit)
    objective = res.reports[0].objective if res.reports else None
    summary = f"# {len(res)} optimal solution(s)" + (f" with {objective} steps" if objective is not None else "")
    if res.truncated:
        summary += f"; TRUNCATED: {res.reason}"
    out.write(summary + "\n")
    if res.truncated and not res.reports:
        return EXIT_BACKEND
    return EXIT_OK if res.reports else EXIT_INFEASIBLE


def _read_journey(path):
    try:
        return parse_journey(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read journey file: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _cmd_validate(args, net, out, err) -> int:
    variant = _variant(args, net)
    journey = _read_journey(args.journey)
    rep = validate_journey(journey, net, variant)
    if rep.ok:
        out.write(f"valid: {rep.length} steps, {len(rep.covered)} lines covered\n")
        return EXIT_OK
    out.write(f"invalid: {len(rep.failures)} problem(s)\n")
    for f in rep.failures:
        out.write(f"  - {f}\n")
    return EXIT_INFEASIBLE


def _cmd_export(args, net, out, err) -> int:
    journey = _read_journey(args.journey)
    rep = SolveReport(VariantConfig(), "file", "feasible", len(journey), journey)
    if args.format == "geojson":
        out.write(export_geojson(rep, net) + "\n")
    else:
        out.write(export_table(rep, machine=(args.format == "tsv")))
    return EXIT_OK


def _cmd_prune(args, net, out, err) -> int:
    pruned, removed = prune_termini(net)
    out.write(canonical_serialize(pruned))
    out.write(f"# removed {len(removed)} station(s): {', '.join(sorted(removed))}\n")
    return EXIT_OK


def _cmd_info(args, net, out, err) -> int:
    for k, v in net.summary().items():
        out.write(f"{k}: {v}\n")
    out.write(f"line ids: {', '.join(sorted(net.lines))}\n")
    return EXIT_OK


COMMANDS = {
    "solve": _cmd_solve,
    "enumerate": _cmd_enumerate,
    "validate": _cmd_validate,
    "export": _cmd_export,
    "prune": _cmd_prune,
    "info": _cmd_info,
}


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=err)
    try:
        net = _load(args)
        return COMMANDS[args.command](args, net, out, err)
    except (UsageError, SpecError, NetworkError, FormulationError, GeoJsonError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (BackendError, ReconstructionError) as exc:
        err.write(f"solver failure: {exc}\n")
        return EXIT_BACKEND
    except oracle.MemoryBudgetExceeded as exc:
        err.write(f"error: {exc}; use --backend milp\n")
        return EXIT_BACKEND


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
