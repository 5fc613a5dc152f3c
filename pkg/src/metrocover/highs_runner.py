"""Tiny command-line front end to HiGHS, so it can be driven like any solver binary.

    python -m metrocover.highs_runner [--time-limit S] [--threads N] [--presolve] MODEL.lp SOLUTION

Writes the HiGHS raw solution format to SOLUTION.

Presolve is off unless asked for. On these covering models HiGHS 1.15 presolve
has produced both a false "infeasible" and a wrong "optimal" value, while the
unreduced branch and bound agreed with the exact search in every case we tried.
"""

from __future__ import annotations

import argparse
import sys


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="metrocover.highs_runner")
    ap.add_argument("model")
    ap.add_argument("solution")
    ap.add_argument("--time-limit", type=float, default=None)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--quiet", action="store_true")
    ap.add_argument("--presolve", action="store_true", help="enable HiGHS presolve (see module notes)")
    args = ap.parse_args(argv)

    import highspy

    h = highspy.Highs()
    if args.quiet:
        h.setOptionValue("output_flag", False)
    if args.time_limit is not None:
        h.setOptionValue("time_limit", float(args.time_limit))
    if args.threads:
        h.setOptionValue("threads", int(args.threads))
    if not args.presolve:
        h.setOptionValue("presolve", "off")
    if h.readModel(args.model) != highspy.HighsStatus.kOk:
        print(f"cannot read model {args.model}", file=sys.stderr)
        return 1
    h.run()
    if args.presolve and h.getModelStatus() == highspy.HighsModelStatus.kInfeasible:
        # presolve has been seen to declare small feasible models infeasible;
        # only trust that verdict once the unreduced model agrees
        h.clearSolver()
        h.setOptionValue("presolve", "off")
        h.run()
    h.writeSolution(args.solution, 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
