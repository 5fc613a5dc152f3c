"""Run an external MILP solver on a serialized model and read its answer back.

The solver is any program that reads an LP file and writes a solution file.
It is described by a command template with a ``{model}`` and a ``{solution}``
placeholder, e.g.::

    cbc {model} sec 600 solve solu {solution}

Three solution-file dialects are understood and detected automatically:

* CBC: first line ``Optimal - objective value 3.0`` then ``index name value ...``
* HiGHS raw format: ``Model status`` header, ``# Columns N`` then ``name value``
* generic: optional ``status <token>`` and ``objective <value>`` lines, then
  ``name value`` pairs; status tokens are optimal, feasible, infeasible,
  timeout.  Lines starting with ``#`` are ignored.

Variables absent from the file are zero.  Every solution carrying values is
rounded (tolerance 1e-6) and re-checked against the model in exact integer
arithmetic before it is returned.
"""

from __future__ import annotations

import importlib.util
import os
import platform
import shlex
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from metrocover.formulation import IlpModel, check_assignment, serialize_lp

STATUSES = ("optimal", "feasible", "infeasible", "timeout", "solver_error")
INT_TOL = 1e-6
DEFAULT_TIME_LIMIT = 600.0
#: Environment variable holding a command template or a preset name.
SOLVER_ENV = "METROCOVER_SOLVER"


class BackendError(RuntimeError):
    """The solver could not be run, or its answer could not be trusted."""

    def __init__(self, message, log=""):
        super().__init__(message)
        self.log = log


@dataclass(frozen=True)
class SolverConfig:
    template: str
    time_limit: float = DEFAULT_TIME_LIMIT
    threads: int = 1
    workdir: str | None = None
    name: str = "custom"

    def __post_init__(self):
        for ph in ("{model}", "{solution}"):
            n = self.template.count(ph)
            if n != 1:
                raise ValueError(f"solver template must contain {ph} exactly once (found {n})")

    def argv(self, model_path: str, solution_path: str) -> list[str]:
        fmt = {"time_limit": f"{self.time_limit:g}", "threads": str(self.threads)}
        out = []
        for tok in shlex.split(self.template):
            tok = tok.replace("{model}", model_path).replace("{solution}", solution_path)
            for k, v in fmt.items():
                tok = tok.replace("{" + k + "}", v)
            out.append(tok)
        return out


def find_cbc() -> str | None:
    """CBC on PATH, else the binary bundled with the PuLP package."""
    exe = shutil.which("cbc")
    if exe:
        return exe
    spec = importlib.util.find_spec("pulp")
    if spec is None or not spec.submodule_search_locations:
        return None
    base = Path(list(spec.submodule_search_locations)[0]) / "solverdir" / "cbc"
    osdir = {"linux": "linux", "darwin": "osx"}.get(sys.platform)
    arch = {"x86_64": "i64", "amd64": "i64", "aarch64": "arm64", "arm64": "arm64"}.get(
        platform.machine().lower())
    cand = base / str(osdir) / str(arch) / "cbc"
    if osdir and arch and os.access(cand, os.X_OK):
        return str(cand)
    return None


def highs_available() -> bool:
    return importlib.util.find_spec("highspy") is not None


def preset(name: str, time_limit: float = DEFAULT_TIME_LIMIT, threads: int = 1,
           workdir: str | None = None) -> SolverConfig:
    """Ready-made configuration: ``cbc``, ``highs`` or ``auto`` (first available)."""
    if name == "auto":
        if highs_available():
            name = "highs"
        elif find_cbc():
            name = "cbc"
        else:
            raise BackendError("no MILP solver found: install highspy or put cbc on PATH")
    if name == "highs":
        if not highs_available():
            raise BackendError("the highs preset needs the highspy package")
        py = shlex.quote(sys.executable)
        tpl = f"{py} -m metrocover.highs_runner --quiet --time-limit {{time_limit}} --threads {{threads}} {{model}} {{solution}}"
    elif name == "cbc":
        exe = find_cbc()
        if exe is None:
            raise BackendError("cbc executable not found")
        tpl = f"{shlex.quote(exe)} {{model}} sec {{time_limit}} threads {{threads}} solve solu {{solution}}"
    else:
        raise BackendError(f"unknown solver preset {name!r} (use cbc, highs or auto)")
    return SolverConfig(tpl, time_limit, threads, workdir, name)


def config_from_env(default: str = "auto", **kw) -> SolverConfig:
    """Solver from ``$METROCOVER_SOLVER`` (a preset name or a template), else ``default``."""
    value = os.environ.get(SOLVER_ENV, "").strip()
    if not value:
        return preset(default, **kw)
    if "{model}" in value:
        return SolverConfig(value, **kw)
    return preset(value, **kw)


@dataclass
class IlpSolution:
    status: str
    objective: int | None = None
    assignments: dict[str, int] = field(default_factory=dict)
    dialect: str = ""
    wall_time: float = 0.0
    log: str = ""

    @property
    def has_values(self) -> bool:
        return self.status in ("optimal", "feasible")


def _round(name: str, raw: str) -> int:
    try:
        val = float(raw)
    except ValueError:
        raise BackendError(f"value {raw!r} of {name} is not a number") from None
    near = round(val)
    if abs(val - near) > INT_TOL:
        raise BackendError(f"{name} = {val} is not integral within {INT_TOL}")
    return int(near)


def _detect(lines: list[str]) -> str:
    head = next((ln.strip() for ln in lines if ln.strip()), "")
    if head == "Model status":
        return "highs"
    first = head.split()[0] if head else ""
    if first in ("Optimal", "Infeasible", "Integer", "Stopped", "Unbounded", "Problem"):
        return "cbc"
    return "generic"


def _cbc_status(head: str) -> tuple[str, float | None]:
    obj = None
    if "objective value" in head:
        try:
            obj = float(head.rsplit("objective value", 1)[1].split()[0])
        except (IndexError, ValueError):
            obj = None
    if head.startswith("Optimal"):
        return "optimal", obj
    if head.startswith(("Infeasible", "Integer infeasible", "Problem proven infeasible")):
        return "infeasible", None
    if head.startswith("Stopped"):
        if "no integer solution" in head:
            return "timeout", None
        return "feasible", obj
    raise BackendError(f"unknown CBC status line {head!r}")


_HIGHS_STATUS = {
    "Optimal": "optimal",
    "Infeasible": "infeasible",
    "Time limit reached": "timeout",
    "Iteration limit reached": "timeout",
    "Solution limit reached": "timeout",
    "Interrupted by user": "timeout",
    "Primal infeasible or unbounded": "infeasible",
}


def _pairs(rows, model, values, skip_index=False):
    for ln in rows:
        parts = ln.split()
        if not parts or parts[0].startswith("#"):
            continue
        if skip_index:
            if parts[0] == "**":  # CBC marks rows with infeasibilities this way
                parts = parts[1:]
            parts = parts[1:]
        if len(parts) < 2:
            raise BackendError(f"cannot parse solution line {ln!r}")
        name, raw = parts[0], parts[1]
        if name not in model.variables:
            raise BackendError(f"solution mentions {name!r}, which is not a model variable")
        values[name] = _round(name, raw)


def parse_solver_output(text: str, model: IlpModel, dialect: str = "auto") -> IlpSolution:
    """Read a solution file written by CBC, HiGHS, or in the generic format."""
    lines = text.splitlines()
    if dialect == "auto":
        dialect = _detect(lines)
    values: dict[str, int] = {}
    reported = None
    if dialect == "cbc":
        body = [ln for ln in lines if ln.strip()]
        status, reported = _cbc_status(body[0].strip())
        if status in ("optimal", "feasible"):
            _pairs(body[1:], model, values, skip_index=True)
    elif dialect == "highs":
        stripped = [ln.strip() for ln in lines]
        try:
            token = next(s for s in stripped[1:] if s)
        except StopIteration:
            raise BackendError("HiGHS solution file has no model status") from None
        if token not in _HIGHS_STATUS:
            raise BackendError(f"unknown HiGHS model status {token!r}")
        status = _HIGHS_STATUS[token]
        has_primal = False
        if "# Primal solution values" in stripped:
            i = stripped.index("# Primal solution values")
            has_primal = stripped[i + 1] == "Feasible"
        if status == "timeout" and has_primal:
            status = "feasible"
        if status in ("optimal", "feasible"):
            if not has_primal:
                raise BackendError("HiGHS reports a solution but writes no primal values")
            i = next(k for k, s in enumerate(stripped) if s.startswith("# Columns"))
            n = int(stripped[i].split()[2])
            _pairs(stripped[i + 1:i + 1 + n], model, values)
            for s in stripped:
                if s.startswith("Objective "):
                    reported = float(s.split()[1])
                    break
    elif dialect == "generic":
        status = None
        rest = []
        for ln in lines:
            parts = ln.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0].lower() == "status":
                token = " ".join(parts[1:]).lower()
                if token not in STATUSES:
                    raise BackendError(f"unknown status token {token!r}")
                status = token
            elif parts[0].lower() == "objective":
                reported = float(parts[1])
            else:
                rest.append(ln)
        if status is None:
            status = "feasible" if rest else "solver_error"
        if status in ("optimal", "feasible"):
            _pairs(rest, model, values)
    else:
        raise BackendError(f"unknown solution dialect {dialect!r}")

    if status not in ("optimal", "feasible"):
        return IlpSolution(status, None, {}, dialect)
    full = {name: values.get(name, 0) for name in model.variables}
    objective = model.objective_value(full)
    if reported is not None and abs(reported - objective) > 1e-6 * max(1.0, abs(objective)):
        raise BackendError(f"reported objective {reported} differs from recomputed {objective}")
    return IlpSolution(status, objective, full, dialect)


def verify(model: IlpModel, sol: IlpSolution) -> None:
    """Raise :class:`BackendError` unless ``sol`` satisfies every model row."""
    if not sol.has_values:
        return
    bad = check_assignment(model, sol.assignments)
    if bad:
        shown = ", ".join(bad[:5]) + (" ..." if len(bad) > 5 else "")
        raise BackendError(f"solver answer violates {len(bad)} model row(s): {shown}")


def solve(model: IlpModel, config: SolverConfig | None = None) -> IlpSolution:
    """Serialize ``model``, run the solver in a subprocess and return its checked answer."""
    config = config or config_from_env()
    text = serialize_lp(model)
    with tempfile.TemporaryDirectory(prefix="metrocover-", dir=config.workdir) as tmp:
        mpath = os.path.join(tmp, "model.lp")
        spath = os.path.join(tmp, "model.sol")
        Path(mpath).write_text(text, encoding="ascii")
        argv = config.argv(mpath, spath)
        t0 = time.monotonic()
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, cwd=tmp,
                                  timeout=config.time_limit + 60)
        except FileNotFoundError as exc:
            raise BackendError(f"cannot start solver {argv[0]!r}: {exc}") from exc
        except subprocess.TimeoutExpired as exc:
            log = (exc.stdout or "") if isinstance(exc.stdout, str) else ""
            return IlpSolution("timeout", None, {}, "", time.monotonic() - t0, log)
        elapsed = time.monotonic() - t0
        log = proc.stdout + proc.stderr
        if proc.returncode != 0:
            raise BackendError(f"solver exited with status {proc.returncode}: {log.strip()[-500:]}", log)
        if not os.path.exists(spath):
            raise BackendError("solver wrote no solution file", log)
        sol = parse_solver_output(Path(spath).read_text(), model)
    sol.wall_time = elapsed
    sol.log = log
    verify(model, sol)
    return sol
