"""From solver output to journeys: ordering, checking, enumerating, exporting."""

from __future__ import annotations

import json
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from metrocover import oracle
from metrocover.backend import BackendError, IlpSolution, SolverConfig, config_from_env
from metrocover.backend import solve as solve_model
from metrocover.formulation import IlpModel, add_nogood_cut, build_model
from metrocover.network import Arc, Journey, Network, Step
from metrocover.oracle import line_runs_ok
from metrocover.variant import VariantConfig, anchor_candidates

BACKENDS = ("milp", "oracle")


class ReconstructionError(ValueError):
    """The arc multiset is not a single balanced walk."""


@dataclass
class SolveReport:
    variant: VariantConfig
    backend: str
    status: str  # optimal, feasible, infeasible, timeout
    objective: int | None = None
    journey: Journey = field(default_factory=Journey)
    arcset: tuple[Arc, ...] = ()
    solve_seconds: float = 0.0
    enumeration_index: int | None = None
    anchor: str | None = None

    @property
    def found(self) -> bool:
        return self.status in ("optimal", "feasible")


# ---------------------------------------------------------------------------
# ordering


def _degree_ends(counts: Counter) -> tuple[str | None, str | None]:
    surplus = defaultdict(int)
    for a, k in counts.items():
        surplus[a.tail] += k
        surplus[a.head] -= k
    plus = sorted(v for v, d in surplus.items() if d > 0)
    minus = sorted(v for v, d in surplus.items() if d < 0)
    if not plus and not minus:
        return None, None
    if len(plus) == 1 and len(minus) == 1 and surplus[plus[0]] == 1 and surplus[minus[0]] == -1:
        return plus[0], minus[0]
    raise ReconstructionError(
        "unbalanced degrees: " + ", ".join(f"{v} {surplus[v]:+d}" for v in plus + minus))


def _hierholzer(counts: Counter, start: str) -> list[Arc]:
    """Euler trail from ``start`` by splicing closed detours into the current trail."""
    out = defaultdict(list)
    for a in sorted(counts, reverse=True):
        out[a.tail].extend([a] * counts[a])
    stack: list[tuple[str, Arc | None]] = [(start, None)]
    trail: list[Arc] = []
    while stack:
        v, via = stack[-1]
        if out[v]:
            a = out[v].pop()
            stack.append((a.head, a))
        else:
            stack.pop()
            if via is not None:
                trail.append(via)
    trail.reverse()
    return trail


def _ordered_search(counts: Counter, starts: list[str], end: str | None, required, cyclic: bool):
    """Backtracking over Euler trails until one keeps every required line in one run."""
    remaining = Counter(counts)
    total = sum(counts.values())
    out = defaultdict(list)
    for a in sorted(counts):
        out[a.tail].append(a)
    trail: list[Arc] = []
    closed: set[str] = set()

    def rec(v):
        if len(trail) == total:
            if cyclic and v != trail[0].tail:
                return False
            return line_runs_ok([a.line for a in trail], required, cyclic)
        cur = trail[-1].line if trail else None
        for a in out[v]:
            if not remaining[a]:
                continue
            if a.line != cur and a.line in closed and not (cyclic and a.line == trail[0].line):
                continue
            shut = cur if (cur is not None and a.line != cur and cur in required and cur not in closed) else None
            if shut:
                closed.add(shut)
            remaining[a] -= 1
            trail.append(a)
            if rec(a.head):
                return True
            trail.pop()
            remaining[a] += 1
            if shut:
                closed.discard(shut)
        return False

    for s in starts:
        if rec(s):
            return list(trail)
    return None


def reconstruct_walk(arcs: Iterable[Arc], network: Network, shape: str = "walk",
                     start: str | None = None, required: Iterable[str] | None = None,
                     successors: Mapping[Arc, Arc] | None = None) -> Journey:
    """Order an arc multiset into a journey.

    The start is the vertex with one surplus outgoing arc; a balanced set
    starts at ``start`` (cycles: the anchor) or else at its smallest station.
    With ``required`` the order must also keep each of those lines in a single
    run; with ``successors`` (arc -> next arc) the order is read off directly.
    """
    counts = Counter(arcs)
    if not counts:
        return Journey()
    for a in counts:
        if a.tail not in network.stations or a.head not in network.stations:
            raise ReconstructionError(f"arc {a.key} is not in the network")
    first, last = _degree_ends(counts)
    if shape == "cycle" and first is not None:
        raise ReconstructionError(f"a cycle cannot have a surplus at {first} and {last}")
    tails = sorted({a.tail for a in counts})
    if first is None:
        if start is not None:
            start = network.canonical(start)
            if start not in tails:
                raise ReconstructionError(f"start {start} is not on the closed walk")
            first = start
        else:
            first = tails[0]

    if successors:
        firsts = [a for a in counts if a not in set(successors.values())]
        head = firsts[0] if firsts else min((a for a in counts if a.tail == first), default=None)
        if head is None:
            raise ReconstructionError("no arc leaves the start station")
        trail = [head]
        while len(trail) < sum(counts.values()):
            nxt = successors.get(trail[-1])
            if nxt is None or nxt == head:
                break
            trail.append(nxt)
        if len(trail) != sum(counts.values()):
            raise ReconstructionError("successor pairs do not chain through every arc")
        return Journey.from_arcs(trail)

    trail = _hierholzer(counts, first)
    if len(trail) != sum(counts.values()):
        raise ReconstructionError("disconnected arc set: the walk from "
                                  f"{first} uses {len(trail)} of {sum(counts.values())} arcs")
    req = set(required or ())
    cyclic = shape == "cycle"
    if req and not line_runs_ok([a.line for a in trail], req, cyclic):
        starts = [first] if (cyclic or last is not None or start is not None) else tails
        found = _ordered_search(counts, starts, last, req, cyclic)
        if found is None:
            raise ReconstructionError("no order of these arcs keeps every required line in one run")
        trail = found
    return Journey.from_arcs(trail)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    ok: bool
    failures: list[str]
    covered: frozenset[str] = frozenset()
    length: int = 0

    def __bool__(self):
        return self.ok


def _hop(network: Network, a: str, b: str, avoid: set[str]) -> list[str] | None:
    """Stations strictly between ``a`` and ``b`` on a walkway route avoiding ``avoid``."""
    if a == b:
        return []
    prev = {a: None}
    todo = [a]
    while todo:
        nxt = []
        for u in todo:
            for arc in network.out_arcs(u):
                w = arc.head
                if not arc.is_walkway or w in prev or (w in avoid and w != b):
                    continue
                prev[w] = u
                if w == b:
                    route = []
                    while prev[w] != a:
                        w = prev[w]
                        route.append(w)
                    return route[::-1]
                nxt.append(w)
        todo = nxt
    return None


def validate_journey(journey: Journey, network: Network, variant: VariantConfig) -> ValidationReport:
    """Check a journey step by step; every failed check is listed, nothing raises.

    Consecutive steps must meet at the same station, or (networks with
    walkways) at stations joined by corridors.
    """
    variant = variant.resolve(network)
    failures = []
    canon = []
    covered = set()
    for i, st in enumerate(journey.steps, start=1):
        try:
            u, v = network.canonical(st.departure), network.canonical(st.arrival)
        except KeyError as exc:
            failures.append(f"step {i}: {exc.args[0]}")
            canon.append(None)
            continue
        canon.append((u, v))
        if not network.find_arcs(u, v, st.line):
            failures.append(f"step {i}: no line {st.line} arc from {st.departure} to {st.arrival}")
        else:
            covered.add(st.line)

    def meets(p, q):
        return p == q or (network.has_walkways and q in network.interchange(p))

    for i in range(1, len(canon)):
        if canon[i - 1] and canon[i] and not meets(canon[i - 1][1], canon[i][0]):
            failures.append(f"step {i + 1}: departs from {journey.steps[i].departure}, "
                            f"previous step arrived at {journey.steps[i - 1].arrival}")
    missing = sorted(variant.required_colors - covered)
    if missing:
        failures.append("lines not covered: " + ", ".join(missing))
    known = [c for c in canon if c]
    if variant.closed and known and not meets(known[-1][1], known[0][0]):
        failures.append(f"not closed: starts at {journey.steps[0].departure}, ends at {journey.steps[-1].arrival}")
    if variant.forbid_station_reuse and known and len(known) == len(canon):
        seq = [known[0][0]]
        touched = {known[0][0]}
        hops = [(known[k - 1][1], known[k][0]) for k in range(1, len(known))]
        for k, (u, v) in enumerate(known):
            if k > 0:
                p, q = hops[k - 1]
                if p != q:
                    route = _hop(network, p, q, touched) or []
                    seq.extend(route + [u])
                    touched.update(route + [u])
            seq.append(v)
            touched.add(v)
        if variant.closed:
            last, first = seq[-1], seq[0]
            if last != first:
                seq.extend(_hop(network, last, first, set(seq)) or [])
            else:
                seq = seq[:-1]
        again = sorted(s for s, k in Counter(seq).items() if k > 1)
        if again:
            failures.append("stations visited more than once: " + ", ".join(again))
    if variant.forbid_line_reuse and journey.steps:
        lines = journey.lines
        if not line_runs_ok(lines, variant.required_colors, variant.closed):
            runs = [ln for k, ln in enumerate(lines) if k == 0 or lines[k - 1] != ln]
            if variant.closed and len(runs) > 1 and runs[0] == runs[-1]:
                runs = runs[:-1]
            again = sorted(ln for ln, k in Counter(runs).items() if k > 1 and ln in variant.required_colors)
            failures.append("lines taken in more than one run: " + ", ".join(again))
    return ValidationReport(not failures, failures, frozenset(covered), len(journey))


# ---------------------------------------------------------------------------
# solving


def _successors(model: IlpModel, sol: IlpSolution) -> dict[Arc, Arc]:
    """Arc -> next arc, read from the pair variables of a no-line-reuse model."""
    nxt = {}
    for name, val in sol.assignments.items():
        if val < 1 or not name.startswith("z__"):
            continue
        x1, x2 = model.pair_arcs[name]
        a1, a2 = model.arc_of.get(x1), model.arc_of.get(x2)
        if a1 is not None and a2 is not None:
            nxt[a1] = a2
    return nxt


def _report_from(model: IlpModel, sol: IlpSolution, variant, seconds) -> SolveReport:
    if not sol.has_values:
        return SolveReport(variant, "milp", sol.status, solve_seconds=seconds, anchor=model.anchor)
    arcs = model.arcs_in(sol.assignments)
    succ = None
    if variant.forbid_line_reuse and len(set(arcs)) == len(arcs):
        # a walkway taken twice has two successors; the ordered search copes
        succ = _successors(model, sol)
    journey = reconstruct_walk(arcs, model.network, variant.shape, start=model.anchor,
                               required=variant.required_colors if variant.forbid_line_reuse else None,
                               successors=succ)
    steps = tuple(sorted(a for a in arcs if not a.is_walkway))
    return SolveReport(variant, "milp", sol.status, sol.objective, journey, steps,
                       seconds, anchor=model.anchor)


def _anchors(network, variant):
    if not variant.closed:
        return [None]
    if variant.anchor:
        return [variant.anchor]
    return anchor_candidates(network, variant.required_colors)


def _better(a: SolveReport | None, b: SolveReport) -> bool:
    if not b.found:
        return False
    return a is None or not a.found or b.objective < a.objective


def _merge_status(reports: list[SolveReport], best: SolveReport | None) -> str:
    """optimal only if every anchor sub-problem was solved to optimality."""
    if best is None or not best.found:
        if any(r.status == "timeout" for r in reports):
            return "timeout"
        return "infeasible"
    if any(r.status in ("timeout", "feasible") for r in reports):
        return "feasible"
    return "optimal"


def _milp_solve(network, variant, config, big_m_rule, cuts_for=None):
    reports = []
    best = None
    for anchor in _anchors(network, variant):
        model = build_model(network, variant, anchor=anchor, big_m_rule=big_m_rule)
        for arcs in (cuts_for or {}).get(anchor, []):
            model = add_nogood_cut(model, arcs)
        t0 = time.monotonic()
        sol = solve_model(model, config)
        rep = _report_from(model, sol, variant, time.monotonic() - t0)
        reports.append(rep)
        if _better(best, rep):
            best = rep
    total = sum(r.solve_seconds for r in reports)
    if best is None or not best.found:
        return SolveReport(variant, "milp", _merge_status(reports, best), solve_seconds=total)
    return replace(best, status=_merge_status(reports, best), solve_seconds=total)


def _oracle_solve(network, variant, node_budget):
    t0 = time.monotonic()
    try:
        res = oracle.restricted_optimum(network, variant, node_budget=node_budget)
    except oracle.Infeasible:
        return SolveReport(variant, "oracle", "infeasible", solve_seconds=time.monotonic() - t0)
    elapsed = time.monotonic() - t0
    if res.journey is None:
        return SolveReport(variant, "oracle", "infeasible" if res.proven else "timeout",
                           solve_seconds=elapsed)
    journey = res.journey
    anchor = journey.steps[0].departure if variant.closed else None
    return SolveReport(variant, "oracle", "optimal", res.length, journey,
                       tuple(sorted(_arcs_of(journey, network))), elapsed, anchor=anchor)


def _arcs_of(journey: Journey, network: Network) -> list[Arc]:
    out = []
    for st in journey.steps:
        cands = network.find_arcs(network.canonical(st.departure), network.canonical(st.arrival), st.line)
        exact = [a for a in cands if a.src == st.shown_from and a.dst == st.shown_to]
        out.append((exact or cands)[0])
    return out


def solve(network: Network, variant: VariantConfig, backend: str = "milp",
          config: SolverConfig | None = None, big_m_rule: str = "safe",
          node_budget: int = oracle.DEFAULT_NODE_BUDGET) -> SolveReport:
    """Shortest journey of ``variant`` on ``network``.

    ``milp`` runs an external solver (once per anchor for cycles without one);
    ``oracle`` runs the exact state-space search.  Both use every directed arc
    at most once.
    """
    variant = variant.resolve(network)
    if backend == "milp":
        return _milp_solve(network, variant, config or config_from_env(), big_m_rule)
    if backend == "oracle":
        return _oracle_solve(network, variant, node_budget)
    raise ValueError(f"unknown backend {backend!r}; use one of {BACKENDS}")


# ---------------------------------------------------------------------------
# enumeration


@dataclass
class Enumeration:
    reports: list[SolveReport]
    truncated: bool = False
    reason: str = ""
    next_objective: int | None = None

    def __len__(self):
        return len(self.reports)

    def __iter__(self):
        return iter(self.reports)


def _milp_enumerate(network, variant, config, max_iterations, deadline, big_m_rule, on_report):
    found: list[SolveReport] = []
    found_sets: list[tuple[Arc, ...]] = []
    optimum = None
    worse = None
    result = Enumeration(found)
    anchors = _anchors(network, variant)
    models = {a: build_model(network, variant, anchor=a, big_m_rule=big_m_rule) for a in anchors}
    if variant.closed and len(anchors) > 1:
        # optimum over all anchors first, so each anchor loop knows where to stop
        first = _milp_solve(network, variant, config, big_m_rule)
        if first.status != "optimal":
            if first.found:
                result.truncated, result.reason = True, f"first solve ended with status {first.status}"
            return result
        optimum = first.objective
    for anchor in anchors:
        model = models[anchor]
        for arcs in found_sets:
            if all(a in _model_arcs(model) for a in arcs):
                model = add_nogood_cut(model, arcs)
        while True:
            if max_iterations is not None and len(found) >= max_iterations:
                result.truncated, result.reason = True, f"stopped after {max_iterations} solution(s)"
                return result
            if deadline is not None and time.monotonic() > deadline:
                result.truncated, result.reason = True, "wall-clock limit reached"
                return result
            t0 = time.monotonic()
            try:
                sol = solve_model(model, config)
            except BackendError as exc:
                result.truncated, result.reason = True, f"backend failure: {exc}"
                return result
            rep = _report_from(model, sol, variant, time.monotonic() - t0)
            if sol.status in ("infeasible",):
                break
            if sol.status != "optimal":
                result.truncated, result.reason = True, f"solver returned {sol.status}"
                return result
            if optimum is None:
                optimum = rep.objective
            if rep.objective > optimum:
                worse = rep.objective if worse is None else min(worse, rep.objective)
                break
            rep.enumeration_index = len(found) + 1
            found.append(rep)
            found_sets.append(rep.arcset)
            if on_report:
                on_report(rep)
            model = add_nogood_cut(model, rep.arcset)
    result.next_objective = worse
    return result


def _model_arcs(model: IlpModel) -> set[Arc]:
    cache = model.__dict__.get("_arcset")
    if cache is None:
        cache = set(model.arc_of.values())
        object.__setattr__(model, "_arcset", cache)
    return cache


def _oracle_enumerate(network, variant, max_iterations, node_budget, on_report):
    t0 = time.monotonic()
    try:
        walks = oracle.enumerate_optimal_walks(network, variant, budget=node_budget)
    except oracle.BudgetExhausted as exc:
        return Enumeration([], True, str(exc))
    except oracle.Infeasible:
        return Enumeration([])
    elapsed = time.monotonic() - t0
    reports = []
    for steps in sorted(walks, key=sorted):
        arcs = walks[steps]
        anchor = arcs[0].tail if variant.closed else None
        reports.append(SolveReport(variant, "oracle", "optimal", len(steps), Journey.from_arcs(arcs),
                                   tuple(sorted(steps)), elapsed, anchor=anchor))
    truncated = False
    reason = ""
    if max_iterations is not None and len(reports) > max_iterations:
        reports = reports[:max_iterations]
        truncated, reason = True, f"stopped after {max_iterations} solution(s)"
    for i, rep in enumerate(reports, start=1):
        rep.enumeration_index = i
        if on_report:
            on_report(rep)
    return Enumeration(reports, truncated, reason)


def enumerate_solutions(network: Network, variant: VariantConfig, backend: str = "milp",
                        config: SolverConfig | None = None, max_iterations: int | None = None,
                        time_limit: float | None = None, big_m_rule: str = "safe",
                        node_budget: int = oracle.DEFAULT_NODE_BUDGET,
                        on_report=None) -> Enumeration:
    """Every optimal arc set, one report each.

    With the MILP backend: solve, record, cut the arc set off, solve again,
    until the objective gets worse.  ``on_report`` is called as each report is
    found.  Hitting ``max_iterations`` or ``time_limit`` (seconds) returns the
    partial list with ``truncated`` set.
    """
    variant = variant.resolve(network)
    if backend == "milp":
        deadline = None if time_limit is None else time.monotonic() + time_limit
        return _milp_enumerate(network, variant, config or config_from_env(), max_iterations,
                               deadline, big_m_rule, on_report)
    if backend == "oracle":
        return _oracle_enumerate(network, variant, max_iterations, node_budget, on_report)
    raise ValueError(f"unknown backend {backend!r}; use one of {BACKENDS}")


# ---------------------------------------------------------------------------
# export


def export_table(report: SolveReport, machine: bool = False) -> str:
    """Step / Departure / Arrival / Line table; ``machine`` gives tab-separated rows."""
    steps = report.journey.steps
    if machine:
        rows = [f"{i}\t{s.shown_from}\t{s.shown_to}\t{s.line}" for i, s in enumerate(steps, start=1)]
        return "\n".join(["step\tdeparture\tarrival\tline", *rows]) + "\n"
    header = ("Step", "Departure", "Arrival", "Line")
    rows = [(str(i), s.shown_from, s.shown_to, s.line) for i, s in enumerate(steps, start=1)]
    widths = [max(len(r[c]) for r in [header, *rows]) for c in range(4)]

    def fmt(r):
        return "  ".join([r[0].rjust(widths[0]), *(r[c].ljust(widths[c]) for c in (1, 2)), r[3]]).rstrip()

    return "\n".join([fmt(header), *map(fmt, rows)]) + "\n"


def parse_journey(text: str) -> Journey:
    """Read a journey written by :func:`export_table` (either format).

    Tab-separated lines carry ``[index] departure arrival line``; aligned
    tables are split on runs of two or more spaces.  A header row and ``#``
    comments are skipped.
    """
    import re

    steps = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = raw.rstrip("\n").split("\t") if "\t" in raw else re.split(r"\s{2,}", line)
        cells = [c.strip() for c in cells]
        if [c.lower() for c in cells[-3:]] in (["departure", "arrival", "line"],):
            continue
        if len(cells) == 4 and cells[0].isdigit():
            cells = cells[1:]
        if len(cells) != 3:
            raise ValueError(f"cannot read journey step {raw!r}")
        steps.append(Step(cells[0], cells[1], cells[2]))
    return Journey(tuple(steps))


class GeoJsonError(ValueError):
    pass


def export_geojson(report: SolveReport, network: Network) -> str:
    """Feature collection: a LineString per step, Points for start and end."""
    steps = report.journey.steps
    if not steps:
        return json.dumps({"type": "FeatureCollection", "features": []}, indent=1)

    def where(name):
        c = network.coords.get(name)
        if c is None:
            try:
                c = network.coordinate(network.canonical(name))
            except KeyError:
                c = None
        return c

    missing = sorted({n for s in steps for n in (s.shown_from, s.shown_to) if where(n) is None})
    if missing:
        raise GeoJsonError("stations without coordinates: " + ", ".join(missing))
    feats = []
    for i, s in enumerate(steps, start=1):
        (la1, lo1), (la2, lo2) = where(s.shown_from), where(s.shown_to)
        feats.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [[lo1, la1], [lo2, la2]]},
            "properties": {"step": i, "line": s.line, "from": s.shown_from, "to": s.shown_to},
        })
    for role, name in (("start", steps[0].shown_from), ("end", steps[-1].shown_to)):
        la, lo = where(name)
        feats.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [lo, la]},
            "properties": {"role": role, "station": name},
        })
    return json.dumps({"type": "FeatureCollection", "features": feats}, indent=1)
