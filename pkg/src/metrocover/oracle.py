"""Exact search over (station, covered lines) states.

This is the solver-free route to the same answers the integer program gives:

* breadth-first search over states ``(station, covered subset)`` with unit
  step costs, vectorised with numpy over the subset axis, for the plain walk
  and cycle shapes;
* a depth-first enumerator guided by exact distance-to-goal values, used for
  the restricted shapes (no station reuse, no line reuse) and to list every
  optimal arc set.

Walks found by the enumerator never use the same directed arc twice, which is
the solution space of the integer program (one binary variable per arc).  The
breadth-first search does not have that restriction; the two optima only
differ on graphs where every shortest cover walk must repeat a one-way arc.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from metrocover.network import Arc, Journey, Network
from metrocover.variant import VariantConfig, anchor_candidates

log = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET = 2 << 30
DEFAULT_NODE_BUDGET = 20_000_000
UNREACHED = 255

ArcSet = frozenset  # frozenset[Arc]


class OracleError(RuntimeError):
    pass


class MemoryBudgetExceeded(OracleError):
    def __init__(self, needed, budget):
        super().__init__(f"state space needs about {needed / 2**20:.0f} MiB, budget is {budget / 2**20:.0f} MiB")
        self.needed = needed
        self.budget = budget


class BudgetExhausted(OracleError):
    pass


class Infeasible(OracleError):
    pass


class _Space:
    """Integer view of a network for one required line set."""

    def __init__(self, network: Network, required: Iterable[str], memory_budget: int):
        self.network = network
        self.required = sorted(set(required))
        missing = [ln for ln in self.required if not network.arcs_of_line(ln)]
        if missing:
            raise Infeasible(f"required line(s) without arcs: {missing}")
        self.names = sorted(network.stations)
        self.idx = {s: i for i, s in enumerate(self.names)}
        self.bit = {ln: b for b, ln in enumerate(self.required)}
        self.k = len(self.required)
        self.full = (1 << self.k) - 1
        self.n = len(self.names)
        needed = 3 * self.n * (1 << self.k)
        if needed > memory_budget:
            raise MemoryBudgetExceeded(needed, memory_budget)
        # out[u] = [(arc, head, bit or -1)] sorted for deterministic expansion
        self.out = [[] for _ in range(self.n)]
        for a in network.arcs:
            self.out[self.idx[a.tail]].append((a, self.idx[a.head], self.bit.get(a.line, -1)))
        for lst in self.out:
            lst.sort(key=lambda t: (t[0].head, t[0].line, t[0].index))
        # predecessor groups for the vectorised backward sweep
        bwd = {}
        for u, lst in enumerate(self.out):
            for _, v, b in lst:
                bwd.setdefault((v, b), set()).add(u)
        self.bwd = sorted((key, sorted(us)) for key, us in bwd.items())

    def mask_of(self, line: str) -> int:
        b = self.bit.get(line)
        return 0 if b is None else 1 << b


def _pred_rows(row: np.ndarray, bit: int) -> np.ndarray:
    """Masks m' from which a step on ``bit`` lands inside ``row``."""
    if bit < 0:
        return row
    v = row.reshape(-1, 2, 1 << bit)
    out = np.empty_like(v)
    out[:, 0, :] = v[:, 1, :]
    out[:, 1, :] = v[:, 1, :]
    return out.reshape(-1)


def _distances_to_goal(space: _Space, targets: list[tuple[int, int]], stop=None, max_depth=UNREACHED - 1):
    """Backward breadth-first sweep: h[v, m] = fewest steps from (v, m) to a target.

    Unreached states keep 255.  ``stop(frontier)`` may end the sweep early once it
    returns True; states farther than the stopping depth stay unreached.
    """
    n, size = space.n, 1 << space.k
    h = np.full((n, size), UNREACHED, dtype=np.uint8)
    frontier = np.zeros((n, size), dtype=bool)
    for v, m in targets:
        frontier[v, m] = True
        h[v, m] = 0
    depth = 0
    while True:
        if stop is not None and stop(frontier, depth):
            break
        if depth >= max_depth:
            break
        nxt = np.zeros_like(frontier)
        active = frontier.any(axis=1)
        for (v, b), us in space.bwd:
            if not active[v]:
                continue
            pred = _pred_rows(frontier[v], b)
            for u in us:
                nxt[u] |= pred
        any_new = False
        for u in range(n):
            row = nxt[u]
            row &= h[u] == UNREACHED
            if row.any():
                h[u][row] = depth + 1
                any_new = True
        if not any_new:
            break
        frontier = nxt
        depth += 1
    return h


def _greedy_walk(space: _Space, h: np.ndarray, start: int, length: int, end: int | None = None) -> list[Arc]:
    """Follow strictly decreasing distances from ``(start, 0)``; first-in-order arc wins."""
    u, m = start, 0
    arcs = []
    for r in range(length, 0, -1):
        for a, v, b in space.out[u]:
            m2 = m | (1 << b) if b >= 0 else m
            if h[v, m2] == r - 1:
                arcs.append(a)
                u, m = v, m2
                break
        else:  # pragma: no cover - h is consistent by construction
            raise OracleError("distance table is inconsistent")
    if m != space.full or (end is not None and u != end):  # pragma: no cover
        raise OracleError("reconstructed walk misses the goal")
    return arcs


def shortest_cover_walk(network: Network, required: Iterable[str] | None = None,
                        memory_budget: int = DEFAULT_MEMORY_BUDGET) -> Journey:
    """Shortest walk (free endpoints) using at least one arc of every required line.

    All stations are sources at once.  Ties are broken by station name, then by
    (next station, line) during expansion, so the returned journey is stable.
    """
    network = network.merged()
    required = network.lines if required is None else required
    space = _Space(network, required, memory_budget)
    if space.k == 0:
        return Journey()
    targets = [(v, space.full) for v in range(space.n)]

    def stop(frontier, depth):
        return bool(frontier[:, 0].any())

    h = _distances_to_goal(space, targets, stop=stop)
    starts = h[:, 0]
    best = int(starts.min())
    if best == UNREACHED:
        raise Infeasible("no walk covers every required line (some line is unreachable)")
    start = int(np.flatnonzero(starts == best)[0])
    return Journey.from_arcs(_greedy_walk(space, h, start, best))


def _cycle_through(space: _Space, anchor: int) -> tuple[int, np.ndarray]:
    def stop(frontier, depth):
        return depth > 0 and bool(frontier[anchor, 0])

    h = _distances_to_goal(space, [(anchor, space.full)], stop=stop)
    return int(h[anchor, 0]), h


def shortest_cover_cycle(network: Network, required: Iterable[str] | None = None,
                         anchor: str | None = None,
                         memory_budget: int = DEFAULT_MEMORY_BUDGET) -> Journey:
    """Shortest closed walk covering the required lines.

    Without an explicit ``anchor`` every station of the required line with the
    fewest stations is tried and the best closed walk kept (ties: first anchor
    in name order).  The journey starts and ends at its anchor.
    """
    network = network.merged()
    required = network.lines if required is None else required
    space = _Space(network, required, memory_budget)
    if space.k == 0:
        return Journey()
    anchors = [anchor] if anchor is not None else anchor_candidates(network, space.required)
    best = None
    for name in anchors:
        a = space.idx[network.canonical(name)]
        length, h = _cycle_through(space, a)
        if length == UNREACHED:
            continue
        if best is None or length < best[0]:
            best = (length, a, h)
    if best is None:
        raise Infeasible("no closed walk covers every required line")
    length, a, h = best
    return Journey.from_arcs(_greedy_walk(space, h, a, length, end=a))


# ---------------------------------------------------------------------------
# depth-first enumeration for restricted shapes and for counting optima


@dataclass
class PathSearchResult:
    journey: Journey | None
    length: int | None
    proven: bool
    expanded: int

    @property
    def feasible(self) -> bool:
        return self.journey is not None


def line_runs_ok(lines: list[str], required: Iterable[str], cyclic: bool = False) -> bool:
    """True when every required line occupies exactly one maximal run.

    Counted as transitions: each required line must be entered once and left
    once.  Open walks are padded with a boundary pseudo-line at both ends; a
    cyclic sequence wraps around, and a cycle on one single line counts as one
    run.
    """
    req = set(required)
    if not lines:
        return not req
    seq = list(lines)
    pairs = list(zip(seq, seq[1:]))
    if cyclic:
        pairs.append((seq[-1], seq[0]))
    else:
        pairs = [(None, seq[0])] + pairs + [(seq[-1], None)]
    count = dict.fromkeys(req, 0)
    for p, q in pairs:
        if p == q:
            continue
        if p in count:
            count[p] += 1
        if q in count:
            count[q] += 1
    if cyclic and len(set(seq)) == 1:
        # a closed journey on a single line is one run with no transition
        return req <= set(seq)
    return all(c == 2 for c in count.values())


class _Enumerator:
    def __init__(self, space: _Space, h: np.ndarray, variant: VariantConfig, node_budget: int):
        self.space = space
        self.h = h
        self.variant = variant
        self.budget = node_budget
        self.expanded = 0
        self.required = set(space.required)

    def run(self, length: int, starts: list[int], end: int | None, first_only: bool):
        """Yield arc lists of exactly ``length`` steps satisfying the variant."""
        sp, h, var = self.space, self.h, self.variant
        cyclic = end is not None
        found = []
        arcs: list[Arc] = []
        used: set[Arc] = set()
        visited: list[int] = []
        closed_lines: set[str] = set()

        def rec(u, m, r, cur_line, hop):
            self.expanded += 1
            if self.expanded > self.budget:
                raise BudgetExhausted(f"node budget of {self.budget} exhausted")
            if r == 0 and m == sp.full and (not cyclic or u == end):
                if var.forbid_line_reuse and not line_runs_ok([a.line for a in arcs], self.required, cyclic):
                    return False
                found.append(list(arcs))
                return first_only
            for a, v, b in sp.out[u]:
                c = a.cost
                if c > r or a in used:
                    continue
                if a.is_walkway:
                    # corridors may be walked again, but a transfer never
                    # passes the same station twice; an open walk never
                    # starts with one
                    if v in hop or (not cyclic and not arcs):
                        continue
                    hop2 = hop | {v}
                else:
                    hop2 = frozenset((v,))
                m2 = m | (1 << b) if b >= 0 else m
                hv = h[v, m2]
                if hv == UNREACHED or hv > r - c:
                    continue
                if var.forbid_station_reuse:
                    if cyclic and v == end:
                        if r - c != 0 or m2 != sp.full:
                            continue
                    elif v in visited:
                        continue
                if var.forbid_line_reuse and a.line != cur_line and a.line in closed_lines:
                    # a cyclic run may wrap: re-entering the first line is fine
                    # only if the walk then stays on it to the end
                    if not (cyclic and arcs and a.line == arcs[0].line):
                        continue
                if var.forbid_line_reuse and cyclic and arcs and cur_line == arcs[0].line \
                        and cur_line in closed_lines and a.line != cur_line:
                    continue
                newly_closed = None
                if var.forbid_line_reuse and cur_line is not None and a.line != cur_line \
                        and cur_line in self.required and cur_line not in closed_lines:
                    newly_closed = cur_line
                    closed_lines.add(cur_line)
                arcs.append(a)
                if not a.is_walkway:
                    used.add(a)
                visited.append(v)
                stop = rec(v, m2, r - c, a.line, hop2)
                visited.pop()
                used.discard(a)
                arcs.pop()
                if newly_closed is not None:
                    closed_lines.discard(newly_closed)
                if stop:
                    return True
            return False

        for s in starts:
            hs = h[s, 0]
            if hs == UNREACHED or hs > length:
                continue
            visited.append(s)
            done = rec(s, 0, length, None, frozenset((s,)))
            visited.pop()
            if done:
                break
        return found


def _search_space(network: Network, variant: VariantConfig, memory_budget: int):
    variant = variant.resolve(network)
    space = _Space(network, variant.required_colors, memory_budget)
    return variant, space


def _lift(network: Network, space: _Space, h_space: _Space, h: np.ndarray) -> np.ndarray:
    """Distances of the contracted network, indexed by the stations of ``network``."""
    if h_space is space:
        return h
    rows = [h_space.idx[h_space.network.canonical(name)] for name in space.names]
    return h[rows]


def _plans(network, variant, space):
    """(start states, end vertex, distance table) per anchor or one open plan.

    Distances are computed on the contracted network, where walkway arcs
    vanish; they stay exact lower bounds for the real one.
    """
    merged = network.merged()
    h_space = space if merged is network else _Space(merged, space.required, DEFAULT_MEMORY_BUDGET)
    if variant.closed:
        names = [variant.anchor] if variant.anchor else anchor_candidates(network, space.required)
        for name in names:
            a = space.idx[network.canonical(name)]
            ah = h_space.idx[merged.canonical(name)]
            h = _distances_to_goal(h_space, [(ah, h_space.full)])
            yield [a], a, _lift(network, space, h_space, h)
    else:
        h = _distances_to_goal(h_space, [(v, h_space.full) for v in range(h_space.n)])
        yield list(range(space.n)), None, _lift(network, space, h_space, h)


def _max_length(network: Network, variant: VariantConfig) -> int:
    if variant.forbid_station_reuse:
        return len(network.stations) if variant.closed else len(network.stations) - 1
    return len(network.arcs)


def restricted_optimum(network: Network, variant: VariantConfig,
                       node_budget: int = DEFAULT_NODE_BUDGET,
                       memory_budget: int = DEFAULT_MEMORY_BUDGET) -> PathSearchResult:
    """Shortest journey of ``variant`` whose arcs are pairwise distinct.

    Iterative deepening from the unrestricted lower bound; each depth is a
    depth-first search pruned by exact distance-to-goal values.
    """
    variant, space = _search_space(network, variant, memory_budget)
    plans = list(_plans(network, variant, space))
    lower = min(int(p[2][s, 0]) for p in plans for s in p[0])
    if lower == UNREACHED:
        return PathSearchResult(None, None, True, 0)
    en = _Enumerator(space, None, variant, node_budget)
    for length in range(lower, _max_length(network, variant) + 1):
        for starts, end, h in plans:
            en.h = h
            try:
                found = en.run(length, starts, end, first_only=True)
            except BudgetExhausted:
                # iterative deepening has no incumbent before the optimum
                return PathSearchResult(None, None, False, en.expanded)
            if found:
                return PathSearchResult(Journey.from_arcs(found[0]), length, True, en.expanded)
    return PathSearchResult(None, None, True, en.expanded)


def shortest_cover_path(network: Network, required: Iterable[str] | None = None,
                        budget: int = DEFAULT_NODE_BUDGET,
                        memory_budget: int = DEFAULT_MEMORY_BUDGET) -> PathSearchResult:
    """Shortest cover walk that never visits a station twice.

    Branch and bound: a partial path is cut as soon as its length plus a lower
    bound on the remaining steps reaches the depth being tried.  The bound is
    the exact unrestricted distance to full cover, which is never smaller than
    the number of uncovered lines.  If ``budget`` node expansions run out the
    result carries ``proven=False``.
    """
    variant = VariantConfig("path", frozenset(required or ()))
    return restricted_optimum(network, variant, budget, memory_budget)


def enumerate_optimal_walks(network: Network, variant: VariantConfig,
                            budget: int = DEFAULT_NODE_BUDGET,
                            memory_budget: int = DEFAULT_MEMORY_BUDGET) -> dict[frozenset, list[Arc]]:
    """Every distinct optimal step set, mapped to one ordered walk realising it.

    The walk includes the free walkway arcs it uses; the key does not.
    """
    variant, space = _search_space(network, variant, memory_budget)
    plans = list(_plans(network, variant, space))
    lower = min(int(p[2][s, 0]) for p in plans for s in p[0])
    if lower == UNREACHED:
        return {}
    en = _Enumerator(space, None, variant, budget)
    for length in range(lower, _max_length(network, variant) + 1):
        result = {}
        for starts, end, h in plans:
            en.h = h
            for arcs in en.run(length, starts, end, first_only=False):
                # walkway arcs are free transfers: two journeys with the same
                # steps are the same solution whatever corridors they use
                result.setdefault(frozenset(a for a in arcs if not a.is_walkway), arcs)
        if result:
            return result
    return {}


def enumerate_optimal_arcsets(network: Network, variant: VariantConfig,
                              budget: int = DEFAULT_NODE_BUDGET,
                              memory_budget: int = DEFAULT_MEMORY_BUDGET) -> set[frozenset]:
    """Every distinct arc set of minimum size realising ``variant``.

    Arc sets are direction sensitive: riding a segment one way or the other gives
    two different sets.  An empty set means no journey exists.  Raises
    :class:`BudgetExhausted` when the search does not finish within ``budget``
    node expansions.
    """
    return set(enumerate_optimal_walks(network, variant, budget, memory_budget))
