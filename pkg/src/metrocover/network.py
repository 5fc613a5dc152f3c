"""Colored directed multigraph of a transit network.

Stations are vertices, every arc carries the id of the line that runs it.
Corridors (in-network walkways) are handled in one of two ways:

``merge`` (default)
    a group of stations joined by corridors becomes a single vertex; arcs keep
    the original station names they were declared with, so journeys can still
    be printed faithfully.
``walk``
    stations stay distinct and every corridor becomes a pair of free arcs on
    the pseudo-line ``<walkway>``.  Station reuse is then judged per original
    station, and changing platforms inside an interchange costs nothing.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Iterator, Mapping, NamedTuple

if TYPE_CHECKING:
    from metrocover.ingest import NetworkSpec

#: Vertex ids the formulation reserves for its fake source and target.
RESERVED_STATIONS = frozenset({"<source>", "<target>"})
#: Pseudo line carried by fake arcs.
FAKE_LINE = "<fake>"
#: Pseudo line of free corridor arcs (``walk`` corridor mode).
WALKWAY = "<walkway>"
CORRIDOR_MODES = ("merge", "walk")


class NetworkError(ValueError):
    """Raised when a network description cannot be turned into a graph."""


@dataclass(frozen=True, order=True)
class Arc:
    """One directed, line-colored link between two stations.

    ``tail``/``head`` are canonical (post-contraction) station ids, ``src``/``dst``
    the names the segment was declared with.  An arc whose endpoints were merged
    by a corridor is kept as a self-loop: riding it still costs one step and
    still covers its line.
    """

    tail: str
    head: str
    line: str
    index: int = 0
    src: str = ""
    dst: str = ""

    def __post_init__(self):
        if not self.src:
            object.__setattr__(self, "src", self.tail)
        if not self.dst:
            object.__setattr__(self, "dst", self.head)

    @property
    def key(self) -> tuple[str, str, str, int]:
        return (self.tail, self.head, self.line, self.index)

    @property
    def is_loop(self) -> bool:
        return self.tail == self.head

    @property
    def is_walkway(self) -> bool:
        return self.line == WALKWAY

    @property
    def cost(self) -> int:
        return 0 if self.line == WALKWAY else 1


class Step(NamedTuple):
    departure: str
    arrival: str
    line: str
    label_from: str = ""
    label_to: str = ""

    @property
    def shown_from(self) -> str:
        return self.label_from or self.departure

    @property
    def shown_to(self) -> str:
        return self.label_to or self.arrival


@dataclass(frozen=True)
class Journey:
    """Ordered list of steps; consecutive steps chain on canonical station ids."""

    steps: tuple[Step, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(Step(*s) for s in self.steps))

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self) -> Iterator[Step]:
        return iter(self.steps)

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def lines(self) -> list[str]:
        return [s.line for s in self.steps]

    @property
    def stations(self) -> list[str]:
        if not self.steps:
            return []
        return [self.steps[0].departure] + [s.arrival for s in self.steps]

    def reversed(self) -> "Journey":
        return Journey(
            tuple(Step(s.arrival, s.departure, s.line, s.label_to, s.label_from)
                  for s in reversed(self.steps))
        )

    @classmethod
    def from_arcs(cls, arcs: Iterable[Arc]) -> "Journey":
        """Steps of the line arcs; free walkway arcs leave no step of their own."""
        return cls(tuple(Step(a.tail, a.head, a.line, a.src, a.dst) for a in arcs if not a.is_walkway))


@dataclass(frozen=True, eq=False)
class Network:
    stations: frozenset[str]
    lines: frozenset[str]
    arcs: tuple[Arc, ...]
    merged_names: Mapping[str, frozenset[str]] = field(default_factory=dict)
    coords: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "arcs", tuple(sorted(self.arcs)))
        if not self.merged_names:
            object.__setattr__(
                self, "merged_names", {s: frozenset({s}) for s in self.stations}
            )
        _check_invariants(self)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.stations == other.stations
            and self.lines == other.lines
            and self.arcs == other.arcs
            and dict(self.merged_names) == dict(other.merged_names)
        )

    def __hash__(self):
        return hash((self.stations, self.lines, self.arcs))

    # adjacency helpers; cached lazily because Network is immutable
    def _index(self):
        cache = self.__dict__.get("_adj")
        if cache is None:
            out_arcs = defaultdict(list)
            in_arcs = defaultdict(list)
            by_line = defaultdict(list)
            for a in self.arcs:
                out_arcs[a.tail].append(a)
                in_arcs[a.head].append(a)
                by_line[a.line].append(a)
            cache = (dict(out_arcs), dict(in_arcs), dict(by_line))
            object.__setattr__(self, "_adj", cache)
        return cache

    def out_arcs(self, station: str) -> list[Arc]:
        return self._index()[0].get(station, [])

    def in_arcs(self, station: str) -> list[Arc]:
        return self._index()[1].get(station, [])

    def arcs_of_line(self, line: str) -> list[Arc]:
        return self._index()[2].get(line, [])

    def neighbors(self, station: str) -> set[str]:
        """Undirected neighbor set, self-loops excluded."""
        nb = {a.head for a in self.out_arcs(station)}
        nb |= {a.tail for a in self.in_arcs(station)}
        nb.discard(station)
        return nb

    @property
    def has_walkways(self) -> bool:
        return bool(self.arcs_of_line(WALKWAY))

    @property
    def line_arcs(self) -> tuple[Arc, ...]:
        return tuple(a for a in self.arcs if not a.is_walkway)

    def interchange(self, station: str) -> frozenset[str]:
        """Stations reachable from ``station`` on walkways alone (itself included)."""
        comp = self.__dict__.get("_comp")
        if comp is None:
            comp = {}
            adj = defaultdict(set)
            for a in self.arcs_of_line(WALKWAY):
                adj[a.tail].add(a.head)
            for s0 in sorted(self.stations):
                if s0 in comp:
                    continue
                group, todo = {s0}, [s0]
                while todo:
                    for w in adj[todo.pop()] - group:
                        group.add(w)
                        todo.append(w)
                g = frozenset(group)
                for w in g:
                    comp[w] = g
            object.__setattr__(self, "_comp", comp)
        return comp[station]

    def line_stations(self, line: str) -> set[str]:
        out = set()
        for a in self.arcs_of_line(line):
            out.add(a.tail)
            out.add(a.head)
        return out

    def canonical(self, name: str) -> str:
        """Map an original station name to its (possibly merged) vertex id."""
        if name in self.stations:
            return name
        lookup = self.__dict__.get("_alias")
        if lookup is None:
            lookup = {o: c for c, group in self.merged_names.items() for o in group}
            object.__setattr__(self, "_alias", lookup)
        try:
            return lookup[name]
        except KeyError:
            raise KeyError(f"unknown station {name!r}") from None

    def find_arcs(self, tail: str, head: str, line: str) -> list[Arc]:
        return [a for a in self.out_arcs(tail) if a.head == head and a.line == line]

    def coordinate(self, station: str) -> tuple[float, float] | None:
        if station in self.coords:
            return self.coords[station]
        for orig in sorted(self.merged_names.get(station, ())):
            if orig in self.coords:
                return self.coords[orig]
        return None

    def restricted(self, keep: Iterable[str]) -> "Network":
        """Sub-network induced by ``keep``; lines left without arcs are dropped."""
        keep = frozenset(keep)
        arcs = [a for a in self.arcs if a.tail in keep and a.head in keep]
        return Network(
            stations=keep,
            lines=frozenset(a.line for a in arcs if not a.is_walkway),
            arcs=tuple(arcs),
            merged_names={s: g for s, g in self.merged_names.items() if s in keep},
            coords=self.coords,
            name=self.name,
        )

    def reversed(self) -> "Network":
        arcs = [Arc(a.head, a.tail, a.line, a.index, a.dst, a.src) for a in self.arcs]
        return Network(self.stations, self.lines, tuple(arcs), self.merged_names,
                       self.coords, self.name)

    def summary(self) -> dict[str, int]:
        out = {
            "stations": len(self.stations),
            "lines": len(self.lines),
            "arcs": len(self.line_arcs),
            "corridors_merged": sum(len(g) - 1 for g in self.merged_names.values()),
        }
        if self.has_walkways:
            out["walkway_arcs"] = len(self.arcs_of_line(WALKWAY))
        return out

    def merged(self) -> "Network":
        """Same network with walkway-linked stations contracted (``merge`` mode)."""
        if not self.has_walkways:
            return self
        canon = {s: min(self.interchange(s)) for s in self.stations}
        counter = defaultdict(int)
        arcs = []
        for a in sorted(self.line_arcs, key=lambda a: (canon[a.tail], canon[a.head], a.line, a.src, a.dst)):
            k = (canon[a.tail], canon[a.head], a.line)
            arcs.append(Arc(k[0], k[1], a.line, counter[k], a.src, a.dst))
            counter[k] += 1
        groups = defaultdict(set)
        for s0, c in canon.items():
            groups[c] |= set(self.merged_names.get(s0, {s0}))
        return Network(frozenset(groups), self.lines, tuple(arcs),
                       {c: frozenset(g) for c, g in groups.items()}, self.coords, self.name)


def _check_invariants(net: Network) -> None:
    seen = set()
    for a in net.arcs:
        if a.tail not in net.stations or a.head not in net.stations:
            raise NetworkError(f"arc {a.key} references an unknown station")
        if a.line not in net.lines and not a.is_walkway:
            raise NetworkError(f"arc {a.key} references unknown line {a.line!r}")
        if a.key in seen:
            raise NetworkError(f"duplicate arc identity {a.key}")
        seen.add(a.key)
    bad = RESERVED_STATIONS & net.stations
    if bad:
        raise NetworkError(f"reserved station id(s) used: {sorted(bad)}")
    for reserved in (FAKE_LINE, WALKWAY):
        if reserved in net.lines:
            raise NetworkError(f"reserved line id {reserved!r} used")
    used = {a.line for a in net.arcs if not a.is_walkway}
    unused = net.lines - used
    if unused:
        raise NetworkError(f"line(s) without any arc: {sorted(unused)}")


def merge_corridors(stations: Iterable[str], corridors: Iterable[tuple[str, str]]) -> dict[str, str]:
    """Contract corridor-connected stations.

    Returns a map from every station to the lexicographically smallest member
    of its corridor component.
    """
    parent = {s: s for s in stations}

    def find(s):
        while parent[s] != s:
            parent[s] = parent[parent[s]]
            s = parent[s]
        return s

    for a, b in corridors:
        for s in (a, b):
            if s not in parent:
                raise NetworkError(f"corridor references unknown station {s!r}")
        ra, rb = find(a), find(b)
        if ra != rb:
            # keep the smaller name as root so the root is the canonical id
            if rb < ra:
                ra, rb = rb, ra
            parent[rb] = ra
    return {s: find(s) for s in parent}


def build_network(spec: "NetworkSpec", corridors: str = "merge") -> Network:
    """Expand segments into arcs; contract corridors or turn them into walkway arcs."""
    if corridors not in CORRIDOR_MODES:
        raise NetworkError(f"corridor mode must be one of {CORRIDOR_MODES}, got {corridors!r}")
    names = [s.name for s in spec.stations]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise NetworkError(f"duplicate station declaration(s): {dup}")
    known = set(names)
    lines = set(spec.lines)
    pairs = [(c.a, c.b) for c in spec.corridors]
    cmap = merge_corridors(names, pairs if corridors == "merge" else [])

    raw = []
    for seg in spec.segments:
        if seg.line not in lines:
            raise NetworkError(f"segment references unknown line {seg.line!r} (line {seg.lineno})")
        for s in (seg.a, seg.b):
            if s not in known:
                raise NetworkError(f"segment references unknown station {s!r} (line {seg.lineno})")
        if seg.a == seg.b:
            raise NetworkError(f"segment {seg.a!r}-{seg.b!r} is a self-loop (line {seg.lineno})")
        raw.append((seg.a, seg.b, seg.line))
        if not seg.oneway:
            raw.append((seg.b, seg.a, seg.line))
    if len(set(raw)) != len(raw):
        dup = sorted({r for r in raw if raw.count(r) > 1})
        raise NetworkError(f"duplicate arc(s): {dup}")

    if corridors == "walk":
        walk = set()
        for a, b in pairs:
            for s0 in (a, b):
                if s0 not in known:
                    raise NetworkError(f"corridor references unknown station {s0!r}")
            if a != b:
                walk |= {(a, b, WALKWAY), (b, a, WALKWAY)}
        raw.extend(sorted(walk))

    counter = defaultdict(int)
    arcs = []
    for src, dst, line in sorted(raw, key=lambda r: (cmap[r[0]], cmap[r[1]], r[2], r[0], r[1])):
        k = (cmap[src], cmap[dst], line)
        arcs.append(Arc(k[0], k[1], line, counter[k], src, dst))
        counter[k] += 1

    groups = defaultdict(set)
    for s, c in cmap.items():
        groups[c].add(s)
    coords = {s.name: (s.lat, s.lon) for s in spec.stations if s.lat is not None}
    return Network(
        stations=frozenset(groups),
        lines=frozenset(lines),
        arcs=tuple(arcs),
        merged_names={c: frozenset(g) for c, g in groups.items()},
        coords=coords,
        name=spec.name,
    )


def prune_termini(network: Network) -> tuple[Network, set[str]]:
    """Recursively drop dead-end stations: one neighbor (ignoring direction), one line.

    A station is kept when removing it would delete the last arc of a line,
    when it carries a self-loop (a merged interchange still worth a step), or
    when two lines end there: a round trip to such a station covers both lines
    in two steps, which nothing else in the graph may match.
    """
    alive = set(network.stations)
    arcs = set(network.arcs)
    line_count = defaultdict(int)
    for a in arcs:
        if not a.is_walkway:
            line_count[a.line] += 1
    incident = defaultdict(set)
    for a in arcs:
        incident[a.tail].add(a)
        incident[a.head].add(a)

    def neighbors(v):
        return {a.head if a.tail == v else a.tail for a in incident[v]} - {v}

    removed = set()
    changed = True
    while changed:
        changed = False
        for v in sorted(alive):
            if len(neighbors(v)) != 1 or any(a.is_loop for a in incident[v]):
                continue
            lost = defaultdict(int)
            for a in incident[v]:
                if not a.is_walkway:
                    lost[a.line] += 1
            if len(lost) > 1 or any(line_count[ln] - k <= 0 for ln, k in lost.items()):
                continue
            for a in list(incident[v]):
                other = a.head if a.tail == v else a.tail
                incident[other].discard(a)
                arcs.discard(a)
                line_count[a.line] -= 1
            incident.pop(v)
            alive.discard(v)
            removed.add(v)
            changed = True
    pruned = Network(
        stations=frozenset(alive),
        lines=network.lines,
        arcs=tuple(arcs),
        merged_names={s: g for s, g in network.merged_names.items() if s in alive},
        coords=network.coords,
        name=network.name,
    )
    return pruned, removed
