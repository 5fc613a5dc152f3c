"""Reading and writing network description files.

The format is line oriented, UTF-8, ``#`` starts a comment::

    station <name> [<lat> <lon>]
    line <line_id>
    segment <line_id> <station_a> <station_b> [oneway]
    corridor <station_a> <station_b>

Names with spaces are double-quoted.  Comment lines of the form
``#: key: value`` are kept as dataset metadata.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from metrocover.network import FAKE_LINE, RESERVED_STATIONS, WALKWAY, Network, build_network

_TOKEN = re.compile(r'"((?:[^"\\]|\\.)*)"|(\S+)')
_BARE_OK = re.compile(r"^[^\s\"#\\]+$")


class SpecError(ValueError):
    """Raised for malformed or invalid network files."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


@dataclass(frozen=True)
class StationDecl:
    name: str
    lat: float | None = None
    lon: float | None = None
    lineno: int = 0


@dataclass(frozen=True)
class SegmentDecl:
    line: str
    a: str
    b: str
    oneway: bool = False
    lineno: int = 0


@dataclass(frozen=True)
class CorridorDecl:
    a: str
    b: str
    lineno: int = 0


@dataclass
class NetworkSpec:
    stations: list[StationDecl] = field(default_factory=list)
    lines: list[str] = field(default_factory=list)
    segments: list[SegmentDecl] = field(default_factory=list)
    corridors: list[CorridorDecl] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)
    line_decl_lineno: dict[str, int] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.metadata.get("name", "")


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    message: str
    lineno: int = 0

    def __str__(self):
        where = f"line {self.lineno}: " if self.lineno else ""
        return f"{self.level}: {where}{self.message}"


def _tokens(raw: str, lineno: int) -> list[str]:
    out = []
    pos = 0
    raw = raw.rstrip("\n")
    while pos < len(raw):
        if raw[pos].isspace():
            pos += 1
            continue
        if raw[pos] == "#":
            break
        m = _TOKEN.match(raw, pos)
        if m is None or (m.group(2) is not None and '"' in m.group(2)):
            raise SpecError(f"line {lineno}: unterminated quote near {raw[pos:pos + 20]!r}")
        if m.group(1) is not None:
            out.append(re.sub(r"\\(.)", r"\1", m.group(1)))
        else:
            out.append(m.group(2))
        pos = m.end()
    return out


def _float(tok: str, lineno: int, what: str) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise SpecError(f"line {lineno}: malformed {what} {tok!r}") from None
    limit = 90 if what == "latitude" else 180
    if not -limit <= val <= limit:
        raise SpecError(f"line {lineno}: {what} {tok!r} out of range")
    return val


def parse_network_file(text: str, strict: bool = True) -> NetworkSpec:
    """Parse network text into a :class:`NetworkSpec`.

    With ``strict`` (the default) any error reported by :func:`validate_spec`
    is raised as :class:`SpecError`; warnings never block.
    """
    spec = NetworkSpec()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("#:"):
            key, _, value = stripped[2:].partition(":")
            if key.strip():
                spec.metadata[key.strip()] = value.strip()
            continue
        toks = _tokens(raw, lineno)
        if not toks:
            continue
        head, args = toks[0], toks[1:]
        if head == "station":
            if len(args) == 1:
                spec.stations.append(StationDecl(args[0], lineno=lineno))
            elif len(args) == 3:
                lat = _float(args[1], lineno, "latitude")
                lon = _float(args[2], lineno, "longitude")
                spec.stations.append(StationDecl(args[0], lat, lon, lineno))
            else:
                raise SpecError(f"line {lineno}: 'station' takes a name and optional lat lon, got {args!r}")
        elif head == "line":
            if len(args) != 1:
                raise SpecError(f"line {lineno}: 'line' takes exactly one id, got {args!r}")
            spec.lines.append(args[0])
            spec.line_decl_lineno.setdefault(args[0], lineno)
        elif head == "segment":
            oneway = False
            if len(args) == 4:
                if args[3] != "oneway":
                    raise SpecError(f"line {lineno}: unexpected token {args[3]!r} (expected 'oneway')")
                oneway = True
            elif len(args) != 3:
                raise SpecError(f"line {lineno}: 'segment' takes line a b [oneway], got {args!r}")
            spec.segments.append(SegmentDecl(args[0], args[1], args[2], oneway, lineno))
        elif head == "corridor":
            if len(args) != 2:
                raise SpecError(f"line {lineno}: 'corridor' takes two stations, got {args!r}")
            spec.corridors.append(CorridorDecl(args[0], args[1], lineno))
        else:
            raise SpecError(f"line {lineno}: unknown directive {head!r}")
    if strict:
        errors = [d for d in validate_spec(spec) if d.level == "error"]
        if errors:
            raise SpecError("; ".join(str(d) for d in errors), errors)
    return spec


def validate_spec(spec: NetworkSpec) -> list[Diagnostic]:
    """Return every invariant violation (errors) and connectivity warning."""
    diags = []
    declared = {}
    for s in spec.stations:
        if s.name in declared:
            diags.append(Diagnostic("error", f"station {s.name!r} declared twice", s.lineno))
        elif s.name in RESERVED_STATIONS:
            diags.append(Diagnostic("error", f"station name {s.name!r} is reserved", s.lineno))
        declared.setdefault(s.name, s.lineno)
    line_counts = Counter(spec.lines)
    for ln, k in sorted(line_counts.items()):
        if k > 1:
            diags.append(Diagnostic("error", f"line {ln!r} declared twice", spec.line_decl_lineno.get(ln, 0)))
        if ln in (FAKE_LINE, WALKWAY):
            diags.append(Diagnostic("error", f"line id {ln!r} is reserved", spec.line_decl_lineno.get(ln, 0)))

    def station_ok(name, lineno):
        if name not in declared:
            diags.append(Diagnostic("error", f"undeclared station {name!r}", lineno))
            return False
        if lineno and declared[name] and declared[name] > lineno:
            diags.append(Diagnostic("error", f"station {name!r} used before its declaration", lineno))
            return False
        return True

    directions = Counter()
    used_lines = Counter()
    touched = set()
    for seg in spec.segments:
        if seg.line not in line_counts:
            diags.append(Diagnostic("error", f"undeclared line {seg.line!r}", seg.lineno))
        elif seg.lineno and spec.line_decl_lineno.get(seg.line, 0) > seg.lineno:
            diags.append(Diagnostic("error", f"line {seg.line!r} used before its declaration", seg.lineno))
        ok_a = station_ok(seg.a, seg.lineno)
        ok_b = station_ok(seg.b, seg.lineno)
        if seg.a == seg.b:
            diags.append(Diagnostic("error", f"segment {seg.a!r}-{seg.b!r} is a self-loop", seg.lineno))
            continue
        if ok_a and ok_b:
            touched.update((seg.a, seg.b))
        used_lines[seg.line] += 1
        dirs = [(seg.a, seg.b)] if seg.oneway else [(seg.a, seg.b), (seg.b, seg.a)]
        for a, b in dirs:
            directions[(seg.line, a, b)] += 1
            if directions[(seg.line, a, b)] == 2:
                diags.append(Diagnostic("error", f"duplicate segment {a!r}->{b!r} on line {seg.line!r}", seg.lineno))
    for c in spec.corridors:
        ok_a = station_ok(c.a, c.lineno)
        ok_b = station_ok(c.b, c.lineno)
        if ok_a and ok_b:
            touched.update((c.a, c.b))
    for ln in sorted(line_counts):
        if used_lines[ln] == 0:
            diags.append(Diagnostic("warning", f"line {ln!r} has no segment", spec.line_decl_lineno.get(ln, 0)))
    for s in spec.stations:
        if s.name not in touched and s.name not in RESERVED_STATIONS:
            diags.append(Diagnostic("warning", f"station {s.name!r} has no segment and no corridor", s.lineno))
    return diags


def _quote(name: str) -> str:
    if _BARE_OK.match(name) and name not in ("oneway",):
        return name
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def canonical_serialize(network: Network) -> str:
    """Deterministic text form of ``network``; parsing it rebuilds an equal network."""
    out = []
    if network.name:
        out.append(f"#: name: {network.name}")
    originals = sorted(o for g in network.merged_names.values() for o in g)
    for name in originals:
        c = network.coords.get(name)
        if c is not None:
            out.append(f"station {_quote(name)} {c[0]!r} {c[1]!r}")
        else:
            out.append(f"station {_quote(name)}")
    for ln in sorted(network.lines):
        out.append(f"line {_quote(ln)}")
    directed = {(a.line, a.src, a.dst) for a in network.line_arcs}
    segs = []
    for line, src, dst in directed:
        if (line, dst, src) in directed:
            if src < dst:
                segs.append((line, src, dst, False))
        else:
            segs.append((line, src, dst, True))
    for line, src, dst, oneway in sorted(segs):
        tail = " oneway" if oneway else ""
        out.append(f"segment {_quote(line)} {_quote(src)} {_quote(dst)}{tail}")
    corridors = set()
    for canon in sorted(network.merged_names):
        for other in sorted(network.merged_names[canon] - {canon}):
            corridors.add((canon, other))
    for a in network.arcs_of_line(WALKWAY):
        if (a.head, a.tail) not in corridors:
            corridors.add((a.tail, a.head))
    for a, b in sorted(corridors):
        out.append(f"corridor {_quote(a)} {_quote(b)}")
    return "\n".join(out) + "\n"


def load_network(path: str | Path, corridors: str = "merge") -> Network:
    """Parse and build the network stored at ``path``.

    ``corridors`` is ``merge`` (contract corridor-linked stations) or ``walk``
    (keep them apart, joined by free walkway arcs).
    """
    text = Path(path).read_text(encoding="utf-8")
    spec = parse_network_file(text)
    if not spec.metadata.get("name"):
        spec.metadata["name"] = Path(path).stem
    return build_network(spec, corridors)


def network_from_text(text: str, corridors: str = "merge") -> Network:
    return build_network(parse_network_file(text), corridors)
