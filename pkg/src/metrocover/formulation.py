"""Integer program for the shortest line-covering walk and its variants.

Variables, one family per letter:

``x``  binary, arc taken or not (fake source/target arcs included)
``f``  integer >= 0, auxiliary single-commodity flow on the arc
``y``  integer >= 0, at least the number of chosen arcs touching a vertex

Free walkway arcs (corridors kept as arcs) get ``x`` and ``f`` like any arc
but cost nothing and cover no line; their ``x`` is a bounded integer since a
corridor may be walked more than once.
``z``  binary, arc pair taken one right after the other (no-line-reuse only;
       integer between two walkways)
``g``  integer >= 0, flow along those pairs; ``r`` picks the first arc of a cycle

Rows of the walk model::

    minimize   sum of x over line arcs
    balance    in(x) = out(x)                  every station
    endpoints  out_s(x) + in_t(x) = 2          fake source s, fake target t
    cover      sum of x on line l >= 1         every required line
    capacity   M x - f >= 0                    every arc
    flow       in(f) - out(f) - y_v >= 0       every vertex but s
    visited    y_v - in(x) - out(x) >= 0       every vertex

A model is a pure function of (network, variant, anchor, big-M rule) plus its
list of no-good cuts; every ``apply_*`` helper returns a new model.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from metrocover.network import FAKE_LINE, WALKWAY, Arc, Network
from metrocover.variant import VariantConfig, anchor_candidates

SOURCE = "<source>"
TARGET = "<target>"

__all__ = [
    "VariantConfig", "Variable", "Constraint", "IlpModel", "FormulationError",
    "build_base_model", "apply_path_restriction", "apply_line_contiguity",
    "apply_cycle_variant", "add_nogood_cut", "build_model", "serialize_lp",
    "encode_name", "decode_name", "var_name", "arc_from_var", "check_assignment",
    "anchor_candidates",
]


class FormulationError(ValueError):
    pass


def encode_name(text: str) -> str:
    """Percent-encode every character that is not an ASCII letter or digit."""
    out = []
    for ch in text:
        if ch.isascii() and ch.isalnum():
            out.append(ch)
        else:
            out.extend(f"%{b:02X}" for b in ch.encode("utf-8"))
    return "".join(out)


def decode_name(text: str) -> str:
    raw = bytearray()
    i = 0
    while i < len(text):
        if text[i] == "%":
            raw.append(int(text[i + 1:i + 3], 16))
            i += 3
        else:
            raw.extend(text[i].encode("ascii"))
            i += 1
    return raw.decode("utf-8")


def var_name(prefix: str, arc: Arc) -> str:
    parts = (arc.tail, arc.head, arc.line)
    return "__".join([prefix, *map(encode_name, parts), str(arc.index)])


def arc_from_var(name: str) -> tuple[str, str, str, str, int]:
    """Inverse of :func:`var_name`: ``(prefix, tail, head, line, index)``."""
    prefix, tail, head, line, index = name.split("__")
    return prefix, decode_name(tail), decode_name(head), decode_name(line), int(index)


def _y(v: str) -> str:
    return "y__" + encode_name(v)


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # "binary" or "integer"
    lb: int = 0
    ub: int | None = None


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[int, str], ...]
    sense: str  # "=", ">=", "<="
    rhs: int
    group: str

    def evaluate(self, values: Mapping[str, int]) -> bool:
        lhs = sum(c * values.get(v, 0) for c, v in self.terms)
        if self.sense == "=":
            return lhs == self.rhs
        if self.sense == ">=":
            return lhs >= self.rhs
        return lhs <= self.rhs


@dataclass(frozen=True, eq=False)
class IlpModel:
    network: Network
    variant: VariantConfig
    anchor: str | None
    big_m_rule: str
    variables: Mapping[str, Variable]
    constraints: tuple[Constraint, ...]
    objective: tuple[tuple[int, str], ...]
    big_m: int
    arc_of: Mapping[str, Arc]
    fake_source: str | None = SOURCE
    fake_target: str | None = TARGET
    cuts: tuple[Constraint, ...] = field(default=())
    pair_arcs: Mapping[str, tuple[str, str]] = field(default_factory=dict)

    @property
    def all_constraints(self) -> tuple[Constraint, ...]:
        return self.constraints + self.cuts

    def x_of(self, arc: Arc) -> str:
        return var_name("x", arc)

    def objective_value(self, values: Mapping[str, int]) -> int:
        return sum(c * values.get(v, 0) for c, v in self.objective)

    def arcs_in(self, values: Mapping[str, int]) -> list[Arc]:
        """Real arcs whose ``x`` is set in ``values``, repeated as often as taken."""
        return [arc for name, arc in sorted(self.arc_of.items()) for _ in range(values.get(name, 0))]

    def counts(self) -> dict[str, int]:
        by_prefix = defaultdict(int)
        for name in self.variables:
            by_prefix[name.split("__", 1)[0]] += 1
        by_group = defaultdict(int)
        for c in self.all_constraints:
            by_group[c.group] += 1
        return {**{f"vars_{k}": v for k, v in sorted(by_prefix.items())},
                **{f"rows_{k}": v for k, v in sorted(by_group.items())}}


def _row(name, coeffs: Mapping[str, int], sense, rhs, group) -> Constraint | None:
    """Row with zero coefficients dropped; None if it is empty and holds anyway."""
    terms = tuple((c, v) for v, c in sorted(coeffs.items()) if c != 0)
    row = Constraint(name, terms, sense, rhs, group)
    if not terms and row.evaluate({}):
        return None
    return row


def _walk_bounds(network: Network) -> tuple[int, int]:
    """(times one walkway arc may be taken, walkway steps in a whole journey).

    Between two consecutive line arcs a transfer never needs the same station
    twice, so each walkway arc is taken at most once per transfer and a
    transfer has fewer steps than its interchange has stations.
    """
    walks = network.arcs_of_line(WALKWAY)
    if not walks:
        return 0, 0
    transfers = len(network.line_arcs) + 1
    widest = max(len(network.interchange(a.tail)) for a in walks)
    return transfers, transfers * (widest - 1)


def _big_m(rule: str, n_vertices: int, n_arcs: int, n_real_arcs: int) -> int:
    if rule == "vertices":
        return n_vertices
    if rule == "safe":
        # flow leaving the root must feed sum(y) <= 2 * (chosen arcs) + 1
        return max(n_arcs + n_vertices, 2 * n_real_arcs + 3)
    raise FormulationError(f"unknown big-M rule {rule!r} (use 'safe' or 'vertices')")


def _assemble(network: Network, variant: VariantConfig, anchor: str | None,
              big_m_rule: str, cuts=()) -> IlpModel:
    variant = variant.resolve(network)
    for line in sorted(variant.required_colors):
        if not network.arcs_of_line(line):
            raise FormulationError(f"required line {line!r} has no arc; the instance is infeasible")
    if not network.stations:
        raise FormulationError("empty network")
    cycle = anchor is not None
    stations = sorted(network.stations)
    real = list(network.arcs)
    fake = []
    if not cycle:
        fake = [Arc(SOURCE, v, FAKE_LINE) for v in stations] + [Arc(v, TARGET, FAKE_LINE) for v in stations]
    arcs = real + fake
    vertices = stations + ([] if cycle else [SOURCE, TARGET])
    per_walk, walk_steps = _walk_bounds(network)
    # most arc traversals a journey needs, walkways counted with multiplicity
    n_taken = len(network.line_arcs) + walk_steps
    big_m = _big_m(big_m_rule, len(vertices), len(arcs), n_taken)

    variables = {}
    arc_of = {}
    for a in arcs:
        xn, fn = var_name("x", a), var_name("f", a)
        if xn in variables or fn in variables:
            raise FormulationError(f"variable name collision on {xn}")
        if a.is_walkway:
            variables[xn] = Variable(xn, "integer", 0, per_walk)
        else:
            variables[xn] = Variable(xn, "binary", 0, 1)
        variables[fn] = Variable(fn, "integer", 0, None)
        if a.line != FAKE_LINE:
            arc_of[xn] = a
    y_ub = 2 if variant.forbid_station_reuse else None
    for v in vertices:
        yn = _y(v)
        if yn in variables:
            raise FormulationError(f"variable name collision on {yn}")
        variables[yn] = Variable(yn, "integer", 0, y_ub)

    out_of = defaultdict(list)
    in_of = defaultdict(list)
    for a in arcs:
        out_of[a.tail].append(a)
        in_of[a.head].append(a)

    rows = []
    for v in stations:
        co = defaultdict(int)
        for a in in_of[v]:
            co[var_name("x", a)] += 1
        for a in out_of[v]:
            co[var_name("x", a)] -= 1
        rows.append(_row(f"bal__{encode_name(v)}", co, "=", 0, "balance"))
    if not cycle:
        co = {var_name("x", a): 1 for a in fake}
        rows.append(_row("endpoints", co, "=", 2, "endpoints"))
    for line in sorted(variant.required_colors):
        co = {var_name("x", a): 1 for a in network.arcs_of_line(line)}
        rows.append(_row(f"cover__{encode_name(line)}", co, ">=", 1, "cover"))
    for a in arcs:
        co = {var_name("x", a): big_m, var_name("f", a): -1}
        rows.append(_row(f"cap__{var_name('x', a)[3:]}", co, ">=", 0, "capacity"))
    root = anchor if cycle else SOURCE
    for v in vertices:
        if v == root:
            continue
        co = defaultdict(int)
        for a in in_of[v]:
            co[var_name("f", a)] += 1
        for a in out_of[v]:
            co[var_name("f", a)] -= 1
        co[_y(v)] -= 1
        rows.append(_row(f"flow__{encode_name(v)}", co, ">=", 0, "flow"))
    for v in vertices:
        co = defaultdict(int)
        co[_y(v)] += 1
        for a in in_of[v]:
            co[var_name("x", a)] -= 1
        for a in out_of[v]:
            co[var_name("x", a)] -= 1
        rows.append(_row(f"visit__{encode_name(v)}", co, ">=", 0, "visited"))

    pair_arcs = {}
    if variant.forbid_line_reuse:
        rows.extend(_contiguity_rows(arcs, in_of, out_of, variant.required_colors, variables,
                                     anchor, pair_arcs, n_taken + 3, per_walk))

    rows = [r for r in rows if r is not None]
    objective = tuple((1, var_name("x", a)) for a in sorted(real) if not a.is_walkway)
    return IlpModel(
        network=network,
        variant=variant,
        anchor=anchor,
        big_m_rule=big_m_rule,
        variables=variables,
        constraints=tuple(rows),
        objective=objective,
        big_m=big_m,
        arc_of=arc_of,
        fake_source=None if cycle else SOURCE,
        fake_target=None if cycle else TARGET,
        cuts=tuple(cuts),
        pair_arcs=pair_arcs,
    )


def _contiguity_rows(arcs, in_of, out_of, required, variables, anchor, pair_arcs, n_cap, per_walk):
    """Successor pairs and the one-run-per-line rows.

    ``z`` for a pair (a1 into v, a2 out of v) means "a2 is taken right after
    a1".  Every chosen arc gets exactly one successor and one predecessor
    (fake arcs close the chain), and a flow ``g`` over successor pairs forces
    the chain to be a single journey rooted at the start (the chosen fake
    source arc, or for cycles one chosen ``r``-marked arc leaving the anchor).
    Each required line then has exactly two pairs with the line on one side
    only: where its run is entered and where it is left.  A cycle covering a
    single required line may also have none.
    """
    rows = []
    cyclic = anchor is not None
    succ = defaultdict(dict)
    pred = defaultdict(dict)
    g_in = defaultdict(dict)
    g_out = defaultdict(dict)
    per_line = defaultdict(dict)
    for v in sorted(set(in_of) & set(out_of)):
        for a1 in sorted(in_of[v]):
            for a2 in sorted(out_of[v]):
                # a self-loop may follow itself only as a one-step cycle
                if (a1 == a2 and not (cyclic and a1.is_loop)) or (a1.tail == SOURCE and a2.head == TARGET):
                    continue
                tag = "__".join([*map(encode_name, (a1.tail, v, a2.head, a1.line, a2.line)),
                                 str(a1.index), str(a2.index)])
                zn, gn = "z__" + tag, "g__" + tag
                if zn in variables:
                    raise FormulationError(f"variable name collision on {zn}")
                if a1.is_walkway and a2.is_walkway:
                    variables[zn] = Variable(zn, "integer", 0, per_walk)
                else:
                    variables[zn] = Variable(zn, "binary", 0, 1)
                variables[gn] = Variable(gn, "integer", 0, None)
                x1, x2 = var_name("x", a1), var_name("x", a2)
                pair_arcs[zn] = (x1, x2)
                succ[x1][zn] = 1
                pred[x2][zn] = 1
                g_out[x1][gn] = -1
                g_in[x2][gn] = 1
                rows.append(_row(f"zcap__{tag}", {zn: n_cap, gn: -1}, ">=", 0, "contiguity_capacity"))
                if a1.line != a2.line:
                    for line in (a1.line, a2.line):
                        if line in required:
                            per_line[line][zn] = 1
    for a in arcs:
        xn = var_name("x", a)
        if a.head != TARGET:
            rows.append(_row(f"succ__{xn[3:]}", {**succ[xn], xn: -1}, "=", 0, "contiguity_successor"))
        if a.tail != SOURCE:
            rows.append(_row(f"pred__{xn[3:]}", {**pred[xn], xn: -1}, "=", 0, "contiguity_successor"))
    roots = {}
    if cyclic:
        for a in sorted(out_of[anchor]):
            xn = var_name("x", a)
            rn = "r__" + xn[3:]
            variables[rn] = Variable(rn, "binary", 0, 1)
            roots[xn] = rn
            rows.append(_row(f"root__{xn[3:]}", {rn: 1, xn: -1}, "<=", 0, "contiguity_root"))
        rows.append(_row("root", {rn: 1 for rn in roots.values()}, "=", 1, "contiguity_root"))
    for a in arcs:
        if a.tail == SOURCE:
            continue
        xn = var_name("x", a)
        co = {**g_in[xn]}
        for gn, c in g_out[xn].items():
            co[gn] = co.get(gn, 0) + c
        co[xn] = -1
        if xn in roots:
            co[roots[xn]] = n_cap
        rows.append(_row(f"chain__{xn[3:]}", co, ">=", 0, "contiguity_flow"))
    for line in sorted(required):
        if cyclic and len(required) == 1:
            rows.append(_row(f"run__{encode_name(line)}", per_line[line], "<=", 2, "contiguity_run"))
        else:
            rows.append(_row(f"run__{encode_name(line)}", per_line[line], "=", 2, "contiguity_run"))
    return rows


def build_base_model(network: Network, variant: VariantConfig | None = None,
                     big_m_rule: str = "safe") -> IlpModel:
    """Walk model with fake source and target.

    The variant's station/line reuse flags are honoured; the cycle shape is
    applied separately with :func:`apply_cycle_variant`.
    """
    variant = variant or VariantConfig()
    return _assemble(network, variant, None, big_m_rule)


def apply_path_restriction(model: IlpModel) -> IlpModel:
    """Cap every ``y`` at 2: each station is entered and left at most once."""
    variant = replace(model.variant, forbid_station_reuse=True)
    return _assemble(model.network, variant, model.anchor, model.big_m_rule, model.cuts)


def apply_line_contiguity(model: IlpModel, network: Network | None = None) -> IlpModel:
    """Forbid coming back to a required line once it has been left."""
    network = network or model.network
    variant = replace(model.variant, forbid_line_reuse=True)
    return _assemble(network, variant, model.anchor, model.big_m_rule, model.cuts)


def apply_cycle_variant(model: IlpModel, anchor: str) -> IlpModel:
    """Drop the fake endpoints and let ``anchor`` emit the connectivity flow."""
    try:
        anchor = model.network.canonical(anchor)
    except KeyError:
        raise FormulationError(f"anchor {anchor!r} is not in the network") from None
    variant = model.variant
    if variant.shape != "cycle":
        variant = replace(variant, shape="cycle")
    return _assemble(model.network, variant, anchor, model.big_m_rule, model.cuts)


def add_nogood_cut(model: IlpModel, solution: Iterable[Arc]) -> IlpModel:
    """Exclude ``solution``: sum of its x variables <= |X| - 1.

    Free walkway arcs are left out of X, so the cut removes every journey
    with the same steps whichever corridors it walks through.
    """
    arcs = sorted({a for a in solution if not a.is_walkway})
    if not arcs:
        raise FormulationError("cannot cut an empty solution")
    names = []
    for a in arcs:
        xn = var_name("x", a)
        if xn not in model.arc_of:
            raise FormulationError(f"arc {a.key} is not a variable of this model")
        names.append(xn)
    cut = _row(f"cut__{len(model.cuts) + 1}", {n: 1 for n in names}, "<=", len(names) - 1, "cuts")
    return replace(model, cuts=model.cuts + (cut,))


def build_model(network: Network, variant: VariantConfig, anchor: str | None = None,
                big_m_rule: str = "safe") -> IlpModel:
    """Model for any variant; cycles need an anchor (see :func:`anchor_candidates`)."""
    variant = variant.resolve(network)
    if variant.closed:
        anchor = anchor or variant.anchor
        if anchor is None:
            raise FormulationError("the cycle shape needs an anchor station")
        model = _assemble(network, replace(variant, anchor=None), None, big_m_rule)
        return apply_cycle_variant(model, anchor)
    return _assemble(network, variant, None, big_m_rule)


def check_assignment(model: IlpModel, values: Mapping[str, int]) -> list[str]:
    """Names of violated rows and out-of-domain variables (empty when feasible)."""
    bad = []
    for name, var in model.variables.items():
        val = values.get(name, 0)
        if val < var.lb or (var.ub is not None and val > var.ub):
            bad.append(name)
    for c in model.all_constraints:
        if not c.evaluate(values):
            bad.append(c.name)
    return bad


def _format_terms(terms, width=8):
    chunks = []
    for i, (c, v) in enumerate(terms):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = v if mag == 1 else f"{mag} {v}"
        if i == 0:
            chunks.append(f"- {body}" if c < 0 else body)
        else:
            chunks.append(f"{sign} {body}")
    lines = [" ".join(chunks[i:i + width]) for i in range(0, len(chunks), width)]
    return "\n   ".join(lines)


def serialize_lp(model: IlpModel) -> str:
    """Model as LP-format text; byte-identical for identical models."""
    out = [f"\\ metrocover: {model.network.name or 'network'} [{model.variant.describe()}]"
           + (f" anchor={model.anchor}" if model.anchor else "")]
    out.append(f"\\ big-M = {model.big_m} ({model.big_m_rule})")
    out.append("Minimize")
    out.append(f" obj: {_format_terms(model.objective)}")
    out.append("Subject To")
    ops = {"=": "=", ">=": ">=", "<=": "<="}
    anyvar = min(model.variables)
    for c in model.constraints:
        # an empty row that 0 violates proves infeasibility; LP text needs a term
        terms = c.terms or ((0, anyvar),)
        out.append(f" {c.name}: {_format_terms(terms)} {ops[c.sense]} {c.rhs}")
    if model.cuts:
        out.append("\\ no-good cuts")
        for c in model.cuts:
            out.append(f" {c.name}: {_format_terms(c.terms)} {ops[c.sense]} {c.rhs}")
    out.append("Bounds")
    for name in sorted(model.variables):
        var = model.variables[name]
        if var.kind == "integer" and var.ub is not None:
            out.append(f" {var.lb} <= {name} <= {var.ub}")
    generals = sorted(n for n, v in model.variables.items() if v.kind == "integer")
    binaries = sorted(n for n, v in model.variables.items() if v.kind == "binary")
    if generals:
        out.append("Generals")
        out.extend(f" {n}" for n in generals)
    if binaries:
        out.append("Binaries")
        out.extend(f" {n}" for n in binaries)
    out.append("End")
    return "\n".join(out) + "\n"
