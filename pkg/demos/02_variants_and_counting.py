"""
Variants, the integer program, and counting optima
==================================================

The same question with extra rules: a closed tour, no station twice, no
line ridden in two separate pieces.  Small networks first, where every
answer can be checked by hand, then the integer program on a real one.

Needs a MILP solver for the second half: HiGHS (``pip install highspy``)
or CBC (``pip install pulp``, whose wheel ships the binary).
"""

from pathlib import Path

from metrocover.backend import BackendError, preset
from metrocover.formulation import build_model, serialize_lp
from metrocover.ingest import load_network, network_from_text
from metrocover.solution import enumerate_solutions, export_table, solve
from metrocover.variant import VariantConfig

DATA = Path(__file__).resolve().parent.parent / "datasets"

# %%
# A star: three lines leave hub H.  An open walk needs 4 steps (ride one
# spoke out and back, then the other two), a tour needs 6, and a simple
# path cannot exist since it would pass H twice.
star = network_from_text("""
station H
station A
station B
station C
line L1
line L2
line L3
segment L1 H A
segment L2 H B
segment L3 H C
""")
for v in (VariantConfig(), VariantConfig("cycle"), VariantConfig("path")):
    rep = solve(star, v, backend="oracle")
    print(f"{v.describe():<30} {rep.status:<10} {rep.objective}")

# %%
# Every optimal walk, as a set of directed arcs: start at the end of one
# spoke, finish at the end of another, and ride the third out and back.
# Three choices of start times two of finish gives six.
for rep in enumerate_solutions(star, VariantConfig(), backend="oracle"):
    print(" -> ".join(rep.journey.stations), rep.journey.lines)

# %%
# The integer program behind the MILP backend, as LP text.
model = build_model(star, VariantConfig())
print(model.counts())
print(serialize_lp(model)[:600], "...")

# %%
# Hand it to a solver.  Each optimum found is cut off with a no-good
# constraint and the model solved again, until the objective gets worse.
try:
    cfg = preset("auto", time_limit=120)
except BackendError as exc:
    cfg = None
    print("no MILP solver installed:", exc)

if cfg is not None:
    en = enumerate_solutions(star, VariantConfig(), backend="milp", config=cfg)
    print(f"{len(en)} optimal arc sets via {cfg.name}")

    # %%
    # Paris, no line ridden twice in separate pieces.  Corridors are kept
    # as free walkways here, so changing between two linked stations is a
    # transfer rather than a revisit.
    paris = load_network(DATA / "paris-metro.txt", corridors="walk")
    rep = solve(paris, VariantConfig(forbid_line_reuse=True), backend="oracle")
    print(export_table(rep))
