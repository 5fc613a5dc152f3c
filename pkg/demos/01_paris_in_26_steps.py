"""
Riding every Paris metro line in 26 steps
=========================================

Load the curated Paris metro file, look at its size, and ask the exact
search for the shortest journey that rides all 16 lines at least once.
A step is one hop between adjacent stations.

Run from the repository root::

    python3 demos/01_paris_in_26_steps.py
"""

from pathlib import Path

from metrocover.ingest import load_network
from metrocover.network import prune_termini
from metrocover.solution import export_table, solve, validate_journey
from metrocover.variant import VariantConfig

DATA = Path(__file__).resolve().parent.parent / "datasets"

# %%
# The network: stations joined by a corridor are merged into one node, so
# changing line there is free.
net = load_network(DATA / "paris-metro.txt")
print(net.summary())

# %%
# Dead-end stations served by a single line are never worth a visit on
# two-way lines, so they can go before searching.
pruned, removed = prune_termini(net)
print(f"pruned {len(removed)} dead-end stations, {len(pruned.stations)} left")

# %%
# Shortest walk covering all lines.  The search runs over (station, set of
# lines already ridden) states, 2^16 subsets per station.
report = solve(pruned, VariantConfig(), backend="oracle")
print(f"{report.status}: {report.objective} steps")
print(export_table(report))

# %%
# Check the journey step by step against the full, unpruned network.
check = validate_journey(report.journey, net, VariantConfig())
print("valid" if check.ok else check.failures)

# %%
# Line 7bis runs one way round its loop, so the journey read backwards is
# not a journey at all.
back = validate_journey(report.journey.reversed(), net, VariantConfig())
print(back.failures)
