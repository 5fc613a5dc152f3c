"""Shortest journeys that ride every line of a transit network at least once.

Exact answers come from two independent routes: a state-space search over
(station, covered lines), and an integer program handed to an external MILP
solver.  See the README for the command-line tool.
"""

from metrocover.network import Arc, Journey, Network, Step, prune_termini
from metrocover.ingest import load_network, network_from_text, parse_network_file, canonical_serialize
from metrocover.variant import VariantConfig
from metrocover.solution import enumerate_solutions, solve, validate_journey, reconstruct_walk

__version__ = "0.1.0"

__all__ = [
    "Arc", "Journey", "Network", "Step", "prune_termini",
    "load_network", "network_from_text", "parse_network_file", "canonical_serialize",
    "VariantConfig", "solve", "enumerate_solutions", "validate_journey", "reconstruct_walk",
]
