"""Problem flavors: which lines must be covered and what the journey may look like."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

from metrocover.network import Network

SHAPES = ("walk", "path", "cycle")


@dataclass(frozen=True)
class VariantConfig:
    """Walk, path or cycle over a required subset of lines.

    ``path`` is the walk shape with station reuse forbidden, so constructing a
    path variant always sets ``forbid_station_reuse``.  ``required_colors`` left
    empty means "every line of the network"; call :meth:`resolve` to pin it.
    """

    shape: str = "walk"
    required_colors: frozenset[str] = frozenset()
    forbid_station_reuse: bool = False
    forbid_line_reuse: bool = False
    anchor: str | None = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        object.__setattr__(self, "required_colors", frozenset(self.required_colors))
        if self.shape == "path":
            object.__setattr__(self, "forbid_station_reuse", True)
        if self.anchor is not None and self.shape != "cycle":
            raise ValueError("an anchor only makes sense for the cycle shape")

    @property
    def closed(self) -> bool:
        return self.shape == "cycle"

    def resolve(self, network: Network) -> "VariantConfig":
        """Fill in ``required_colors`` and check it against ``network``."""
        req = self.required_colors or network.lines
        unknown = req - network.lines
        if unknown:
            raise ValueError(f"required line(s) not in the network: {sorted(unknown)}")
        if not req:
            raise ValueError("the network has no line to cover")
        if self.anchor is not None and self.anchor not in network.stations:
            try:
                anchor = network.canonical(self.anchor)
            except KeyError:
                raise ValueError(f"anchor {self.anchor!r} is not a station of the network") from None
            return replace(self, required_colors=frozenset(req), anchor=anchor)
        return replace(self, required_colors=frozenset(req))

    def describe(self) -> str:
        bits = [self.shape]
        if self.forbid_station_reuse and self.shape != "path":
            bits.append("no-station-reuse")
        if self.forbid_line_reuse:
            bits.append("no-line-reuse")
        if self.anchor:
            bits.append(f"anchor={self.anchor}")
        return ",".join(bits)


def anchor_candidates(network: Network, required: Iterable[str]) -> list[str]:
    """Stations touched by the required line with the fewest incident stations.

    Every closed cover walk uses an arc of that line, hence passes through one
    of these stations.
    """
    best = None
    for line in sorted(required):
        st = network.line_stations(line)
        if best is None or len(st) < len(best):
            best = st
    return sorted(best or ())
