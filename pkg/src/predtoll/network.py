"""Directed road network with per-link supply attributes and tolled links.

Network description files are plain text with three sections::

    [NODES]
    1
    2
    [LINKS]
    # id,from,to,length,fftime,capacity,storage
    10,1,2,500,60,1800,25
    [GANTRIES]
    10

Blank lines and ``#`` comments are ignored.  Gantry order in the file
defines the column order of every toll vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

__all__ = [
    "Link",
    "Network",
    "NetworkError",
    "load_network",
    "parse_network",
    "serialize_network",
    "validate",
]


class NetworkError(ValueError):
    """Raised when a network description cannot be turned into a valid Network."""


@dataclass(frozen=True)
class Link:
    id: int
    source: int
    target: int
    length: float  # meters
    free_flow_time: float  # seconds
    capacity: float  # veh/hour at the exit
    storage: int  # max vehicles on the link


@dataclass(frozen=True)
class Network:
    nodes: tuple[int, ...]
    links: tuple[Link, ...]
    tolled_links: tuple[int, ...] = ()
    link_index: dict[int, int] = field(init=False, repr=False, compare=False)
    gantry_column: dict[int, int] = field(init=False, repr=False, compare=False)
    out_links: dict[int, tuple[int, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "link_index", {l.id: i for i, l in enumerate(self.links)})
        # keyed by link *index*; first occurrence wins when validation would flag a duplicate
        cols: dict[int, int] = {}
        for j, lid in enumerate(self.tolled_links):
            idx = self.link_index.get(lid)
            if idx is not None and idx not in cols:
                cols[idx] = j
        object.__setattr__(self, "gantry_column", cols)
        out: dict[int, list[int]] = {n: [] for n in self.nodes}
        for i, l in enumerate(self.links):
            out.setdefault(l.source, []).append(i)
        object.__setattr__(self, "out_links", {n: tuple(v) for n, v in out.items()})

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_gantries(self) -> int:
        return len(self.tolled_links)

    def link(self, link_id: int) -> Link:
        return self.links[self.link_index[link_id]]

    def free_flow_times(self):
        import numpy as np

        return np.array([l.free_flow_time for l in self.links], dtype=float)


def validate(network: Network) -> list[str]:
    """Return human-readable invariant violations; empty when the network is valid."""
    problems: list[str] = []
    node_set = set(network.nodes)
    if len(node_set) != len(network.nodes):
        problems.append("duplicate node id")
    seen: set[int] = set()
    for link in network.links:
        if link.id in seen:
            problems.append(f"duplicate link id {link.id}")
        seen.add(link.id)
        for end in (link.source, link.target):
            if end not in node_set:
                problems.append(f"link {link.id} references missing node {end}")
        for attr in ("length", "free_flow_time", "capacity"):
            if not getattr(link, attr) > 0:
                problems.append(f"link {link.id} has non-positive {attr.replace('_', '-')}")
        if link.storage < 1:
            problems.append(f"link {link.id} has storage < 1")
    gantries: set[int] = set()
    for lid in network.tolled_links:
        if lid in gantries:
            problems.append(f"duplicate gantry {lid}")
        gantries.add(lid)
        if lid not in seen:
            problems.append(f"gantry {lid} is not a link")
    if network.links and not _weakly_connected(network):
        problems.append("network is not weakly connected")
    return problems


def _weakly_connected(network: Network) -> bool:
    # only nodes touched by links matter for OD connectivity
    adj: dict[int, set[int]] = {}
    for l in network.links:
        adj.setdefault(l.source, set()).add(l.target)
        adj.setdefault(l.target, set()).add(l.source)
    start = next(iter(adj))
    stack, seen = [start], {start}
    while stack:
        n = stack.pop()
        for nb in adj[n]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(adj)


def parse_network(text: str) -> Network:
    sections: dict[str, list[tuple[int, str]]] = {"NODES": [], "LINKS": [], "GANTRIES": []}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().upper()
            if current not in sections:
                raise NetworkError(f"line {lineno}: unknown section [{current}]")
            continue
        if current is None:
            raise NetworkError(f"line {lineno}: data before any section header")
        sections[current].append((lineno, line))

    def _int(tok: str, lineno: int) -> int:
        try:
            return int(tok)
        except ValueError:
            raise NetworkError(f"line {lineno}: expected integer id, got {tok!r}") from None

    nodes = [_int(tok, n) for n, tok in sections["NODES"]]
    links = []
    for lineno, line in sections["LINKS"]:
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 7:
            raise NetworkError(f"line {lineno}: link needs 7 fields, got {len(parts)}")
        try:
            links.append(
                Link(
                    id=int(parts[0]),
                    source=int(parts[1]),
                    target=int(parts[2]),
                    length=float(parts[3]),
                    free_flow_time=float(parts[4]),
                    capacity=float(parts[5]),
                    storage=int(parts[6]),
                )
            )
        except ValueError as exc:
            raise NetworkError(f"line {lineno}: {exc}") from None
    gantries = [_int(tok, n) for n, tok in sections["GANTRIES"]]
    network = Network(tuple(nodes), tuple(links), tuple(gantries))
    problems = validate(network)
    if problems:
        raise NetworkError("; ".join(problems))
    return network


def load_network(path: str | Path) -> Network:
    return parse_network(Path(path).read_text())


def serialize_network(network: Network) -> str:
    lines = ["[NODES]"]
    lines += [str(n) for n in network.nodes]
    lines.append("[LINKS]")
    lines.append("# id,from,to,length,fftime,capacity,storage")
    for l in network.links:
        lines.append(
            f"{l.id},{l.source},{l.target},{l.length!r},{l.free_flow_time!r},{l.capacity!r},{l.storage}"
        )
    lines.append("[GANTRIES]")
    lines += [str(g) for g in network.tolled_links]
    return "\n".join(lines) + "\n"


def build_network(
    nodes: Iterable[int],
    links: Iterable[tuple],
    gantries: Iterable[int] = (),
) -> Network:
    """Convenience constructor from plain tuples, validated like a loaded file."""
    net = Network(tuple(nodes), tuple(Link(*l) for l in links), tuple(gantries))
    problems = validate(net)
    if problems:
        raise NetworkError("; ".join(problems))
    return net
