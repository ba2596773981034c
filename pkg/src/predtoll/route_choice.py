"""Path choice sets and the path-size logit route choice model.

Systematic utility of path k for a traveler departing at ``t``::

    V_k = beta_cost * toll_k + beta_time * time_k + log(PS_k) + C_k

``time_k`` accumulates guidance link times along the path starting at
``t``; ``toll_k`` sums gantry tolls using the tolling interval that contains
each link's estimated entry time.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .network import Network
from .timetables import CoverageError, GuidanceTable, TollSchedule

__all__ = [
    "ChoiceCoefficients",
    "PathSet",
    "RouteChoiceModel",
    "choice_probabilities",
    "choose_index",
    "enumerate_paths",
    "load_path_sets",
    "path_size",
    "quasi_uniform",
    "sample_choice",
    "stream_uniform",
    "utilities",
]


@dataclass(frozen=True)
class ChoiceCoefficients:
    beta_cost: float = -0.4  # per currency unit
    beta_time: float = -0.01  # per second

    def __post_init__(self):
        if not (self.beta_cost < 0 and self.beta_time < 0):
            raise ValueError("beta_cost and beta_time must both be negative")


@dataclass
class PathSet:
    od: tuple[int, int]
    paths: tuple[tuple[int, ...], ...]  # link ids
    path_sizes: np.ndarray = field(default=None)
    composite_utils: np.ndarray = field(default=None)
    link_indices: tuple[tuple[int, ...], ...] = field(default=(), repr=False)

    def __len__(self):
        return len(self.paths)


def _shortest_path(network: Network, origin: int, dest: int, banned: frozenset) -> Optional[tuple[int, ...]]:
    # Dijkstra on free-flow times; ties resolved by (cost, node id) heap order
    dist = {origin: 0.0}
    prev: dict[int, int] = {}
    heap = [(0.0, origin)]
    done = set()
    while heap:
        d, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        if node == dest:
            break
        for li in network.out_links.get(node, ()):
            if li in banned:
                continue
            link = network.links[li]
            nd = d + link.free_flow_time
            if nd < dist.get(link.target, math.inf):
                dist[link.target] = nd
                prev[link.target] = li
                heapq.heappush(heap, (nd, link.target))
    if dest not in done:
        return None
    path = []
    node = dest
    while node != origin:
        li = prev[node]
        path.append(li)
        node = network.links[li].source
    return tuple(reversed(path))


def enumerate_paths(network: Network, od: tuple[int, int], k_max: int, max_searches: int | None = None) -> PathSet:
    """Up to ``k_max`` loop-free paths by repeated shortest path with link elimination.

    Elimination sets are explored breadth first, so the first path is always
    the free-flow shortest path.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    origin, dest = od
    first = _shortest_path(network, origin, dest, frozenset())
    if first is None or origin == dest:
        raise ValueError(f"OD pair {od} is not connected")
    limit = max_searches if max_searches is not None else 50 * k_max
    found = [first]
    frontier = [frozenset([li]) for li in first]
    tried = set(frontier)
    searches = 0
    while frontier and len(found) < k_max and searches < limit:
        banned = frontier.pop(0)
        searches += 1
        p = _shortest_path(network, origin, dest, banned)
        if p is None:
            continue
        if p not in found:
            found.append(p)
        for li in p:
            nb = banned | {li}
            if nb not in tried:
                tried.add(nb)
                frontier.append(nb)
    ids = tuple(tuple(network.links[i].id for i in p) for p in found)
    return make_path_set(network, od, ids)


def make_path_set(network: Network, od, paths, composite=None) -> PathSet:
    paths = tuple(tuple(int(x) for x in p) for p in paths)
    if len(set(paths)) != len(paths):
        raise ValueError(f"duplicate paths in choice set for {od}")
    idx = []
    for p in paths:
        try:
            ii = tuple(network.link_index[lid] for lid in p)
        except KeyError as exc:
            raise ValueError(f"path {p} uses unknown link {exc.args[0]}") from None
        _check_contiguous(network, od, ii)
        idx.append(ii)
    ps = PathSet(tuple(od), paths, link_indices=tuple(idx))
    ps.path_sizes = path_size(ps, network)
    ps.composite_utils = (
        np.zeros(len(paths)) if composite is None else np.asarray(composite, dtype=float)
    )
    return ps


def _check_contiguous(network: Network, od, idx) -> None:
    node = od[0]
    for li in idx:
        link = network.links[li]
        if link.source != node:
            raise ValueError(f"path for {od} is not contiguous at link {link.id}")
        node = link.target
    if node != od[1]:
        raise ValueError(f"path for {od} does not end at the destination")


def path_size(path_set: PathSet, network: Network) -> np.ndarray:
    """PS_k = sum over links a of k of (l_a / L_k) / N_a."""
    if len(path_set) == 0:
        raise ValueError("empty path set")
    idx = path_set.link_indices or tuple(
        tuple(network.link_index[lid] for lid in p) for p in path_set.paths
    )
    usage: dict[int, int] = {}
    for p in idx:
        for li in set(p):
            usage[li] = usage.get(li, 0) + 1
    out = np.empty(len(idx))
    for k, p in enumerate(idx):
        lengths = [network.links[li].length for li in p]
        total = sum(lengths)
        out[k] = sum(l / total / usage[li] for l, li in zip(lengths, p))
    return out


def path_attributes(
    link_indices,
    network: Network,
    tolls: Optional[TollSchedule],
    guidance: GuidanceTable,
    departure: float,
) -> tuple[float, float]:
    """(toll, travel time) of one path using entry-time indexing."""
    t = departure
    toll = 0.0
    cols = network.gantry_column
    for li in link_indices:
        if tolls is not None:
            g = cols.get(li)
            if g is not None:
                toll += tolls.toll(g, t)
        t += guidance.time(li, t)
    return toll, t - departure


def utilities(
    path_set: PathSet,
    tolls: Optional[TollSchedule],
    guidance: GuidanceTable,
    coeffs: ChoiceCoefficients,
    departure: float,
    network: Network,
    informed: bool = True,
    historical: Optional[GuidanceTable] = None,
) -> np.ndarray:
    table = guidance if informed or historical is None else historical
    if table.times.shape[0] != network.n_links:
        raise CoverageError("guidance does not cover every link")
    v = np.empty(len(path_set))
    for k, idx in enumerate(path_set.link_indices):
        toll, tt = path_attributes(idx, network, tolls, table, departure)
        v[k] = coeffs.beta_cost * toll + coeffs.beta_time * tt
    return v + np.log(path_set.path_sizes) + path_set.composite_utils


def choice_probabilities(utils) -> np.ndarray:
    u = np.asarray(utils, dtype=float)
    if u.size == 0:
        raise ValueError("no alternatives")
    e = np.exp(u - u.max())
    return e / e.sum()


def choose_index(probabilities, u: float) -> int:
    """Inverse-CDF categorical draw for a uniform ``u`` in [0, 1)."""
    acc = 0.0
    last = len(probabilities) - 1
    for k, p in enumerate(probabilities):
        acc += p
        if u < acc:
            return k
    return last


def sample_choice(probabilities, rng: np.random.Generator) -> int:
    return choose_index(probabilities, rng.random())


_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def stream_uniform(seed: int, vehicle: int, decision: int) -> float:
    """Uniform in [0, 1) keyed by (seed, vehicle, decision number).

    Keying draws by vehicle rather than by call order keeps each traveler's
    taste shock fixed when other travelers change route.
    """
    h = _splitmix64((seed & _MASK64) ^ _splitmix64(vehicle & _MASK64))
    h = _splitmix64(h ^ _splitmix64((decision + 0x51ED27) & _MASK64))
    return (h >> 11) * (1.0 / (1 << 53))


_WEYL = 0x9E3779B97F4A7C15  # 2^64 / golden ratio


def quasi_uniform(seed: int, vehicle: int, decision: int) -> float:
    """Low-discrepancy counterpart of ``stream_uniform``.

    Consecutive vehicle ids walk a golden-ratio sequence, so any run of n
    consecutive vehicles covers [0, 1) nearly evenly and the share choosing
    an alternative tracks its probability closely.
    """
    offset = _splitmix64((seed & _MASK64) ^ _splitmix64((decision + 0x51ED27) & _MASK64))
    return (((vehicle * _WEYL + offset) & _MASK64) >> 11) * (1.0 / (1 << 53))


class RouteChoiceModel:
    """Choice sets for every OD plus en-route suffix sets at intermediate nodes."""

    def __init__(
        self,
        network: Network,
        path_sets: dict[tuple[int, int], PathSet],
        coeffs: ChoiceCoefficients = ChoiceCoefficients(),
        en_route: bool = True,
        historical: Optional[GuidanceTable] = None,
    ):
        self.network = network
        self.path_sets = dict(path_sets)
        self.coeffs = coeffs
        self.en_route = en_route
        self.historical = historical
        self._suffixes: dict[tuple, tuple[PathSet, tuple]] = {}
        for od, ps in self.path_sets.items():
            self._build_suffixes(od, ps)

    @classmethod
    def build(cls, network: Network, ods, k_max: int = 3, **kw) -> "RouteChoiceModel":
        return cls(network, {tuple(od): enumerate_paths(network, tuple(od), k_max) for od in ods}, **kw)

    def _build_suffixes(self, od, ps: PathSet) -> None:
        nodes: dict[int, dict[tuple, float]] = {}
        for idx, c in zip(ps.link_indices, ps.composite_utils):
            for pos, li in enumerate(idx):
                node = self.network.links[li].source
                suf = idx[pos:]
                nodes.setdefault(node, {}).setdefault(suf, float(c))
        for node, sufs in nodes.items():
            paths = tuple(sufs)
            ids = tuple(tuple(self.network.links[i].id for i in p) for p in paths)
            sub = PathSet((node, od[1]), ids, link_indices=paths)
            sub.path_sizes = path_size(sub, self.network)
            sub.composite_utils = np.array([sufs[p] for p in paths])
            # log(PS) + C, constant per alternative
            base = tuple(float(x) for x in np.log(sub.path_sizes) + sub.composite_utils)
            self._suffixes[(od, node)] = (sub, paths, base)

    def alternatives(self, od, node) -> tuple[PathSet, tuple]:
        sub, paths, _ = self._suffixes[(od, node)]
        return sub, paths

    def probabilities(self, od, node, t, guidance, tolls, informed=True) -> tuple[list, tuple]:
        """Logit probabilities over the alternatives from ``node``.

        Scalar re-implementation of ``utilities`` + ``choice_probabilities``
        for the simulator's inner loop; the test suite checks they agree.
        """
        _, paths, base = self._suffixes[(od, node)]
        if len(paths) == 1:
            return [1.0], paths
        table = guidance if informed or self.historical is None else self.historical
        rows = table.rows
        start, width, last = table.start, table.interval, table.n_intervals - 1
        cols = self.network.gantry_column
        bc, bt = self.coeffs.beta_cost, self.coeffs.beta_time
        utils = []
        for idx, b in zip(paths, base):
            tt = t
            toll = 0.0
            for li in idx:
                if tolls is not None:
                    g = cols.get(li)
                    if g is not None:
                        toll += tolls.toll(g, tt)
                k = int((tt - start) // width)
                if k < 0:
                    raise CoverageError(f"time {tt} precedes guidance start {start}")
                tt += rows[li][k if k < last else last]
            utils.append(bc * toll + bt * (tt - t) + b)
        top = max(utils)
        e = [math.exp(u - top) for u in utils]
        total = sum(e)
        return [x / total for x in e], paths


def load_path_sets(path: str | Path, network: Network) -> dict[tuple[int, int], PathSet]:
    """Read rows ``origin,destination,path_id,links,composite`` (links space separated)."""
    grouped: dict[tuple[int, int], list[tuple[str, tuple[int, ...], float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#") or row[0].strip().lower() == "origin":
                continue
            od = (int(row[0]), int(row[1]))
            links = tuple(int(x) for x in row[3].split())
            comp = float(row[4]) if len(row) > 4 and row[4].strip() else 0.0
            grouped.setdefault(od, []).append((row[2].strip(), links, comp))
    return {
        od: make_path_set(network, od, [r[1] for r in rows], [r[2] for r in rows])
        for od, rows in grouped.items()
    }
