"""Small networks used by the tests, the example configs and the scripts.

``two_route()`` is a single-OD corridor: a shared entry link feeding a short
tolled link with little capacity and storage, and a much longer untolled
bypass.  At peak demand the short link's queue spills back onto the entry
link and delays bypass users too; on the shoulders it is uncongested, so a
toll there only pushes travelers onto the detour.
"""

from __future__ import annotations

import numpy as np

from .demand import ODDemand
from .network import Network, build_network

# per-interval demand (veh per 300 s) for the two-route corridor
TWO_ROUTE_PROFILE = (40, 50, 70, 95, 115, 115, 95, 70, 50, 40)


def two_route() -> Network:
    return build_network(
        nodes=[1, 2, 3, 4],
        links=[
            # id, from, to, length m, fft s, capacity veh/h, storage veh
            (1, 1, 2, 1000.0, 60.0, 3600.0, 30),
            (2, 2, 3, 1000.0, 60.0, 900.0, 20),
            (3, 2, 4, 4000.0, 240.0, 3600.0, 200),
            (4, 4, 3, 3000.0, 180.0, 3600.0, 200),
        ],
        gantries=[2],
    )


def two_route_demand(profile=TWO_ROUTE_PROFILE, interval: float = 300.0) -> ODDemand:
    return ODDemand(((1, 3),), np.array([profile], dtype=float), interval)


def parallel_links() -> Network:
    return build_network(
        nodes=[1, 2],
        links=[(1, 1, 2, 1000.0, 60.0, 1800.0, 50), (2, 1, 2, 1000.0, 60.0, 1800.0, 50)],
    )


def diamond() -> Network:
    return build_network(
        nodes=[1, 2, 3, 4],
        links=[
            (1, 1, 2, 1000.0, 60.0, 1800.0, 50),
            (2, 2, 4, 1000.0, 60.0, 1800.0, 50),
            (3, 1, 3, 1500.0, 90.0, 1800.0, 50),
            (4, 3, 4, 1500.0, 90.0, 1800.0, 50),
        ],
        gantries=[1],
    )
