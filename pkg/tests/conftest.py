"""Shared builders and independent reference implementations for the tests."""

import itertools
import math

import networkx as nx
import numpy as np
import pytest

from mmwave_relay.channel import ChannelParams


def grid_spec(nx_, ny_, block=100.0):
    """Intersections and segments of an ``nx_`` by ``ny_`` lattice of streets.

    Returns ``(intersections, segments, ids)`` where ``ids[('h', i, j)]`` is the
    horizontal segment leaving intersection (i, j) to the right and
    ``ids[('v', i, j)]`` the vertical one leaving it upwards.
    """
    inter, node = [], {}
    for j in range(ny_):
        for i in range(nx_):
            node[(i, j)] = len(inter) + 1
            inter.append({"id": node[(i, j)], "x": i * block, "y": j * block})
    segs, ids = [], {}
    for j in range(ny_):
        for i in range(nx_ - 1):
            ids[("h", i, j)] = len(segs) + 1
            segs.append({"id": len(segs) + 1, "a": node[(i, j)], "b": node[(i + 1, j)]})
    for j in range(ny_ - 1):
        for i in range(nx_):
            ids[("v", i, j)] = len(segs) + 1
            segs.append({"id": len(segs) + 1, "a": node[(i, j)], "b": node[(i, j + 1)]})
    return inter, segs, ids


def _nx_graph(intersections, segments, locs):
    """networkx graph with every location spliced into its segment."""
    xy = {n["id"]: (n["x"], n["y"]) for n in intersections}
    seg_by_id = {s["id"]: s for s in segments}
    g = nx.Graph()
    terminals, inner = [], {}
    for k, (seg_id, off) in enumerate(locs):
        s = seg_by_id[seg_id]
        (xa, ya), (xb, yb) = xy[s["a"]], xy[s["b"]]
        length = math.hypot(xb - xa, yb - ya)
        if off == 0.0:
            terminals.append(s["a"])
        elif off == length:
            terminals.append(s["b"])
        else:
            node = inner.setdefault((seg_id, off), ("loc", k))
            terminals.append(node)
    for s in segments:
        (xa, ya), (xb, yb) = xy[s["a"]], xy[s["b"]]
        length = math.hypot(xb - xa, yb - ya)
        mids = sorted((off, v) for (sid, off), v in inner.items() if sid == s["id"])
        chain = [(0.0, s["a"])] + mids + [(length, s["b"])]
        for (o1, v1), (o2, v2) in zip(chain, chain[1:]):
            g.add_edge(v1, v2, seg=s["id"], length=o2 - o1)
    return g, terminals


def oracle_paths(intersections, segments, src, dst):
    """Minimum-length simple routes by exhaustive enumeration.

    ``src``/``dst`` are ``(segment, offset)``. Returns a sorted list of
    ``(segment tuple, intersection tuple)``.
    """
    g, (s, d) = _nx_graph(intersections, segments, [src, dst])
    routes = []
    for nodes in nx.all_simple_paths(g, s, d):
        length = sum(g.edges[u, v]["length"] for u, v in zip(nodes, nodes[1:]))
        segs = [k for k, _ in itertools.groupby(g.edges[u, v]["seg"] for u, v in zip(nodes, nodes[1:]))]
        inters = tuple(v for v in nodes[1:-1] if not isinstance(v, tuple))
        routes.append((length, tuple(segs), inters))
    best = min(r[0] for r in routes)
    return sorted((r[1], r[2]) for r in routes if abs(r[0] - best) < 1e-7), best


def oracle_distance(intersections, segments, a, b):
    g, (s, d) = _nx_graph(intersections, segments, [a, b])
    if s == d:
        return 0.0
    return nx.dijkstra_path_length(g, s, d, weight="length")


def collinear_spec():
    inter = [{"id": k + 1, "x": 100.0 * k, "y": 0.0} for k in range(4)]
    segs = [{"id": k + 1, "a": k + 1, "b": k + 2} for k in range(3)]
    return inter, segs


@pytest.fixture
def params():
    return ChannelParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


def record_acceptance(line):
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
