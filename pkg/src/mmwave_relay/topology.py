"""Street-canyon city topology.

The city is an undirected graph whose vertices are intersections and whose
edges are straight street segments. Nodes (source, destination, relays) live
on segments and are addressed by an offset from the segment's first endpoint.
Signals only travel along streets, so every propagation path is a sequence
of consecutive segments whose total length is the minimum along-street
(l1) distance between its endpoints.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TopologyError",
    "Intersection",
    "Segment",
    "StreetGraph",
    "NodeLocation",
    "ClusterPlacement",
    "PropagationPath",
    "ClusterPaths",
    "Topology",
    "build_graph",
    "l1_distance",
    "enumerate_paths",
    "split_los_nlos",
    "relay_positions",
    "build_topology",
]

# Distances are compared with this absolute slack (meters).
LENGTH_TOL = 1e-9


class TopologyError(ValueError):
    """Invalid topology description or unreachable location."""


@dataclass(frozen=True)
class Intersection:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Segment:
    id: int
    a: int
    b: int
    length: float

    def other(self, node: int) -> int:
        return self.b if node == self.a else self.a


@dataclass(frozen=True)
class NodeLocation:
    """A point on a street: ``offset`` meters from endpoint ``a`` of ``segment``."""

    segment: int
    offset: float


@dataclass
class StreetGraph:
    intersections: dict[int, Intersection]
    segments: dict[int, Segment]
    adjacency: dict[int, list[tuple[int, int]]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.adjacency:
            adj: dict[int, list[tuple[int, int]]] = {i: [] for i in self.intersections}
            for seg in self.segments.values():
                adj[seg.a].append((seg.b, seg.id))
                adj[seg.b].append((seg.a, seg.id))
            for nbrs in adj.values():
                nbrs.sort()
            self.adjacency = adj

    @property
    def n_nodes(self) -> int:
        return len(self.intersections)

    @property
    def n_edges(self) -> int:
        return len(self.segments)

    def point(self, loc: NodeLocation) -> np.ndarray:
        """Planar coordinates of a location."""
        seg = self.segments[loc.segment]
        pa = self.intersections[seg.a]
        pb = self.intersections[seg.b]
        frac = loc.offset / seg.length
        return np.array([pa.x + frac * (pb.x - pa.x), pa.y + frac * (pb.y - pa.y)])

    def check_location(self, loc: NodeLocation, interior: bool = False) -> None:
        if loc.segment not in self.segments:
            raise TopologyError(f"location references unknown segment {loc.segment}")
        length = self.segments[loc.segment].length
        if interior:
            if not 0.0 < loc.offset < length:
                raise TopologyError(
                    f"offset {loc.offset} is not strictly inside segment {loc.segment}"
                )
        elif not 0.0 <= loc.offset <= length:
            raise TopologyError(f"offset {loc.offset} outside segment {loc.segment}")


def build_graph(intersections, segments) -> StreetGraph:
    """Validate and assemble a :class:`StreetGraph`.

    Parameters
    ----------
    intersections : iterable of mappings with keys ``id``, ``x``, ``y``
    segments : iterable of mappings with keys ``id``, ``a``, ``b``
        Segment lengths are the Euclidean distances between endpoints.
    """
    nodes: dict[int, Intersection] = {}
    coords = set()
    for item in intersections:
        node = Intersection(int(item["id"]), float(item["x"]), float(item["y"]))
        if node.id in nodes:
            raise TopologyError(f"duplicate intersection id {node.id}")
        if (node.x, node.y) in coords:
            raise TopologyError(f"intersection {node.id} duplicates coordinates")
        coords.add((node.x, node.y))
        nodes[node.id] = node

    segs: dict[int, Segment] = {}
    pairs = set()
    for item in segments:
        sid, a, b = int(item["id"]), int(item["a"]), int(item["b"])
        if sid < 0:
            raise TopologyError(f"segment id {sid} is negative")
        if sid in segs:
            raise TopologyError(f"duplicate segment id {sid}")
        if a not in nodes or b not in nodes:
            raise TopologyError(f"segment {sid} references unknown intersection")
        if a == b:
            raise TopologyError(f"segment {sid} is a self-loop")
        key = frozenset((a, b))
        if key in pairs:
            raise TopologyError(f"more than one segment between {a} and {b}")
        pairs.add(key)
        length = math.hypot(nodes[a].x - nodes[b].x, nodes[a].y - nodes[b].y)
        if "length" in item and abs(float(item["length"]) - length) > 1e-6:
            raise TopologyError(f"segment {sid} length does not match endpoints")
        segs[sid] = Segment(sid, a, b, length)

    graph = StreetGraph(nodes, segs)
    if nodes:
        start = next(iter(nodes))
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v, _ in graph.adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        if len(seen) != len(nodes):
            raise TopologyError("street graph is disconnected")
    return graph


# -- shortest paths on the graph augmented with on-street locations ---------

def _vertex(graph: StreetGraph, loc: NodeLocation, tag: int):
    seg = graph.segments[loc.segment]
    if abs(loc.offset) <= LENGTH_TOL:
        return ("i", seg.a)
    if abs(loc.offset - seg.length) <= LENGTH_TOL:
        return ("i", seg.b)
    return ("p", tag)


def _augmented(graph: StreetGraph, locs: list[NodeLocation]):
    """Adjacency with a virtual vertex splitting the segment at every interior location.

    Edges are ``(neighbour, segment id, length)`` triples.
    """
    adj: dict = {("i", n): [] for n in graph.intersections}
    splits: dict[int, list[tuple[float, tuple]]] = {}
    verts = []
    for k, loc in enumerate(locs):
        graph.check_location(loc)
        if loc in locs[:k]:
            verts.append(verts[locs.index(loc)])
            continue
        v = _vertex(graph, loc, k)
        verts.append(v)
        if v[0] == "p":
            adj[v] = []
            splits.setdefault(loc.segment, []).append((loc.offset, v))
    for seg in graph.segments.values():
        chain = [(0.0, ("i", seg.a))]
        chain += sorted(splits.get(seg.id, []), key=lambda item: item[0])
        chain.append((seg.length, ("i", seg.b)))
        for (o1, v1), (o2, v2) in zip(chain, chain[1:]):
            if v1 == v2:
                continue
            adj[v1].append((v2, seg.id, o2 - o1))
            adj[v2].append((v1, seg.id, o2 - o1))
    return adj, verts


def _dijkstra(adj, source) -> dict:
    dist = {source: 0.0}
    heap = [(0.0, 0, source)]
    counter = 1
    done = set()
    while heap:
        d, _, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, _, w in adj[u]:
            nd = d + w
            if nd < dist.get(v, math.inf) - LENGTH_TOL:
                dist[v] = nd
                heapq.heappush(heap, (nd, counter, v))
                counter += 1
    return dist


def l1_distance(graph: StreetGraph, a: NodeLocation, b: NodeLocation) -> float:
    """Length of the shortest along-street route between two locations."""
    adj, (va, vb) = _augmented(graph, [a, b])
    if va == vb:
        return 0.0
    dist = _dijkstra(adj, va)
    if vb not in dist:
        raise TopologyError("location unreachable")
    return dist[vb]


@dataclass(frozen=True)
class PropagationPath:
    """A dominant propagation path.

    ``segments`` are listed from the transmitter side and ``traversed`` holds
    the distance covered on each of them. ``intersections`` are the
    intersections strictly between the endpoints. Paths into a relay cluster
    end with the cluster segment, whose traversed distance depends on the
    relay position and is stored as NaN; their ``length`` runs up to the
    cluster's entry intersection.
    """

    segments: tuple[int, ...]
    intersections: tuple[int, ...]
    traversed: tuple[float, ...]
    length: float

    @property
    def los_distance(self) -> float:
        return self.traversed[0]

    @property
    def terminal_distance(self) -> float | None:
        return self.traversed[-1] if len(self.segments) > 1 else None

    @property
    def n_intersections(self) -> int:
        return len(self.intersections)

    @property
    def los_segment(self) -> int:
        return self.segments[0]

    @property
    def nlos_segments(self) -> tuple[int, ...]:
        return self.segments[1:]


def enumerate_paths(graph: StreetGraph, src: NodeLocation, dst: NodeLocation) -> list[PropagationPath]:
    """All minimum-length along-street paths from ``src`` to ``dst``.

    Paths are sorted lexicographically by their segment-id sequence.
    """
    adj, (vs, vd) = _augmented(graph, [src, dst])
    if vs == vd:
        raise TopologyError("source and destination coincide")
    to_dst = _dijkstra(adj, vd)
    if vs not in to_dst:
        raise TopologyError("location unreachable")

    found = []

    def walk(u, trail):
        if u == vd:
            found.append(list(trail))
            return
        for v, sid, w in adj[u]:
            if v in to_dst and abs(to_dst[u] - (w + to_dst[v])) <= 1e-7:
                trail.append((u, v, sid, w))
                walk(v, trail)
                trail.pop()

    walk(vs, [])

    paths = []
    for trail in found:
        segs: list[int] = []
        lengths: list[float] = []
        inters: list[int] = []
        for u, v, sid, w in trail:
            if segs and segs[-1] == sid:
                lengths[-1] += w
            else:
                segs.append(sid)
                lengths.append(w)
            if v != vd and v[0] == "i":
                inters.append(v[1])
        paths.append(
            PropagationPath(
                segments=tuple(segs),
                intersections=tuple(inters),
                traversed=tuple(lengths),
                length=float(sum(lengths)),
            )
        )
    paths.sort(key=lambda p: p.segments)
    return paths


def split_los_nlos(path: PropagationPath, exclude: int | None = None) -> tuple[int, tuple[int, ...]]:
    """LoS segment and NLoS segments of a path.

    The first segment (holding the transmitter) is LoS; the rest is NLoS,
    minus ``exclude`` (the cluster's own segment, which is modelled by the
    cluster field rather than a per-segment term).
    """
    if not path.segments:
        raise ValueError("empty path")
    nlos = tuple(s for s in path.segments[1:] if s != exclude)
    return path.segments[0], nlos


def relay_positions(segment: Segment, delta: int) -> list[NodeLocation]:
    """``delta`` evenly spaced interior positions at offsets ``(i - 1/2) * d / delta``."""
    if delta < 1:
        raise ValueError("delta must be at least 1")
    step = segment.length / delta
    return [NodeLocation(segment.id, (i + 0.5) * step) for i in range(delta)]


@dataclass(frozen=True)
class ClusterPlacement:
    id: int
    segment: int
    delta: int
    positions: tuple[NodeLocation, ...]
    d_full: float
    # intersection of the cluster segment that is l1-closest to the source
    # (incoming side) and to the destination (outgoing side)
    f_entry: int
    g_entry: int
    d_f: np.ndarray
    d_g: np.ndarray

    @property
    def offsets(self) -> np.ndarray:
        return np.array([p.offset for p in self.positions])

    @property
    def d_max(self) -> float:
        off = self.offsets
        return float(off[-1] - off[0])


@dataclass(frozen=True)
class ClusterPaths:
    """Incoming (source side) and outgoing (destination side) paths of one cluster.

    Every path ends with the cluster segment. Outgoing paths are listed from
    the destination, so their LoS segment is the destination's segment.
    """

    placement: ClusterPlacement
    f_paths: tuple[PropagationPath, ...]
    g_paths: tuple[PropagationPath, ...]

    def shadow_segments(self, side: str) -> list[list[int]]:
        """Per path, the traversed segments other than the cluster segment."""
        paths = self.f_paths if side == "f" else self.g_paths
        tau_r = self.placement.segment
        return [[s for s in p.segments if s != tau_r] for p in paths]

    def unique_segments(self, side: str | None = None) -> list[int]:
        sides = ("f", "g") if side is None else (side,)
        out = set()
        for sd in sides:
            for segs in self.shadow_segments(sd):
                out.update(segs)
        return sorted(out)


@dataclass(frozen=True)
class Topology:
    graph: StreetGraph
    source: NodeLocation
    destination: NodeLocation
    clusters: tuple[ClusterPaths, ...]

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def cluster_free_segments(self) -> list[int]:
        """Union over clusters of all traversed non-cluster segments, sorted."""
        out = set()
        for c in self.clusters:
            out.update(c.unique_segments())
        return sorted(out)


def _entry(graph: StreetGraph, seg: Segment, node: NodeLocation) -> tuple[int, float]:
    da = l1_distance(graph, node, NodeLocation(seg.id, 0.0))
    db = l1_distance(graph, node, NodeLocation(seg.id, seg.length))
    if abs(da - db) <= LENGTH_TOL:
        return min(seg.a, seg.b), da
    return (seg.a, da) if da < db else (seg.b, db)


def _cluster_paths(graph: StreetGraph, node: NodeLocation, seg: Segment, entry: int) -> tuple[PropagationPath, ...]:
    target = NodeLocation(seg.id, 0.0 if entry == seg.a else seg.length)
    out = []
    for base in enumerate_paths(graph, node, target):
        if seg.id in base.segments:
            raise TopologyError(f"path to cluster segment {seg.id} runs along it")
        out.append(
            PropagationPath(
                segments=base.segments + (seg.id,),
                intersections=base.intersections + (entry,),
                traversed=base.traversed + (math.nan,),
                length=base.length,
            )
        )
    return tuple(out)


def place_cluster(graph: StreetGraph, cid: int, segment: int, delta: int,
                  source: NodeLocation, destination: NodeLocation) -> ClusterPaths:
    if segment not in graph.segments:
        raise TopologyError(f"cluster {cid} references unknown segment {segment}")
    if segment in (source.segment, destination.segment):
        raise TopologyError(f"cluster {cid} shares a segment with the source or destination")
    seg = graph.segments[segment]
    positions = tuple(relay_positions(seg, delta))
    offsets = np.array([p.offset for p in positions])
    f_entry, _ = _entry(graph, seg, source)
    g_entry, _ = _entry(graph, seg, destination)
    d_f = offsets if f_entry == seg.a else seg.length - offsets
    d_g = offsets if g_entry == seg.a else seg.length - offsets
    placement = ClusterPlacement(
        id=cid, segment=segment, delta=delta, positions=positions, d_full=seg.length,
        f_entry=f_entry, g_entry=g_entry, d_f=d_f, d_g=d_g,
    )
    return ClusterPaths(
        placement=placement,
        f_paths=_cluster_paths(graph, source, seg, f_entry),
        g_paths=_cluster_paths(graph, destination, seg, g_entry),
    )


def build_topology(config: dict, delta: int | None = None) -> Topology:
    """Build a :class:`Topology` from the JSON topology block.

    ``delta`` overrides the per-cluster number of candidate positions.
    """
    graph = build_graph(config["intersections"], config["segments"])
    src = NodeLocation(int(config["source"]["segment"]), float(config["source"]["offset"]))
    dst = NodeLocation(int(config["destination"]["segment"]), float(config["destination"]["offset"]))
    graph.check_location(src)
    graph.check_location(dst)
    clusters = []
    ids, used = set(), set()
    for item in config["clusters"]:
        cid = int(item["id"])
        if cid in ids:
            raise TopologyError(f"duplicate cluster id {cid}")
        ids.add(cid)
        if int(item["segment"]) in used:
            raise TopologyError(f"segment {item['segment']} already hosts a cluster")
        used.add(int(item["segment"]))
        d = int(item["delta"]) if delta is None else delta
        clusters.append(place_cluster(graph, cid, int(item["segment"]), d, src, dst))
    if not clusters:
        raise TopologyError("at least one cluster is required")
    return Topology(graph, src, dst, tuple(clusters))
