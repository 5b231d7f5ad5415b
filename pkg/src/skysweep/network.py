"""Road networks and their assessment-ready transformed form.

A road network is an undirected graph of junctions (with unit-square
coordinates) and links (with a positive traversal length and a nonnegative
assessment value).  For routing, each link is split at its midpoint by an
*assessment site*: a node that carries the link's value and is reachable
only from the link's two endpoints, at half the link's traversal time.
Junction pairs are additionally connected by straight-line flight arcs, so
a drone may cut across the map between junctions but must fly a road to
assess it.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    CoordinateOutOfRange,
    DisconnectedGraph,
    DuplicateLink,
    ParseError,
    SelfLoop,
    UnknownNode,
)


@dataclass(eq=False)
class RoadNetwork:
    """Validated undirected road graph. Treat as immutable once built."""

    node_ids: tuple          # (n,) ints, ascending
    coords: np.ndarray       # (n, 2) float64 in [0, 1]^2, aligned with node_ids
    links: tuple             # ((i, j, length, value), ...) with i < j, sorted

    @property
    def n_nodes(self):
        return len(self.node_ids)

    @property
    def n_links(self):
        return len(self.links)

    def index_of(self, node_id):
        try:
            return self._id_to_index[node_id]
        except AttributeError:
            self._id_to_index = {v: k for k, v in enumerate(self.node_ids)}
            return self.index_of(node_id)

    def __eq__(self, other):
        if not isinstance(other, RoadNetwork):
            return NotImplemented
        return (
            self.node_ids == other.node_ids
            and np.array_equal(self.coords, other.coords)
            and self.links == other.links
        )


def build_road_network(nodes, links):
    """Validate raw node/link data and return a RoadNetwork.

    nodes: mapping id -> (x, y), or iterable of (id, x, y)
    links: iterable of (i, j, length, value)
    """
    if hasattr(nodes, "items"):
        node_rows = [(nid, xy[0], xy[1]) for nid, xy in nodes.items()]
    else:
        node_rows = [tuple(row) for row in nodes]

    seen_ids = set()
    for nid, x, y in node_rows:
        if nid in seen_ids:
            raise DuplicateLink(f"node id {nid} defined twice")
        seen_ids.add(nid)
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise CoordinateOutOfRange(f"node {nid} at ({x}, {y}) outside unit square")

    node_rows.sort(key=lambda r: r[0])
    node_ids = tuple(r[0] for r in node_rows)
    coords = np.array([[r[1], r[2]] for r in node_rows], dtype=np.float64)

    canonical = []
    seen_pairs = set()
    for i, j, length, value in links:
        if i == j:
            raise SelfLoop(f"link ({i}, {j}) is a self-loop")
        if i not in seen_ids or j not in seen_ids:
            raise UnknownNode(f"link ({i}, {j}) references a missing node id")
        pair = (i, j) if i < j else (j, i)
        if pair in seen_pairs:
            raise DuplicateLink(f"link {pair} appears more than once")
        seen_pairs.add(pair)
        if not length > 0:
            raise ValueError(f"link {pair} has nonpositive length {length}")
        if value < 0:
            raise ValueError(f"link {pair} has negative value {value}")
        canonical.append((pair[0], pair[1], float(length), float(value)))

    canonical.sort(key=lambda r: (r[0], r[1]))

    # connectivity over the undirected link set
    if node_ids:
        adj = {nid: [] for nid in node_ids}
        for i, j, _, _ in canonical:
            adj[i].append(j)
            adj[j].append(i)
        stack = [node_ids[0]]
        reached = {node_ids[0]}
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in reached:
                    reached.add(v)
                    stack.append(v)
        if len(reached) != len(node_ids):
            missing = sorted(set(node_ids) - reached)[:5]
            raise DisconnectedGraph(f"road network is disconnected (e.g. nodes {missing})")

    return RoadNetwork(node_ids=node_ids, coords=coords, links=tuple(canonical))


class TransformedNetwork:
    """Routing graph: junctions 0..n_junctions-1, then one site per link.

    Node ids are contiguous indices.  Arcs:
      * junction u <-> site p at half the source link's length, for the two
        endpoint junctions of p's link;
      * junction u <-> junction v (u != v) at Euclidean distance;
      * sites are never adjacent to each other.
    """

    def __init__(self, source_ids, coords, values, site_endpoints, site_leg_time, depots):
        self.source_ids = tuple(source_ids)      # original junction ids, by index
        self.coords = np.asarray(coords, dtype=np.float64)            # (n, 2)
        self.values = np.asarray(values, dtype=np.float64)            # (n,)
        self.site_endpoints = np.asarray(site_endpoints, dtype=np.int64).reshape(-1, 2)
        self.site_leg_time = np.asarray(site_leg_time, dtype=np.float64)
        self.depots = tuple(int(d) for d in depots)
        self.n_junctions = len(self.source_ids)
        self.n_nodes = self.coords.shape[0]
        self.n_sites = self.n_nodes - self.n_junctions
        self._arc_times = None
        self._sites_at = None
        for d in self.depots:
            if not (0 <= d < self.n_junctions):
                raise UnknownNode(f"depot {d} is not a junction index")

    def is_site(self, i):
        return i >= self.n_junctions

    @property
    def arc_times(self):
        """(n, n) matrix of arc traversal times, +inf where no arc exists."""
        if self._arc_times is None:
            n, nj = self.n_nodes, self.n_junctions
            T = np.full((n, n), np.inf)
            xy = self.coords[:nj]
            diff = xy[:, None, :] - xy[None, :, :]
            D = np.sqrt((diff ** 2).sum(-1))
            np.fill_diagonal(D, np.inf)
            T[:nj, :nj] = D
            for s in range(self.n_sites):
                p = nj + s
                u, v = self.site_endpoints[s]
                T[u, p] = T[p, u] = self.site_leg_time[s]
                T[v, p] = T[p, v] = self.site_leg_time[s]
            self._arc_times = T
        return self._arc_times

    @property
    def sites_at(self):
        """List mapping each junction to the site indices it touches."""
        if self._sites_at is None:
            out = [[] for _ in range(self.n_junctions)]
            for s in range(self.n_sites):
                u, v = self.site_endpoints[s]
                out[u].append(self.n_junctions + s)
                out[v].append(self.n_junctions + s)
            self._sites_at = [np.array(a, dtype=np.int64) for a in out]
        return self._sites_at

    def __eq__(self, other):
        if not isinstance(other, TransformedNetwork):
            return NotImplemented
        return (
            self.source_ids == other.source_ids
            and self.depots == other.depots
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.site_endpoints, other.site_endpoints)
            and np.array_equal(self.site_leg_time, other.site_leg_time)
        )


def transform(net, depots=None):
    """Split every link at an assessment site and add flight arcs.

    depots: iterable of road-network node ids (default: the lowest id).
    Returns a TransformedNetwork whose node ids are contiguous indices:
    junctions first (in ascending source-id order), then sites in link order.
    """
    if depots is None:
        depots = (net.node_ids[0],)
    depot_idx = []
    for d in depots:
        if d not in net.node_ids:
            raise UnknownNode(f"depot id {d} is not a network node")
        depot_idx.append(net.index_of(d))

    nj = net.n_nodes
    coords = np.zeros((nj + net.n_links, 2))
    values = np.zeros(nj + net.n_links)
    coords[:nj] = net.coords
    endpoints = np.zeros((net.n_links, 2), dtype=np.int64)
    leg = np.zeros(net.n_links)
    for s, (i, j, length, value) in enumerate(net.links):
        ui, vi = net.index_of(i), net.index_of(j)
        coords[nj + s] = 0.5 * (net.coords[ui] + net.coords[vi])
        values[nj + s] = value
        endpoints[s] = (ui, vi)
        leg[s] = 0.5 * length

    return TransformedNetwork(
        source_ids=net.node_ids,
        coords=coords,
        values=values,
        site_endpoints=endpoints,
        site_leg_time=leg,
        depots=depot_idx,
    )


def travel_time(tn, i, j):
    """Arc traversal time between transformed node ids, or None if no arc."""
    n = tn.n_nodes
    if not (0 <= i < n) or not (0 <= j < n):
        raise UnknownNode(f"node id out of range: ({i}, {j}) with {n} nodes")
    t = tn.arc_times[i, j]
    return float(t) if np.isfinite(t) else None


# --- TNTP ingestion ----------------------------------------------------------

def _tntp_rows(text):
    """Yield (line_number, fields) for data rows, skipping metadata/comments."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("~")[0].strip()
        if not line or line.startswith("<"):
            continue
        line = line.rstrip(";").strip()
        if not line:
            continue
        yield lineno, line.split()


def ingest_tntp(node_text, link_text, value_seed=0):
    """Build a RoadNetwork from TNTP-style node and link tables.

    Node rows are ``id x y``; link rows start with ``init term capacity
    length ...`` and the length column is used as traversal length.
    Coordinates are shifted to the origin and, together with lengths,
    divided by the larger coordinate range, so geometry lands in the unit
    square with proportions preserved.  Duplicate directed arcs collapse to
    one undirected link (lengths averaged).  TNTP files carry no assessment
    values, so values are drawn uniformly from [0.1, 1.0] with value_seed.
    """
    raw_nodes = {}
    for lineno, fields in _tntp_rows(node_text):
        if not fields[0].lstrip("+-").isdigit():
            continue  # header row such as "Node X Y"
        if len(fields) < 3:
            raise ParseError(f"node row needs id, x, y (got {fields})", line=lineno)
        try:
            nid = int(fields[0])
            x, y = float(fields[1]), float(fields[2])
        except ValueError as exc:
            raise ParseError(f"bad node row {fields}: {exc}", line=lineno) from None
        if nid in raw_nodes:
            raise ParseError(f"node id {nid} defined twice", line=lineno)
        raw_nodes[nid] = (x, y)
    if not raw_nodes:
        raise ParseError("no node rows found", line=None)

    pair_lengths = {}
    for lineno, fields in _tntp_rows(link_text):
        if not fields[0].lstrip("+-").isdigit():
            continue
        if len(fields) < 4:
            raise ParseError(f"link row needs init, term, capacity, length (got {fields})",
                             line=lineno)
        try:
            i, j = int(fields[0]), int(fields[1])
            length = float(fields[3])
        except ValueError as exc:
            raise ParseError(f"bad link row {fields}: {exc}", line=lineno) from None
        if i == j:
            raise SelfLoop(f"line {lineno}: link ({i}, {j}) is a self-loop")
        if i not in raw_nodes or j not in raw_nodes:
            raise UnknownNode(f"line {lineno}: link ({i}, {j}) references a missing node")
        if not length > 0:
            raise ParseError(f"link ({i}, {j}) has nonpositive length {length}", line=lineno)
        pair = (i, j) if i < j else (j, i)
        pair_lengths.setdefault(pair, []).append(length)
    if not pair_lengths:
        raise ParseError("no link rows found", line=None)

    xs = np.array([xy[0] for xy in raw_nodes.values()])
    ys = np.array([xy[1] for xy in raw_nodes.values()])
    span = max(xs.max() - xs.min(), ys.max() - ys.min())
    if not span > 0:
        raise ParseError("degenerate node coordinates: zero extent", line=None)
    x0, y0 = xs.min(), ys.min()

    nodes = {nid: ((x - x0) / span, (y - y0) / span) for nid, (x, y) in raw_nodes.items()}
    pairs = sorted(pair_lengths)
    rng = np.random.default_rng(value_seed)
    values = rng.uniform(1.0, 10.0, size=len(pairs)) / 10.0
    links = [
        (i, j, float(np.mean(pair_lengths[(i, j)])) / span, float(values[k]))
        for k, (i, j) in enumerate(pairs)
    ]
    return build_road_network(nodes, links)


# --- JSON round-trips --------------------------------------------------------

def road_to_json(net):
    doc = {
        "format": "road-network/1",
        "nodes": [
            {"id": nid, "x": float(net.coords[k, 0]), "y": float(net.coords[k, 1])}
            for k, nid in enumerate(net.node_ids)
        ],
        "links": [
            {"source": i, "target": j, "length": length, "value": value}
            for i, j, length, value in net.links
        ],
    }
    return json.dumps(doc, sort_keys=True)


def road_from_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON: {exc}", line=exc.lineno) from None
    if doc.get("format") != "road-network/1":
        raise ParseError(f"unexpected format tag {doc.get('format')!r}")
    nodes = [(n["id"], n["x"], n["y"]) for n in doc["nodes"]]
    links = [(l["source"], l["target"], l["length"], l["value"]) for l in doc["links"]]
    return build_road_network(nodes, links)


def transformed_to_json(tn):
    nj = tn.n_junctions
    doc = {
        "format": "survey-network/1",
        "junctions": [
            {"id": k, "source_id": sid,
             "x": float(tn.coords[k, 0]), "y": float(tn.coords[k, 1])}
            for k, sid in enumerate(tn.source_ids)
        ],
        "sites": [
            {"id": nj + s,
             "x": float(tn.coords[nj + s, 0]), "y": float(tn.coords[nj + s, 1]),
             "value": float(tn.values[nj + s]),
             "endpoints": [int(tn.site_endpoints[s, 0]), int(tn.site_endpoints[s, 1])],
             "leg_time": float(tn.site_leg_time[s])}
            for s in range(tn.n_sites)
        ],
        "depots": list(tn.depots),
    }
    return json.dumps(doc, sort_keys=True)


def transformed_from_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON: {exc}", line=exc.lineno) from None
    if doc.get("format") != "survey-network/1":
        raise ParseError(f"unexpected format tag {doc.get('format')!r}")
    junctions = doc["junctions"]
    sites = doc["sites"]
    nj = len(junctions)
    coords = np.zeros((nj + len(sites), 2))
    values = np.zeros(nj + len(sites))
    for row in junctions:
        coords[row["id"]] = (row["x"], row["y"])
    endpoints = np.zeros((len(sites), 2), dtype=np.int64)
    leg = np.zeros(len(sites))
    for s, row in enumerate(sites):
        if row["id"] != nj + s:
            raise ParseError(f"site ids must be contiguous after junctions (got {row['id']})")
        coords[nj + s] = (row["x"], row["y"])
        values[nj + s] = row["value"]
        endpoints[s] = row["endpoints"]
        leg[s] = row["leg_time"]
    return TransformedNetwork(
        source_ids=[row["source_id"] for row in junctions],
        coords=coords,
        values=values,
        site_endpoints=endpoints,
        site_leg_time=leg,
        depots=doc["depots"],
    )
