"""Synthetic assessment instances: perturbed-grid road networks plus
mission parameters (time budget, fleet size, attribute flags).

The generator mirrors how field road networks look after a disaster
briefing: a roughly gridded street layout with some streets gone, junction
positions jittered, and an assessment value attached to every surviving
road segment.  Instances are produced in four stages -- grid, prune,
perturb, assign -- each a standalone operation so tests can pin down
every stage separately.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import network as netmod
from .errors import ParseError


@dataclass(frozen=True)
class GenConfig:
    """Road-network generation settings."""

    grid_side: int = 4
    grid_cols: int = None        # optional second lattice dimension (default: square)
    prune_keep_fraction: float = 0.7
    perturb_magnitude: float = 0.3   # fraction of grid spacing, must stay < 0.5
    value_range: tuple = (1.0, 10.0)  # drawn uniformly, then divided by 10
    seed: int = 0

    def __post_init__(self):
        if self.grid_side < 2:
            raise ValueError("grid_side must be at least 2")
        if self.grid_cols is not None and self.grid_cols < 2:
            raise ValueError("grid_cols must be at least 2")
        if not (0.0 < self.prune_keep_fraction <= 1.0):
            raise ValueError("prune_keep_fraction must lie in (0, 1]")
        if self.perturb_magnitude < 0:
            raise ValueError("perturb_magnitude must be nonnegative")
        lo, hi = self.value_range
        if not (0 <= lo <= hi):
            raise ValueError("value_range must satisfy 0 <= lo <= hi")

    @property
    def rows(self):
        return self.grid_side

    @property
    def cols(self):
        return self.grid_cols if self.grid_cols is not None else self.grid_side


@dataclass(frozen=True)
class AttributeConfig:
    """Which optional mission attributes are active."""

    open_route: bool = False     # drones need not return to their depot
    time_windows: bool = False   # sites carry latest-arrival deadlines
    multi_depot: bool = False    # fleet launches from several depots

    def code(self):
        parts = []
        if self.open_route:
            parts.append("or")
        if self.time_windows:
            parts.append("tw")
        if self.multi_depot:
            parts.append("md")
        return "-".join(parts) if parts else "basic"


VARIANT_CODES = ("basic", "or", "tw", "md", "or-tw", "or-md", "tw-md", "or-tw-md")


def parse_variant(code):
    parts = code.split("-") if code != "basic" else []
    known = {"or", "tw", "md"}
    if code != "basic" and (not parts or set(parts) - known or len(set(parts)) != len(parts)):
        raise ValueError(f"unknown variant code {code!r}; expected one of {VARIANT_CODES}")
    return AttributeConfig(
        open_route="or" in parts,
        time_windows="tw" in parts,
        multi_depot="md" in parts,
    )


@dataclass(frozen=True)
class SampleConfig:
    """Mission-parameter sampling settings for generate_instance."""

    time_limits: tuple = (2.0, 3.0, 4.0)
    battery_limit: float = 6.0
    n_drones_choices: tuple = (2, 3, 4)
    attributes: AttributeConfig = None   # fix attributes; None means sample flags
    open_route_prob: float = 0.5
    time_window_prob: float = 0.5
    multi_depot: bool = False            # used only when attributes is None
    n_depots: int = 2
    depot_capacity: int = None           # per-depot launch cap; None -> n_drones
    deadline_range: tuple = (0.3, 1.0)   # site deadlines, as fractions of time_limit


@dataclass(eq=False)
class Instance:
    """One assessment mission over a transformed network."""

    network: netmod.TransformedNetwork
    time_limit: float            # per-sortie flight-time budget
    battery_limit: float         # battery endurance cap (binds via min with time_limit)
    n_drones: int
    attrs: AttributeConfig
    deadlines: np.ndarray        # (n_nodes,) latest arrival; +inf where unconstrained
    depot_capacity: tuple        # per depot, aligned with network.depots

    def __post_init__(self):
        self.deadlines = np.asarray(self.deadlines, dtype=np.float64)
        if self.time_limit <= 0 or self.battery_limit <= 0:
            raise ValueError("time and battery limits must be positive")
        if self.n_drones < 1:
            raise ValueError("need at least one drone")
        ndep = len(self.network.depots)
        if self.attrs.multi_depot and ndep < 2:
            raise ValueError("multi-depot instance needs at least two depots")
        if not self.attrs.multi_depot and ndep != 1:
            raise ValueError("single-depot instance must have exactly one depot")
        if len(self.depot_capacity) != ndep:
            raise ValueError("one capacity per depot required")
        if sum(self.depot_capacity) < self.n_drones:
            raise ValueError("total depot capacity must cover the fleet")
        if self.deadlines.shape != (self.network.n_nodes,):
            raise ValueError("one deadline entry per node required")
        if not (self.deadlines > 0).all():
            raise ValueError("deadlines must be positive")
        if not self.attrs.time_windows and np.isfinite(self.deadlines).any():
            raise ValueError("finite deadlines present but time_windows flag is off")

    @property
    def budget(self):
        """Effective per-sortie budget: the binding of time and battery."""
        return min(self.time_limit, self.battery_limit)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.network == other.network
            and self.time_limit == other.time_limit
            and self.battery_limit == other.battery_limit
            and self.n_drones == other.n_drones
            and self.attrs == other.attrs
            and np.array_equal(self.deadlines, other.deadlines)
            and self.depot_capacity == other.depot_capacity
        )


# --- the four generation stages ----------------------------------------------

def generate_grid(cfg):
    """Full rows x cols lattice in the unit square with 4-neighbor links."""
    rows, cols = cfg.rows, cfg.cols
    nodes = []
    for r in range(rows):
        for c in range(cols):
            nodes.append((r * cols + c, c / (cols - 1), r / (rows - 1)))
    links = []
    sx, sy = 1.0 / (cols - 1), 1.0 / (rows - 1)
    for r in range(rows):
        for c in range(cols):
            nid = r * cols + c
            if c + 1 < cols:
                links.append((nid, nid + 1, sx, 0.5))
            if r + 1 < rows:
                links.append((nid, nid + cols, sy, 0.5))
    return netmod.build_road_network(nodes, links)


def prune_links(net, cfg, rng):
    """Drop links down to max(spanning tree, keep_fraction of all links).

    A uniformly shuffled spanning tree is kept first so the result is always
    connected; remaining slots are filled in shuffle order.  The surviving
    link count is a deterministic function of the sizes alone.
    """
    m = net.n_links
    target = max(net.n_nodes - 1, int(round(cfg.prune_keep_fraction * m)))
    order = rng.permutation(m)
    parent = list(range(net.n_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    tree, extra = [], []
    for k in order:
        i, j, *_ = net.links[k]
        ri, rj = find(net.index_of(i)), find(net.index_of(j))
        if ri != rj:
            parent[ri] = rj
            tree.append(net.links[k])
        else:
            extra.append(net.links[k])
    kept = tree + extra[: target - len(tree)]
    nodes = [(nid, net.coords[k, 0], net.coords[k, 1]) for k, nid in enumerate(net.node_ids)]
    return netmod.build_road_network(nodes, kept)


def perturb_nodes(net, cfg, rng):
    """Jitter each coordinate by uniform noise, clamped to the unit square.

    Noise is bounded per axis by perturb_magnitude x grid spacing, so with a
    magnitude below 0.5 no junction can cross into a neighboring grid cell.
    """
    sx, sy = 1.0 / (cfg.cols - 1), 1.0 / (cfg.rows - 1)
    bound = np.array([cfg.perturb_magnitude * sx, cfg.perturb_magnitude * sy])
    noise = rng.uniform(-bound, bound, size=net.coords.shape)
    coords = np.clip(net.coords + noise, 0.0, 1.0)
    nodes = [(nid, coords[k, 0], coords[k, 1]) for k, nid in enumerate(net.node_ids)]
    return netmod.build_road_network(nodes, net.links)


def assign_attributes(net, cfg, rng):
    """Set link lengths to endpoint Euclidean distance and draw link values."""
    lo, hi = cfg.value_range
    values = rng.uniform(lo, hi, size=net.n_links) / 10.0
    links = []
    for k, (i, j, _, _) in enumerate(net.links):
        d = float(np.linalg.norm(net.coords[net.index_of(i)] - net.coords[net.index_of(j)]))
        links.append((i, j, d, float(values[k])))
    nodes = [(nid, net.coords[k, 0], net.coords[k, 1]) for k, nid in enumerate(net.node_ids)]
    return netmod.build_road_network(nodes, links)


def generate_road_network(cfg, rng=None):
    """Run the four-stage pipeline and return the finished RoadNetwork."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    net = generate_grid(cfg)
    net = prune_links(net, cfg, rng)
    net = perturb_nodes(net, cfg, rng)
    net = assign_attributes(net, cfg, rng)
    return net


def generate_instance(gen_cfg, sample_cfg=None, rng=None):
    """Generate a full Instance: network pipeline plus mission parameters."""
    if sample_cfg is None:
        sample_cfg = SampleConfig()
    if rng is None:
        rng = np.random.default_rng(gen_cfg.seed)

    net = generate_road_network(gen_cfg, rng)

    attrs = sample_cfg.attributes
    if attrs is None:
        attrs = AttributeConfig(
            open_route=bool(rng.random() < sample_cfg.open_route_prob),
            time_windows=bool(rng.random() < sample_cfg.time_window_prob),
            multi_depot=sample_cfg.multi_depot,
        )

    time_limit = float(rng.choice(sample_cfg.time_limits))
    n_drones = int(rng.choice(sample_cfg.n_drones_choices))

    n_depots = sample_cfg.n_depots if attrs.multi_depot else 1
    depot_junctions = np.sort(rng.choice(net.n_nodes, size=n_depots, replace=False))
    depot_ids = [net.node_ids[k] for k in depot_junctions]
    tn = netmod.transform(net, depots=depot_ids)

    cap = sample_cfg.depot_capacity if sample_cfg.depot_capacity is not None else n_drones
    deadlines = np.full(tn.n_nodes, np.inf)
    if attrs.time_windows:
        lo, hi = sample_cfg.deadline_range
        fracs = rng.uniform(lo, hi, size=tn.n_sites)
        deadlines[tn.n_junctions:] = fracs * time_limit

    return Instance(
        network=tn,
        time_limit=time_limit,
        battery_limit=sample_cfg.battery_limit,
        n_drones=n_drones,
        attrs=attrs,
        deadlines=deadlines,
        depot_capacity=tuple([cap] * n_depots),
    )


# --- JSON round-trips --------------------------------------------------------

def instance_to_json(inst):
    tn = inst.network
    finite = {
        str(i): float(inst.deadlines[i])
        for i in range(tn.n_nodes)
        if np.isfinite(inst.deadlines[i])
    }
    doc = {
        "format": "survey-instance/1",
        "network": json.loads(netmod.transformed_to_json(tn)),
        "time_limit": inst.time_limit,
        "battery_limit": inst.battery_limit,
        "n_drones": inst.n_drones,
        "attributes": {
            "open_route": inst.attrs.open_route,
            "time_windows": inst.attrs.time_windows,
            "multi_depot": inst.attrs.multi_depot,
        },
        "deadlines": finite,
        "depot_capacity": list(inst.depot_capacity),
    }
    return json.dumps(doc, sort_keys=True)


def instance_from_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON: {exc}", line=exc.lineno) from None
    if doc.get("format") != "survey-instance/1":
        raise ParseError(f"unexpected format tag {doc.get('format')!r}")
    tn = netmod.transformed_from_json(json.dumps(doc["network"]))
    deadlines = np.full(tn.n_nodes, np.inf)
    for key, val in doc["deadlines"].items():
        deadlines[int(key)] = val
    a = doc["attributes"]
    return Instance(
        network=tn,
        time_limit=doc["time_limit"],
        battery_limit=doc["battery_limit"],
        n_drones=doc["n_drones"],
        attrs=AttributeConfig(
            open_route=a["open_route"],
            time_windows=a["time_windows"],
            multi_depot=a["multi_depot"],
        ),
        deadlines=deadlines,
        depot_capacity=tuple(doc["depot_capacity"]),
    )
