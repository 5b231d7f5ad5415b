"""Mixed-integer formulation of assessment missions, plus a brute-force checker.

Variables follow a fixed naming scheme so exported text is reproducible:
  x_{i}_{j}_{k}   binary: drone k traverses arc (i, j)
  u_{i}_{k}       integer visit order (subtour elimination)
  a_{i}_{k}       continuous arrival time (deadline variants)
  z_{o}_{k}       binary: drone k is assigned depot o (multi-depot variants)

Constraint rows carry a family tag:
  C2  each site left at most once          C11 arrival before deadline
  C3  flow conservation off depots         C12 arrival-time propagation
  C4  at most one sortie per drone         C13 departure at time zero
  C5  battery endurance                    C14 arrival times nonnegative
  C6  sortie time budget                   C15 at most one depot per drone
  C7  visit-order subtour elimination      C16 sorties start at the assigned depot
  C8  arc variables binary                 C17 depot launch capacity
  C9  visit orders integer in [1, n]       C18 sorties end at the assigned depot
  C10 open routes: zero-cost return arcs   C19 assignment variables binary

Two modeling notes.  Idle drones are allowed a zero tour (C4 is an upper
bound, not an equality), since a mission may not need the whole fleet.
And the order/arrival propagation rows (C7, C12) skip arcs
that enter a depot: a tour must close at its depot, which is only
consistent if the closing arc is exempt from the strictly-increasing order
and arrival recursions.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InconsistentAttributes, ModelTooLarge


@dataclass
class LinearRow:
    name: str
    family: str
    coefs: dict     # var name -> coefficient
    sense: str      # "<=", ">=", "="
    rhs: float


@dataclass
class MilpModel:
    variant: str
    objective: dict          # var name -> coefficient, to maximize
    rows: list
    binaries: list           # var names
    integers: list           # (name, lo, hi)
    continuous: list         # (name, lo) with no upper bound
    families: tuple
    arcs: list               # (i, j, t) in variable order
    n_nodes: int
    depots: tuple
    n_drones: int

    def row_families(self):
        return sorted({r.family for r in self.rows})


@dataclass
class EnumerationResult:
    feasible: bool
    objective: float
    assignment: dict


def export_milp(instance, attrs=None):
    """Build the MILP for an instance's own mission variant."""
    if attrs is None:
        attrs = instance.attrs
    if attrs != instance.attrs:
        raise InconsistentAttributes(
            f"requested variant {attrs.code()!r} but the instance was built "
            f"as {instance.attrs.code()!r}")
    tn = instance.network
    nj, n = tn.n_junctions, tn.n_nodes
    depots = tn.depots
    drones = range(1, instance.n_drones + 1)
    open_route = attrs.open_route

    arcs = []
    for u in range(nj):
        for v in range(nj):
            if u != v:
                arcs.append((u, v, float(tn.arc_times[u, v])))
    for s in range(tn.n_sites):
        p = nj + s
        t = float(tn.site_leg_time[s])
        for u in (int(tn.site_endpoints[s, 0]), int(tn.site_endpoints[s, 1])):
            arcs.append((u, p, t))
            arcs.append((p, u, t))
    arcs.sort(key=lambda a: (a[0], a[1]))

    def x(i, j, k):
        return f"x_{i}_{j}_{k}"

    def uvar(i, k):
        return f"u_{i}_{k}"

    def avar(i, k):
        return f"a_{i}_{k}"

    def zvar(o, k):
        return f"z_{o}_{k}"

    def t_eff(i, j, t):
        # C10: with open routes, flying home is not charged
        return 0.0 if (open_route and j in depots) else t

    out_arcs = {i: [] for i in range(n)}
    in_arcs = {i: [] for i in range(n)}
    for i, j, t in arcs:
        out_arcs[i].append((j, t))
        in_arcs[j].append((i, t))

    objective = {}
    for k in drones:
        for s in range(tn.n_sites):
            p = nj + s
            for j, _ in out_arcs[p]:
                objective[x(p, j, k)] = float(tn.values[p])

    rows = []

    for s in range(tn.n_sites):
        p = nj + s
        coefs = {x(p, j, k): 1.0 for k in drones for j, _ in out_arcs[p]}
        rows.append(LinearRow(f"c2_{p}", "C2", coefs, "<=", 1.0))

    for k in drones:
        for i in range(n):
            if i in depots:
                continue
            coefs = {}
            for j, _ in in_arcs[i]:
                coefs[x(j, i, k)] = coefs.get(x(j, i, k), 0.0) + 1.0
            for j, _ in out_arcs[i]:
                coefs[x(i, j, k)] = coefs.get(x(i, j, k), 0.0) - 1.0
            rows.append(LinearRow(f"c3_{i}_{k}", "C3", coefs, "=", 0.0))

    for k in drones:
        coefs = {x(o, j, k): 1.0 for o in depots for j, _ in out_arcs[o]}
        rows.append(LinearRow(f"c4_{k}", "C4", coefs, "<=", 1.0))
        if not attrs.multi_depot:
            o = depots[0]
            bal = {x(j, o, k): 1.0 for j, _ in in_arcs[o]}
            for j, _ in out_arcs[o]:
                bal[x(o, j, k)] = bal.get(x(o, j, k), 0.0) - 1.0
            rows.append(LinearRow(f"c4bal_{k}", "C4", bal, "=", 0.0))

    for k in drones:
        coefs = {x(i, j, k): t_eff(i, j, t) for i, j, t in arcs}
        rows.append(LinearRow(f"c5_{k}", "C5",
                              {v: c for v, c in coefs.items() if c}, "<=",
                              instance.battery_limit))
        rows.append(LinearRow(f"c6_{k}", "C6",
                              {v: c for v, c in coefs.items() if c}, "<=",
                              instance.time_limit))

    big_m = float(n)
    for k in drones:
        for i, j, _ in arcs:
            if j in depots:
                continue
            rows.append(LinearRow(
                f"c7_{i}_{j}_{k}", "C7",
                {uvar(i, k): 1.0, uvar(j, k): -1.0, x(i, j, k): big_m},
                "<=", big_m - 1.0))

    families = ["C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8", "C9"]
    if open_route:
        families.append("C10")

    if attrs.time_windows:
        families += ["C11", "C12", "C13", "C14"]
        max_t = max(t for _, _, t in arcs)
        m_time = instance.time_limit + max_t
        for k in drones:
            for i in range(n):
                if np.isfinite(instance.deadlines[i]):
                    rows.append(LinearRow(f"c11_{i}_{k}", "C11",
                                          {avar(i, k): 1.0}, "<=",
                                          float(instance.deadlines[i])))
            for i, j, t in arcs:
                if j in depots:
                    continue
                rows.append(LinearRow(
                    f"c12_{i}_{j}_{k}", "C12",
                    {avar(i, k): 1.0, avar(j, k): -1.0, x(i, j, k): m_time},
                    "<=", m_time - t))
            for o in depots:
                rows.append(LinearRow(f"c13_{o}_{k}", "C13",
                                      {avar(o, k): 1.0}, "=", 0.0))

    if attrs.multi_depot:
        families += ["C15", "C16", "C17", "C18", "C19"]
        for k in drones:
            rows.append(LinearRow(f"c15_{k}", "C15",
                                  {zvar(o, k): 1.0 for o in depots}, "<=", 1.0))
            for o in depots:
                coefs = {x(o, j, k): 1.0 for j, _ in out_arcs[o]}
                coefs[zvar(o, k)] = -1.0
                rows.append(LinearRow(f"c16_{o}_{k}", "C16", coefs, "<=", 0.0))
                coefs = {x(j, o, k): 1.0 for j, _ in in_arcs[o]}
                coefs[zvar(o, k)] = -1.0
                rows.append(LinearRow(f"c18_{o}_{k}", "C18", coefs, "=", 0.0))
        for di, o in enumerate(depots):
            rows.append(LinearRow(f"c17_{o}", "C17",
                                  {zvar(o, k): 1.0 for k in drones}, "<=",
                                  float(instance.depot_capacity[di])))

    binaries = [x(i, j, k) for i, j, _ in arcs for k in drones]
    if attrs.multi_depot:
        binaries += [zvar(o, k) for o in depots for k in drones]
    integers = [(uvar(i, k), 1, n) for i in range(n) for k in drones]
    continuous = []
    if attrs.time_windows:
        continuous = [(avar(i, k), 0.0) for i in range(n) for k in drones]

    return MilpModel(
        variant=attrs.code(),
        objective=objective,
        rows=rows,
        binaries=binaries,
        integers=integers,
        continuous=continuous,
        families=tuple(families),
        arcs=arcs,
        n_nodes=n,
        depots=tuple(depots),
        n_drones=instance.n_drones,
    )


def _fmt(value):
    return f"{value:.12g}"


def write_lp(model):
    """Serialize the model as LP-format text (deterministic byte-for-byte)."""
    lines = ["\\ survey-milp/1", f"\\ variant: {model.variant}"]
    if "C10" in model.families:
        lines.append("\\ C10: arcs entering a depot carry zero traversal cost")
    lines.append("Maximize")
    terms = [f"{_fmt(c)} {v}" for v, c in model.objective.items()]
    if not terms:
        terms = ["0 " + model.binaries[0]]
    for chunk_start in range(0, len(terms), 8):
        chunk = " + ".join(terms[chunk_start:chunk_start + 8])
        prefix = " obj: " if chunk_start == 0 else "      + "
        lines.append(prefix + chunk)
    lines.append("Subject To")
    for row in model.rows:
        parts = []
        for v, c in row.coefs.items():
            if c == 0:
                continue
            sign = "-" if c < 0 else "+"
            parts.append(f"{sign} {_fmt(abs(c))} {v}")
        if not parts:
            parts = ["+ 0 " + model.binaries[0]]
        body = " ".join(parts).lstrip("+ ")
        sense = {"<=": "<=", ">=": ">=", "=": "="}[row.sense]
        lines.append(f" {row.name}: {body} {sense} {_fmt(row.rhs)}")
    lines.append("Bounds")
    for name, lo, hi in model.integers:
        lines.append(f" {_fmt(lo)} <= {name} <= {_fmt(hi)}")
    for name, lo in model.continuous:
        lines.append(f" {name} >= {_fmt(lo)}")
    lines.append("Binaries")
    for name in model.binaries:
        lines.append(f" {name}")
    lines.append("Generals")
    for name, _, _ in model.integers:
        lines.append(f" {name}")
    lines.append("End")
    return "\n".join(lines) + "\n"


def enumerate_milp(model):
    """Brute-force the binaries, derive order/arrival variables, verify rows.

    Binary-only rows are checked vectorized over chunks of assignments;
    surviving assignments get visit orders from longest-path layering over
    the chosen arcs (cycles are infeasible) and minimal arrival times by
    forward propagation, then every constraint row is evaluated numerically.
    """
    nb = len(model.binaries)
    if nb > 24:
        raise ModelTooLarge(f"{nb} binaries exceed the enumeration guard of 24")
    bin_index = {name: b for b, name in enumerate(model.binaries)}

    pure, mixed = [], []
    for row in model.rows:
        (pure if all(v in bin_index for v in row.coefs) else mixed).append(row)

    a_mat = np.zeros((len(pure), nb))
    senses = np.array([row.sense for row in pure])
    rhs = np.array([row.rhs for row in pure])
    for r, row in enumerate(pure):
        for v, c in row.coefs.items():
            a_mat[r, bin_index[v]] += c

    best = None
    chunk = 1 << 16
    for lo in range(0, 1 << nb, chunk):
        hi = min(lo + chunk, 1 << nb)
        masks = np.arange(lo, hi, dtype=np.int64)
        bits = ((masks[:, None] >> np.arange(nb)) & 1).astype(np.float64)
        lhs = bits @ a_mat.T
        ok = np.ones(len(masks), dtype=bool)
        le = senses == "<="
        ge = senses == ">="
        eq = senses == "="
        if le.any():
            ok &= (lhs[:, le] <= rhs[le] + 1e-9).all(axis=1)
        if ge.any():
            ok &= (lhs[:, ge] >= rhs[ge] - 1e-9).all(axis=1)
        if eq.any():
            ok &= (np.abs(lhs[:, eq] - rhs[eq]) <= 1e-9).all(axis=1)
        for m in masks[ok]:
            assignment = {name: float((m >> b) & 1)
                          for name, b in bin_index.items()}
            values = _derive_and_verify(model, assignment, mixed)
            if values is None:
                continue
            objective = sum(c * values[v] for v, c in model.objective.items())
            if best is None or objective > best.objective + 1e-12:
                best = EnumerationResult(True, float(objective), values)
    if best is None:
        return EnumerationResult(False, float("-inf"), {})
    return best


def _derive_and_verify(model, assignment, mixed_rows):
    """Derive u (and a) variables for fixed binaries; return the full value
    map if every constraint holds, else None."""
    n = model.n_nodes
    depots = set(model.depots)
    values = dict(assignment)

    for k in range(1, model.n_drones + 1):
        prec = [(i, j, t) for i, j, t in model.arcs
                if j not in depots and assignment[f"x_{i}_{j}_{k}"] > 0.5]
        order = _topo_order(n, [(i, j) for i, j, _ in prec])
        if order is None:
            return None  # cycle: no visit order can satisfy the recursion
        out = {}
        for i, j, t in prec:
            out.setdefault(i, []).append((j, t))
        hops = [0] * n
        arrive = [0.0] * n
        for i in order:
            for j, t in out.get(i, ()):
                hops[j] = max(hops[j], hops[i] + 1)
                arrive[j] = max(arrive[j], arrive[i] + t)
        for i in range(n):
            if 1 + hops[i] > n:
                return None
            values[f"u_{i}_{k}"] = float(1 + hops[i])
        if model.continuous:
            for i in range(n):
                values[f"a_{i}_{k}"] = arrive[i]

    for row in mixed_rows:
        lhs = sum(c * values[v] for v, c in row.coefs.items())
        if row.sense == "<=" and lhs > row.rhs + 1e-9:
            return None
        if row.sense == ">=" and lhs < row.rhs - 1e-9:
            return None
        if row.sense == "=" and abs(lhs - row.rhs) > 1e-9:
            return None
    return values


def _topo_order(n, edges):
    """Topological order of 0..n-1 under `edges`, or None on a cycle."""
    out = {}
    indeg = [0] * n
    for i, j in edges:
        out.setdefault(i, []).append(j)
        indeg[j] += 1
    queue = [i for i in range(n) if indeg[i] == 0]
    order = []
    while queue:
        i = queue.pop()
        order.append(i)
        for j in out.get(i, ()):
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(j)
    return order if len(order) == n else None
