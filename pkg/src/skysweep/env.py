"""Sequential routing environment over a transformed assessment network.

One episode routes a fleet of drones, one drone at a time.  The active
drone moves along arcs of the transformed graph; landing on an assessment
site for the first time collects that site's value.  Feasibility masks
encode four rules for a candidate next node i from position j at sortie
clock d:

  (a) an arc (j, i) must exist;
  (b) already-assessed sites are excluded;
  (c) with deadlines, arrival must not be late: d + t(j, i) <= deadline_i;
  (d) the sortie budget B = min(time_limit, battery_limit) must cover the
      move plus the committed remainder: for a junction that is the flight
      home (zero for open routes), for a site the full link pass and the
      flight home from its far endpoint.

Rule (d) guarantees an admitted drone is never stranded: a site can always
be exited through its far endpoint, and a junction always leaves room to
reach the depot.  A sortie ends when a closed-route drone re-enters its
depot or when no action remains; the next drone then starts with a reset
clock.  Multi-depot episodes begin each sortie with a depot-selection step.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleAction, ParseError, TerminalState

PENDING = None  # position value while a multi-depot sortie awaits its depot pick


@dataclass
class State:
    instance: object
    drone: int                  # 1-based index of the active drone
    clock: float                # elapsed flight time of the active sortie
    position: object            # node index, or PENDING before a depot pick
    collected: np.ndarray       # (n_sites,) bool
    routes: list                # one node list per drone
    route_times: list           # flight time of each finished sortie
    depot_assignment: list      # depot node per drone; -1 until assigned
    depot_launches: list        # sorties started per depot
    done: bool = False
    total_value: float = 0.0
    steps: int = 0
    deadline_on_completion: bool = False
    _mask: np.ndarray = field(default=None, repr=False)

    def clone(self):
        c = State(
            instance=self.instance,
            drone=self.drone,
            clock=self.clock,
            position=self.position,
            collected=self.collected.copy(),
            routes=[list(r) for r in self.routes],
            route_times=list(self.route_times),
            depot_assignment=list(self.depot_assignment),
            depot_launches=list(self.depot_launches),
            done=self.done,
            total_value=self.total_value,
            steps=self.steps,
            deadline_on_completion=self.deadline_on_completion,
        )
        c._mask = None if self._mask is None else self._mask.copy()
        return c


@dataclass(frozen=True)
class Solution:
    """Completed episode: one route per drone, in launch order."""

    routes: tuple               # tuple of node-index tuples
    route_times: tuple
    depot_assignment: tuple     # -1 for drones that never launched
    total_value: float


def reset(instance, deadline_on_completion=False):
    """Fresh episode state; drones that cannot move at all retire in place."""
    tn = instance.network
    k = instance.n_drones
    st = State(
        instance=instance,
        drone=1,
        clock=0.0,
        position=PENDING,
        collected=np.zeros(tn.n_sites, dtype=bool),
        routes=[[] for _ in range(k)],
        route_times=[0.0] * k,
        depot_assignment=[-1] * k,
        depot_launches=[0] * len(tn.depots),
        deadline_on_completion=deadline_on_completion,
    )
    if not instance.attrs.multi_depot:
        _place_at_depot(st, tn.depots[0])
    _settle(st)
    return st


def feasible_mask(state):
    """Boolean mask over node indices; True marks admissible next actions."""
    if state.done:
        raise TerminalState("episode already finished")
    if state._mask is None:
        state._mask = _compute_mask(state)
    return state._mask


def step(state, action):
    """Apply one action for the active drone and return the mutated state."""
    if state.done:
        raise TerminalState("episode already finished")
    action = int(action)
    mask = feasible_mask(state)
    if not (0 <= action < mask.shape[0]) or not mask[action]:
        raise InfeasibleAction(
            f"node {action} is not admissible for drone {state.drone} "
            f"at position {state.position} (clock {state.clock:.4f})"
        )
    inst = state.instance
    tn = inst.network
    state._mask = None
    state.steps += 1
    if state.steps > 10_000 + 200 * tn.n_nodes * inst.n_drones:
        raise RuntimeError("step guard exceeded; instance may contain zero-length arcs")

    if state.position is PENDING:
        di = tn.depots.index(action)
        state.depot_launches[di] += 1
        state.depot_assignment[state.drone - 1] = action
        state.position = action
        state.routes[state.drone - 1] = [action]
        _settle(state)
        return state

    t = tn.arc_times[state.position, action]
    state.clock += float(t)
    state.routes[state.drone - 1].append(action)
    state.position = action

    if tn.is_site(action):
        s = action - tn.n_junctions
        if not state.collected[s]:
            state.collected[s] = True
            state.total_value += float(tn.values[action])
            if inst.attrs.open_route and state.collected.all():
                # nothing left to assess; open routes stop on the spot
                state.route_times[state.drone - 1] = state.clock
                state.done = True
                return state

    closed = not inst.attrs.open_route
    if closed and action == state.depot_assignment[state.drone - 1]:
        _retire_active(state)
    _settle(state)
    return state


def is_terminal(state):
    return state.done


def extract_solution(state):
    """Snapshot the episode as a Solution (complete once is_terminal)."""
    times = list(state.route_times)
    if not state.done and state.drone <= state.instance.n_drones:
        times[state.drone - 1] = state.clock
    return Solution(
        routes=tuple(tuple(r) for r in state.routes),
        route_times=tuple(times),
        depot_assignment=tuple(state.depot_assignment),
        total_value=state.total_value,
    )


def solution_value(instance, solution):
    """Recompute the objective from the routes alone: distinct site values."""
    nj = instance.network.n_junctions
    seen = set()
    for route in solution.routes:
        for node in route:
            if node >= nj:
                seen.add(node)
    return float(sum(instance.network.values[i] for i in sorted(seen)))


def solution_to_json(solution):
    doc = {
        "format": "survey-solution/1",
        "routes": [list(r) for r in solution.routes],
        "route_times": list(solution.route_times),
        "depot_assignment": list(solution.depot_assignment),
        "total_value": solution.total_value,
    }
    return json.dumps(doc, sort_keys=True)


def solution_from_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad JSON: {exc}", line=exc.lineno) from None
    if doc.get("format") != "survey-solution/1":
        raise ParseError(f"unexpected format tag {doc.get('format')!r}")
    return Solution(
        routes=tuple(tuple(r) for r in doc["routes"]),
        route_times=tuple(doc["route_times"]),
        depot_assignment=tuple(doc["depot_assignment"]),
        total_value=doc["total_value"],
    )


# --- internals ----------------------------------------------------------------

def _place_at_depot(state, depot):
    di = state.instance.network.depots.index(depot)
    state.depot_launches[di] += 1
    state.depot_assignment[state.drone - 1] = depot
    state.position = depot
    state.routes[state.drone - 1] = [depot]


def _retire_active(state):
    """Close the active sortie and stage the next drone (or finish)."""
    inst = state.instance
    state.route_times[state.drone - 1] = state.clock
    state.drone += 1
    state.clock = 0.0
    if state.collected.all() or state.drone > inst.n_drones:
        state.done = True
        return
    if inst.attrs.multi_depot:
        state.position = PENDING
    else:
        _place_at_depot(state, inst.network.depots[0])


def _settle(state):
    """Retire drones with no admissible move until someone can act."""
    while not state.done:
        if state.position is PENDING:
            state._mask = None
            return  # fleet capacity always leaves a depot to pick
        m = _compute_mask(state)
        if m.any():
            state._mask = m
            return
        _retire_active(state)


def _return_times(instance, depot):
    """Flight time from every junction home to `depot` (zero at the depot)."""
    cache = getattr(instance, "_return_cache", None)
    if cache is None:
        cache = instance._return_cache = {}
    if depot not in cache:
        tn = instance.network
        ret = tn.arc_times[:tn.n_junctions, depot].copy()
        ret[depot] = 0.0
        cache[depot] = ret
    return cache[depot]


def _compute_mask(state):
    inst = state.instance
    tn = inst.network
    nj = tn.n_junctions

    if state.position is PENDING:
        m = np.zeros(tn.n_nodes, dtype=bool)
        for di, dep in enumerate(tn.depots):
            if state.depot_launches[di] < inst.depot_capacity[di]:
                m[dep] = True
        return m

    t = tn.arc_times[state.position]                      # (n,) +inf where no arc
    feas = np.isfinite(t)                                 # rule (a)
    feas[nj:] &= ~state.collected                         # rule (b)

    arrival = state.clock + t                             # rule (c)
    if state.deadline_on_completion:
        arrival = arrival.copy()
        arrival[nj:] += t[nj:]  # stricter reading: the full pass beats the deadline
    feas &= arrival <= inst.deadlines

    committed = state.clock + t                           # rule (d)
    committed[nj:] += t[nj:]                              # sites need the full pass
    if not inst.attrs.open_route:
        ret = _return_times(inst, state.depot_assignment[state.drone - 1])
        committed[:nj] += ret
        far = np.where(tn.site_endpoints[:, 0] == state.position,
                       tn.site_endpoints[:, 1], tn.site_endpoints[:, 0])
        committed[nj:] += ret[far]
    feas &= committed <= inst.budget
    return feas
