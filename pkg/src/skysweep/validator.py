"""Independent feasibility checking for completed solutions.

The validator re-derives every routing rule from instance data alone (arc
times, deadlines, budget, depots) without touching the environment's state
machine, so it can catch environment bugs rather than inherit them.  Each
violation carries one of six rule ids:

  connectivity    consecutive route nodes are not joined by an arc
  exclusivity     an assessment site is visited more than once
  time-window     a node is reached after its deadline
  budget          a move commits more sortie time than the budget allows
  depot-return    route endpoints disagree with the route mode / depots
  depot-capacity  more sorties launched from a depot than it supports

Note the validator checks *feasibility*: it does not require that an open
route kept flying while moves remained, which the environment itself does.
"""

from dataclasses import dataclass

import numpy as np

from . import env as envmod
from .errors import InfeasibleAction, TerminalState
from .network import travel_time


@dataclass
class ValidationReport:
    feasible: bool
    violations: list   # (rule_id, message) pairs
    value: float       # objective recomputed from the routes


def validate_solution(instance, solution, deadline_on_completion=False):
    tn = instance.network
    nj = tn.n_junctions
    budget = instance.budget
    closed = not instance.attrs.open_route
    violations = []

    routes = [list(r) for r in solution.routes]
    if len(routes) > instance.n_drones:
        violations.append(("depot-capacity",
                           f"{len(routes)} routes for {instance.n_drones} drones"))

    site_visits = {}
    launches = {d: 0 for d in tn.depots}

    for k, route in enumerate(routes):
        if not route:
            continue
        start = route[0]
        if start not in tn.depots:
            violations.append(("depot-return", f"route {k} starts at non-depot node {start}"))
            continue
        launches[start] += 1

        clock = 0.0
        for a, b in zip(route, route[1:]):
            t = travel_time(tn, a, b)
            if t is None:
                violations.append(("connectivity", f"route {k}: no arc ({a}, {b})"))
                break
            arrival = clock + t
            deadline_clock = arrival + (t if deadline_on_completion and b >= nj else 0.0)
            if deadline_clock > instance.deadlines[b]:
                violations.append(("time-window",
                                   f"route {k}: node {b} reached at {deadline_clock:.4f} "
                                   f"after deadline {instance.deadlines[b]:.4f}"))
            committed = clock + t
            if b >= nj:
                committed += t  # the full link pass
                far = int(tn.site_endpoints[b - nj, 0])
                if far == a:
                    far = int(tn.site_endpoints[b - nj, 1])
                if closed:
                    committed += _flight_home(tn, far, start)
            elif closed:
                committed += _flight_home(tn, b, start)
            if committed > budget:
                violations.append(("budget",
                                   f"route {k}: move to {b} commits {committed:.4f} "
                                   f"of budget {budget:.4f}"))
            clock = arrival
            if b >= nj:
                site_visits[b] = site_visits.get(b, 0) + 1

        if closed and len(route) > 1 and route[-1] != start:
            violations.append(("depot-return",
                               f"route {k} ends at {route[-1]}, not its depot {start}"))

    for site, count in sorted(site_visits.items()):
        if count > 1:
            violations.append(("exclusivity", f"site {site} visited {count} times"))

    for di, dep in enumerate(tn.depots):
        if launches[dep] > instance.depot_capacity[di]:
            violations.append(("depot-capacity",
                               f"depot {dep} launched {launches[dep]} sorties, "
                               f"capacity {instance.depot_capacity[di]}"))

    value = float(sum(tn.values[s] for s in sorted(site_visits)))
    return ValidationReport(feasible=not violations, violations=violations, value=value)


def _flight_home(tn, junction, depot):
    if junction == depot:
        return 0.0
    return float(tn.arc_times[junction, depot])


def replay_solution(instance, solution, deadline_on_completion=False):
    """Drive the environment along a solution's routes, step by step.

    Raises InfeasibleAction/TerminalState if the environment rejects a move
    the solution claims, and ValueError if the episode desynchronizes from
    the recorded routes.  Returns the environment's own finished Solution.
    """
    st = envmod.reset(instance, deadline_on_completion=deadline_on_completion)
    pointers = [1 if r and not instance.attrs.multi_depot else 0
                for r in solution.routes]
    while not envmod.is_terminal(st):
        k = st.drone - 1
        if k >= len(solution.routes):
            raise ValueError("environment expects more sorties than the solution has")
        route = solution.routes[k]
        if pointers[k] >= len(route):
            raise ValueError(f"route {k} ended but the environment still expects a move")
        envmod.step(st, route[pointers[k]])
        pointers[k] += 1
    replayed = envmod.extract_solution(st)
    for k, route in enumerate(solution.routes):
        if pointers[k] != len(route) and len(route) > (0 if instance.attrs.multi_depot else 1):
            raise ValueError(f"route {k} has unused tail beyond index {pointers[k]}")
    return replayed
