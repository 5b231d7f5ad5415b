"""Non-learned solvers: exhaustive oracle, density-greedy, random policy.

All three act through the routing environment itself, so they are feasible
by construction and comparable with the learned policy action for action.
"""

import numpy as np

from . import env as envmod
from .errors import InstanceTooLarge

ORACLE_MAX_SITES = 6
ORACLE_MAX_JUNCTIONS = 10


def random_policy_rollout(instance, rng, deadline_on_completion=False):
    """Uniform choice among feasible actions until the episode ends."""
    st = envmod.reset(instance, deadline_on_completion=deadline_on_completion)
    while not envmod.is_terminal(st):
        choices = np.flatnonzero(envmod.feasible_mask(st))
        envmod.step(st, int(rng.choice(choices)))
    return envmod.extract_solution(st)


def greedy_heuristic(instance, deadline_on_completion=False):
    """Repeatedly fly to the feasible site with the best value per flight
    minute; when no site is admissible, hop to the nearest feasible junction
    (ties toward lower node index).  Multi-depot sorties launch from the
    lowest-index depot with remaining capacity."""
    st = envmod.reset(instance, deadline_on_completion=deadline_on_completion)
    tn = instance.network
    nj = tn.n_junctions
    while not envmod.is_terminal(st):
        mask = envmod.feasible_mask(st)
        if st.position is envmod.PENDING:
            action = int(np.flatnonzero(mask)[0])
        else:
            t = tn.arc_times[st.position]
            sites = np.flatnonzero(mask[nj:]) + nj
            if sites.size:
                density = tn.values[sites] / t[sites]
                action = int(sites[np.argmax(density)])
            else:
                junctions = np.flatnonzero(mask[:nj])
                action = int(junctions[np.argmin(t[junctions])])
        envmod.step(st, action)
    return envmod.extract_solution(st)


def exact_oracle(instance, deadline_on_completion=False):
    """Optimal solution by depth-first search over the environment's exact
    action space.

    Branches are pruned by (a) an optimistic bound -- the remaining
    uncollected value cannot lift a branch above the incumbent -- and (b)
    Pareto dominance: a revisited (drone, position, collected, depot
    bookkeeping) signature with no lower sortie clock and no lower total
    elapsed time cannot lead anywhere new.  Ties prefer lower total flight
    time, then lexicographically smaller routes; the ascending action order
    makes the result deterministic.
    """
    tn = instance.network
    if tn.n_sites > ORACLE_MAX_SITES or tn.n_junctions > ORACLE_MAX_JUNCTIONS:
        raise InstanceTooLarge(
            f"oracle accepts at most {ORACLE_MAX_SITES} sites and "
            f"{ORACLE_MAX_JUNCTIONS} junctions "
            f"(got {tn.n_sites} and {tn.n_junctions})")

    site_values = tn.values[tn.n_junctions:]
    md = instance.attrs.multi_depot
    best = {"value": -np.inf, "total": np.inf, "routes": None, "solution": None}
    frontier = {}

    def consider(st):
        total = sum(st.route_times)
        routes = tuple(tuple(r) for r in st.routes)
        better = (
            st.total_value > best["value"] + 1e-12
            or (abs(st.total_value - best["value"]) <= 1e-12
                and (total < best["total"] - 1e-12
                     or (abs(total - best["total"]) <= 1e-12
                         and (best["routes"] is None or routes < best["routes"]))))
        )
        if better:
            best.update(value=st.total_value, total=total, routes=routes,
                        solution=envmod.extract_solution(st))

    def search(st):
        if st.done:
            consider(st)
            return
        total = sum(st.route_times) + st.clock
        key = (
            st.drone,
            -1 if st.position is envmod.PENDING else st.position,
            st.collected.tobytes(),
            st.depot_assignment[st.drone - 1],
            tuple(st.depot_launches) if md else (),
        )
        entries = frontier.setdefault(key, [])
        for c, t in entries:
            if c <= st.clock + 1e-12 and t <= total + 1e-12:
                return
        entries[:] = [(c, t) for c, t in entries
                      if not (st.clock <= c and total <= t)]
        entries.append((st.clock, total))

        remaining = float(site_values[~st.collected].sum())
        if st.total_value + remaining < best["value"] - 1e-12:
            return
        if (instance.attrs.open_route and st.position is not envmod.PENDING
                and st.position < tn.n_junctions):
            # A launched open drone can always burn its remaining clock by
            # shuttling between junctions, so handing over to the next drone
            # is reachable from any junction prefix.  Branching there directly
            # keeps those completions visible even though the dominance filter
            # above prunes the literal time-burning walks.
            handoff = st.clone()
            envmod._retire_active(handoff)
            envmod._settle(handoff)
            search(handoff)
        for action in np.flatnonzero(envmod.feasible_mask(st)):
            child = st.clone()
            envmod.step(child, int(action))
            search(child)

    search(envmod.reset(instance, deadline_on_completion=deadline_on_completion))
    return best["solution"]
