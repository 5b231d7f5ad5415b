import dataclasses

import numpy as np
import pytest

from skysweep import baselines
from skysweep import env
from skysweep import validator
from skysweep.errors import InfeasibleAction
from conftest import VARIANTS, make_instance
from test_env import line1, line3, make


def sol(*routes):
    """A bare solution shell; the validator only reads the routes."""
    return env.Solution(routes=tuple(tuple(r) for r in routes),
                        route_times=tuple(0.0 for _ in routes),
                        depot_assignment=tuple(r[0] if r else -1 for r in routes),
                        total_value=0.0)


def rule_ids(report):
    return sorted({rid for rid, _ in report.violations})


class TestRules:
    def test_clean_solution_passes(self):
        inst = make(line1(), time_limit=2.0)
        report = validator.validate_solution(inst, sol([0, 2, 0]))
        assert report.feasible
        assert report.violations == []
        assert report.value == pytest.approx(0.6)

    def test_connectivity(self):
        # site 4 sits on the far link; junction 0 is not one of its endpoints
        inst = make(line3(), time_limit=10.0)
        report = validator.validate_solution(inst, sol([0, 4, 0]))
        assert not report.feasible
        assert rule_ids(report) == ["connectivity"]

    def test_exclusivity(self):
        inst = make(line3(), time_limit=10.0)
        report = validator.validate_solution(inst, sol([0, 3, 1, 3, 0]))
        assert "exclusivity" in rule_ids(report)
        # the duplicated site still counts once toward the value
        assert report.value == pytest.approx(0.3)

    def test_time_window(self):
        deadlines = np.full(5, np.inf)
        deadlines[3] = 0.1                     # arrival there costs 0.25
        inst = make(line3(), variant="tw", time_limit=10.0,
                    deadlines=deadlines)
        report = validator.validate_solution(inst, sol([0, 3, 1, 0]))
        assert rule_ids(report) == ["time-window"]

    def test_budget(self):
        inst = make(line1(), time_limit=0.7)
        report = validator.validate_solution(inst, sol([0, 2, 0]))
        assert rule_ids(report) == ["budget"]

    def test_battery_binds_budget(self):
        inst = make(line1(), time_limit=9.0, battery_limit=0.7)
        report = validator.validate_solution(inst, sol([0, 2, 0]))
        assert rule_ids(report) == ["budget"]

    def test_depot_return_missing(self):
        inst = make(line1(), time_limit=2.0)
        report = validator.validate_solution(inst, sol([0, 2, 1]))
        assert rule_ids(report) == ["depot-return"]

    def test_start_away_from_depot(self):
        inst = make(line3(), time_limit=10.0)
        report = validator.validate_solution(inst, sol([1, 4, 2]))
        assert rule_ids(report) == ["depot-return"]

    def test_open_route_may_end_anywhere(self):
        inst = make(line1(), variant="or", time_limit=2.0)
        report = validator.validate_solution(inst, sol([0, 2]))
        assert report.feasible
        assert report.value == pytest.approx(0.6)

    def test_too_many_sorties(self):
        inst = make(line1(), time_limit=2.0, n_drones=1)
        report = validator.validate_solution(inst, sol([0, 2, 0], [0, 1, 0]))
        assert "depot-capacity" in rule_ids(report)

    def test_depot_capacity_per_depot(self):
        tn = line3(depots=[0, 2])
        inst = make(tn, variant="md", time_limit=10.0, n_drones=2,
                    depot_capacity=(1, 1))
        report = validator.validate_solution(inst, sol([0, 3, 0], [0, 1, 0]))
        assert "depot-capacity" in rule_ids(report)
        balanced = validator.validate_solution(inst, sol([0, 3, 0], [2, 4, 2]))
        assert balanced.feasible

    def test_completion_deadline_mode(self):
        deadlines = np.full(3, np.inf)
        deadlines[2] = 0.5                    # arrival 0.4, completion 0.8
        inst = make(line1(), variant="tw", time_limit=2.0, deadlines=deadlines)
        literal = validator.validate_solution(inst, sol([0, 2, 0]))
        assert literal.feasible
        strict = validator.validate_solution(inst, sol([0, 2, 0]),
                                             deadline_on_completion=True)
        assert rule_ids(strict) == ["time-window"]

    def test_reported_value_ignores_claimed_total(self):
        inst = make(line3(), time_limit=10.0)
        claimed = dataclasses.replace(sol([0, 3, 1, 4, 2, 1, 0]),
                                      total_value=99.0)
        report = validator.validate_solution(inst, claimed)
        assert report.feasible
        assert report.value == pytest.approx(1.2)


class TestReplay:
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_replay_reproduces_heuristic_solutions(self, variant):
        inst = make_instance(variant, seed=3)
        solution = baselines.greedy_heuristic(inst)
        replayed = validator.replay_solution(inst, solution)
        assert replayed.routes == solution.routes
        assert replayed.total_value == pytest.approx(solution.total_value)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_replay_reproduces_random_solutions(self, variant):
        inst = make_instance(variant, seed=4)
        solution = baselines.random_policy_rollout(inst,
                                                   np.random.default_rng(9))
        replayed = validator.replay_solution(inst, solution)
        assert replayed == solution

    def test_replay_rejects_unused_tail(self):
        inst = make_instance("basic", seed=5)
        solution = baselines.greedy_heuristic(inst)
        padded = solution.routes[0] + (solution.routes[0][-2],)
        tampered = dataclasses.replace(
            solution, routes=(padded,) + solution.routes[1:])
        with pytest.raises(ValueError):
            validator.replay_solution(inst, tampered)

    def test_replay_rejects_truncated_route(self):
        inst = make_instance("basic", seed=5)
        solution = baselines.greedy_heuristic(inst)
        cut = solution.routes[0][:2]
        tampered = dataclasses.replace(solution,
                                       routes=(cut,) + solution.routes[1:])
        with pytest.raises(ValueError):
            validator.replay_solution(inst, tampered)

    def test_replay_rejects_illegal_move(self):
        inst = make(line3(), time_limit=10.0)
        with pytest.raises(InfeasibleAction):
            validator.replay_solution(inst, sol([0, 3, 1, 3, 0]))
