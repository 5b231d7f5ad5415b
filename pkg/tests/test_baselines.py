import numpy as np
import pytest

from skysweep import baselines
from skysweep import validator
from skysweep.errors import InstanceTooLarge
from conftest import VARIANTS, make_instance, tiny_instance
from enum_reference import best_value


class TestRandomPolicy:
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_feasible_on_every_variant(self, variant):
        inst = make_instance(variant, seed=0)
        solution = baselines.random_policy_rollout(inst,
                                                   np.random.default_rng(1))
        report = validator.validate_solution(inst, solution)
        assert report.feasible, report.violations
        assert report.value == pytest.approx(solution.total_value)

    def test_seed_reproducibility(self):
        inst = make_instance("or-tw", seed=2)
        a = baselines.random_policy_rollout(inst, np.random.default_rng(3))
        b = baselines.random_policy_rollout(inst, np.random.default_rng(3))
        assert a == b

    def test_respects_fleet_size(self):
        inst = make_instance("md", seed=1)
        solution = baselines.random_policy_rollout(inst,
                                                   np.random.default_rng(0))
        assert len(solution.routes) == inst.n_drones


class TestGreedyHeuristic:
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_feasible_on_every_variant(self, variant):
        inst = make_instance(variant, seed=5)
        solution = baselines.greedy_heuristic(inst)
        report = validator.validate_solution(inst, solution)
        assert report.feasible, report.violations

    def test_deterministic(self):
        inst = make_instance("tw-md", seed=6)
        assert baselines.greedy_heuristic(inst) == baselines.greedy_heuristic(inst)

    def test_collects_something_when_possible(self):
        # on an easy instance the density rule must pick up at least one site
        inst = make_instance("basic", seed=7, time_limits=(8.0,))
        assert baselines.greedy_heuristic(inst).total_value > 0.0

    def test_usually_beats_random(self):
        rng = np.random.default_rng(8)
        greedy_wins = 0
        for seed in range(10):
            inst = make_instance("basic", seed=seed)
            g = baselines.greedy_heuristic(inst).total_value
            r = baselines.random_policy_rollout(inst, rng).total_value
            greedy_wins += g >= r
        assert greedy_wins >= 8


class TestExactOracle:
    def test_size_guard(self):
        inst = make_instance("basic", seed=0)   # 3x3 grid: too many sites
        with pytest.raises(InstanceTooLarge):
            baselines.exact_oracle(inst)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_matches_independent_enumeration(self, variant):
        for seed in (0, 1):
            inst = tiny_instance(variant, seed=seed)
            got = baselines.exact_oracle(inst).total_value
            assert got == pytest.approx(best_value(inst), abs=1e-9), \
                f"{variant} seed {seed}"

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_oracle_solution_is_feasible(self, variant):
        inst = tiny_instance(variant, seed=2)
        solution = baselines.exact_oracle(inst)
        report = validator.validate_solution(inst, solution)
        assert report.feasible, report.violations
        assert report.value == pytest.approx(solution.total_value)

    def test_dominates_heuristics(self):
        rng = np.random.default_rng(4)
        for seed in range(4):
            inst = tiny_instance("tw", seed=seed)
            best = baselines.exact_oracle(inst).total_value
            assert best >= baselines.greedy_heuristic(inst).total_value - 1e-9
            assert best >= baselines.random_policy_rollout(inst, rng).total_value - 1e-9

    def test_open_route_dominates_closed(self):
        # with identical mission parameters, dropping the return-to-depot
        # requirement can only enlarge the feasible set
        for seed in range(4):
            closed = tiny_instance("basic", seed=seed)
            opened = tiny_instance("or", seed=seed)
            assert np.array_equal(closed.network.coords, opened.network.coords)
            assert (baselines.exact_oracle(opened).total_value
                    >= baselines.exact_oracle(closed).total_value - 1e-9)
