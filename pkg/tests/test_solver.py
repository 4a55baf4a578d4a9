import random

import pytest

from pooldispatch.core import (
    Assignment,
    DispatchInstance,
    Point,
    evaluate_objective,
    random_instance,
    validate,
)
from pooldispatch.model import build_model
from pooldispatch.solver import (
    STATUS_ABORTED,
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    EnumerationLimitError,
    SolveLimits,
    brute_force,
    first_k_incumbents,
    solve_exact,
)


def solve_instance(inst, limits=SolveLimits()):
    mip, _ = build_model(inst)
    return solve_exact(mip, limits)


class TestSolveExact:
    def test_single_option(self):
        inst = DispatchInstance((Point(0, 0),), (), (Point(3, 4),), "one")
        result = solve_instance(inst)
        assert result.status == STATUS_OPTIMAL
        assert result.optimal_objective == pytest.approx(7.0)
        assert result.optimal.x_pairs == {(0, 0)}

    def test_exemplar_optimum_below_worked_solution(self, exemplar):
        result = solve_instance(exemplar)
        oracle = brute_force(exemplar)
        assert result.status == STATUS_OPTIMAL
        assert result.optimal_objective == pytest.approx(oracle.optimal_objective, abs=1e-9)
        # frozen from the oracle: the all-shared matching is optimal
        assert result.optimal_objective == pytest.approx(9.55, abs=1e-9)
        assert result.optimal_objective <= 24.36

    def test_uncoverable_user_infeasible(self):
        inst = DispatchInstance((), (), (Point(0, 0),), "nobody")
        result = solve_instance(inst)
        assert result.status == STATUS_INFEASIBLE
        assert result.incumbents == ()

    def test_capacity_infeasibility(self):
        rng = random.Random(5)
        inst = random_instance(rng, 1, 0, 3, instance_id="tight")  # capacity 2 < 3
        assert solve_instance(inst).status == STATUS_INFEASIBLE

    def test_solution_is_feasible(self, exemplar):
        result = solve_instance(exemplar)
        assert validate(exemplar, result.optimal).feasible

    def test_node_limit_aborts(self):
        rng = random.Random(6)
        inst = random_instance(rng, 5, 5, 5, instance_id="cap")
        result = solve_instance(inst, SolveLimits(max_nodes=2, max_seconds=60))
        assert result.status == STATUS_ABORTED

    def test_deterministic_byte_for_byte(self):
        rng = random.Random(7)
        inst = random_instance(rng, 4, 4, 4, instance_id="det")
        mip, _ = build_model(inst)
        assert solve_exact(mip).to_json() == solve_exact(mip).to_json()


class TestBruteForce:
    def test_two_candidates_by_hand(self):
        inst = DispatchInstance(
            (Point(0, 0),), (), (Point(1, 0), Point(2, 0)), "pair")
        result = brute_force(inst)
        assert result.status == STATUS_OPTIMAL
        assert result.optimal_objective == pytest.approx(2.0)
        assert result.optimal.y_triples == {(0, 0, 1)}

    def test_no_users(self):
        inst = DispatchInstance((Point(0, 0),), (), (), "idle")
        result = brute_force(inst)
        assert result.status == STATUS_OPTIMAL
        assert result.optimal_objective == 0.0
        assert result.optimal == Assignment()

    def test_enumeration_bound(self):
        rng = random.Random(8)
        inst = random_instance(rng, 8, 8, 8, instance_id="huge")
        with pytest.raises(EnumerationLimitError):
            brute_force(inst, max_enumeration=1000)

    def test_incumbents_strictly_improving(self, exemplar):
        result = brute_force(exemplar)
        objectives = [inc.objective for inc in result.incumbents]
        assert all(b < a - 1e-9 for a, b in zip(objectives, objectives[1:]))
        assert result.incumbents[-1].objective == result.optimal_objective


class TestOracleEquivalence:
    def test_500_random_instances(self):
        rng = random.Random(1)
        for trial in range(500):
            m, n = rng.randint(0, 2), rng.randint(0, 2)
            p = rng.randint(1, 4)
            inst = random_instance(rng, m, n, p, instance_id=f"oracle{trial}")
            exact = solve_instance(inst)
            oracle = brute_force(inst)
            assert exact.status == oracle.status, inst.instance_id
            if exact.status == STATUS_OPTIMAL:
                assert exact.optimal_objective == pytest.approx(
                    oracle.optimal_objective, abs=1e-9), inst.instance_id

    def test_bound_admissible_on_subproblems(self):
        # root bound never exceeds the true optimum on tiny instances
        rng = random.Random(9)
        for trial in range(100):
            inst = random_instance(rng, rng.randint(1, 2), rng.randint(0, 2),
                                   rng.randint(1, 3), instance_id=f"adm{trial}")
            exact = solve_instance(inst)
            if exact.status == STATUS_OPTIMAL:
                assert exact.root_bound <= exact.optimal_objective + 1e-9


class TestIncumbents:
    def test_first_k_truncates(self, exemplar):
        result = brute_force(exemplar)
        assert len(result.incumbents) >= 3
        first = first_k_incumbents(result, 3)
        assert [inc.found_order for inc in first] == [1, 2, 3]

    def test_fewer_than_k(self):
        inst = DispatchInstance((Point(0, 0),), (), (Point(1, 1),), "only")
        result = solve_instance(inst)
        assert len(first_k_incumbents(result, 3)) == 1

    def test_k_must_be_positive(self, exemplar):
        with pytest.raises(ValueError):
            first_k_incumbents(solve_instance(exemplar), 0)

    def test_golden_exemplar_trail(self, exemplar):
        # frozen from the deterministic cheapest-first search
        result = solve_instance(exemplar)
        assert [round(inc.objective, 2) for inc in result.incumbents] == [9.55]
        assert result.incumbents[0].solution.z_pairs == {(0, 0), (1, 2), (2, 1)}
        # frozen brute-force enumeration trail for the same instance
        oracle = brute_force(exemplar)
        assert [round(inc.objective, 2) for inc in first_k_incumbents(oracle, 3)] == \
            [39.95, 38.28, 22.60]

    def test_incumbent_gap_conventions(self, exemplar):
        exact = solve_instance(exemplar)
        for inc in exact.incumbents:
            assert 0.0 <= inc.solver_gap <= 1.0
        oracle = brute_force(exemplar)
        # brute force uses the trivial bound 0, so every gap is 1.0
        assert all(inc.solver_gap == 1.0 for inc in oracle.incumbents)

    def test_solutions_validate_and_match_objective(self, exemplar):
        result = brute_force(exemplar)
        for inc in result.incumbents:
            assert validate(exemplar, inc.solution).feasible
            assert evaluate_objective(exemplar, inc.solution) == pytest.approx(
                inc.objective, abs=1e-9)


class TestSerialization:
    def test_json_excludes_wall_times(self, exemplar):
        doc = solve_instance(exemplar).to_json_dict()
        assert "wall_time" not in doc["incumbents"][0]
        assert doc["status"] == STATUS_OPTIMAL
        assert doc["optimal"]["objective"] == pytest.approx(9.55, abs=1e-9)
