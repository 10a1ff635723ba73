"""Core data types: exact costs, relations, mechanisms, serialization."""

import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mechdesign import (
    Cost,
    CostMatrix,
    DeterministicMechanism,
    Instance,
    OutcomeSpace,
    RandomizedMechanism,
    ReportingRelation,
    best_response,
    cost_deterministic,
    cost_randomized,
    expected_utility,
    hard_violations,
    instance_from_json,
    instance_to_json,
    is_transitive,
    is_truthful,
    mechanism_from_json,
    mechanism_to_json,
    mechanism_violations,
    transitive_closure,
    truthfulness_violations,
    validate,
)


def small_instance():
    return Instance(
        outcomes=OutcomeSpace([1, 2, 3]),
        relation=ReportingRelation(2, [(0, 0), (1, 1), (0, 1)]),
        costs=CostMatrix([[4, 2, 7], [1, 5, 3]]),
    )


class TestCost:
    def test_exact_fraction_arithmetic(self):
        assert (Cost(Fraction(1, 3)) + Cost(Fraction(1, 6))).finite == Fraction(1, 2)
        assert Cost(5).scaled(Fraction(2, 5)).finite == 2

    def test_infinity_absorbs(self):
        inf = Cost.infinite()
        assert not inf.is_finite
        assert not (inf + Cost(3)).is_finite
        assert not (Cost(3) + inf).is_finite
        assert not inf.scaled(7).is_finite

    def test_scaling_infinity_by_zero_rejected(self):
        with pytest.raises(ValueError):
            Cost.infinite().scaled(0)

    def test_ordering_puts_infinity_last(self):
        vals = [Cost.infinite(), Cost(2), Cost(Fraction(3, 2))]
        assert sorted(vals) == [Cost(Fraction(3, 2)), Cost(2), Cost.infinite()]
        assert Cost(10**9) < Cost.infinite()

    def test_equality_and_hash(self):
        assert Cost(Fraction(4, 2)) == Cost(2)
        assert hash(Cost(Fraction(4, 2))) == hash(Cost(2))
        assert Cost.infinite() == Cost.infinite()
        assert Cost(2) != Cost(3)

    def test_finite_accessor_guards(self):
        with pytest.raises(ValueError):
            Cost.infinite().finite

    def test_float_conversion(self):
        assert float(Cost(Fraction(1, 4))) == 0.25
        assert float(Cost.infinite()) == float("inf")

    def test_float_infinity_spelling(self):
        assert Cost(float("inf")) == Cost.infinite()
        assert not Cost(float("inf")).is_finite
        with pytest.raises(ValueError):
            Cost(float("-inf"))


class TestRelations:
    def test_full_and_identity(self):
        full = ReportingRelation.full(3)
        ident = ReportingRelation.identity(3)
        assert len(full.pairs) == 9
        assert sorted(ident.pairs) == [(0, 0), (1, 1), (2, 2)]
        assert full.allowed_reports(1) == [0, 1, 2]
        assert ident.allowed_reports(1) == [1]

    def test_transitivity_detection(self):
        chain = ReportingRelation(3, [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2)])
        assert not is_transitive(chain)
        closed = transitive_closure(chain)
        assert is_transitive(closed)
        assert (0, 2) in closed.pairs

    @given(
        n=st.integers(2, 5),
        extra=st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), max_size=8),
    )
    @settings(max_examples=60, deadline=None)
    def test_closure_is_idempotent_and_contains_original(self, n, extra):
        pairs = [(i, i) for i in range(n)]
        pairs += [(a % n, b % n) for a, b in extra]
        rel = ReportingRelation(n, pairs)
        closed = transitive_closure(rel)
        assert is_transitive(closed)
        assert set(rel.pairs) <= set(closed.pairs)
        assert set(transitive_closure(closed).pairs) == set(closed.pairs)


class TestValidation:
    def test_well_formed_instance_is_clean(self):
        assert validate(small_instance()) == []

    def test_non_increasing_utilities_flagged(self):
        inst = Instance(
            outcomes=OutcomeSpace([2, 2]),
            relation=ReportingRelation.identity(1),
            costs=CostMatrix([[1, 1]]),
        )
        assert any("strictly increasing" in p for p in validate(inst))

    def test_missing_reflexive_pair_flagged(self):
        inst = Instance(
            outcomes=OutcomeSpace([1, 2]),
            relation=ReportingRelation(2, [(0, 0), (0, 1)]),
            costs=CostMatrix([[1, 1], [1, 1]]),
        )
        assert any("reflexive" in p for p in validate(inst))

    def test_degenerate_row_reported_but_not_hard(self):
        inst = Instance(
            outcomes=OutcomeSpace([1, 2]),
            relation=ReportingRelation.identity(1),
            costs=CostMatrix([[Cost.infinite(), Cost.infinite()]]),
        )
        assert any("degenerate" in p for p in validate(inst))
        assert hard_violations(inst) == []

    def test_mechanism_shape_checks(self):
        inst = small_instance()
        ok = RandomizedMechanism([[Fraction(1, 2), Fraction(1, 2), 0], [0, 0, 1]])
        assert mechanism_violations(ok, inst) == []
        bad_row = RandomizedMechanism([[Fraction(1, 2), Fraction(1, 2), 0]])
        assert mechanism_violations(bad_row, inst)
        bad_sum = RandomizedMechanism([[1, 1, 0], [0, 0, 1]])
        assert mechanism_violations(bad_sum, inst)
        bad_assign = DeterministicMechanism([0, 3])
        assert mechanism_violations(bad_assign, inst)


class TestTruthfulness:
    def test_expected_utility_values(self):
        inst = small_instance()
        mech = RandomizedMechanism([[Fraction(1, 2), 0, Fraction(1, 2)], [0, 1, 0]])
        assert expected_utility(mech, inst.outcomes, 0) == Fraction(2)
        assert expected_utility(mech, inst.outcomes, 1) == Fraction(2)

    def test_violation_listing(self):
        inst = small_instance()
        tempted = DeterministicMechanism([0, 1])
        assert truthfulness_violations(tempted, inst) == [(0, 1)]
        assert not is_truthful(tempted, inst)
        content = DeterministicMechanism([1, 0])
        assert truthfulness_violations(content, inst) == []
        assert is_truthful(content, inst)

    def test_best_response_prefers_highest_then_honesty(self):
        inst = Instance(
            outcomes=OutcomeSpace([1, 2, 3]),
            relation=ReportingRelation.full(2),
            costs=CostMatrix([[0, 0, 0], [0, 0, 0]]),
        )
        mech = DeterministicMechanism([2, 0])
        assert best_response(mech, inst, 1) == 0
        even = DeterministicMechanism([1, 1])
        assert best_response(even, inst, 0) == 0
        assert best_response(even, inst, 1) == 1


class TestCosting:
    def test_deterministic_cost_modes(self):
        inst = small_instance()
        mech = DeterministicMechanism([1, 0])
        assert cost_deterministic(mech, inst, "truthful") == Cost(3)
        assert cost_deterministic(mech, inst, "best-response") == Cost(3)

    def test_best_response_cost_diverges_for_untruthful(self):
        inst = small_instance()
        mech = DeterministicMechanism([0, 1])
        assert cost_deterministic(mech, inst, "truthful") == Cost(9)
        assert cost_deterministic(mech, inst, "best-response") == Cost(7)

    def test_randomized_cost_exact(self):
        inst = small_instance()
        mech = RandomizedMechanism(
            [[Fraction(1, 2), Fraction(1, 2), 0], [0, 0, 1]]
        )
        assert cost_randomized(mech, inst) == Cost(Fraction(6))


class TestSerialization:
    def test_instance_round_trip_with_infinities(self):
        inst = Instance(
            outcomes=OutcomeSpace([Fraction(1, 2), 2, 3]),
            relation=ReportingRelation(2, [(0, 0), (1, 1), (1, 0)]),
            costs=CostMatrix([[Cost.infinite(), 0, 2], [1, Cost.infinite(), 0]]),
        )
        data = instance_to_json(inst, meta={"label": "probe"})
        text = json.dumps(data)
        back, meta = instance_from_json(json.loads(text))
        assert meta["label"] == "probe"
        assert back.outcomes.utilities == inst.outcomes.utilities
        assert set(back.relation.pairs) == set(inst.relation.pairs)
        assert back.costs.rows == inst.costs.rows

    def test_mechanism_round_trips(self):
        det = DeterministicMechanism([2, 0, 1])
        rand = RandomizedMechanism(
            [[Fraction(1, 3), Fraction(2, 3)], [Fraction(1, 2), Fraction(1, 2)]]
        )
        for mech in (det, rand):
            data = json.loads(json.dumps(mechanism_to_json(mech)))
            back = mechanism_from_json(data)
            assert type(back) is type(mech)
            if isinstance(mech, DeterministicMechanism):
                assert back.assignment == mech.assignment
            else:
                assert back.rows == mech.rows
