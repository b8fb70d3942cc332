"""Obligation certifiers, substitution conditions, ledger, capacity."""

from __future__ import annotations

import random

import pytest

from svcgov.certificates import CertContext, Certificate, Violation, environment_digest
from svcgov.certify import (
    DriftLedger,
    LedgerEntry,
    RegimeSwitchModel,
    admissible,
    capacity_measure,
    certify_capacity,
    certify_closure,
    certify_invariance,
    certify_stability,
    certify_substitution,
    composed_drift_bound,
    structural_charge,
)
from svcgov.errors import ConfigError
from svcgov.evaluation import StructuralPrior, prior_complexity
from svcgov.memory import (
    EMPTY_STORE,
    FailureSignature,
    MemoryRecord,
    Motif,
    record,
)
from svcgov.model import Hypothesis, type_soundness
from svcgov.transform import (
    Substitute,
    UpdateConstraint,
    apply,
    generate_candidates,
)

from conftest import (
    FALLBACK,
    UNIT_A,
    UNIT_A1,
    UNIT_B,
    UNIT_C,
    chain_hypothesis,
    cid,
    invariant_core,
    make_config,
    make_grammar,
    regime,
)


def ctx(schema, z, label="base") -> CertContext:
    return CertContext(label, environment_digest(z, schema))


class TestClosure:
    def test_identity_like_update_certifies(self, schema, simple_h, z):
        grammar = make_grammar(updates=(UpdateConstraint("latency", 10.0),))
        tau = UpdateConstraint("latency", 10.0)
        out = certify_closure(apply(tau, simple_h), schema, grammar, tau, ctx(schema, z))
        assert isinstance(out, Certificate)
        assert out.kind == "closure"

    def test_non_refining_substitution_violates(self, schema, simple_h, z):
        tau = Substitute("r1", "ua", UNIT_B)  # FB does not refine FA
        out = certify_closure(apply(tau, simple_h), schema, make_grammar(), tau, ctx(schema, z))
        assert isinstance(out, Violation)
        assert out.code == "A1"
        assert "not type-sound" in out.message

    def test_out_of_grammar_transformation_violates(self, schema, simple_h, z):
        grammar = make_grammar(enabled=("substitute",))
        tau = UpdateConstraint("latency", 4.0)
        out = certify_closure(apply(tau, simple_h), schema, grammar, tau, ctx(schema, z))
        assert isinstance(out, Violation)
        assert "grammar" in out.message

    @pytest.mark.parametrize("seed", range(4))
    def test_random_grammar_candidates_match_the_oracle(self, schema, z, seed):
        rng = random.Random(seed)
        grammar = make_grammar(
            updates=(UpdateConstraint("latency", 8.0), UpdateConstraint("x", 1.0)),
            max_candidates=64,
        )
        registry = [UNIT_A, UNIT_A1, UNIT_B, UNIT_C]
        h = chain_hypothesis(
            [("r1", "t:FA", rng.choice([UNIT_A, UNIT_A1])), ("r2", "t:FB", UNIT_B)],
            constraints={"latency": 10.0},
        )
        for tau in generate_candidates(h, z, grammar, registry):
            h2 = apply(tau, h)
            out = certify_closure(h2, schema, grammar, tau, ctx(schema, z))
            expected = type_soundness(h2, schema).sound and grammar.allows(tau)
            assert isinstance(out, Certificate) == expected


class TestStability:
    def test_no_change_no_switch_appends_zero_entry(self, schema, simple_h, z):
        e = regime()
        ledger = DriftLedger(bound=5.0)
        out, updated = certify_stability(
            simple_h, simple_h, ledger, RegimeSwitchModel(), e, e, ctx(schema, z)
        )
        assert isinstance(out, Certificate)
        assert updated.entries == (LedgerEntry("base", "base", 0.0, 0.0),)
        assert updated.total == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_switch_sequence_arithmetic(self, schema, simple_h, z, seed):
        rng = random.Random(seed)
        k = rng.randint(1, 10)
        costs = [round(rng.uniform(0.1, 2.0), 6) for _ in range(k)]
        residuals = [round(rng.uniform(0.0, 0.5), 6) for _ in range(k)]
        labels = [f"e{i}" for i in range(k + 1)]
        model = RegimeSwitchModel(
            costs=tuple((labels[i], labels[i + 1], costs[i]) for i in range(k)),
            residuals=tuple((labels[i], labels[i + 1], residuals[i]) for i in range(k)),
        )
        total = sum(c + r for c, r in zip(costs, residuals))
        regimes = [regime(label=l, switching=100.0) for l in labels]

        ledger = DriftLedger(bound=total)
        for i in range(k):
            out, ledger = certify_stability(
                simple_h, simple_h, ledger, model, regimes[i], regimes[i + 1], ctx(schema, z)
            )
            assert isinstance(out, Certificate)
        assert ledger.total == pytest.approx(total, abs=1e-9)

    @pytest.mark.parametrize("k", (1, 3, 7))
    def test_uniform_sequence_violates_exactly_at_the_end(self, schema, simple_h, z, k):
        # k identical switches of cost c and residual r with bound k(c+r):
        # all certified; with bound k(c+r) - 1 the last switch violates
        c, r = 1.2, 0.3
        labels = [f"e{i}" for i in range(k + 1)]
        model = RegimeSwitchModel(
            costs=tuple((labels[i], labels[i + 1], c) for i in range(k)),
            residuals=tuple((labels[i], labels[i + 1], r) for i in range(k)),
        )
        regimes = [regime(label=l, switching=100.0) for l in labels]
        tight = DriftLedger(bound=k * (c + r) - 1.0)
        for i in range(k - 1):
            out, tight = certify_stability(
                simple_h, simple_h, tight, model, regimes[i], regimes[i + 1], ctx(schema, z)
            )
            assert isinstance(out, Certificate)
        outcome, tight = certify_stability(
            simple_h, simple_h, tight, model, regimes[k - 1], regimes[k], ctx(schema, z)
        )
        assert isinstance(outcome, Violation)
        assert outcome.code == "A2"
        assert tight.valid  # the violating charge was never committed

    def test_budget_gate_uses_destination_regime(self, schema, simple_h, z):
        model = RegimeSwitchModel(costs=(("a", "b", 3.0),))
        a, b = regime(label="a", switching=10.0), regime(label="b", switching=2.0)
        out, _ = certify_stability(
            simple_h, simple_h, DriftLedger(bound=100.0), model, a, b, ctx(schema, z)
        )
        assert isinstance(out, Violation)
        assert "switching budget" in out.message

    def test_ledger_untouched_on_violation(self, schema, simple_h, z):
        model = RegimeSwitchModel(costs=(("a", "b", 3.0),))
        a, b = regime(label="a"), regime(label="b", switching=2.0)
        ledger = DriftLedger(bound=100.0)
        _, after = certify_stability(simple_h, simple_h, ledger, model, a, b, ctx(schema, z))
        assert after is ledger

    def test_structural_charge_combines_constraints_and_reassignments(self, simple_h):
        model = RegimeSwitchModel(reassignment_unit_cost=2.0)
        moved = apply(Substitute("r1", "ua", UNIT_A1), simple_h)
        retuned = apply(UpdateConstraint("latency", 7.0), moved)
        assert structural_charge(simple_h, retuned, model) == pytest.approx(2.0 + 3.0)
        added = apply(UpdateConstraint("fresh", 4.0), simple_h)
        assert structural_charge(simple_h, added, model) == pytest.approx(4.0)

    def test_self_switch_cost_must_be_zero(self):
        with pytest.raises(ConfigError):
            RegimeSwitchModel(costs=(("a", "a", 1.0),))


class TestCapacity:
    def test_empty_graph_certifies_under_any_positive_budget(self, schema, z):
        out = certify_capacity(Hypothesis.build([]), StructuralPrior(), 0.01, ctx(schema, z))
        assert isinstance(out, Certificate)

    def test_budget_boundary_is_inclusive(self, schema, simple_h, z):
        prior = StructuralPrior()
        exact = prior_complexity(prior, simple_h)
        assert isinstance(certify_capacity(simple_h, prior, exact, ctx(schema, z)), Certificate)
        assert isinstance(
            certify_capacity(simple_h, prior, exact - 0.01, ctx(schema, z)), Violation
        )

    def test_oversized_addition_reports_computed_complexity(self, schema, simple_h, z):
        prior = StructuralPrior()
        grown = apply(FALLBACK, simple_h)
        budget = prior_complexity(prior, simple_h)  # too small for the grown graph
        out = certify_capacity(grown, prior, budget, ctx(schema, z))
        assert isinstance(out, Violation)
        assert out.evidence_map()["complexity"] == pytest.approx(prior_complexity(prior, grown))


class TestInvariance:
    def test_unchanged_hypothesis_certifies(self, schema, simple_h, z):
        out = certify_invariance(simple_h, simple_h, z, invariant_core(), schema, ctx(schema, z))
        assert isinstance(out, Certificate)

    def test_silent_request_class_change_violates(self, schema, simple_h, z):
        broken = apply(Substitute("r1", "ua", UNIT_C), simple_h)
        out = certify_invariance(simple_h, broken, z, invariant_core(), schema, ctx(schema, z))
        assert isinstance(out, Violation)
        assert out.code == "A4"
        assert "identity" in out.message

    def test_output_preserving_substitution_certifies_even_across_regimes(self, schema, simple_h, z):
        swapped = apply(Substitute("r1", "ua", UNIT_A1), simple_h)
        out = certify_invariance(simple_h, swapped, z, invariant_core(), schema, ctx(schema, z, "other"))
        assert isinstance(out, Certificate)
        # oracle: identity evaluated by explicit comparison is 1.0
        assert out.evidence_map()["identity_score"] == 1.0

    def test_identity_gate_lifts_when_excluded_from_core(self, schema, simple_h, z):
        broken = apply(Substitute("r1", "ua", UNIT_C), simple_h)
        core = invariant_core(include_identity=False)
        out = certify_invariance(simple_h, broken, z, core, schema, ctx(schema, z))
        assert isinstance(out, Certificate)
        assert out.evidence_map()["identity_score"] < 0.9


class TestSubstitution:
    def test_identity_substitution_certifies(self, schema, simple_h, z):
        out = certify_substitution(
            UNIT_A,
            UNIT_A,
            simple_h,
            z,
            EMPTY_STORE,
            schema,
            invariant_core(),
            RegimeSwitchModel(),
            regime(),
            ctx(schema, z),
        )
        assert isinstance(out, Certificate)
        assert all(out.evidence_map()["conditions"].values())

    def test_matching_failure_signature_violates_condition_five(self, schema, simple_h, z):
        signature = FailureSignature(
            regime_label="base",
            environment_digest=environment_digest(z, schema),
            motif=Motif.build({"slot": cid("t:UnitA1")}),
            obligation_code="runtime-failure",
        )
        store = record(
            EMPTY_STORE,
            MemoryRecord("base", simple_h.digest(), None, "failed", signature),
        )
        out = certify_substitution(
            UNIT_A,
            UNIT_A1,
            simple_h,
            z,
            store,
            schema,
            invariant_core(),
            RegimeSwitchModel(),
            regime(),
            ctx(schema, z),
        )
        assert isinstance(out, Violation)
        assert out.code == "S5"
        assert out.evidence_map()["conditions"]["S5"] is False

    def test_transition_cost_gate(self, schema, simple_h, z):
        out = certify_substitution(
            UNIT_A,
            UNIT_A1,
            simple_h,
            z,
            EMPTY_STORE,
            schema,
            invariant_core(),
            RegimeSwitchModel(reassignment_unit_cost=10.0),
            regime(switching=5.0),
            ctx(schema, z),
        )
        assert isinstance(out, Violation)
        assert out.code == "S4"

    def test_function_class_mismatch_is_condition_one(self, schema, simple_h, z):
        out = certify_substitution(
            UNIT_A,
            UNIT_C,
            simple_h,
            z,
            EMPTY_STORE,
            schema,
            invariant_core(include_identity=False),
            RegimeSwitchModel(),
            regime(),
            ctx(schema, z),
        )
        assert isinstance(out, Violation)
        assert out.code == "S1"


class TestAdmissible:
    def test_single_fault_capacity_reports_only_a3(self, schema, assertions, simple_h, z):
        cfg = make_config(schema, assertions, capacity=prior_complexity(StructuralPrior(), simple_h))
        verdict = admissible(FALLBACK, simple_h, z, regime(), EMPTY_STORE, cfg)
        assert not verdict.passed
        assert verdict.violation_codes() == ("A3",)
        for code in ("A1", "A2", "A4"):
            assert verdict.obligation(code).certified

    def test_all_pass_matches_conjunction_of_independent_certifiers(
        self, schema, assertions, simple_h, z
    ):
        cfg = make_config(schema, assertions)
        e = regime()
        tau = Substitute("r1", "ua", UNIT_A1)
        verdict = admissible(tau, simple_h, z, e, EMPTY_STORE, cfg)
        h2 = apply(tau, simple_h)
        context = ctx(schema, z)
        independent = [
            isinstance(certify_closure(h2, schema, cfg.grammar, tau, context), Certificate),
            isinstance(
                certify_stability(
                    simple_h, h2, DriftLedger(bound=cfg.drift_bound), cfg.switch_model, e, e, context
                )[0],
                Certificate,
            ),
            isinstance(certify_capacity(h2, cfg.prior, cfg.capacity_budget, context), Certificate),
            isinstance(certify_invariance(simple_h, h2, z, cfg.core, schema, context), Certificate),
            isinstance(
                certify_substitution(
                    UNIT_A, UNIT_A1, simple_h, z, EMPTY_STORE, schema, cfg.core, cfg.switch_model, e, context
                ),
                Certificate,
            ),
        ]
        assert verdict.passed == all(independent)
        assert verdict.passed

    def test_verdict_reports_every_obligation_with_evidence(self, schema, assertions, simple_h, z):
        cfg = make_config(schema, assertions)
        verdict = admissible(Substitute("r1", "ua", UNIT_B), simple_h, z, regime(), EMPTY_STORE, cfg)
        assert [code for code, _ in verdict.obligations] == ["A1", "A2", "A3", "A4"]
        for _, result in verdict.obligations:
            assert (result.certificate is not None) != (result.violation is not None)
        assert verdict.substitution is not None

    def test_inapplicable_transformation_fails_with_error(self, schema, assertions, simple_h, z):
        cfg = make_config(schema, assertions)
        verdict = admissible(
            Substitute("ghost", "ua", UNIT_A1), simple_h, z, regime(), EMPTY_STORE, cfg
        )
        assert not verdict.passed
        assert verdict.error

    def test_disarmed_gate_records_evidence_but_does_not_block(self, schema, assertions, simple_h, z):
        from svcgov.orchestrator import GateFlags

        cfg = make_config(
            schema,
            assertions,
            flags=GateFlags(invariance=False, substitution=False),
        )
        broken = Substitute("r1", "ua", UNIT_C)  # identity-collapsing but type-unsound too
        tau = Substitute("r2", "ub", UNIT_C)  # type-unsound at r2
        verdict = admissible(tau, simple_h, z, regime(), EMPTY_STORE, cfg)
        # invariance evidence still present though the gate is off
        a4 = verdict.obligation("A4")
        assert not a4.gated and a4.passed and a4.violation is not None
        assert not verdict.passed  # closure still gates


class TestLedgerAndCapacityMeasure:
    def test_ledger_conservation(self):
        entries = tuple(
            LedgerEntry("a", "b", cost=0.5 * i, residual=0.25) for i in range(1, 6)
        )
        ledger = DriftLedger(bound=100.0, entries=entries)
        assert ledger.total == pytest.approx(sum(e.cost + e.residual for e in entries), abs=1e-9)

    def test_capacity_measure_counts_distinct_digests(self, simple_h):
        assert capacity_measure([]) == 0
        assert capacity_measure([simple_h, simple_h]) == 1
        other = apply(UpdateConstraint("latency", 3.0), simple_h)
        assert capacity_measure([simple_h, other]) == 2

    @pytest.mark.parametrize("seed", range(5))
    def test_capacity_measure_monotone_under_inclusion(self, seed, simple_h):
        rng = random.Random(seed)
        pool = [apply(UpdateConstraint("x", float(i)), simple_h) for i in range(10)]
        subset = [h for h in pool if rng.random() < 0.5]
        assert capacity_measure(subset) <= capacity_measure(pool)

    def test_composed_bound_is_sum_plus_interface_terms(self):
        assert composed_drift_bound([2.0, 3.0, 4.0], 0.5) == pytest.approx(10.0)
        assert composed_drift_bound([2.0], 0.5) == pytest.approx(2.0)
