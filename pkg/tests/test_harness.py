"""Scenario loading, baselines, benchmark machinery, comparison, CLI."""

from __future__ import annotations

import json

import pytest

from svcgov.errors import IncomparableReports, ValidationError
from svcgov.harness import baselines, bench
from svcgov.harness.cli import main as cli_main
from svcgov.harness.demo import strict_extension
from svcgov.harness.packs import pack_dir
from svcgov.harness.scenario import load_scenario, scenario_from_data
from svcgov.orchestrator import run

MINIMAL_SCENARIO = {
    "name": "tiny",
    "ontology_text": """
prefix t urn:tiny
relation providesFunction Agent Function
relation requires Service Function
relation executes Service Function
relation notifies Service Interaction
concept Service t:Req
concept Function t:Go
concept Agent t:Unit
concept Environment t:Here
concept Interaction t:Ping
""",
    "ticks": 1,
    "registry": [{"component": "u1", "concept": "t:Unit", "provides": ["t:Go"]}],
    "assertions": {"individuals": [["req1", "t:Req"]], "facts": [], "params": []},
    "initial_state": {
        "time": 0,
        "agents": [["bot", "t:Unit", True, 0.9, "z"]],
        "request": {"class": "t:Req", "params": {}, "deadline": 5},
        "network": {"z": 1.0},
        "safety_flags": [],
        "environment": {"z": ["t:Here"]},
    },
    "initial_hypothesis": {
        "roles": [{"id": "r1", "requires": ["t:Go"]}],
        "edges": [],
        "assignment": {"r1": {"component": "u1", "concept": "t:Unit", "provides": ["t:Go"]}},
        "policy": [],
        "constraints": {},
    },
    "events": [],
}


class TestScenarioLoading:
    def test_minimal_one_tick_scenario_loads(self):
        scenario = scenario_from_data(MINIMAL_SCENARIO)
        assert scenario.name == "tiny"
        assert scenario.ticks == 1

    def test_unknown_patch_zone_concept_fails_validation(self):
        data = json.loads(json.dumps(MINIMAL_SCENARIO))
        data["events"] = [{"tick": 0, "patches": [["zone+", "z", "t:Nowhere"]]}]
        with pytest.raises(ValidationError):
            scenario_from_data(data)

    def test_event_ticks_must_strictly_increase(self):
        data = json.loads(json.dumps(MINIMAL_SCENARIO))
        data["events"] = [
            {"tick": 0, "patches": [["deadline", 4]]},
            {"tick": 0, "patches": [["deadline", 3]]},
        ]
        with pytest.raises(ValidationError):
            scenario_from_data(data)

    def test_unsound_initial_hypothesis_fails_validation(self):
        data = json.loads(json.dumps(MINIMAL_SCENARIO))
        data["initial_hypothesis"]["assignment"] = {}
        with pytest.raises(ValidationError):
            scenario_from_data(data)

    def test_hospital_pack_carries_the_case_study_agents(self, hospital):
        scenario, cfg = hospital
        concepts = {str(a.concept) for a in scenario.initial_state.agents}
        assert {
            "ag:DeliveryRobot",
            "ag:Nurse",
            "ag:Pharmacist",
            "ag:RemoteSupervisor",
        } <= concepts

    def test_hospital_tick_zero_lifts_to_typed_entity_sets(self, hospital):
        from svcgov.model import semantic_lift

        scenario, cfg = hospital
        z = semantic_lift(scenario.initial_state, cfg.schema, cfg.assertions)
        assert str(z.request_class) == "svc:DeliveryRequest"
        agents = {aid for aid, _ in z.available_agents}
        assert {"R1", "R2", "nurse1", "pharm1", "sup1"} <= agents
        functions = {str(f) for _, f in z.component_functions}
        assert {"fn:IndoorNavigation", "fn:ItemHandoff", "fn:HumanNotification"} <= functions
        zones = dict(z.environment_descriptors)
        assert {str(d) for d in zones["ward"]} == {"env:Ward", "env:LowConnectivity"}

    def test_pack_files_load_via_path_api(self):
        scenario = load_scenario(pack_dir("hospital") / "scenario.json")
        assert scenario.name == "hospital-delivery"


class TestBaselines:
    def test_unknown_subject_is_a_config_error(self, hospital):
        _, cfg = hospital
        from svcgov.errors import ConfigError

        with pytest.raises(ConfigError):
            baselines.configure(cfg, "mystery")

    def test_baselines_reuse_the_stack_no_forks(self, hospital):
        scenario, cfg = hospital
        for subject, flags in baselines.BASELINE_FLAGS.items():
            preset = run(scenario, baselines.configure(cfg, subject))
            manual = run(scenario, cfg.ablated(flags))
            assert preset.document(subject, cfg) == manual.document(subject, cfg)

    def test_ontology_only_accepts_the_identity_violating_bait(self):
        scenario, cfg_full, store = bench.FAMILY_GENERATORS["substitution"](0)
        onto = baselines.configure(cfg_full, "ontology-only")
        result = run(scenario, onto, store)
        scan = bench.scan_run(scenario, cfg_full, result.traces)
        assert scan.core_violations >= 1  # deploys the cheap handoff at least once

    def test_full_stack_rejects_the_bait(self):
        scenario, cfg_full, store = bench.FAMILY_GENERATORS["substitution"](0)
        result = run(scenario, cfg_full, store)
        scan = bench.scan_run(scenario, cfg_full, result.traces)
        assert scan.core_violations == 0
        assert scan.identity_ok == scan.deployments


class TestBenchmarks:
    def test_single_seed_report_shape(self):
        report = bench.run_benchmark("substitution", "full", [0])
        assert report.runs == 1
        assert report.safe_reconfiguration_rate == 1.0
        assert 0.0 <= report.identity_preservation_rate <= 1.0

    def test_memory_reuse_family_orders_the_stacks(self):
        seeds = list(range(4))
        full = bench.run_benchmark("memory-reuse", "full", seeds)
        heuristic = bench.run_benchmark("memory-reuse", "heuristic-memory", seeds)
        onto = bench.run_benchmark("memory-reuse", "ontology-only", seeds)
        assert full.identity_preservation_rate >= heuristic.identity_preservation_rate
        assert full.identity_preservation_rate > onto.identity_preservation_rate
        assert full.safe_reconfiguration_rate > onto.safe_reconfiguration_rate
        assert full.certificate_reuse_gain > 0.0

    def test_unknown_family_is_rejected(self):
        with pytest.raises(IncomparableReports):
            bench.run_benchmark("time-travel", "full", [0])

    def test_empty_seeds_are_rejected(self):
        with pytest.raises(IncomparableReports):
            bench.run_benchmark("substitution", "full", [])

    def test_report_json_round_trip(self):
        report = bench.run_benchmark("substitution", "full", [0, 1])
        again = bench.report_from_json(bench.report_to_json(report))
        assert again == report

    def test_benchmark_is_reproducible_per_seed(self):
        one = bench.run_benchmark("regime-switch", "full", [7])
        two = bench.run_benchmark("regime-switch", "full", [7])
        assert one == two

    def test_safe_rate_equals_independent_rescan(self):
        seeds = [0, 1, 2]
        subject = "ontology-only"
        report = bench.run_benchmark("substitution", subject, seeds)
        violating_runs = 0
        for seed in seeds:
            scenario, cfg_full, store = bench.FAMILY_GENERATORS["substitution"](seed)
            result = run(scenario, baselines.configure(cfg_full, subject), store)
            scan = bench.scan_run(scenario, cfg_full, result.traces)
            if scan.core_violations:
                violating_runs += 1
        assert report.safe_reconfiguration_rate == pytest.approx(
            1.0 - violating_runs / len(seeds), abs=1e-12
        )


class TestCompare:
    def test_identical_subjects_compare_equal(self):
        report = bench.run_benchmark("substitution", "full", [0])
        table = bench.compare([("full", report), ("full", report)])
        assert all(verdict == "equal" for _, verdict in table.verdicts)

    def test_full_strictly_better_than_ontology_only_on_safety(self):
        seeds = [0, 1, 2]
        full = bench.run_benchmark("substitution", "full", seeds)
        onto = bench.run_benchmark("substitution", "ontology-only", seeds)
        table = bench.compare([("full", full), ("ontology-only", onto)])
        verdicts = dict(table.verdicts)
        assert verdicts["safe_reconfiguration_rate"] == "better"
        assert verdicts["identity_preservation_rate"] == "better"

    def test_table_shape_four_rows_five_metrics(self):
        seeds = [0]
        reports = [
            (s, bench.run_benchmark("substitution", s, seeds)) for s in baselines.SUBJECTS
        ]
        table = bench.compare(reports)
        lines = table.csv_text.strip().splitlines()
        assert len(lines) == 1 + 4
        assert len(lines[0].split(",")) == 1 + 5

    def test_mismatched_seeds_are_incomparable(self):
        a = bench.run_benchmark("substitution", "full", [0])
        b = bench.run_benchmark("substitution", "ontology-only", [1])
        with pytest.raises(IncomparableReports):
            bench.compare([("full", a), ("ontology-only", b)])


class TestDemo:
    def test_strict_extension_witness(self):
        report = strict_extension()
        assert len(report.witnesses) == 2
        assert all(w.consistent and w.sound for w in report.witnesses)
        assert report.ontology_accepts == 2
        assert report.fully_admissible == 1
        rendered = report.render()
        assert "ontology-conformant: BOTH" in rendered
        assert "fully-admissible: ONE" in rendered


class TestCli:
    def test_validate_packs_exits_zero(self, capsys):
        assert cli_main(["validate"]) == 0
        out = capsys.readouterr().out
        assert "pack ok: hospital" in out

    def test_validate_bad_ontology_exits_three(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("concept Wat x:y\n")
        assert cli_main(["validate", "--ontology", str(bad)]) == 3
        assert "error parse" in capsys.readouterr().err

    def test_run_pack_writes_trace_and_summary(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli_main(["run", "--pack", "retail", "--out", str(out)]) == 0
        assert (out / "retail-guidance.trace.json").exists()
        assert (out / "retail-guidance.summary.csv").exists()

    def test_demo_prints_the_witness_verdict(self, capsys):
        assert cli_main(["demo", "strict-extension"]) == 0
        out = capsys.readouterr().out
        assert "ontology-conformant: BOTH" in out
        assert "fully-admissible: ONE" in out

    def test_bench_unknown_family_is_a_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli_main(["bench", "--family", "time-travel", "--seeds", "0"])
        assert exc.value.code == 2

    def test_bench_and_compare_round_trip(self, tmp_path, capsys):
        rep = tmp_path / "rep"
        code = cli_main(
            [
                "bench",
                "--family",
                "substitution",
                "--subject",
                "full,ontology-only",
                "--seeds",
                "0",
                "--out",
                str(rep),
            ]
        )
        assert code == 0
        reports = sorted(rep.glob("*.report.json"))
        assert len(reports) == 2
        assert (rep / "substitution.compare.csv").exists()
        assert cli_main(["compare", *map(str, reports)]) == 0
        assert "verdict" in capsys.readouterr().out

    def test_run_with_persisted_store(self, tmp_path):
        from svcgov.memory import persist
        from svcgov.harness.packs import load_pack

        scenario, cfg = load_pack("retail")
        store = run(scenario, cfg).store
        store_path = tmp_path / "mem.store"
        persist(store, store_path)
        assert cli_main(["run", "--pack", "retail", "--store", str(store_path)]) == 0
