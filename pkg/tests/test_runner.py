import hashlib
import json
import math
from collections import Counter
from pathlib import Path

import pytest

from conftest import CONFIGS
from helpers import make_corpus, oracle_answer
from reqclarify.cli import _load_config_file
from reqclarify.exceptions import IntegrityError, UsageError
from reqclarify.gateway import CallableBackend, Gateway, HashingEmbedder, ReplayStore
from reqclarify.runner import (
    ExperimentConfig,
    MetricReport,
    ReportRow,
    analyze_issue,
    build_gateway,
    emit_report,
    load_report,
    plan_detection,
    plan_refinement,
    report_csv,
    report_markdown,
    run_detection,
    run_refinement,
)

GOLDEN = Path(__file__).parent / "golden"
ISSUE_160 = Path(__file__).resolve().parents[1] / "src/reqclarify/data/fixtures/issue_160.txt"


def live(fn, concurrency=4, repetitions=10):
    return Gateway("live", None, CallableBackend(fn), HashingEmbedder(),
                   repetitions=repetitions, concurrency=concurrency)


def oracle_gateway(corpus, **kw):
    return live(lambda b, r: oracle_answer(corpus, b), **kw)


def fixture_config(name, **overrides):
    data = _load_config_file(CONFIGS / f"fixture-{name}.yaml")
    data.update(overrides)
    return ExperimentConfig(task="detect" if name == "detect" else "refine", **data)


class TestPreflight:
    def test_infeasible_shots_fail_before_any_call(self, synthetic):
        # lexical seed-10 split: round(0.3 * 24) = 7 training positives, so 8 pairs are infeasible
        gw = live(lambda b, r: pytest.fail("model called"))
        cfg = ExperimentConfig(defects=("lexical",), seeds=(10,), shot_counts=(16,))
        with pytest.raises(UsageError, match="16 shots need 8 training pairs, the split offers 7"):
            run_detection(cfg, synthetic, gw)
        assert gw.calls == []
        # 14 shots (7 pairs) is the largest feasible count
        cfg = ExperimentConfig(defects=("lexical",), seeds=(10,), shot_counts=(14,))
        assert plan_detection(cfg, synthetic)[cfg.defects[0], 10][1] == (14,)

    def test_odd_detection_shots(self, synthetic):
        with pytest.raises(UsageError, match="odd"):
            plan_detection(ExperimentConfig(defects=("vagueness",), shot_counts=(3,)), synthetic)

    def test_defaults_trimmed_to_the_split(self, synthetic, tiny_corpus):
        cfg = ExperimentConfig(defects=("semantic",))
        assert {v[1] for v in plan_detection(cfg, synthetic).values()} == {(0, 2, 4, 6)}
        rcfg = ExperimentConfig(task="refine", defects=("semantic",))
        # 10 instances: 3 train, so the CQ shot axis stops at 3
        assert {v[1] for v in plan_refinement(rcfg, synthetic).values()} == {(0, 1, 2, 3)}
        tiny = ExperimentConfig(defects=("vagueness",))
        assert {v[1] for v in plan_detection(tiny, tiny_corpus).values()} == {(0, 2)}

    def test_refinement_cap(self, synthetic):
        cfg = ExperimentConfig(task="refine", defects=("semantic",), shot_counts=(4,))
        with pytest.raises(UsageError, match="offers 3"):
            plan_refinement(cfg, synthetic)

    def test_exhaustive_limit(self, synthetic):
        cfg = ExperimentConfig(task="refine", defects=("incompleteness",), shot_counts=(5,),
                               exhaustive_orderings=True)
        with pytest.raises(UsageError, match="n <= 4"):
            plan_refinement(cfg, synthetic)

    def test_config_validation(self):
        with pytest.raises(UsageError):
            ExperimentConfig(task="train")
        with pytest.raises(UsageError):
            ExperimentConfig(defects=("vagueness", "Vagueness"))
        with pytest.raises(UsageError):
            ExperimentConfig(seeds=())
        with pytest.raises(UsageError):
            ExperimentConfig(repetitions=0)
        with pytest.raises(UsageError, match="store"):
            build_gateway(ExperimentConfig(mode="replay", store=None))

    def test_live_needs_a_key(self, monkeypatch):
        monkeypatch.delenv("REQCLARIFY_LLM_KEY", raising=False)
        with pytest.raises(UsageError, match="REQCLARIFY_LLM_KEY"):
            build_gateway(ExperimentConfig(mode="live"))


class TestDetectionRun:
    def test_oracle_scores_one(self, tiny_corpus):
        cfg = ExperimentConfig(defects=("vagueness", "incompleteness"), seeds=(10, 45),
                               repetitions=2)
        report = run_detection(cfg, tiny_corpus, oracle_gateway(tiny_corpus))
        assert report.errors == []
        for row in report.rows:
            assert row.mean == pytest.approx(1.0), row.cell
        cells = {r.cell[1:4] for r in report.rows}
        assert cells == {(d, s, n) for d in ("vagueness", "incompleteness") for s in (10, 45)
                         for n in (0, 2)}
        vag = [r for r in report.rows if r.defect == "vagueness"]
        assert {r.metric for r in vag} == {"exact", "coreff", "partial", "rouge1", "rouge2",
                                           "rougeL"}
        assert all(len(r.scores) == 2 for r in report.rows)

    def test_reasoned_detection(self, tiny_corpus):
        cfg = ExperimentConfig(defects=("vagueness",), reasoned=True, seeds=(10,), repetitions=1)
        report = run_detection(cfg, tiny_corpus, oracle_gateway(tiny_corpus))
        assert {r.experiment for r in report.rows} == {"ambiguity_detect_reasoned"}
        assert all(r.mean == 1.0 for r in report.rows)
        assert any(v["reasons"] for v in report.verdicts)

    def test_means_recompute(self, tiny_corpus):
        flaky = Counter()

        def answer(b, r):
            flaky[b.fingerprint] += 1
            return "No Defect Found" if (r + len(b.text)) % 3 == 0 else oracle_answer(tiny_corpus, b)

        cfg = ExperimentConfig(defects=("vagueness",), seeds=(10, 20), repetitions=4)
        data = run_detection(cfg, tiny_corpus, live(answer)).to_dict()
        assert any(row["mean"] < 1 for row in data["rows"])
        for row in data["rows"]:
            assert row["mean"] == math.fsum(row["scores"]) / len(row["scores"])

    def test_audit_trail_has_every_call_once(self, tiny_corpus, tmp_path):
        def answer(b, r):
            if r == 1 and not b.text.endswith("format requested above."):
                return "cannot say"  # forces one re-ask
            return oracle_answer(tiny_corpus, b)

        gw = live(answer)
        cfg = ExperimentConfig(defects=("vagueness", "incompleteness"), seeds=(10,),
                               repetitions=2, output_dir=str(tmp_path))
        report = run_detection(cfg, tiny_corpus, gw)
        lines = (tmp_path / "responses" / "responses.jsonl").read_text().splitlines()
        recorded = Counter((json.loads(x)["fingerprint"], json.loads(x)["repetition"])
                           for x in lines)
        assert recorded == Counter(gw.calls)
        assert any(v["reasked"] for v in report.verdicts)
        prompts = {p.stem for p in (tmp_path / "prompts").glob("*.txt")}
        assert prompts == {fp for fp, _ in gw.calls}
        for sub in ("splits/splits.jsonl", "prompts/index.jsonl", "report.json", "report.csv",
                    "report.md"):
            assert (tmp_path / sub).is_file()
        assert list((tmp_path / "scores").glob("ambiguity_detect-vagueness-seed10-shots*.jsonl"))

    def test_missing_fixtures_are_recorded_not_fatal(self, tiny_corpus, tmp_path):
        gw = Gateway("replay", ReplayStore(tmp_path, read_only=True), embedder=HashingEmbedder(),
                     repetitions=1)
        cfg = ExperimentConfig(defects=("vagueness",), seeds=(10,), repetitions=1,
                               shot_counts=(0,))
        report = run_detection(cfg, tiny_corpus, gw)
        assert len(report.errors) == len(report.verdicts) == 4
        assert all(e["error"].startswith("gateway:") for e in report.errors)
        assert report.get("ambiguity_detect", "vagueness", 10, 0, "exact").mean == 0.0

    def test_concurrency_does_not_change_results(self, tiny_corpus):
        cfg = ExperimentConfig(defects=("vagueness",), seeds=(10,), repetitions=3)
        a = run_detection(cfg, tiny_corpus, oracle_gateway(tiny_corpus, concurrency=1))
        b = run_detection(cfg, tiny_corpus, oracle_gateway(tiny_corpus, concurrency=8))
        assert a.to_json() == b.to_json()

    def test_orderings_per_repetition(self, synthetic):
        seen = set()

        def answer(b, r):
            seen.add(b.ordering_id)
            return "No Defect Found"

        cfg = ExperimentConfig(defects=("semantic",), seeds=(10,), shot_counts=(6,),
                               repetitions=1, exhaustive_orderings=True)
        report = run_detection(cfg, synthetic, live(answer))
        assert seen == set(range(6))
        assert len({v["ordering_id"] for v in report.verdicts}) == 6


class TestRefinementRun:
    def test_identical_cqs_score_one(self, tiny_corpus):
        cfg = ExperimentConfig(task="refine", defects=("vagueness", "incompleteness"),
                               seeds=(10,), repetitions=2)
        report = run_refinement(cfg, tiny_corpus, oracle_gateway(tiny_corpus))
        assert report.errors == []
        assert {r.metric for r in report.rows} == {"complete_list", "individual_elements"}
        for row in report.rows:
            assert row.mean == pytest.approx(1.0)
        assert {r.shot_count for r in report.rows if r.defect == "vagueness"} == {0, 1}

    def test_wrong_task(self, tiny_corpus):
        with pytest.raises(UsageError):
            run_refinement(ExperimentConfig(task="detect"), tiny_corpus)
        with pytest.raises(UsageError):
            run_detection(ExperimentConfig(task="refine"), tiny_corpus)


def sample_report():
    rows = [ReportRow("ambiguity_detect", "vagueness", 10, 0, "rougeL", (0.5, 1.0)),
            ReportRow("ambiguity_detect", "vagueness", 45, 0, "rougeL", (0.25, 0.25))]
    return MetricReport({"task": "detect"}, rows, [{"key": "o/r#1", "error": None}])


class TestReports:
    def test_json_roundtrip(self, tmp_path):
        report = sample_report()
        text = report.to_json()
        again = MetricReport.from_json(text)
        assert again.to_json() == text
        assert again.rows == report.sorted_rows()
        emit_report(report, tmp_path, ("json",))
        assert load_report(tmp_path).to_json() == text

    def test_tampered_mean(self):
        data = json.loads(sample_report().to_json())
        data["rows"][0]["mean"] = 0.9
        with pytest.raises(IntegrityError, match="disagrees"):
            MetricReport.from_dict(data)
        with pytest.raises(IntegrityError):
            MetricReport.from_json("{not json")

    def test_empty_report_is_headers_only(self):
        assert report_csv(MetricReport()) == \
            "experiment,defect,seed,shot_count,metric,mean,n_repetitions,scores\n"
        assert report_markdown(MetricReport()) == "# Results\n\nNo results.\n"

    def test_csv_keeps_full_precision(self):
        line = report_csv(sample_report()).splitlines()[1]
        assert line == "ambiguity_detect,vagueness,10,0,rougeL,0.75,2,0.5;1.0"

    def test_markdown_marks_best_seed(self):
        md = report_markdown(sample_report())
        assert "| seed 10 | 0.750* |" in md
        assert "| seed 45 | 0.250 |" in md

    def test_ninety_cell_grid(self):
        defects = ("lexical", "syntactic", "semantic", "pragmatic", "vagueness")
        metrics = ("exact", "coreff", "partial", "rouge1", "rouge2", "rougeL")
        rows = [ReportRow("ambiguity_detect", d, s, 0, m, (0.5,))
                for d in defects for s in (10, 20, 45) for m in metrics]
        md = report_markdown(MetricReport({}, rows))
        block = md.split("### 0-shot\n\n")[1].split("\n\n")[0].splitlines()
        header, body = block[0], block[2:]
        assert header.count(" seed ") == 15
        assert [r.split(" | ")[0].strip("| ") for r in body] == list(metrics)
        assert sum(r.count("0.500") for r in body) == 90

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(UsageError):
            emit_report(sample_report(), blocker / "out")
        with pytest.raises(UsageError):
            emit_report(sample_report(), tmp_path, ("xml",))

    def test_missing_report(self, tmp_path):
        with pytest.raises(UsageError):
            load_report(tmp_path)


class TestFixtureRuns:
    @pytest.mark.parametrize("name,digest", [
        ("detect", "b287d37093edad7b36d38d8819305059dd58abbf0b154d6bb18002d859fae74b"),
        ("refine", "757b157e26baeedbeab30f3154619453e840efa4d945bc323b2abc1a246026dc"),
    ])
    def test_golden_reports(self, name, digest, tmp_path):
        cfg = fixture_config(name, output_dir=str(tmp_path))
        run = run_detection if name == "detect" else run_refinement
        report = run(cfg)
        assert report.errors == []
        assert hashlib.sha256((tmp_path / "report.json").read_bytes()).hexdigest() == digest
        for ext in ("md", "csv"):
            assert (tmp_path / f"report.{ext}").read_text() == \
                (GOLDEN / f"{name}-report.{ext}").read_text()


class TestAnalyze:
    def test_no_defects(self):
        gw = live(lambda b, r: "Missing Information: No Defect Found"
                  if b.kind.value.startswith("incompleteness") else "No Defect Found")
        a = analyze_issue("Dark mode\nAdd a dark theme toggle.", gw)
        assert (a.detected, a.cqs, a.undetermined) == ([], [], [])
        assert "No defects detected." in a.format()

    def test_undetermined_kinds_are_reported(self):
        a = analyze_issue("Dark mode\nAdd a dark theme toggle.", live(lambda b, r: 'hmm, "maybe'))
        assert len(a.undetermined) == 6
        assert "Vagueness: undetermined" in a.format()
        assert a.to_dict()["undetermined"][0] == "lexical"

    def test_every_cq_references_a_detection(self):
        def answer(b, r):
            if b.kind.value == "ambiguity_detect_reasoned":
                return "[('no criterion', 'looks messy')]" if b.defect.value == "vagueness" \
                    else "No Defect Found"
            if b.kind.value == "incompleteness_detect":
                return '["layout"]'
            return '"What looks messy?"'

        a = analyze_issue("Tabs\nThe tab looks messy.", live(answer))
        assert [d.defect.value for d in a.detected] == ["vagueness", "incompleteness"]
        assert all(0 <= i < len(a.detected) for i, _ in a.cqs)
        assert a.detected[0].reason == "no criterion"

    def test_few_shot_needs_corpus(self):
        with pytest.raises(UsageError):
            analyze_issue("x\ny", live(lambda b, r: ""), n_shots=2)
        with pytest.raises(UsageError):
            analyze_issue("   ", live(lambda b, r: ""))

    def test_frozen_mastodon_like_request(self):
        gw = build_gateway(ExperimentConfig(store="@fixture"))
        a = analyze_issue(ISSUE_160.read_text(), gw)
        assert a.format() == (GOLDEN / "analyze-160.txt").read_text()
        vague = [d.items[0] for d in a.detected if d.defect.value == "vagueness"]
        assert "looks messy" in vague
        assert any(d.defect.value == "incompleteness" for d in a.detected)
