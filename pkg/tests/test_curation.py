"""Curation filters, judge clients, and the pipeline's bookkeeping."""

import json

import numpy as np
import pytest

import segui.curation as curation
from segui.core import BBox, Point, Rollout, Sample, ScreenSize
from segui.curation import (
    CurationConfig,
    DEFAULT_PATTERNS,
    ExternalJudge,
    HttpJudge,
    JudgeTransportError,
    ReplayJudge,
    compile_patterns,
    difficulty_filter,
    judge_bbox,
    judge_instruction,
    parse_verdict,
    regex_filter,
    run_pipeline,
)

PATTERNS = compile_patterns(DEFAULT_PATTERNS)


def make_sample(i: int, instruction: str = "press the save button") -> Sample:
    return Sample(
        id=f"c{i:03d}",
        screen=ScreenSize(100, 100),
        screen_source="shot.png",
        instruction=instruction,
        gt_bbox=BBox(40, 40, 60, 60),
    )


class TestRegexFilter:
    def test_real_instruction_kept(self):
        assert regex_filter("pin Jack's conversation", PATTERNS)

    def test_widget_name_rejected(self):
        assert not regex_filter("<PushButton>", PATTERNS)
        assert not regex_filter("click <Widget> now", PATTERNS)

    def test_empty_rejected(self):
        assert not regex_filter("", PATTERNS)
        assert not regex_filter("   ", PATTERNS)

    def test_class_path_rejected(self):
        assert not regex_filter("QtWidgets.QPushButton", PATTERNS)
        assert not regex_filter("com.example.app.Button", PATTERNS)

    def test_invalid_pattern_is_config_error(self):
        with pytest.raises(ValueError, match="invalid curation pattern"):
            compile_patterns(["(unclosed"])


class TestVerdictParsing:
    def test_yes(self):
        assert parse_verdict("Looks clear.\n\nConclusion\nYes") == "yes"

    def test_no(self):
        assert parse_verdict("Ambiguous.\n\nConclusion\nNo") == "no"

    def test_inline_colon(self):
        assert parse_verdict("Conclusion: Yes") == "yes"

    def test_free_text_fails_closed(self):
        assert parse_verdict("I think this is probably fine?") == "no"

    def test_last_conclusion_wins(self):
        assert parse_verdict("Conclusion\nNo\n...revised...\nConclusion\nYes") == "yes"


class FixedJudge(ExternalJudge):
    def __init__(self, response: str):
        self.response = response
        self.calls: list[tuple[str, str, str]] = []

    def complete(self, sample_id, kind, prompt):
        self.calls.append((sample_id, kind, prompt))
        return self.response


class TestJudgeOps:
    def test_instruction_prompt_substitution(self):
        judge = FixedJudge("Conclusion\nYes")
        sample = make_sample(1, "open the settings panel")
        verdict = judge_instruction(sample, judge)
        assert verdict.verdict == "yes" and verdict.kind == "instruction"
        _, _, prompt = judge.calls[0]
        assert "Instruction to evaluate: open the settings panel" in prompt
        assert "{instruction}" not in prompt

    def test_bbox_prompt_carries_crop_descriptor(self):
        judge = FixedJudge("Conclusion\nNo")
        verdict = judge_bbox(make_sample(2), judge)
        assert verdict.verdict == "no" and verdict.kind == "bbox"
        _, _, prompt = judge.calls[0]
        assert "[40.0, 40.0, 60.0, 60.0]" in prompt and "100x100" in prompt

    def test_unparseable_fails_closed_with_raw_kept(self):
        judge = FixedJudge("some rambling with no verdict section")
        verdict = judge_instruction(make_sample(3), judge)
        assert verdict.verdict == "no"
        assert verdict.raw_response == "some rambling with no verdict section"


class TestReplayJudge:
    def test_replays_transcripts(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text(
            json.dumps({"sample_id": "c001", "kind": "instruction", "response": "Conclusion\nYes"}) + "\n"
        )
        judge = ReplayJudge(str(path))
        assert judge.complete("c001", "instruction", "ignored") == "Conclusion\nYes"

    def test_missing_transcript_raises(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text("")
        with pytest.raises(JudgeTransportError):
            ReplayJudge(str(path)).complete("c001", "instruction", "p")


class FakeResponse:
    def __init__(self, payload, status=200):
        self._payload = payload
        self.status_code = status

    def raise_for_status(self):
        if self.status_code >= 400:
            import requests

            raise requests.HTTPError(f"status {self.status_code}")

    def json(self):
        return self._payload


class FakeSession:
    def __init__(self, payload, status=200):
        self.payload = payload
        self.status = status
        self.requests: list[dict] = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        return FakeResponse(self.payload, self.status)


class TestHttpJudge:
    def test_wire_contract(self, monkeypatch):
        monkeypatch.setenv(curation.JUDGE_TOKEN_ENV, "sekrit")
        session = FakeSession({"choices": [{"message": {"content": "Conclusion\nYes"}}]})
        judge = HttpJudge("http://judge.local/v1/chat", model="mllm-large", session=session)
        out = judge.complete("c001", "instruction", "the prompt")
        assert out == "Conclusion\nYes"
        req = session.requests[0]
        assert req["url"] == "http://judge.local/v1/chat"
        assert req["json"] == {"model": "mllm-large", "messages": [{"role": "user", "content": "the prompt"}]}
        assert req["headers"]["Authorization"] == "Bearer sekrit"

    def test_no_token_no_header(self, monkeypatch):
        monkeypatch.delenv(curation.JUDGE_TOKEN_ENV, raising=False)
        session = FakeSession({"choices": [{"message": {"content": "x"}}]})
        HttpJudge("http://j", session=session).complete("a", "bbox", "p")
        assert "Authorization" not in session.requests[0]["headers"]

    def test_http_error_is_retriable_transport_error(self):
        session = FakeSession({}, status=500)
        with pytest.raises(JudgeTransportError):
            HttpJudge("http://j", session=session).complete("a", "bbox", "p")

    def test_retries_reissue_the_request(self):
        session = FakeSession({}, status=500)
        with pytest.raises(JudgeTransportError):
            HttpJudge("http://j", retries=2, session=session).complete("a", "bbox", "p")
        assert len(session.requests) == 3

    def test_malformed_body_is_transport_error(self):
        session = FakeSession({"unexpected": True})
        with pytest.raises(JudgeTransportError):
            HttpJudge("http://j", session=session).complete("a", "bbox", "p")


def hit_rollout(sample: Sample) -> Rollout:
    c = sample.gt_bbox.center
    return Rollout(sample.id, "t", c, True, 0.0, 0.0, 0)


def miss_rollout(sample: Sample) -> Rollout:
    return Rollout(sample.id, "t", Point(0.0, 0.0), True, 0.0, 0.0, 0)


class TestDifficultyFilter:
    def test_all_correct_rejected(self):
        sample = make_sample(1)
        assert difficulty_filter(sample, lambda s, rng: hit_rollout(s), k=8) is False

    def test_seven_of_eight_keeps(self):
        sample = make_sample(1)
        calls = iter([miss_rollout(sample)] + [hit_rollout(sample)] * 7)
        assert difficulty_filter(sample, lambda s, rng: next(calls), k=8) is True

    def test_zero_correct_keeps(self):
        assert difficulty_filter(make_sample(1), lambda s, rng: miss_rollout(s), k=8) is True

    def test_rollout_failure_counts_as_incorrect(self):
        def boom(s, rng):
            raise RuntimeError("no policy")

        assert difficulty_filter(make_sample(1), boom, k=8) is True

    def test_k_validation(self):
        with pytest.raises(ValueError):
            difficulty_filter(make_sample(1), lambda s, rng: hit_rollout(s), k=0)


class ScriptedJudge(ExternalJudge):
    """Says no for sample ids in the given rejection sets."""

    def __init__(self, reject_instr=(), reject_bbox=()):
        self.reject_instr = set(reject_instr)
        self.reject_bbox = set(reject_bbox)

    def complete(self, sample_id, kind, prompt):
        rejected = sample_id in (self.reject_instr if kind == "instruction" else self.reject_bbox)
        return "Conclusion\nNo" if rejected else "Conclusion\nYes"


class TestPipeline:
    def test_empty_input(self):
        kept, report = run_pipeline([], ScriptedJudge(), lambda s, rng: hit_rollout(s))
        assert kept == [] and report.input_count == 0 and report.kept == 0

    def test_planted_faults_exact_counts(self):
        samples = [make_sample(i) for i in range(80)]
        samples += [make_sample(80 + i, "<Widget>") for i in range(20)]
        judge = ScriptedJudge(reject_instr={f"c{i:03d}" for i in range(6)}, reject_bbox={f"c{i:03d}" for i in range(6, 10)})
        easy = {f"c{i:03d}" for i in range(10, 22)}  # saturated on these: all 8 hit

        def rollout_fn(s, rng):
            return hit_rollout(s) if s.id in easy else miss_rollout(s)

        kept, report = run_pipeline(samples, judge, rollout_fn, CurationConfig(seed=3))
        assert report.input_count == 100
        assert report.regex_rejected == 20
        assert report.instr_rejected == 6
        assert report.bbox_rejected == 4
        assert report.difficulty_rejected == 12
        assert report.kept == 58
        assert len(kept) == 58
        report.check_partition()

    def test_output_order_matches_input(self):
        samples = [make_sample(i) for i in range(30)]
        kept, _ = run_pipeline(samples, ScriptedJudge(), lambda s, rng: miss_rollout(s))
        assert [s.id for s in kept] == [s.id for s in samples]

    def test_flag_trail_records_stage_outcomes(self):
        samples = [make_sample(0), make_sample(1, "<Widget>")]
        judge = ScriptedJudge(reject_instr={"c000"})
        kept, report = run_pipeline(samples, judge, lambda s, rng: miss_rollout(s))
        assert kept == []
        by_id = {t["id"]: t for t in report.trail}
        assert by_id["c001"]["flags"] == {"regex_pass": False}
        assert by_id["c001"]["rejected_by"] == "regex"
        assert by_id["c000"]["flags"] == {"regex_pass": True, "instr_score_pass": False}
        assert by_id["c000"]["rejected_by"] == "instruction"

    def test_kept_samples_carry_all_flags(self):
        samples = [make_sample(i) for i in range(5)]
        kept, _ = run_pipeline(samples, ScriptedJudge(), lambda s, rng: miss_rollout(s))
        for s in kept:
            assert s.curation_flags == frozenset(
                {"regex_pass", "instr_score_pass", "bbox_score_pass", "difficulty_pass"}
            )

    def test_fixed_seed_idempotence_with_stochastic_rollouts(self):
        import segui.synthgym as synthgym
        import segui.trainer as trainer

        data = synthgym.generate_dataset(31, 60)
        cfg = trainer.TrainConfig(seed=5)
        policy = trainer.initial_policy(cfg, 8)

        def rollout_fn(s, rng):
            return synthgym.sample_rollout(policy, s, rng, p_garble=0.0)

        judge = ScriptedJudge()
        kept1, rep1 = run_pipeline(data, judge, rollout_fn, CurationConfig(seed=9))
        kept2, rep2 = run_pipeline(kept1, judge, rollout_fn, CurationConfig(seed=9))
        # re-running on the kept output rejects nothing new
        assert [s.id for s in kept2] == [s.id for s in kept1]
        assert rep2.difficulty_rejected == 0
        assert rep2.kept == rep1.kept

    def test_transport_failure_flushes_partial_report(self):
        from segui.curation import CurationAbort

        samples = [make_sample(i) for i in range(10)] + [make_sample(10, "<Widget>")]

        class FlakyJudge(ExternalJudge):
            def complete(self, sample_id, kind, prompt):
                if kind == "bbox":
                    raise JudgeTransportError("judge unreachable")
                return "Conclusion\nYes"

        with pytest.raises(CurationAbort) as exc:
            run_pipeline(samples, FlakyJudge(), lambda s, rng: miss_rollout(s))
        partial = exc.value.report
        assert partial.input_count == 11
        assert partial.regex_rejected == 1
        assert partial.kept == 0
        flags = {t["id"]: t["flags"] for t in partial.trail}
        assert flags["c000"] == {"regex_pass": True, "instr_score_pass": True}

    def test_worker_count_does_not_change_results(self):
        samples = [make_sample(i) for i in range(40)]
        judge = ScriptedJudge(reject_instr={"c003"}, reject_bbox={"c007"})
        args = (judge, lambda s, rng: miss_rollout(s))
        kept1, rep1 = run_pipeline(samples, *args, CurationConfig(seed=1, workers=1))
        kept4, rep4 = run_pipeline(samples, *args, CurationConfig(seed=1, workers=4))
        assert [s.id for s in kept1] == [s.id for s in kept4]
        assert rep1.to_dict() == rep4.to_dict()
