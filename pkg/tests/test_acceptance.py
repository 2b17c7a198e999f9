"""Acceptance gate: eleven release criteria, one test and one verdict line each.

Every criterion prints ``[PASS]``/``[FAIL] criterion N: <title>`` (visible
with ``pytest -s`` or in the captured output of a failing run).  Tolerances
are pinned in the assertions: exact equality where a rule is closed-form,
1e-9 for the worked quality examples, 3 sigma for the sampler overlap.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from collections import Counter
from dataclasses import replace

import pytest

import test_streamtools
from assistkit.assignment import solve_bruteforce, solve_lapjvsp
from assistkit.backends import ScriptedBackend
from assistkit.cli import build_parser, main
from assistkit.corpus import (
    AnnotationEvent,
    DialogueSession,
    FrameDecision,
    PredictedUtterance,
    PredictionStream,
    UtteranceTurn,
    VideoDescription,
    save_predictions,
    save_sessions,
)
from assistkit.embedding import HashedBowEmbedder
from assistkit.judge import judge_session, parse_scores
from assistkit.matching import MatchConfig, evaluate_streams
from assistkit.quality import filter_train, score_alignment, split_eval
from assistkit.streamtools import (
    CONTINUE,
    SUMMARIZE_NOW,
    FrameTimeline,
    ips_chunk,
    ips_trigger,
    nfs_mask,
)
from assistkit.synthesis import PipelineConfig, run_pipeline
from assistkit.thresholds import DEFAULT_GRID, apply_threshold, select_theta, sweep_from_dump

from conftest import make_corpus, make_description
from test_assignment import random_instance
from test_judge import PARSE_FIXTURE
from test_synthesis import make_description as synthesis_description
from test_synthesis import video_responses
from test_thresholds import tradeoff_dump, tradeoff_session

PROVIDER = HashedBowEmbedder()


class verdict:
    """Context manager printing one pass/fail line per criterion."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        word = "FAIL" if exc_type else "PASS"
        print(f"[{word}] criterion {self.number:2d}: {self.title}")
        return False


# ---------------------------------------------------------------------------
# shared fixtures


def spaced_corpus(n_videos: int = 50, spacing: float = 10.0):
    """Sessions whose assistant turns are isolated in time and vocabulary."""
    rng = random.Random(2026)
    sessions = []
    for v in range(n_videos):
        vid = f"synthetic/v{v:03d}"
        turns = [UtteranceTurn(at=0.0, speaker="user", text=f"goal{v}")]
        for j in range(rng.randint(4, 12)):
            turns.append(
                UtteranceTurn(
                    at=spacing * (j + 1),
                    speaker="assistant",
                    text=f"alpha{v}x{j} beta{v}x{j} gamma{v}x{j}",
                )
            )
        sessions.append(
            DialogueSession(
                session_id=f"{vid}:s00",
                video_id=vid,
                user_type="talk_some",
                goal=f"goal{v}",
                turns=tuple(turns),
            )
        )
    return sessions


def identity_streams(sessions):
    return [
        PredictionStream(
            video_id=s.video_id,
            utterances=tuple(
                PredictedUtterance(at=t.at, text=t.text) for t in s.assistant_turns()
            ),
        )
        for s in sessions
    ]


# ---------------------------------------------------------------------------
# criteria


def test_criterion_01_assignment_oracle_equivalence():
    with verdict(1, "assignment solver equals brute-force oracle on 1,000 instances"):
        rng = random.Random(1001)
        start = time.perf_counter()
        for _ in range(1000):
            matrix = random_instance(rng)  # n_rows <= 7, costs on the /16 grid
            fast = solve_lapjvsp(matrix)
            slow = solve_bruteforce(matrix)
            # /16 grid sums are exact binary fractions: equality is exact
            assert fast.total_cost == slow.total_cost
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0, f"oracle suite took {elapsed:.2f}s (budget 5s)"


def test_criterion_02_metric_identity():
    with verdict(2, "self-match on the 50-session fixture is exactly P=R=F1=1.0"):
        sessions = spaced_corpus(50)
        report = evaluate_streams(
            identity_streams(sessions), sessions, MatchConfig(), PROVIDER
        )
        assert len(sessions) == 50
        for vid in report.videos():
            result = report.per_video[vid]
            assert result.precision == 1.0
            assert result.recall == 1.0
            assert result.f1 == 1.0
        overall = report.overall()
        assert (overall.precision, overall.recall, overall.f1) == (1.0, 1.0, 1.0)


def test_criterion_03_window_soundness():
    with verdict(3, "out-of-window predictions never match; pair bounds hold"):
        cfg = MatchConfig()
        sessions = spaced_corpus(50)
        shift = cfg.window_early + cfg.window_late + 1.0
        shifted = [
            PredictionStream(
                video_id=s.video_id,
                utterances=tuple(
                    PredictedUtterance(at=t.at + shift, text=t.text)
                    for t in s.assistant_turns()
                ),
            )
            for s in sessions
        ]
        report = evaluate_streams(shifted, sessions, cfg, PROVIDER)
        assert report.overall().f1 == 0.0
        for vid in report.videos():
            assert report.per_video[vid].f1 == 0.0
            assert not report.per_video[vid].pairs

        # 10,000 randomized matched pairs: every emitted pair respects the
        # feasibility window and the similarity threshold.
        rng = random.Random(777)
        jit_sessions, jit_streams = [], []
        for v in range(50):
            vid = f"synthetic/p{v:03d}"
            turns = [UtteranceTurn(at=0.0, speaker="user", text=f"goal{v}")]
            preds = []
            for j in range(200):
                at = 5.0 * (j + 1)
                text = f"alpha{v}x{j} beta{v}x{j} gamma{v}x{j}"
                turns.append(UtteranceTurn(at=at, speaker="assistant", text=text))
                preds.append(
                    PredictedUtterance(at=at + rng.uniform(-2.4, 2.4), text=text)
                )
            preds.sort(key=lambda u: u.at)
            jit_sessions.append(
                DialogueSession(
                    session_id=f"{vid}:s00",
                    video_id=vid,
                    user_type="talk_some",
                    goal=f"goal{v}",
                    turns=tuple(turns),
                )
            )
            jit_streams.append(
                PredictionStream(video_id=vid, utterances=tuple(preds))
            )
        report = evaluate_streams(jit_streams, jit_sessions, cfg, PROVIDER)
        n_pairs = 0
        for vid in report.videos():
            for pair in report.per_video[vid].pairs:
                n_pairs += 1
                assert -cfg.window_early <= pair.time_delta <= cfg.window_late
                assert pair.similarity >= cfg.sim_threshold
        assert n_pairs == 10_000


def test_criterion_04_default_constants(tmp_path, capsys):
    with verdict(4, "default constants shipped, in --help, and in report metadata"):
        cfg = MatchConfig()
        assert cfg.p_exponent == 1.5
        assert cfg.sim_threshold == 0.5
        assert cfg.window_early == 2.5
        assert cfg.window_late == 2.5

        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["eval-match", "--help"])
        assert exc.value.code == 0
        help_text = capsys.readouterr().out
        assert "(default: 1.5)" in help_text
        assert "(default: 0.5)" in help_text
        assert "(default: 2.5)" in help_text

        sessions = spaced_corpus(2)
        save_sessions(sessions, tmp_path / "sessions.jsonl")
        save_predictions(identity_streams(sessions), tmp_path / "predictions.jsonl")
        code = main(
            [
                "eval-match",
                "--predictions",
                str(tmp_path / "predictions.jsonl"),
                "--sessions",
                str(tmp_path / "sessions.jsonl"),
                "--out",
                str(tmp_path),
            ]
        )
        capsys.readouterr()
        assert code == 0
        metadata = json.loads((tmp_path / "match.json").read_text())["config"]
        assert metadata["p_exponent"] == 1.5
        assert metadata["sim_threshold"] == 0.5
        assert metadata["window_early"] == 2.5
        assert metadata["window_late"] == 2.5


def _quality_fixture(times, turn_specs, video_id="synthetic/q000"):
    description = VideoDescription(
        video_id=video_id,
        source_subset="synthetic",
        duration=max(times) + 10.0,
        events=tuple(
            AnnotationEvent(when=t, text=f"event {i}", kind="fine_action")
            for i, t in enumerate(times)
        ),
    )
    turns = tuple(
        UtteranceTurn(at=at, speaker=speaker, text="the goal" if i == 0 else f"turn {i}")
        for i, (at, speaker) in enumerate(turn_specs)
    )
    session = DialogueSession(
        session_id=f"{video_id}:s00",
        video_id=video_id,
        user_type="talk_some",
        goal="the goal",
        turns=turns,
    )
    return description, session


def test_criterion_05_quality_formula():
    with verdict(5, "quality worked examples to 1e-9; filter/split equal rule replay"):
        # aligned corpus: p = r = nr = 0 -> score exactly 10.0
        description, session = _quality_fixture(
            (0.0, 10.0, 20.0),
            ((0.0, "user"), (10.0, "assistant"), (20.0, "assistant")),
        )
        score = score_alignment(description, session)
        assert score.p == 0.0 and score.r == 0.0 and score.nr == 0
        assert score.score == 10.0

        # one trailing unanswered user turn -> nr = 1, score = 9.0
        description, session = _quality_fixture(
            (0.0, 10.0, 20.0),
            ((0.0, "user"), (10.0, "assistant"), (20.0, "user")),
        )
        score = score_alignment(description, session)
        assert score.nr == 1
        assert abs(score.score - 9.0) < 1e-9

        # T_v = {0,10,20}, T_d = {1,9,25}: p = r = 7/3 -> score = 10 - 14/3
        description, session = _quality_fixture(
            (0.0, 10.0, 20.0),
            ((1.0, "user"), (9.0, "assistant"), (25.0, "assistant")),
        )
        score = score_alignment(description, session)
        assert abs(score.p - 7.0 / 3.0) < 1e-9
        assert abs(score.r - 7.0 / 3.0) < 1e-9
        assert score.nr == 0
        assert abs(score.score - (10.0 - 14.0 / 3.0)) < 1e-9

        # 100-session seeded fixture vs independent rule replay
        rng = random.Random(100)
        sessions = make_corpus(rng, 20, 5)
        assert len(sessions) == 100
        descriptions = {
            vid: make_description(rng, vid)
            for vid in sorted({s.video_id for s in sessions})
        }
        scored = [
            replace(s, quality=score_alignment(descriptions[s.video_id], s))
            for s in sessions
        ]

        kept, dropped = filter_train(scored)
        expected_kept = [s.session_id for s in scored if s.quality.score >= 3.0]
        assert [s.session_id for s in kept] == expected_kept
        assert {d.session_id for d in dropped} == {
            s.session_id for s in scored if s.quality.score < 3.0
        }

        val, test, removed = split_eval(scored)
        survivors: dict[str, list[DialogueSession]] = {}
        for s in scored:
            survivors.setdefault(s.video_id, []).append(s)
        best_per_video = {}
        for vid, group in survivors.items():
            best = [
                sorted(
                    (s for s in group if s.user_type == user_type),
                    key=lambda s: (-s.quality.score, s.session_id),
                )[0]
                for user_type in ("no_talk", "talk_some", "talk_more")
            ]
            if min(b.quality.score for b in best) >= 5.0:
                best_per_video[vid] = best
        order = sorted(
            best_per_video,
            key=lambda vid: (hashlib.md5(vid.encode()).hexdigest(), vid),
        )
        expected_val = {
            s.session_id for vid in order[0::2] for s in best_per_video[vid]
        }
        expected_test = {
            s.session_id for vid in order[1::2] for s in best_per_video[vid]
        }
        assert {s.session_id for s in val} == expected_val
        assert {s.session_id for s in test} == expected_test
        assert {r.session_id for r in removed} == {
            s.session_id for s in scored
        } - expected_val - expected_test


def test_criterion_06_negative_frame_sampling():
    with verdict(6, "negative sampling: exact counts, positives kept, 3-sigma overlap"):
        n_neg, n_pos, rho = 10_000, 100, 0.1
        flags = [False] * (n_neg + n_pos)
        for i in range(n_pos):
            flags[i * 101] = True
        timeline = FrameTimeline.from_flags("long", flags)
        positives = set(timeline.positive_indices())
        assert len(positives) == n_pos

        start = time.perf_counter()
        mask0 = nfs_mask(timeline, rho, seed=0, epoch=0)
        mask1 = nfs_mask(timeline, rho, seed=0, epoch=1)
        elapsed = time.perf_counter() - start
        assert elapsed < 1.0, f"sampling took {elapsed:.2f}s (budget 1s)"

        kept0 = set(mask0.kept_indices)
        kept1 = set(mask1.kept_indices)
        assert positives <= kept0 and positives <= kept1
        neg0 = kept0 - positives
        neg1 = kept1 - positives
        assert len(neg0) == 1000
        assert len(neg1) == 1000

        # two independent uniform k-subsets of an n-set: overlap has mean
        # k^2/n and variance k^2 (n-k)^2 / (n^2 (n-1))
        k = 1000
        mean = k * k / n_neg
        sigma = (k * k * (n_neg - k) ** 2 / (n_neg**2 * (n_neg - 1))) ** 0.5
        overlap = len(neg0 & neg1)
        assert abs(overlap - mean) <= 3.0 * sigma, (
            f"overlap {overlap} outside {mean} +/- {3 * sigma:.1f}"
        )


def test_criterion_07_progress_summary_budgeting():
    with verdict(7, "chunking obeys the budget, tiles frames, equals prefix-sum oracle"):
        helper = test_streamtools.TestIpsChunk()
        timeline, turns, budget = helper.build_thirty_minute_fixture()
        assert len(timeline.frames) == 3600  # 30 min at 2 FPS
        assert budget.tokens_per_frame == 10
        assert budget.context_limit == 4096
        capacity = budget.context_limit - budget.summary_reserve
        assert budget.chunk_capacity == capacity == 3840

        chunks = ips_chunk(timeline, turns, budget)
        for chunk in chunks:
            assert chunk.token_total <= capacity
        # frames partitioned exactly once
        assert chunks[0].frame_range[0] == 0
        assert chunks[-1].frame_range[1] == 3600
        for a, b in zip(chunks, chunks[1:]):
            assert a.frame_range[1] == b.frame_range[0]
        # boundaries equal the independent prefix-sum oracle
        sizes = helper.group_sizes(timeline, turns, budget)
        assert [c.frame_range for c in chunks] == helper.oracle_ranges(sizes, capacity)

        # trigger fires at the exact first crossing over 10,000 random states
        rng = random.Random(4096)
        for _ in range(10_000):
            live = rng.randint(0, budget.context_limit)
            increment = rng.randint(0, 600)
            expected = SUMMARIZE_NOW if live + increment > capacity else CONTINUE
            assert ips_trigger(live, increment, budget) == expected


def test_criterion_08_threshold_machinery():
    with verdict(8, "threshold monotonicity, documented sweep pick, trade-off shape"):
        rng = random.Random(271)
        for _ in range(1000):
            frames = tuple(
                FrameDecision(
                    at=(i + 1) * 0.5,
                    p_eos=round(rng.random(), 3),
                    text_if_spoken=f"utterance {i}",
                )
                for i in range(rng.randint(1, 25))
            )
            lo, hi = sorted((round(rng.random(), 3), round(rng.random(), 3)))
            spoken_lo = {u.at for u in apply_threshold(frames, lo, "v").utterances}
            spoken_hi = {u.at for u in apply_threshold(frames, hi, "v").utterances}
            assert spoken_lo <= spoken_hi

        # documented selection example: F1 grid [0.2, 0.5, 0.4, 0.45] -> 2nd theta
        assert select_theta([0.1, 0.2, 0.3, 0.4], [0.2, 0.5, 0.4, 0.45]) == 0.2

        report = sweep_from_dump(
            [tradeoff_dump()], DEFAULT_GRID, [tradeoff_session()], MatchConfig(), PROVIDER
        )
        precisions = [run.metrics.precision for run in report.runs]
        recalls = [run.metrics.recall for run in report.runs]
        assert all(a >= b for a, b in zip(precisions, precisions[1:]))
        assert all(a <= b for a, b in zip(recalls, recalls[1:]))
        assert precisions[0] > precisions[-1]  # precision falls as theta rises
        assert recalls[0] < recalls[-1]  # recall rises as theta rises


def test_criterion_09_judge_protocol():
    with verdict(9, "judge mean 3.00 over runs {2,3,4}; retries isolated; parser 20/20"):
        session = DialogueSession(
            session_id="synthetic/v000:s00",
            video_id="synthetic/v000",
            user_type="talk_some",
            goal="the goal",
            turns=(
                UtteranceTurn(at=0.0, speaker="user", text="the goal"),
                UtteranceTurn(at=5.0, speaker="assistant", text="pour the water"),
            ),
        )
        stream = PredictionStream(
            video_id="synthetic/v000",
            utterances=(PredictedUtterance(at=5.0, text="pour the water"),),
        )
        responses = [
            f"correctness: 4\npromptness: 3\nefficiency: 5\noverall: {o}"
            for o in (2, 3, 4)
        ]
        quiet = {"rng": random.Random(0), "sleep": lambda d: None}
        scores = judge_session(stream, session, ScriptedBackend(responses), **quiet)
        assert scores.overall == pytest.approx(3.0)
        assert scores.n_runs == 3
        assert len(scores.per_run) == 3
        assert scores.retries == 0

        flaky = ScriptedBackend(responses, fail_at=(1,))
        retried = judge_session(stream, session, flaky, **quiet)
        assert retried.retries == 1
        assert retried.per_run == scores.per_run
        assert (retried.correctness, retried.promptness, retried.efficiency) == (
            scores.correctness,
            scores.promptness,
            scores.efficiency,
        )
        assert retried.overall == scores.overall

        agreements = 0
        for text, expected in PARSE_FIXTURE:
            if isinstance(expected, tuple):
                assert parse_scores(text) == expected
            else:
                with pytest.raises(expected):
                    parse_scores(text)
            agreements += 1
        assert agreements == len(PARSE_FIXTURE) == 20


def test_criterion_10_pipeline_call_accounting():
    with verdict(10, "pipeline issues 10+1+10+chunksx10+10 calls and a 2:4:4 plan"):
        description = synthesis_description()  # 240 s video -> a single chunk
        backend = ScriptedBackend(video_responses())
        result = run_pipeline([(description, None)], backend, PipelineConfig(seed=0))

        n_chunks = 1
        assert backend.calls == 10 + 1 + 10 + n_chunks * 10 + 10 == 41
        temperatures = [temp for _, temp in backend.requests]
        assert temperatures == (
            [0.7] * 10 + [0.0] + [0.7] * 10 + [0.7, 0.0] * 10
        )

        assert [s.user_type for s in result.train] == (
            ["no_talk"] * 2 + ["talk_some"] * 4 + ["talk_more"] * 4
        )

        # audit reasons equal an independent replay of each rule
        audit = result.audit
        assert audit[0]["stage"] == "recipe"
        assert audit[0]["reason"] == "3 steps"  # parsed recipe has 3 steps
        majority = Counter(["1"] * 10)  # the scripted transcript votes "1" x10
        assert audit[1]["reason"] == (
            f"category 1 majority ({majority['1']}/{10})"
        )
        scored = [r for r in audit if r["stage"] == "quality"]
        by_id = {s.session_id: s for s in result.train}
        for record in scored:
            expected = score_alignment(description, by_id[record["session_id"]])
            assert record["score"] == expected.score
            assert record["reason"] == f"score {expected.score:g}"
        kept = [r for r in audit if r["stage"] == "filter"]
        assert [(r["decision"], r["session_id"]) for r in kept] == [
            ("kept", s.session_id) for s in result.train
        ]


def test_criterion_11_end_to_end_determinism(tmp_path, capsys):
    with verdict(11, "eval-match + report byte-identical across runs and 1 vs 8 jobs"):
        rng = random.Random(11)
        sessions = make_corpus(rng, 6, min_assistant=2)
        save_sessions(sessions, tmp_path / "sessions.jsonl")
        save_predictions(identity_streams(sessions), tmp_path / "predictions.jsonl")

        outputs = {}
        for name, jobs in (("a", 1), ("b", 1), ("c", 8)):
            out = tmp_path / name
            code = main(
                [
                    "eval-match",
                    "--predictions",
                    str(tmp_path / "predictions.jsonl"),
                    "--sessions",
                    str(tmp_path / "sessions.jsonl"),
                    "--jobs",
                    str(jobs),
                    "--out",
                    str(out),
                ]
            )
            assert code == 0
            code = main(
                ["report", "--match", str(out / "match.json"), "--out", str(out)]
            )
            assert code == 0
            outputs[name] = (
                (out / "match.json").read_bytes(),
                (out / "report.json").read_bytes(),
            )
        capsys.readouterr()
        assert outputs["a"] == outputs["b"]  # two identical runs
        assert outputs["a"] == outputs["c"]  # 1 worker vs 8 workers
