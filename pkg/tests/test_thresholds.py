"""Tests for speaking-threshold application and F1 sweep selection.

The trade-off fixture plants correct predictions at low p_eos and
off-window garbage at high p_eos, so raising theta first recovers recall
and then erodes precision; every aggregate is recomputed by hand and the
selection is checked against an independent local-maximum scan.
"""

from __future__ import annotations

import random

import pytest

from assistkit.corpus import (
    DialogueSession,
    FrameDecision,
    PredictionStream,
    UtteranceTurn,
)
from assistkit.embedding import HashedBowEmbedder
from assistkit.matching import MatchConfig
from assistkit.thresholds import (
    DEFAULT_GRID,
    SELECTION_RULE,
    InconsistentCorpus,
    MissingText,
    SweepReport,
    ThresholdRun,
    apply_threshold,
    rethreshold_stream,
    select_theta,
    sweep_from_dump,
    sweep_thresholds,
)

from conftest import make_corpus


@pytest.fixture(scope="module")
def provider():
    return HashedBowEmbedder()


def frame(at: float, p_eos: float, text: str | None = "speak up") -> FrameDecision:
    return FrameDecision(at=at, p_eos=p_eos, text_if_spoken=text)


SPEC_FRAMES = (frame(0.5, 0.1), frame(1.0, 0.9), frame(1.5, 0.3))


class TestApplyThreshold:
    def test_speak_iff_p_eos_at_most_theta(self):
        stream = apply_threshold(SPEC_FRAMES, theta=0.3, video_id="v")
        assert [u.at for u in stream.utterances] == [0.5, 1.5]
        assert stream.video_id == "v"

    def test_theta_one_speaks_everywhere(self):
        stream = apply_threshold(SPEC_FRAMES, theta=1.0, video_id="v")
        assert len(stream.utterances) == 3

    def test_theta_zero_speaks_only_at_zero_probability(self):
        frames = (frame(0.5, 0.0), frame(1.0, 0.01))
        stream = apply_threshold(frames, theta=0.0, video_id="v")
        assert [u.at for u in stream.utterances] == [0.5]

    def test_boundary_probability_speaks(self):
        stream = apply_threshold((frame(1.0, 0.3),), theta=0.3, video_id="v")
        assert len(stream.utterances) == 1

    def test_frame_records_preserved(self):
        stream = apply_threshold(SPEC_FRAMES, theta=0.3, video_id="v")
        assert stream.frame_records == SPEC_FRAMES

    def test_speaking_frame_without_text_raises(self):
        frames = (frame(0.5, 0.1, text=None),)
        with pytest.raises(MissingText, match="0.5"):
            apply_threshold(frames, theta=0.5, video_id="v")

    def test_silent_frame_without_text_is_fine(self):
        frames = (frame(0.5, 0.9, text=None), frame(1.0, 0.1))
        stream = apply_threshold(frames, theta=0.5, video_id="v")
        assert [u.at for u in stream.utterances] == [1.0]

    def test_lenient_mode_skips_textless_speakers(self):
        frames = (frame(0.5, 0.1, text=None), frame(1.0, 0.1))
        stream = apply_threshold(frames, theta=0.5, video_id="v", require_text=False)
        assert [u.at for u in stream.utterances] == [1.0]

    def test_theta_must_lie_in_unit_interval(self):
        for theta in (-0.1, 1.1):
            with pytest.raises(ValueError):
                apply_threshold(SPEC_FRAMES, theta=theta, video_id="v")

    def test_frames_must_be_strictly_increasing(self):
        frames = (frame(1.0, 0.1), frame(1.0, 0.2))
        with pytest.raises(ValueError, match="increasing"):
            apply_threshold(frames, theta=0.5, video_id="v")

    def test_monotone_and_exact_over_random_dumps(self):
        rng = random.Random(314)
        for _ in range(1000):
            frames = tuple(
                frame((i + 1) * 0.5, round(rng.random(), 3), f"utterance {i}")
                for i in range(rng.randint(1, 30))
            )
            lo, hi = sorted((round(rng.random(), 3), round(rng.random(), 3)))
            spoken_lo = apply_threshold(frames, lo, "v").utterances
            spoken_hi = apply_threshold(frames, hi, "v").utterances
            assert set(u.at for u in spoken_lo) <= set(u.at for u in spoken_hi)
            # exact rule replay
            assert [u.at for u in spoken_hi] == [
                f.at for f in frames if f.p_eos <= hi
            ]


class TestRethresholdStream:
    def test_rethresholds_from_carried_frames(self):
        stream = apply_threshold(SPEC_FRAMES, theta=0.1, video_id="v")
        wider = rethreshold_stream(stream, theta=0.3)
        assert [u.at for u in wider.utterances] == [0.5, 1.5]
        assert wider.frame_records == SPEC_FRAMES

    def test_stream_without_frames_cannot_be_rethresholded(self):
        bare = PredictionStream(video_id="v", utterances=())
        with pytest.raises(MissingText, match="no frame records"):
            rethreshold_stream(bare, theta=0.5)


class TestSelectTheta:
    def test_documented_grid_picks_the_second_theta(self):
        thetas = [0.1, 0.2, 0.3, 0.4]
        assert select_theta(thetas, [0.2, 0.5, 0.4, 0.45]) == 0.2

    def test_monotone_increasing_selects_last(self):
        assert select_theta([0.1, 0.2, 0.3], [0.1, 0.2, 0.3]) == 0.3

    def test_monotone_decreasing_selects_first(self):
        assert select_theta([0.1, 0.2, 0.3], [0.9, 0.5, 0.1]) == 0.1

    def test_interior_peak(self):
        assert select_theta([0.1, 0.2, 0.3], [0.1, 0.9, 0.1]) == 0.2

    def test_plateau_tie_goes_to_smaller_theta(self):
        assert select_theta([0.1, 0.2, 0.3, 0.4], [0.1, 0.5, 0.5, 0.2]) == 0.2
        assert select_theta([0.1, 0.2], [0.5, 0.5]) == 0.1

    def test_all_flat_selects_first(self):
        assert select_theta([0.2, 0.4, 0.6], [0.3, 0.3, 0.3]) == 0.2

    def test_equal_maxima_tie_on_f1_then_theta(self):
        # two separated local maxima with identical F1
        assert select_theta([0.1, 0.2, 0.3, 0.4, 0.5], [0.1, 0.8, 0.2, 0.8, 0.1]) == 0.2

    def test_validation(self):
        with pytest.raises(ValueError):
            select_theta([0.1, 0.2], [0.5])
        with pytest.raises(ValueError):
            select_theta([0.1], [0.5])

    def test_default_grid(self):
        assert DEFAULT_GRID == (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


REF_TIMES_TEXTS = (
    (10.0, "add the salt"),
    (20.0, "whisk the eggs"),
    (30.0, "pour the batter"),
    (40.0, "flip the pancake"),
    (50.0, "season the sauce"),
)

CORRECT_P = (0.08, 0.18, 0.28, 0.38, 0.48)
GARBAGE = ((70.0, 0.55), (75.0, 0.65), (80.0, 0.75), (85.0, 0.85))


def tradeoff_session(video_id="synthetic/v000") -> DialogueSession:
    turns = [UtteranceTurn(at=0.0, speaker="user", text="the goal")]
    turns += [
        UtteranceTurn(at=t, speaker="assistant", text=text)
        for t, text in REF_TIMES_TEXTS
    ]
    return DialogueSession(
        session_id=f"{video_id}:s00",
        video_id=video_id,
        user_type="talk_some",
        goal="the goal",
        turns=tuple(turns),
    )


def tradeoff_dump(video_id="synthetic/v000") -> PredictionStream:
    frames = [
        frame(t, p, text) for (t, text), p in zip(REF_TIMES_TEXTS, CORRECT_P)
    ]
    frames += [frame(t, p, "zz qq vv nonsense") for t, p in GARBAGE]
    return PredictionStream(
        video_id=video_id, utterances=(), frame_records=tuple(frames)
    )


def expected_tradeoff_metrics(theta: float) -> tuple[float, float, float]:
    correct = sum(1 for p in CORRECT_P if p <= theta)
    garbage = sum(1 for _, p in GARBAGE if p <= theta)
    n_pred = correct + garbage
    precision = correct / n_pred if n_pred else 0.0
    recall = correct / len(REF_TIMES_TEXTS)
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return precision, recall, f1


def scan_local_maxima(thetas, f1s) -> float:
    """Independent selection oracle: collect local maxima by definition,
    then pick the best (F1 desc, theta asc)."""
    maxima = []
    for i, f1 in enumerate(f1s):
        left_ok = i == 0 or f1 >= f1s[i - 1]
        right_ok = i == len(f1s) - 1 or f1 >= f1s[i + 1]
        if left_ok and right_ok:
            maxima.append(i)
    best = sorted(maxima, key=lambda i: (-f1s[i], thetas[i]))[0]
    return thetas[best]


class TestSweepFromDump:
    def test_tradeoff_dump_reproduces_hand_metrics(self, provider):
        report = sweep_from_dump(
            [tradeoff_dump()], DEFAULT_GRID, [tradeoff_session()], MatchConfig(), provider
        )
        assert report.mode == "approximate"
        assert report.selection_rule == SELECTION_RULE
        assert [run.theta for run in report.runs] == list(DEFAULT_GRID)
        for run in report.runs:
            precision, recall, f1 = expected_tradeoff_metrics(run.theta)
            assert run.metrics.precision == pytest.approx(precision)
            assert run.metrics.recall == pytest.approx(recall)
            assert run.metrics.f1 == pytest.approx(f1)

    def test_tradeoff_directions_and_selection(self, provider):
        report = sweep_from_dump(
            [tradeoff_dump()], DEFAULT_GRID, [tradeoff_session()], MatchConfig(), provider
        )
        precisions = [run.metrics.precision for run in report.runs]
        recalls = [run.metrics.recall for run in report.runs]
        assert all(a >= b for a, b in zip(precisions, precisions[1:]))
        assert all(a <= b for a, b in zip(recalls, recalls[1:]))
        assert precisions[0] > precisions[-1]
        assert recalls[0] < recalls[-1]

        assert report.selected_theta == 0.5
        assert report.selected_theta == scan_local_maxima(
            [r.theta for r in report.runs], report.f1_grid()
        )

    def test_f1_grid_accessor(self, provider):
        report = sweep_from_dump(
            [tradeoff_dump()], (0.1, 0.5), [tradeoff_session()], MatchConfig(), provider
        )
        assert report.f1_grid() == pytest.approx(
            (expected_tradeoff_metrics(0.1)[2], expected_tradeoff_metrics(0.5)[2])
        )

    def test_dump_without_frames_raises(self, provider):
        bare = PredictionStream(video_id="synthetic/v000", utterances=())
        with pytest.raises(MissingText):
            sweep_from_dump(
                [bare], (0.1, 0.5), [tradeoff_session()], MatchConfig(), provider
            )

    def test_recall_never_decreases_on_seeded_fixtures(self, provider):
        # Prediction dumps built from the sessions' own turn texts plus
        # off-window garbage: raising theta only adds predictions, and added
        # predictions never displace an existing match.
        for seed in range(5):
            rng = random.Random(seed)
            sessions = make_corpus(rng, 3, 1, min_assistant=2)
            dump = []
            for session in sessions:
                frames = [
                    frame(turn.at, round(rng.random(), 3), turn.text)
                    for turn in session.assistant_turns()
                ]
                tail = max(t.at for t in session.turns) + 10.0
                frames += [
                    frame(tail + 5.0 * k, round(rng.random(), 3), "zz qq vv")
                    for k in range(rng.randint(0, 3))
                ]
                dump.append(
                    PredictionStream(
                        video_id=session.video_id,
                        utterances=(),
                        frame_records=tuple(frames),
                    )
                )
            report = sweep_from_dump(
                dump, DEFAULT_GRID, sessions, MatchConfig(), provider
            )
            recalls = [run.metrics.recall for run in report.runs]
            assert all(a <= b for a, b in zip(recalls, recalls[1:])), (
                f"seed {seed}: recall grid {recalls} decreases"
            )


class TestSweepThresholds:
    def test_exact_mode_orders_runs_and_selects(self, provider):
        dump = tradeoff_dump()
        runs_by_theta = {
            0.5: [rethreshold_stream(dump, 0.5)],
            0.1: [rethreshold_stream(dump, 0.1)],
        }
        report = sweep_thresholds(
            runs_by_theta, [tradeoff_session()], MatchConfig(), provider
        )
        assert report.mode == "exact"
        assert [run.theta for run in report.runs] == [0.1, 0.5]
        assert report.selected_theta == 0.5  # F1 1.0 beats 1/3

    def test_single_theta_rejected(self, provider):
        dump = tradeoff_dump()
        with pytest.raises(ValueError, match="2 thetas"):
            sweep_thresholds(
                {0.5: [rethreshold_stream(dump, 0.5)]},
                [tradeoff_session()],
                MatchConfig(),
                provider,
            )

    def test_mismatched_video_sets_rejected(self, provider):
        dump_a = tradeoff_dump("synthetic/v000")
        dump_b = tradeoff_dump("synthetic/v001")
        runs_by_theta = {
            0.1: [rethreshold_stream(dump_a, 0.1)],
            0.5: [rethreshold_stream(dump_b, 0.5)],
        }
        with pytest.raises(InconsistentCorpus, match="different video sets"):
            sweep_thresholds(
                runs_by_theta, [tradeoff_session()], MatchConfig(), provider
            )


class TestReportTypes:
    def test_threshold_run_validates_theta(self, provider):
        report = sweep_from_dump(
            [tradeoff_dump()], (0.1, 0.5), [tradeoff_session()], MatchConfig(), provider
        )
        run = report.runs[0]
        with pytest.raises(ValueError):
            ThresholdRun(theta=1.5, predictions=run.predictions, report=run.report)
        assert run.metrics is run.report.overall() or run.metrics == run.report.overall()

    def test_sweep_report_validates_order_and_membership(self, provider):
        report = sweep_from_dump(
            [tradeoff_dump()], (0.1, 0.5), [tradeoff_session()], MatchConfig(), provider
        )
        with pytest.raises(ValueError, match="ascending"):
            SweepReport(
                runs=tuple(reversed(report.runs)),
                selected_theta=0.5,
                selection_rule=SELECTION_RULE,
                mode="exact",
            )
        with pytest.raises(ValueError, match="selected_theta"):
            SweepReport(
                runs=report.runs,
                selected_theta=0.7,
                selection_rule=SELECTION_RULE,
                mode="exact",
            )
