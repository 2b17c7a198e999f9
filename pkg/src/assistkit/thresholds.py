"""Speaking-threshold application and F1-based sweep selection.

A streaming model emits a per-frame probability of staying silent; a
threshold theta turns those probabilities into utterances (speak at a frame
iff p_eos <= theta).  Sweeping theta over a grid trades precision against
recall; the selected operating point is the local maximum of F1 with the
highest F1 value (ties go to the smaller theta).

Two sweep modes:

* "exact"       -- every theta has its own prediction set (separate
                   inference runs);
* "approximate" -- one frame-decision dump is re-thresholded per theta,
                   which skips re-running the model but cannot change what
                   the model would have said at other operating points.

The mode is recorded in the report.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import DialogueSession, FrameDecision, PredictedUtterance, PredictionStream
from .embedding import EmbeddingProvider
from .errors import ToolkitError
from .matching import AggregateMetrics, CorpusMatchReport, MatchConfig, evaluate_streams

DEFAULT_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
SELECTION_RULE = "highest-F1 local maximum; ties -> smaller theta"


class MissingText(ToolkitError):
    """A speaking frame carried no utterance text."""


class InconsistentCorpus(ToolkitError):
    """Threshold runs cover different video sets."""


def apply_threshold(
    frames: Sequence[FrameDecision],
    theta: float,
    video_id: str,
    require_text: bool = True,
) -> PredictionStream:
    """Convert frame decisions to utterances: speak iff p_eos <= theta.

    A speaking frame without text raises MissingText unless require_text is
    False, in which case it stays silent.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    for a, b in zip(frames, frames[1:]):
        if b.at <= a.at:
            raise ValueError("frames must be sorted by strictly increasing time")
    utterances = []
    for frame in frames:
        if frame.p_eos > theta:
            continue
        if frame.text_if_spoken is None:
            if require_text:
                raise MissingText(
                    f"frame at {frame.at:g}s speaks at theta={theta:g} "
                    "but has no text"
                )
            continue
        utterances.append(PredictedUtterance(at=frame.at, text=frame.text_if_spoken))
    return PredictionStream(
        video_id=video_id, utterances=tuple(utterances), frame_records=tuple(frames)
    )


def rethreshold_stream(
    stream: PredictionStream, theta: float, require_text: bool = True
) -> PredictionStream:
    """apply_threshold over a stream that carries its frame records."""
    if stream.frame_records is None:
        raise MissingText(
            f"{stream.video_id}: no frame records to re-threshold"
        )
    return apply_threshold(
        stream.frame_records, theta, stream.video_id, require_text=require_text
    )


@dataclass(frozen=True)
class ThresholdRun:
    """One operating point: theta, its predictions, and their metrics."""

    theta: float
    predictions: tuple[PredictionStream, ...]
    report: CorpusMatchReport

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")

    @property
    def metrics(self) -> AggregateMetrics:
        return self.report.overall()


@dataclass(frozen=True)
class SweepReport:
    runs: tuple[ThresholdRun, ...]
    selected_theta: float
    selection_rule: str
    mode: str  # "exact" or "approximate"

    def __post_init__(self):
        thetas = [run.theta for run in self.runs]
        if thetas != sorted(thetas):
            raise ValueError("runs must be ordered by ascending theta")
        if self.selected_theta not in thetas:
            raise ValueError("selected_theta must be one of the swept thetas")

    def f1_grid(self) -> tuple[float, ...]:
        return tuple(run.metrics.f1 for run in self.runs)


def select_theta(thetas: Sequence[float], f1s: Sequence[float]) -> float:
    """Pick the highest-F1 local maximum; ties go to the smaller theta.

    A point is a local maximum when its F1 is >= both neighbors; boundary
    points compare against their single neighbor.
    """
    if len(thetas) != len(f1s):
        raise ValueError("thetas and f1s must have equal length")
    if len(thetas) < 2:
        raise ValueError("a sweep needs at least 2 thetas")
    last = len(f1s) - 1
    candidates = [
        i
        for i in range(len(f1s))
        if (i == 0 or f1s[i] >= f1s[i - 1]) and (i == last or f1s[i] >= f1s[i + 1])
    ]
    best = max(candidates, key=lambda i: (f1s[i], -thetas[i]))
    return thetas[best]


def _check_consistent(runs_by_theta: "dict[float, list[PredictionStream]]") -> None:
    video_sets = {
        theta: frozenset(p.video_id for p in streams)
        for theta, streams in runs_by_theta.items()
    }
    distinct = set(video_sets.values())
    if len(distinct) > 1:
        detail = "; ".join(
            f"theta={theta:g}: {sorted(vids)}" for theta, vids in sorted(video_sets.items())
        )
        raise InconsistentCorpus(f"theta runs cover different video sets: {detail}")


def _build_report(
    runs_by_theta: "dict[float, list[PredictionStream]]",
    sessions: "list[DialogueSession]",
    cfg: MatchConfig,
    provider: EmbeddingProvider,
    mode: str,
    jobs: int = 1,
    subset_map: "dict[str, str] | None" = None,
) -> SweepReport:
    if len(runs_by_theta) < 2:
        raise ValueError("a sweep needs at least 2 thetas")
    _check_consistent(runs_by_theta)
    runs = []
    for theta in sorted(runs_by_theta):
        streams = runs_by_theta[theta]
        report = evaluate_streams(
            streams, sessions, cfg, provider, jobs=jobs, subset_map=subset_map
        )
        runs.append(
            ThresholdRun(theta=theta, predictions=tuple(streams), report=report)
        )
    selected = select_theta([r.theta for r in runs], [r.metrics.f1 for r in runs])
    return SweepReport(
        runs=tuple(runs),
        selected_theta=selected,
        selection_rule=SELECTION_RULE,
        mode=mode,
    )


def sweep_thresholds(
    runs_by_theta: "Mapping[float, list[PredictionStream]]",
    sessions: "list[DialogueSession]",
    cfg: MatchConfig,
    provider: EmbeddingProvider,
    jobs: int = 1,
    subset_map: "dict[str, str] | None" = None,
) -> SweepReport:
    """Sweep over per-theta prediction sets (one inference run each)."""
    return _build_report(
        dict(runs_by_theta), sessions, cfg, provider, "exact", jobs, subset_map
    )


def sweep_from_dump(
    dump: "list[PredictionStream]",
    thetas: Sequence[float],
    sessions: "list[DialogueSession]",
    cfg: MatchConfig,
    provider: EmbeddingProvider,
    jobs: int = 1,
    subset_map: "dict[str, str] | None" = None,
    require_text: bool = True,
) -> SweepReport:
    """Sweep by re-thresholding one frame-decision dump per theta."""
    runs_by_theta = {
        float(theta): [
            rethreshold_stream(stream, theta, require_text=require_text)
            for stream in dump
        ]
        for theta in thetas
    }
    return _build_report(
        runs_by_theta, sessions, cfg, provider, "approximate", jobs, subset_map
    )
