"""Temporal-semantic matching of predicted utterances against references.

Each predicted utterance may match at most one reference assistant turn and
vice versa.  A candidate pair (i, j) exists only when the prediction falls
inside the asymmetric feasibility window around the reference time
(-window_early <= t_pred - t_ref <= window_late); its cost combines semantic
distance (1 - cosine of the embedded texts) with a weighted, normalized
temporal penalty |delta|^p / window_early^p.  Every prediction also gets a
private fallback column priced at DUMMY_COST, the semantic cost of silence,
so the solver can leave it unmatched.  The minimum-cost assignment is found
with the sparse shortest-augmenting-path solver, and assigned pairs count as
matches only when their cosine similarity clears sim_threshold.

Precision = matches / n_pred, recall = matches / n_ref, F1 harmonic;
degenerate denominators yield 0.  Corpus aggregation is micro: sums of
matches / predictions / references across videos, then P/R/F1 from the sums.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .assignment import SparseCostMatrix, pad_with_dummies, solve_lapjvsp
from .corpus import (
    DialogueSession,
    PredictionStream,
    UtteranceTurn,
    load_predictions,
    load_sessions,
    subset_of,
)
from .embedding import EmbeddingProvider, cosine_similarity
from .errors import ToolkitError

# Cost of matching a prediction to nothing: the semantic cost of silence.
DUMMY_COST = 1.0


class _Silence:
    """Sentinel for the empty reference (assistant said nothing)."""

    def __repr__(self):
        return "SILENCE"


SILENCE = _Silence()


class MissingReference(ToolkitError):
    """Prediction and reference corpora do not cover the same video ids."""


@dataclass(frozen=True)
class MatchConfig:
    """Knobs of the matching metric.

    window_early bounds how far a prediction may precede its reference;
    window_late bounds how far it may trail.  The shipped defaults are the
    action-narration profile: 2.5 s symmetric window, exponent 1.5,
    similarity threshold 0.5.  Guidance dialogue keeps window_late at half
    of window_early (late predictions are the more disruptive kind); pass
    allow_late_bias=True to deliberately configure window_late larger.
    """

    p_exponent: float = 1.5
    sim_threshold: float = 0.5
    window_early: float = 2.5
    window_late: float = 2.5
    temporal_weight: float = 0.1
    allow_late_bias: bool = False

    def __post_init__(self):
        if self.p_exponent <= 0:
            raise ValueError("p_exponent must be > 0")
        if not (-1.0 <= self.sim_threshold <= 1.0):
            raise ValueError("sim_threshold must lie in [-1, 1]")
        if self.window_early <= 0 or self.window_late < 0:
            raise ValueError("windows must be positive (late may be 0)")
        if self.temporal_weight < 0:
            raise ValueError("temporal_weight must be >= 0")
        if self.window_late > self.window_early and not self.allow_late_bias:
            raise ValueError(
                "window_late exceeds window_early; pass allow_late_bias=True "
                "if that asymmetry is intentional"
            )

    @classmethod
    def dialogue_profile(cls, window_early: float, **kwargs) -> "MatchConfig":
        """Guidance-dialogue profile: window_late = window_early / 2."""
        return cls(window_early=window_early, window_late=window_early / 2.0, **kwargs)


DIALOGUE_WINDOW_MIN = 1.5
DIALOGUE_WINDOW_MAX = 6.0


def dialogue_window_from_sessions(sessions: "list[DialogueSession]") -> float:
    """Derive window_early from the mean gap between consecutive reference
    assistant turns, clamped into [1.5, 6.0] seconds."""
    gaps: list[float] = []
    for session in sessions:
        turns = session.assistant_turns()
        gaps.extend(b.at - a.at for a, b in zip(turns, turns[1:]))
    if not gaps:
        return DIALOGUE_WINDOW_MIN
    mean_gap = sum(gaps) / len(gaps)
    return min(max(mean_gap, DIALOGUE_WINDOW_MIN), DIALOGUE_WINDOW_MAX)


def semantic_cost(
    pred_text: str, ref_text: "str | _Silence", provider: EmbeddingProvider
) -> float:
    """1 - cosine(e(pred), e(ref)), clamped into [0, 2]; silence costs 1.0."""
    if isinstance(ref_text, _Silence):
        return DUMMY_COST
    sim = cosine_similarity(provider.embed(pred_text), provider.embed(ref_text))
    return min(max(1.0 - sim, 0.0), 2.0)


def temporal_cost(t_pred: float, t_ref: float, cfg: MatchConfig) -> float | None:
    """Normalized temporal penalty, or None when the pair is infeasible."""
    delta = t_pred - t_ref
    if delta < -cfg.window_early or delta > cfg.window_late:
        return None
    return abs(delta) ** cfg.p_exponent / cfg.window_early**cfg.p_exponent


@dataclass(frozen=True, slots=True)
class MatchedPair:
    """One accepted prediction/reference pair.

    ref_index counts assistant turns only (the match targets), in time order.
    time_delta = t_pred - t_ref.
    """

    pred_index: int
    ref_index: int
    similarity: float
    time_delta: float


@dataclass(frozen=True)
class MatchResult:
    video_id: str
    pairs: tuple[MatchedPair, ...]
    n_pred: int
    n_ref: int
    precision: float
    recall: float
    f1: float


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _prf(n_matched: int, n_pred: int, n_ref: int) -> tuple[float, float, float]:
    precision = n_matched / n_pred if n_pred else 0.0
    recall = n_matched / n_ref if n_ref else 0.0
    return precision, recall, _f1(precision, recall)


def match_streams(
    pred_stream: PredictionStream,
    ref_session: DialogueSession,
    cfg: MatchConfig,
    provider: EmbeddingProvider,
) -> MatchResult:
    """Match one prediction stream against one reference session."""
    if pred_stream.video_id != ref_session.video_id:
        raise ValueError(
            f"prediction is for video {pred_stream.video_id!r} but reference "
            f"session is for {ref_session.video_id!r}"
        )
    refs: tuple[UtteranceTurn, ...] = ref_session.assistant_turns()
    preds = pred_stream.utterances
    n_pred, n_ref = len(preds), len(refs)

    arcs: list[tuple[int, int, float]] = []
    meta: dict[tuple[int, int], tuple[float, float]] = {}
    for i, pred in enumerate(preds):
        for j, ref in enumerate(refs):
            t_cost = temporal_cost(pred.at, ref.at, cfg)
            if t_cost is None:
                continue
            sim = cosine_similarity(
                provider.embed(pred.text), provider.embed(ref.text)
            )
            s_cost = min(max(1.0 - sim, 0.0), 2.0)
            arcs.append((i, j, s_cost + cfg.temporal_weight * t_cost))
            meta[(i, j)] = (sim, pred.at - ref.at)

    pairs: list[MatchedPair] = []
    if n_pred:
        matrix = pad_with_dummies(
            SparseCostMatrix.from_arcs(n_pred, n_ref, arcs), DUMMY_COST
        )
        assignment = solve_lapjvsp(matrix)
        for i, j in assignment.pairs():
            if matrix.is_dummy(j):
                continue
            sim, delta = meta[(i, j)]
            if sim >= cfg.sim_threshold:
                pairs.append(
                    MatchedPair(
                        pred_index=i, ref_index=j, similarity=sim, time_delta=delta
                    )
                )

    precision, recall, f1 = _prf(len(pairs), n_pred, n_ref)
    return MatchResult(
        video_id=pred_stream.video_id,
        pairs=tuple(pairs),
        n_pred=n_pred,
        n_ref=n_ref,
        precision=precision,
        recall=recall,
        f1=f1,
    )


@dataclass(frozen=True)
class AggregateMetrics:
    """Micro-averaged metrics over a group of videos."""

    n_videos: int
    n_pred: int
    n_ref: int
    n_matched: int
    precision: float
    recall: float
    f1: float


def micro_average(results: "list[MatchResult]") -> AggregateMetrics:
    n_pred = sum(r.n_pred for r in results)
    n_ref = sum(r.n_ref for r in results)
    n_matched = sum(len(r.pairs) for r in results)
    precision, recall, f1 = _prf(n_matched, n_pred, n_ref)
    return AggregateMetrics(
        n_videos=len(results),
        n_pred=n_pred,
        n_ref=n_ref,
        n_matched=n_matched,
        precision=precision,
        recall=recall,
        f1=f1,
    )


@dataclass(frozen=True)
class CorpusMatchReport:
    per_video: "dict[str, MatchResult]"
    subsets: "dict[str, str]" = field(default_factory=dict)  # video_id -> subset

    def videos(self) -> "list[str]":
        return sorted(self.per_video)

    def overall(self) -> AggregateMetrics:
        return micro_average([self.per_video[v] for v in self.videos()])

    def per_subset(self) -> "dict[str, AggregateMetrics]":
        groups: dict[str, list[MatchResult]] = {}
        for vid in self.videos():
            groups.setdefault(self.subsets.get(vid, "synthetic"), []).append(
                self.per_video[vid]
            )
        return {name: micro_average(group) for name, group in sorted(groups.items())}


def evaluate_streams(
    pred_streams: "list[PredictionStream]",
    ref_sessions: "list[DialogueSession]",
    cfg: MatchConfig,
    provider: EmbeddingProvider,
    jobs: int = 1,
    subset_map: "dict[str, str] | None" = None,
) -> CorpusMatchReport:
    """Match every prediction stream against its same-video reference session.

    Video ids must align one-to-one.  Work is farmed over ``jobs`` threads;
    results are keyed and ordered by video_id, so the report is identical
    regardless of scheduling.
    """
    by_video_pred = {p.video_id: p for p in pred_streams}
    by_video_ref = {s.video_id: s for s in ref_sessions}
    if len(by_video_pred) != len(pred_streams):
        raise MissingReference("duplicate video_id among prediction streams")
    if len(by_video_ref) != len(ref_sessions):
        raise MissingReference("duplicate video_id among reference sessions")
    missing_refs = sorted(set(by_video_pred) - set(by_video_ref))
    missing_preds = sorted(set(by_video_ref) - set(by_video_pred))
    if missing_refs or missing_preds:
        raise MissingReference(
            f"videos without references: {missing_refs}; "
            f"videos without predictions: {missing_preds}"
        )

    video_ids = sorted(by_video_pred)

    def one(vid: str) -> MatchResult:
        return match_streams(by_video_pred[vid], by_video_ref[vid], cfg, provider)

    if jobs <= 1 or len(video_ids) <= 1:
        results = {vid: one(vid) for vid in video_ids}
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            computed = list(pool.map(one, video_ids))
        results = dict(zip(video_ids, computed))

    subsets = {vid: subset_of(vid, subset_map) for vid in video_ids}
    return CorpusMatchReport(per_video=results, subsets=subsets)


def evaluate_corpus(
    pred_files: "list[str]",
    session_files: "list[str]",
    cfg: MatchConfig,
    provider: EmbeddingProvider,
    jobs: int = 1,
    subset_map: "dict[str, str] | None" = None,
) -> CorpusMatchReport:
    """File-level wrapper over evaluate_streams."""
    preds: list[PredictionStream] = []
    for path in pred_files:
        preds.extend(load_predictions(path))
    sessions: list[DialogueSession] = []
    for path in session_files:
        sessions.extend(load_sessions(path))
    return evaluate_streams(preds, sessions, cfg, provider, jobs, subset_map)
