"""LLM rubric scoring of predicted assistant streams.

A judge model sees the task goal, the timestamped reference dialogue, and
the predicted assistant utterances, and rates four dimensions on a 1-5
Likert scale: correctness, promptness (accepted synonym: timing),
efficiency, overall.  Each session is judged over several independent runs
(default 3) and the per-dimension means are reported alongside the raw
per-run texts for audit.
"""

from __future__ import annotations

import random
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .backends import (
    DEFAULT_ATTEMPTS,
    DEFAULT_BACKOFF_BASE,
    ChatBackend,
    Message,
    complete_with_retry,
)
from .corpus import DialogueSession, PredictionStream, subset_of
from .errors import ToolkitError
from .prompts import load_prompt
from .quality import VideoMismatch

DIMENSIONS = ("correctness", "promptness", "efficiency", "overall")
DEFAULT_N_RUNS = 3
DEFAULT_TEMPERATURE = 0.7


class MissingDimension(ToolkitError):
    """A judge response lacks one or more of the four ratings."""


class OutOfRange(ToolkitError):
    """A rating is outside 1-5 or is not an integer."""


class AmbiguousScores(ToolkitError):
    """A judge response rates the same dimension twice with different values."""


class ParseFailure(ToolkitError):
    """A judge run could not be parsed; .raw holds the model output."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


_LABEL_CANON = {
    "correctness": "correctness",
    "promptness": "promptness",
    "timing": "promptness",
    "efficiency": "efficiency",
    "overall": "overall",
}

# label, an optional parenthesized aside (e.g. "(1-5)"), then the first
# number on the same line; an optional "/5" marks the fraction form.
_SCORE_RE = re.compile(
    r"(?i)\b(correctness|promptness|timing|efficiency|overall)\b"
    r"\s*(?:\([^)\n]*\))?[^\d\n(]{0,40}?(\d+(?:\.\d+)?)(\s*/\s*5)?"
)


def parse_scores(text: str) -> "tuple[int, int, int, int]":
    """Extract the four ratings from a judge response.

    Accepts "label: n", "label n/5" and prose variants on one line per
    rating.  Returns (correctness, promptness, efficiency, overall).
    """
    found: dict[str, int] = {}
    for match in _SCORE_RE.finditer(text):
        label = _LABEL_CANON[match.group(1).lower()]
        raw_value = match.group(2)
        value = float(raw_value)
        if value != int(value):
            raise OutOfRange(f"{label} rating {raw_value} is not an integer 1-5")
        value = int(value)
        if not (1 <= value <= 5):
            raise OutOfRange(f"{label} rating {value} outside 1-5")
        if label in found and found[label] != value:
            raise AmbiguousScores(
                f"{label} rated both {found[label]} and {value}"
            )
        found[label] = value
    missing = [d for d in DIMENSIONS if d not in found]
    if missing:
        raise MissingDimension(f"response lacks ratings for: {', '.join(missing)}")
    return tuple(found[d] for d in DIMENSIONS)  # type: ignore[return-value]


def _timeline(turns) -> str:
    return "\n".join(f"[{t.at:.1f}] {t.speaker}: {t.text}" for t in turns)


def build_judge_prompt(
    pred_stream: PredictionStream, ref_session: DialogueSession
) -> "list[Message]":
    """Render the judge chat messages for one (prediction, reference) pair."""
    if pred_stream.video_id != ref_session.video_id:
        raise VideoMismatch(
            f"prediction is for video {pred_stream.video_id!r} but reference "
            f"session is for {ref_session.video_id!r}"
        )
    if pred_stream.utterances:
        predicted = "\n".join(
            f"[{u.at:.1f}] assistant: {u.text}" for u in pred_stream.utterances
        )
    else:
        predicted = "(no assistant output)"
    user = load_prompt("judge_user").format(
        goal=ref_session.goal,
        reference=_timeline(ref_session.turns),
        predicted=predicted,
    )
    return [
        {"role": "system", "content": load_prompt("judge_system")},
        {"role": "user", "content": user},
    ]


@dataclass(frozen=True)
class JudgeScores:
    """Mean ratings over n_runs independent judge runs for one video."""

    video_id: str
    correctness: float
    promptness: float
    efficiency: float
    overall: float
    n_runs: int
    per_run: tuple[tuple[int, int, int, int], ...]
    raw_texts: tuple[str, ...] = ()
    retries: int = field(default=0, compare=False)

    def as_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "correctness": self.correctness,
            "promptness": self.promptness,
            "efficiency": self.efficiency,
            "overall": self.overall,
            "n_runs": self.n_runs,
            "per_run": [list(run) for run in self.per_run],
            "retries": self.retries,
        }


def judge_session(
    pred_stream: PredictionStream,
    ref_session: DialogueSession,
    backend: ChatBackend,
    n_runs: int = DEFAULT_N_RUNS,
    temperature: float = DEFAULT_TEMPERATURE,
    attempts: int = DEFAULT_ATTEMPTS,
    backoff_base: float = DEFAULT_BACKOFF_BASE,
    rng: random.Random | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> JudgeScores:
    """Judge one session over n_runs independent completions.

    Unparseable runs raise ParseFailure with the raw text attached; transient
    backend failures are retried per run and surface as BackendExhausted only
    after the attempt budget.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    messages = build_judge_prompt(pred_stream, ref_session)
    per_run: list[tuple[int, int, int, int]] = []
    raw_texts: list[str] = []
    retries = 0
    for _ in range(n_runs):
        text, used = complete_with_retry(
            backend,
            messages,
            temperature=temperature,
            attempts=attempts,
            backoff_base=backoff_base,
            rng=rng,
            sleep=sleep,
        )
        retries += used
        raw_texts.append(text)
        try:
            per_run.append(parse_scores(text))
        except (MissingDimension, OutOfRange, AmbiguousScores) as exc:
            raise ParseFailure(f"judge run unparseable: {exc}", raw=text) from exc
    means = [sum(run[k] for run in per_run) / n_runs for k in range(4)]
    return JudgeScores(
        video_id=pred_stream.video_id,
        correctness=means[0],
        promptness=means[1],
        efficiency=means[2],
        overall=means[3],
        n_runs=n_runs,
        per_run=tuple(per_run),
        raw_texts=tuple(raw_texts),
        retries=retries,
    )


@dataclass(frozen=True)
class JudgeReport:
    per_video: "dict[str, JudgeScores]"
    failures: "dict[str, str]"
    subsets: "dict[str, str]"

    def videos(self) -> "list[str]":
        return sorted(self.per_video)

    def _mean_over(self, video_ids: "list[str]") -> "dict[str, float]":
        scores = [self.per_video[v] for v in video_ids]
        if not scores:
            return {}
        return {
            "correctness": sum(s.correctness for s in scores) / len(scores),
            "promptness": sum(s.promptness for s in scores) / len(scores),
            "efficiency": sum(s.efficiency for s in scores) / len(scores),
            "overall": sum(s.overall for s in scores) / len(scores),
        }

    def overall(self) -> "dict[str, float]":
        return self._mean_over(self.videos())

    def per_subset(self) -> "dict[str, dict[str, float]]":
        groups: dict[str, list[str]] = {}
        for vid in self.videos():
            groups.setdefault(self.subsets.get(vid, "synthetic"), []).append(vid)
        return {name: self._mean_over(vids) for name, vids in sorted(groups.items())}


def judge_corpus(
    pairs: "list[tuple[PredictionStream, DialogueSession]]",
    backend: ChatBackend,
    concurrency_limit: int = 4,
    subset_map: "dict[str, str] | None" = None,
    **session_kwargs,
) -> JudgeReport:
    """Judge many (prediction, reference) pairs with bounded concurrency.

    Individual failures do not abort the run; they are collected in the
    report's failures map keyed by video_id.
    """
    if concurrency_limit < 1:
        raise ValueError("concurrency_limit must be >= 1")
    ordered = sorted(pairs, key=lambda pair: pair[0].video_id)

    def one(pair) -> "tuple[str, JudgeScores | None, str | None]":
        pred, ref = pair
        try:
            return pred.video_id, judge_session(pred, ref, backend, **session_kwargs), None
        except ToolkitError as exc:
            return pred.video_id, None, f"{type(exc).__name__}: {exc}"

    if concurrency_limit == 1 or len(ordered) <= 1:
        outcomes = [one(pair) for pair in ordered]
    else:
        with ThreadPoolExecutor(max_workers=concurrency_limit) as pool:
            outcomes = list(pool.map(one, ordered))

    per_video: dict[str, JudgeScores] = {}
    failures: dict[str, str] = {}
    for video_id, scores, error in outcomes:
        if scores is not None:
            per_video[video_id] = scores
        else:
            failures[video_id] = error or "unknown error"
    subsets = {
        vid: subset_of(vid, subset_map)
        for vid, _, _ in outcomes
    }
    return JudgeReport(per_video=per_video, failures=failures, subsets=subsets)
