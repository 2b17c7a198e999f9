"""Domain types and JSONL persistence for dialogue corpora and prediction streams.

File formats (one JSON object per line, UTF-8):

Session record::

    {"session_id": str, "video_id": str, "user_type": str, "goal": str,
     "knowledge": {"goal": str, "recipe_steps": [str, ...]}?,
     "turns": [{"at": sec, "speaker": "user"|"assistant", "text": str,
                "intent": str?, "initiative": str?, "summary": str?}, ...],
     "quality": {"p": f, "r": f, "nr": int, "score": f}?,
     "split": "train"|"val"|"test"?}

Prediction record::

    {"video_id": str, "utterances": [{"at": sec, "text": str}, ...],
     "frames": [{"at": sec, "p_eos": f, "text": str?}, ...]?}

Optional keys are omitted when absent.  Writers emit keys in the order shown
above with compact separators, so load -> save round-trips are byte-stable.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Any, Iterable, Iterator

from .errors import ToolkitError

USER_TYPES = ("no_talk", "talk_some", "talk_more")
SPEAKERS = ("user", "assistant")
SPLITS = ("train", "val", "test")
INTENTS = ("instruction", "correction", "info_sharing", "feedback", "other")
INITIATIVES = ("responsive", "proactive")

# Known corpus subsets; anything else is treated as user-supplied data.
SUBSETS = (
    "ego4d",
    "holoassist",
    "egoexolearn",
    "epickitchens",
    "assembly101",
    "wtag",
    "synthetic",
)

EVENT_KINDS = (
    "coarse_action",
    "fine_action",
    "step_label",
    "mistake_correction",
    "transcript_user",
    "transcript_assistant",
    "other",
)

_ACTION_KINDS = ("coarse_action", "fine_action")


class SchemaViolation(ToolkitError):
    """A record in a JSONL file does not match the documented schema."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class DuplicateSessionId(ToolkitError):
    """Two session records in one file share a session_id."""


def check_seconds(value: float, what: str = "time") -> float:
    """Validate a timestamp value: a finite, non-negative number of seconds."""
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise ValueError(f"{what} must be finite and >= 0, got {value!r}")
    return value


@dataclass(frozen=True, slots=True)
class TimeSpan:
    """Closed interval [start, end] in seconds."""

    start: float
    end: float

    def __post_init__(self):
        check_seconds(self.start, "span start")
        check_seconds(self.end, "span end")
        if self.end < self.start:
            raise ValueError(f"span end {self.end} before start {self.start}")

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True, slots=True)
class AnnotationEvent:
    """One timestamped line of a video description.

    ``when`` is a bare float for point events and a TimeSpan for ranged ones.
    ``depth`` is the nesting level of action hierarchies; non-action kinds
    always sit at depth 0.
    """

    when: float | TimeSpan
    text: str
    kind: str
    depth: int = 0

    def __post_init__(self):
        if not isinstance(self.when, TimeSpan):
            object.__setattr__(self, "when", check_seconds(self.when, "event time"))
        if not self.text:
            raise ValueError("event text must be non-empty")
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.depth < 0:
            raise ValueError("event depth must be >= 0")
        if self.depth != 0 and self.kind not in _ACTION_KINDS:
            raise ValueError(f"kind {self.kind!r} must sit at depth 0")

    @property
    def start(self) -> float:
        return self.when.start if isinstance(self.when, TimeSpan) else self.when

    @property
    def end(self) -> float:
        return self.when.end if isinstance(self.when, TimeSpan) else self.when


@dataclass(frozen=True)
class VideoDescription:
    """All annotation events of one video, sorted by start time."""

    video_id: str
    source_subset: str
    duration: float
    events: tuple[AnnotationEvent, ...]

    def __post_init__(self):
        if not self.video_id:
            raise ValueError("video_id must be non-empty")
        if self.source_subset not in SUBSETS:
            raise ValueError(f"unknown subset {self.source_subset!r}")
        check_seconds(self.duration, "duration")
        object.__setattr__(self, "events", tuple(self.events))
        prev = 0.0
        for ev in self.events:
            if ev.start < prev:
                raise ValueError("events must be sorted by start time")
            prev = ev.start
            if ev.start > self.duration:
                raise ValueError(
                    f"event at {ev.start} starts after duration {self.duration}"
                )


@dataclass(frozen=True, slots=True)
class TaskKnowledge:
    """Task goal plus ordered recipe steps."""

    goal: str
    recipe_steps: tuple[str, ...]

    def __post_init__(self):
        if not self.goal:
            raise ValueError("goal must be non-empty")
        object.__setattr__(self, "recipe_steps", tuple(self.recipe_steps))
        if any(not s for s in self.recipe_steps):
            raise ValueError("recipe steps must be non-empty strings")


@dataclass(frozen=True, slots=True)
class UtteranceTurn:
    """One dialogue turn at a given time."""

    at: float
    speaker: str
    text: str
    intent: str | None = None
    initiative: str | None = None
    progress_summary: str | None = None

    def __post_init__(self):
        check_seconds(self.at, "turn time")
        if self.speaker not in SPEAKERS:
            raise ValueError(f"unknown speaker {self.speaker!r}")
        if not self.text:
            raise ValueError("turn text must be non-empty")
        if self.intent is not None and self.intent not in INTENTS:
            raise ValueError(f"unknown intent {self.intent!r}")
        if self.initiative is not None and self.initiative not in INITIATIVES:
            raise ValueError(f"unknown initiative {self.initiative!r}")
        if self.speaker != "assistant":
            if self.intent is not None or self.initiative is not None:
                raise ValueError("intent/initiative labels only apply to assistant turns")
            if self.progress_summary is not None:
                raise ValueError("progress summaries only apply to assistant turns")


@dataclass(frozen=True, slots=True)
class QualityScore:
    """Alignment quality of a session against its video description.

    score is definitionally 10 - p - r - nr; the constructor refuses
    records where that identity does not hold.
    """

    p: float
    r: float
    nr: int
    score: float

    def __post_init__(self):
        if self.p < 0 or self.r < 0 or self.nr < 0:
            raise ValueError("quality components must be >= 0")
        if self.score != 10.0 - self.p - self.r - self.nr:
            raise ValueError("score must equal 10 - p - r - nr")

    @classmethod
    def from_parts(cls, p: float, r: float, nr: int) -> "QualityScore":
        return cls(p=p, r=r, nr=nr, score=10.0 - p - r - nr)


@dataclass(frozen=True)
class DialogueSession:
    """One synthesized or recorded dialogue for a video.

    Construction checks field-local invariants only; structural rules
    (turn ordering, goal-first, user-type shape) are the domain of
    validate_session so that malformed data can be loaded and reported.
    """

    session_id: str
    video_id: str
    user_type: str
    goal: str
    knowledge: TaskKnowledge | None = None
    turns: tuple[UtteranceTurn, ...] = ()
    quality: QualityScore | None = None
    split: str | None = None

    def __post_init__(self):
        if not self.session_id or not self.video_id:
            raise ValueError("session_id and video_id must be non-empty")
        if self.user_type not in USER_TYPES:
            raise ValueError(f"unknown user_type {self.user_type!r}")
        if not self.goal:
            raise ValueError("goal must be non-empty")
        if self.split is not None and self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        object.__setattr__(self, "turns", tuple(self.turns))

    def assistant_turns(self) -> tuple[UtteranceTurn, ...]:
        return tuple(t for t in self.turns if t.speaker == "assistant")


@dataclass(frozen=True, slots=True)
class PredictedUtterance:
    at: float
    text: str

    def __post_init__(self):
        check_seconds(self.at, "utterance time")
        if not self.text:
            raise ValueError("utterance text must be non-empty")


@dataclass(frozen=True, slots=True)
class FrameDecision:
    """Per-frame speak/silent decision record from a streaming model."""

    at: float
    p_eos: float
    text_if_spoken: str | None = None

    def __post_init__(self):
        check_seconds(self.at, "frame time")
        if not (0.0 <= self.p_eos <= 1.0):
            raise ValueError(f"p_eos must lie in [0, 1], got {self.p_eos}")
        if self.text_if_spoken is not None and not self.text_if_spoken:
            raise ValueError("text_if_spoken must be non-empty when present")


@dataclass(frozen=True)
class PredictionStream:
    """Model output for one video: spoken utterances, optionally raw frames."""

    video_id: str
    utterances: tuple[PredictedUtterance, ...] = ()
    frame_records: tuple[FrameDecision, ...] | None = None

    def __post_init__(self):
        if not self.video_id:
            raise ValueError("video_id must be non-empty")
        object.__setattr__(self, "utterances", tuple(self.utterances))
        for a, b in zip(self.utterances, self.utterances[1:]):
            if b.at < a.at:
                raise ValueError("utterances must be sorted by time")
        if self.frame_records is not None:
            object.__setattr__(self, "frame_records", tuple(self.frame_records))
            for a, b in zip(self.frame_records, self.frame_records[1:]):
                if b.at <= a.at:
                    raise ValueError("frame records must be strictly increasing in time")


@dataclass(frozen=True, slots=True)
class Violation:
    """One structural problem found by validate_session."""

    code: str
    message: str


def validate_session(session: DialogueSession) -> list[Violation]:
    """Check structural invariants of a session and report every violation.

    Codes: TurnsOutOfOrder, FirstTurnNotGoal, UserTypeMismatch.
    A well-formed session yields an empty list.
    """
    problems: list[Violation] = []
    turns = session.turns
    for a, b in zip(turns, turns[1:]):
        if b.at < a.at:
            problems.append(
                Violation("TurnsOutOfOrder", f"turn at {b.at} follows turn at {a.at}")
            )
            break
    if not turns or turns[0].speaker != "user" or turns[0].text != session.goal:
        problems.append(
            Violation("FirstTurnNotGoal", "first turn must be the user goal statement")
        )
    if session.user_type == "no_talk":
        extra = [t for t in turns[1:] if t.speaker == "user"]
        if extra:
            problems.append(
                Violation(
                    "UserTypeMismatch",
                    f"no_talk session has {len(extra)} user turn(s) after the goal",
                )
            )
    return problems


def subset_of(video_id: str, mapping: dict[str, str] | None = None) -> str:
    """Attribute a video to a corpus subset.

    An explicit mapping wins; otherwise the video_id prefix before the first
    '/' or '_' is used when it names a known subset; everything else falls
    back to 'synthetic'.
    """
    if mapping and video_id in mapping:
        return mapping[video_id]
    for sep in ("/", "_"):
        head = video_id.split(sep, 1)[0].lower()
        if head in SUBSETS:
            return head
    return "synthetic"


# ---------------------------------------------------------------------------
# JSONL persistence


def _dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _require(obj: dict, key: str, line_no: int) -> Any:
    if key not in obj:
        raise SchemaViolation(f"missing required key {key!r}", line_no)
    return obj[key]


def _iter_jsonl(path: str | os.PathLike) -> Iterator[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"invalid JSON ({exc.msg})", line_no) from exc
            if not isinstance(obj, dict):
                raise SchemaViolation("record must be a JSON object", line_no)
            yield line_no, obj


def turn_to_dict(turn: UtteranceTurn) -> dict:
    out: dict[str, Any] = {"at": turn.at, "speaker": turn.speaker, "text": turn.text}
    if turn.intent is not None:
        out["intent"] = turn.intent
    if turn.initiative is not None:
        out["initiative"] = turn.initiative
    if turn.progress_summary is not None:
        out["summary"] = turn.progress_summary
    return out


def turn_from_dict(obj: dict, line_no: int | None = None) -> UtteranceTurn:
    try:
        return UtteranceTurn(
            at=obj["at"],
            speaker=obj["speaker"],
            text=obj["text"],
            intent=obj.get("intent"),
            initiative=obj.get("initiative"),
            progress_summary=obj.get("summary"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"bad turn record: {exc}", line_no) from exc


def session_to_dict(session: DialogueSession) -> dict:
    out: dict[str, Any] = {
        "session_id": session.session_id,
        "video_id": session.video_id,
        "user_type": session.user_type,
        "goal": session.goal,
    }
    if session.knowledge is not None:
        out["knowledge"] = {
            "goal": session.knowledge.goal,
            "recipe_steps": list(session.knowledge.recipe_steps),
        }
    out["turns"] = [turn_to_dict(t) for t in session.turns]
    if session.quality is not None:
        q = session.quality
        out["quality"] = {"p": q.p, "r": q.r, "nr": q.nr, "score": q.score}
    if session.split is not None:
        out["split"] = session.split
    return out


def session_from_dict(obj: dict, line_no: int | None = None) -> DialogueSession:
    knowledge = None
    if obj.get("knowledge") is not None:
        k = obj["knowledge"]
        if not isinstance(k, dict):
            raise SchemaViolation("knowledge must be an object", line_no)
        try:
            knowledge = TaskKnowledge(
                goal=k["goal"], recipe_steps=tuple(k.get("recipe_steps", ()))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"bad knowledge record: {exc}", line_no) from exc
    quality = None
    if obj.get("quality") is not None:
        q = obj["quality"]
        try:
            quality = QualityScore(p=q["p"], r=q["r"], nr=q["nr"], score=q["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"bad quality record: {exc}", line_no) from exc
    raw_turns = _require(obj, "turns", line_no) if line_no is not None else obj["turns"]
    if not isinstance(raw_turns, list):
        raise SchemaViolation("turns must be a list", line_no)
    try:
        return DialogueSession(
            session_id=obj["session_id"],
            video_id=obj["video_id"],
            user_type=obj["user_type"],
            goal=obj["goal"],
            knowledge=knowledge,
            turns=tuple(turn_from_dict(t, line_no) for t in raw_turns),
            quality=quality,
            split=obj.get("split"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"bad session record: {exc}", line_no) from exc


def load_sessions(path: str | os.PathLike) -> list[DialogueSession]:
    sessions: list[DialogueSession] = []
    seen: set[str] = set()
    for line_no, obj in _iter_jsonl(path):
        session = session_from_dict(obj, line_no)
        if session.session_id in seen:
            raise DuplicateSessionId(
                f"duplicate session_id {session.session_id!r} at line {line_no}"
            )
        seen.add(session.session_id)
        sessions.append(session)
    return sessions


def save_sessions(sessions: Iterable[DialogueSession], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for session in sessions:
            fh.write(_dumps(session_to_dict(session)))
            fh.write("\n")


def prediction_to_dict(stream: PredictionStream) -> dict:
    out: dict[str, Any] = {
        "video_id": stream.video_id,
        "utterances": [{"at": u.at, "text": u.text} for u in stream.utterances],
    }
    if stream.frame_records is not None:
        frames = []
        for fr in stream.frame_records:
            rec: dict[str, Any] = {"at": fr.at, "p_eos": fr.p_eos}
            if fr.text_if_spoken is not None:
                rec["text"] = fr.text_if_spoken
            frames.append(rec)
        out["frames"] = frames
    return out


def prediction_from_dict(obj: dict, line_no: int | None = None) -> PredictionStream:
    try:
        utterances = tuple(
            PredictedUtterance(at=u["at"], text=u["text"])
            for u in obj.get("utterances", [])
        )
        frames = None
        if obj.get("frames") is not None:
            frames = tuple(
                FrameDecision(
                    at=f["at"], p_eos=f["p_eos"], text_if_spoken=f.get("text")
                )
                for f in obj["frames"]
            )
        return PredictionStream(
            video_id=obj["video_id"], utterances=utterances, frame_records=frames
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"bad prediction record: {exc}", line_no) from exc


def load_predictions(path: str | os.PathLike) -> list[PredictionStream]:
    return [prediction_from_dict(obj, line_no) for line_no, obj in _iter_jsonl(path)]


def save_predictions(
    streams: Iterable[PredictionStream], path: str | os.PathLike
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for stream in streams:
            fh.write(_dumps(prediction_to_dict(stream)))
            fh.write("\n")


def event_to_dict(ev: AnnotationEvent) -> dict:
    out: dict[str, Any] = {}
    if isinstance(ev.when, TimeSpan):
        out["start"] = ev.when.start
        out["end"] = ev.when.end
    else:
        out["at"] = ev.when
    out["text"] = ev.text
    out["kind"] = ev.kind
    out["depth"] = ev.depth
    return out


def event_from_dict(obj: dict, line_no: int | None = None) -> AnnotationEvent:
    try:
        if "at" in obj:
            when: float | TimeSpan = float(obj["at"])
        else:
            when = TimeSpan(start=obj["start"], end=obj["end"])
        return AnnotationEvent(
            when=when, text=obj["text"], kind=obj["kind"], depth=obj.get("depth", 0)
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"bad event record: {exc}", line_no) from exc


def description_to_dict(desc: VideoDescription) -> dict:
    return {
        "video_id": desc.video_id,
        "subset": desc.source_subset,
        "duration": desc.duration,
        "events": [event_to_dict(ev) for ev in desc.events],
    }


def description_from_dict(obj: dict, line_no: int | None = None) -> VideoDescription:
    try:
        return VideoDescription(
            video_id=obj["video_id"],
            source_subset=obj["subset"],
            duration=obj["duration"],
            events=tuple(event_from_dict(e, line_no) for e in obj["events"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"bad description record: {exc}", line_no) from exc


def load_descriptions(path: str | os.PathLike) -> list[VideoDescription]:
    return [description_from_dict(obj, line_no) for line_no, obj in _iter_jsonl(path)]


def save_descriptions(
    descriptions: Iterable[VideoDescription], path: str | os.PathLike
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for desc in descriptions:
            fh.write(_dumps(description_to_dict(desc)))
            fh.write("\n")
