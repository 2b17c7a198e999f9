"""Alignment quality scoring, train filtering, and eval splitting.

A session is scored against its video description by how well the two time
sets interleave:

    p  = mean over turn times of the distance to the nearest event start
    r  = mean over event starts of the distance to the nearest turn time
    nr = number of user turns not immediately followed by an assistant turn
         (a user turn that ends the session counts)
    score = 10 - p - r - nr

filter_train keeps sessions scoring >= 3.  split_eval keeps, per video, the
best-scoring session of each user type, drops whole videos whose kept
sessions do not all reach 5, and deals the surviving videos alternately into
val/test ordered by the md5 hash of their video_id (stable across runs and
machines).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

from .corpus import (
    USER_TYPES,
    DialogueSession,
    QualityScore,
    VideoDescription,
)
from .errors import ToolkitError

TRAIN_SCORE_MIN = 3.0
EVAL_SCORE_MIN = 5.0


class VideoMismatch(ToolkitError):
    """Session and description belong to different videos."""


class EmptyTimeSet(ToolkitError):
    """A session or description has no usable times to align."""


class UnscoredSession(ToolkitError):
    """An operation needed session.quality but it was absent."""


class MissingUserType(ToolkitError):
    """A video lacks sessions for one or more user types."""


def _mean_nearest(from_times: "list[float]", to_times: "list[float]") -> float:
    # to_times sorted ascending; linear merge keeps this O(n + m)
    total = 0.0
    k = 0
    for t in from_times:
        while k + 1 < len(to_times) and to_times[k + 1] < t:
            k += 1
        best = abs(t - to_times[k])
        if k + 1 < len(to_times):
            best = min(best, abs(to_times[k + 1] - t))
        total += best
    return total / len(from_times)


def score_alignment(
    description: VideoDescription,
    session: DialogueSession,
    turn_times: str = "all",
) -> QualityScore:
    """Score how well a session's turns align with the description events.

    turn_times selects which turns define the dialogue time set: "all"
    (default) or "assistant".
    """
    if description.video_id != session.video_id:
        raise VideoMismatch(
            f"description is for {description.video_id!r}, "
            f"session for {session.video_id!r}"
        )
    if turn_times not in ("all", "assistant"):
        raise ValueError(f"turn_times must be 'all' or 'assistant', got {turn_times!r}")
    event_times = sorted(ev.start for ev in description.events)
    turns = session.turns if turn_times == "all" else session.assistant_turns()
    dialogue_times = sorted(t.at for t in turns)
    if not event_times:
        raise EmptyTimeSet(f"description {description.video_id!r} has no events")
    if not dialogue_times:
        raise EmptyTimeSet(f"session {session.session_id!r} has no {turn_times} turns")

    p = _mean_nearest(dialogue_times, event_times)
    r = _mean_nearest(event_times, dialogue_times)

    nr = 0
    for idx, turn in enumerate(session.turns):
        if turn.speaker != "user":
            continue
        following = session.turns[idx + 1] if idx + 1 < len(session.turns) else None
        if following is None or following.speaker != "assistant":
            nr += 1

    return QualityScore.from_parts(p=p, r=r, nr=nr)


@dataclass(frozen=True, slots=True)
class DropRecord:
    session_id: str
    video_id: str
    reason: str


def filter_train(
    sessions: "list[DialogueSession]",
) -> "tuple[list[DialogueSession], list[DropRecord]]":
    """Keep scored sessions with score >= 3; report the dropped ones."""
    kept: list[DialogueSession] = []
    dropped: list[DropRecord] = []
    for session in sessions:
        if session.quality is None:
            raise UnscoredSession(f"session {session.session_id!r} has no quality score")
        if session.quality.score >= TRAIN_SCORE_MIN:
            kept.append(session)
        else:
            dropped.append(
                DropRecord(
                    session_id=session.session_id,
                    video_id=session.video_id,
                    reason=f"score {session.quality.score:g} below {TRAIN_SCORE_MIN:g}",
                )
            )
    return kept, dropped


def _video_order_key(video_id: str) -> "tuple[str, str]":
    return (hashlib.md5(video_id.encode("utf-8")).hexdigest(), video_id)


def split_eval(
    sessions: "list[DialogueSession]",
) -> "tuple[list[DialogueSession], list[DialogueSession], list[DropRecord]]":
    """Select evaluation sessions and deal them into val/test.

    Per video: every user type must be present (else MissingUserType); the
    best-scoring session of each type is kept (ties go to the smallest
    session_id); if any kept session scores below 5 the whole video is
    removed.  Surviving videos are ordered by md5(video_id) and dealt
    alternately to val (even positions) and test (odd positions).  Returned
    sessions carry their split label.
    """
    by_video: dict[str, list[DialogueSession]] = {}
    for session in sessions:
        if session.quality is None:
            raise UnscoredSession(f"session {session.session_id!r} has no quality score")
        by_video.setdefault(session.video_id, []).append(session)

    removed: list[DropRecord] = []
    kept_by_video: dict[str, list[DialogueSession]] = {}
    for video_id, group in by_video.items():
        by_type: dict[str, list[DialogueSession]] = {}
        for session in group:
            by_type.setdefault(session.user_type, []).append(session)
        missing = [t for t in USER_TYPES if t not in by_type]
        if missing:
            raise MissingUserType(f"video {video_id!r} lacks user types: {missing}")
        best: list[DialogueSession] = []
        for user_type in USER_TYPES:
            candidates = by_type[user_type]
            top_score = max(s.quality.score for s in candidates)
            tied = [s for s in candidates if s.quality.score == top_score]
            top = min(tied, key=lambda s: s.session_id)  # ties: smallest id wins
            best.append(top)
            for other in candidates:
                if other.session_id != top.session_id:
                    removed.append(
                        DropRecord(
                            session_id=other.session_id,
                            video_id=video_id,
                            reason=f"not the best {user_type} session",
                        )
                    )
        weak = [s for s in best if s.quality.score < EVAL_SCORE_MIN]
        if weak:
            for session in best:
                removed.append(
                    DropRecord(
                        session_id=session.session_id,
                        video_id=video_id,
                        reason=(
                            f"video removed: kept session "
                            f"{weak[0].session_id!r} scores below {EVAL_SCORE_MIN:g}"
                        ),
                    )
                )
            continue
        kept_by_video[video_id] = best

    val: list[DialogueSession] = []
    test: list[DialogueSession] = []
    for position, video_id in enumerate(sorted(kept_by_video, key=_video_order_key)):
        target, label = (val, "val") if position % 2 == 0 else (test, "test")
        for session in kept_by_video[video_id]:
            target.append(replace(session, split=label))
    return val, test, removed
