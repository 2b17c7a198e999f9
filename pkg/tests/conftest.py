"""Shared fixture builders: seeded random corpora with valid structure."""

from __future__ import annotations

import random

import pytest

from assistkit.corpus import (
    AnnotationEvent,
    DialogueSession,
    QualityScore,
    TaskKnowledge,
    TimeSpan,
    UtteranceTurn,
    VideoDescription,
)

_VOCAB = (
    "add stir whisk pour chop slice heat wait flip season taste fold knead "
    "rinse drain measure preheat simmer toast grate the a your some salt "
    "butter eggs flour onion garlic water oil pan bowl oven dough sauce "
    "batter tray now next then gently slowly carefully"
).split()


def words(rng: random.Random, low: int = 3, high: int = 8) -> str:
    return " ".join(rng.choice(_VOCAB) for _ in range(rng.randint(low, high)))


def make_turns(
    rng: random.Random,
    goal: str,
    duration: float,
    n_assistant: int,
    n_user: int,
) -> "tuple[UtteranceTurn, ...]":
    """Goal turn at t=0 followed by shuffled, time-sorted dialogue turns."""
    turns = [UtteranceTurn(at=0.0, speaker="user", text=goal)]
    times = sorted(
        round(rng.uniform(1.0, max(duration - 1.0, 2.0)), 1)
        for _ in range(n_assistant + n_user)
    )
    speakers = ["assistant"] * n_assistant + ["user"] * n_user
    rng.shuffle(speakers)
    seen = set()
    for at, speaker in zip(times, speakers):
        while at in seen:  # keep utterance times distinct
            at = round(at + 0.1, 1)
        seen.add(at)
        turns.append(UtteranceTurn(at=at, speaker=speaker, text=words(rng)))
    turns.sort(key=lambda t: t.at)
    return tuple(turns)


def make_session(
    rng: random.Random,
    video_id: str,
    session_id: str,
    user_type: str = "talk_some",
    duration: float = 120.0,
    min_assistant: int = 1,
    with_knowledge: bool = False,
    with_quality: bool = False,
) -> DialogueSession:
    goal = words(rng, 2, 5)
    n_assistant = rng.randint(min_assistant, max(min_assistant, 6))
    n_user = 0 if user_type == "no_talk" else rng.randint(0, 4)
    knowledge = None
    if with_knowledge:
        knowledge = TaskKnowledge(
            goal=goal, recipe_steps=tuple(words(rng) for _ in range(rng.randint(2, 5)))
        )
    quality = None
    if with_quality:
        quality = QualityScore.from_parts(
            p=round(rng.uniform(0.0, 4.0), 3),
            r=round(rng.uniform(0.0, 4.0), 3),
            nr=rng.randint(0, 3),
        )
    return DialogueSession(
        session_id=session_id,
        video_id=video_id,
        user_type=user_type,
        goal=goal,
        knowledge=knowledge,
        turns=make_turns(rng, goal, duration, n_assistant, n_user),
        quality=quality,
    )


def make_corpus(
    rng: random.Random,
    n_videos: int,
    sessions_per_video: int = 1,
    **session_kwargs,
) -> "list[DialogueSession]":
    sessions = []
    user_types = ("no_talk", "talk_some", "talk_more")
    for v in range(n_videos):
        video_id = f"synthetic/v{v:03d}"
        for s in range(sessions_per_video):
            sessions.append(
                make_session(
                    rng,
                    video_id,
                    session_id=f"{video_id}:s{s:02d}",
                    user_type=user_types[s % 3],
                    **session_kwargs,
                )
            )
    return sessions


def make_description(
    rng: random.Random, video_id: str, duration: float = 120.0, n_events: int = 8
) -> VideoDescription:
    events = []
    for _ in range(n_events):
        start = round(rng.uniform(0.0, duration - 5.0), 1)
        if rng.random() < 0.5:
            when: "float | TimeSpan" = start
        else:
            when = TimeSpan(start, round(start + rng.uniform(0.5, 20.0), 1))
        events.append(
            AnnotationEvent(when=when, text=words(rng), kind="fine_action")
        )
    events.sort(key=lambda e: e.start)
    duration = max(duration, max(e.end for e in events))
    return VideoDescription(
        video_id=video_id,
        source_subset="synthetic",
        duration=duration,
        events=tuple(events),
    )


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240817)
