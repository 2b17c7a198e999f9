"""Synthesis of task-guidance dialogues from annotated videos.

Pipeline stages per video:

1. coverage gate      -- reject videos whose annotated spans cover less than
                         half the runtime (no model calls spent on them)
2. recipe inference   -- 10 independent goal+recipe candidates, merged by one
                         refinement call (skipped when the dataset already
                         provides task knowledge)
3. prefilter votes    -- 10 classification calls into {0, 1, 2}; only a
                         unique majority for category 1 keeps the video
4. dialogue synthesis -- 10 sessions per video in a 2:4:4 user-type ratio;
                         each session is generated chunk by chunk (5-minute
                         chunks, at most 10 prior turns as context) and then
                         polished by one refinement call that also labels
                         assistant turns with intent and initiative
5. scoring + split    -- alignment quality scoring, then train filtering or
                         val/test selection

Every decision lands in an audit log; failures are recorded per video and
never abort the run.  Given a fixed backend transcript and seed the whole
pipeline is deterministic, including the exact sequence of backend requests.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, replace
from typing import Any, Sequence

from .backends import ChatBackend
from .corpus import (
    DialogueSession,
    TaskKnowledge,
    TimeSpan,
    UtteranceTurn,
    VideoDescription,
)
from .description import format_event
from .errors import ToolkitError
from .prompts import load_addendum, load_prompt
from .quality import filter_train, score_alignment, split_eval

DEFAULT_RECIPE_CANDIDATES = 10
DEFAULT_PREFILTER_VOTES = 10
DEFAULT_COVERAGE_MIN = 0.5
DEFAULT_CHUNK_MINUTES = 5.0
CONTEXT_TURN_LIMIT = 10
SESSION_RATIO = (2, 4, 4)  # no_talk : talk_some : talk_more
SUMMARY_WORD_CAP = 200


class UnparseableRecipe(ToolkitError):
    """The recipe refinement output had no recognizable goal/steps."""


class UnparseableDialogue(ToolkitError):
    """A dialogue generation output had malformed turn lines."""

    def __init__(self, message: str, chunk_index: int | None = None):
        if chunk_index is not None:
            message = f"chunk {chunk_index}: {message}"
        super().__init__(message)
        self.chunk_index = chunk_index


@dataclass(frozen=True, slots=True)
class UserProfile:
    """How talkative the simulated user is."""

    kind: str
    question_rate_hint: float
    description: str


PROFILES = {
    "no_talk": UserProfile(
        kind="no_talk",
        question_rate_hint=0.0,
        description=(
            "The user works in silence and never asks questions; "
            "the assistant must volunteer all guidance."
        ),
    ),
    "talk_some": UserProfile(
        kind="talk_some",
        question_rate_hint=0.2,
        description="The user occasionally asks what to do next or for clarification.",
    ),
    "talk_more": UserProfile(
        kind="talk_more",
        question_rate_hint=0.4,
        description="The user is chatty and frequently asks questions and confirms steps.",
    ),
}


@dataclass(frozen=True, slots=True)
class PlannedSession:
    index: int
    user_type: str
    session_seed: int
    session_id: str


@dataclass(frozen=True)
class GenerationPlan:
    """Per-video session plan; user-type counts follow the 2:4:4 ratio."""

    video_id: str
    sessions: tuple[PlannedSession, ...]

    def __post_init__(self):
        counts = Counter(s.user_type for s in self.sessions)
        unit = sum(counts.values()) // sum(SESSION_RATIO) if self.sessions else 0
        expected = {
            "no_talk": SESSION_RATIO[0] * unit,
            "talk_some": SESSION_RATIO[1] * unit,
            "talk_more": SESSION_RATIO[2] * unit,
        }
        if unit == 0 or dict(counts) != expected:
            raise ValueError(
                f"session counts {dict(counts)} do not follow the "
                f"{SESSION_RATIO[0]}:{SESSION_RATIO[1]}:{SESSION_RATIO[2]} ratio"
            )


def _derive_seed(master_seed: int, video_id: str, index: int) -> int:
    digest = hashlib.md5(f"{master_seed}:{video_id}:{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def build_generation_plan(video_id: str, seed: int = 0) -> GenerationPlan:
    """Ten sessions per video: 2 no_talk, 4 talk_some, 4 talk_more."""
    kinds = (
        ["no_talk"] * SESSION_RATIO[0]
        + ["talk_some"] * SESSION_RATIO[1]
        + ["talk_more"] * SESSION_RATIO[2]
    )
    sessions = tuple(
        PlannedSession(
            index=i,
            user_type=kind,
            session_seed=_derive_seed(seed, video_id, i),
            session_id=f"{video_id}:s{i:02d}",
        )
        for i, kind in enumerate(kinds)
    )
    return GenerationPlan(video_id=video_id, sessions=sessions)


@dataclass(frozen=True)
class ChunkPlan:
    """Partition of [0, duration] into uniform chunks (last one truncated)."""

    chunks: tuple[TimeSpan, ...]
    context_turn_limit: int = CONTEXT_TURN_LIMIT

    def __post_init__(self):
        if not self.chunks:
            raise ValueError("a chunk plan needs at least one chunk")
        if self.chunks[0].start != 0.0:
            raise ValueError("chunks must start at 0")
        for a, b in zip(self.chunks, self.chunks[1:]):
            if b.start != a.end:
                raise ValueError("chunks must tile the timeline without gaps")


def plan_chunks(
    description: VideoDescription, chunk_minutes: float = DEFAULT_CHUNK_MINUTES
) -> ChunkPlan:
    if chunk_minutes <= 0:
        raise ValueError("chunk_minutes must be > 0")
    size = chunk_minutes * 60.0
    duration = description.duration
    chunks: list[TimeSpan] = []
    start = 0.0
    while True:
        end = min(start + size, duration)
        chunks.append(TimeSpan(start, end))
        if end >= duration:
            break
        start = end
    return ChunkPlan(chunks=tuple(chunks))


# ---------------------------------------------------------------------------
# recipe inference


_GOAL_RE = re.compile(r"(?im)^\s*goal\s*:\s*(.+?)\s*$")
_STEP_RE = re.compile(r"(?m)^\s*(?:\d+[.)]|[-*])\s+(.+?)\s*$")


def parse_recipe(text: str) -> TaskKnowledge:
    goal_match = _GOAL_RE.search(text)
    steps = _STEP_RE.findall(text)
    if not goal_match or not steps:
        raise UnparseableRecipe(
            f"expected 'Goal:' line and numbered steps, got: {text[:200]!r}"
        )
    return TaskKnowledge(goal=goal_match.group(1), recipe_steps=tuple(steps))


def generate_recipe(
    description: VideoDescription,
    backend: ChatBackend,
    n_candidates: int = DEFAULT_RECIPE_CANDIDATES,
    temperature: float = 0.7,
    addendum_override: str | None = None,
) -> TaskKnowledge:
    """Draft n_candidates goal+recipe proposals, then merge them in one
    refinement call.  Total backend calls: n_candidates + 1."""
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    addendum = load_addendum(description.source_subset, addendum_override)
    rendered = "\n".join(format_event(ev) for ev in description.events)
    candidate_prompt = load_prompt("recipe_candidates").format(
        description=rendered, addendum=_addendum_block(addendum)
    )
    candidates = [
        backend.complete(
            [{"role": "user", "content": candidate_prompt}], temperature=temperature
        )
        for _ in range(n_candidates)
    ]
    numbered = "\n\n".join(
        f"Candidate {i + 1}:\n{text}" for i, text in enumerate(candidates)
    )
    refine_prompt = load_prompt("recipe_refine").format(candidates=numbered)
    refined = backend.complete(
        [{"role": "user", "content": refine_prompt}], temperature=0.0
    )
    return parse_recipe(refined)


def _addendum_block(addendum: str) -> str:
    return f"\n{addendum}" if addendum else ""


# ---------------------------------------------------------------------------
# prefilter


def annotation_coverage(description: VideoDescription) -> float:
    """Fraction of the video runtime covered by the union of event spans.

    Point events carry no extent and contribute nothing.
    """
    if description.duration <= 0.0:
        return 0.0
    intervals = sorted(
        (ev.start, ev.end) for ev in description.events if ev.end > ev.start
    )
    covered = 0.0
    cur_start: float | None = None
    cur_end = 0.0
    for start, end in intervals:
        if cur_start is None or start > cur_end:
            if cur_start is not None:
                covered += cur_end - cur_start
            cur_start, cur_end = start, end
        else:
            cur_end = max(cur_end, end)
    if cur_start is not None:
        covered += cur_end - cur_start
    return min(covered / description.duration, 1.0)


_VOTE_RE = re.compile(r"\b([012])\b")


@dataclass(frozen=True)
class PrefilterResult:
    keep: bool
    coverage: float
    votes: tuple[Any, ...]  # ints 0/1/2, or None for unparseable responses
    reason: str


def prefilter_video(
    description: VideoDescription,
    knowledge: TaskKnowledge,
    backend: ChatBackend,
    votes: int = DEFAULT_PREFILTER_VOTES,
    coverage_min: float = DEFAULT_COVERAGE_MIN,
    temperature: float = 0.7,
    addendum_override: str | None = None,
) -> PrefilterResult:
    """Coverage gate plus repeated category voting.

    Videos under the coverage threshold are rejected without any backend
    call.  Otherwise the video is classified ``votes`` times into
    {0, 1, 2}; it is kept only when category 1 is the unique plurality
    winner (ties and unparseable pluralities reject).
    """
    coverage = annotation_coverage(description)
    if coverage < coverage_min:
        return PrefilterResult(
            keep=False,
            coverage=coverage,
            votes=(),
            reason=f"coverage {coverage:.3f} below {coverage_min:g}",
        )
    addendum = load_addendum(description.source_subset, addendum_override)
    rendered = "\n".join(format_event(ev) for ev in description.events)
    prompt = load_prompt("video_classify").format(
        goal=knowledge.goal,
        recipe="\n".join(
            f"{i + 1}. {step}" for i, step in enumerate(knowledge.recipe_steps)
        ),
        description=rendered,
        addendum=_addendum_block(addendum),
    )
    cast: list[Any] = []
    for _ in range(votes):
        response = backend.complete(
            [{"role": "user", "content": prompt}], temperature=temperature
        )
        match = _VOTE_RE.search(response)
        cast.append(int(match.group(1)) if match else None)
    buckets = Counter(cast)
    top = max(buckets.values())
    winners = [k for k, n in buckets.items() if n == top]
    keep = winners == [1]
    if keep:
        reason = f"category 1 majority ({buckets[1]}/{votes})"
    elif len(winners) > 1:
        reason = f"vote tie between {sorted(winners, key=repr)}"
    else:
        reason = f"majority category {winners[0]!r}"
    return PrefilterResult(
        keep=keep, coverage=coverage, votes=tuple(cast), reason=reason
    )


# ---------------------------------------------------------------------------
# dialogue generation


_TURN_RE = re.compile(
    r"^\[(?P<time>[^\]]*)\]\s*(?P<speaker>user|assistant)\s*"
    r"(?:\((?P<labels>[^)]*)\))?\s*:\s*(?P<text>.+?)\s*$",
    re.IGNORECASE,
)

_INTENT_SYNONYMS = {
    "instruction": "instruction",
    "correction": "correction",
    "mistake correction": "correction",
    "mistake_correction": "correction",
    "info_sharing": "info_sharing",
    "info sharing": "info_sharing",
    "information sharing": "info_sharing",
    "information_sharing": "info_sharing",
    "feedback": "feedback",
    "other": "other",
}


def _parse_labels(raw: str | None) -> tuple[str | None, str | None]:
    if not raw:
        return None, None
    intent = initiative = None
    for part in raw.split(","):
        part = part.strip().lower()
        if "=" in part:
            key, _, value = part.partition("=")
            key, value = key.strip(), value.strip()
        else:
            key, value = "", part
        if key == "intent" or (not key and value in _INTENT_SYNONYMS):
            intent = _INTENT_SYNONYMS.get(value, intent)
        elif key == "initiative" or (not key and value in ("responsive", "proactive")):
            initiative = value if value in ("responsive", "proactive") else initiative
    return intent, initiative


def parse_dialogue_lines(
    text: str, chunk_index: int | None = None
) -> "list[dict[str, Any]]":
    """Parse '[t] speaker: text' lines from a model response.

    Lines that do not start with '[' are treated as chatter and skipped;
    lines that look like turns but fail the grammar raise
    UnparseableDialogue.
    """
    from .description import parse_clock

    turns: list[dict[str, Any]] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or not line.startswith("["):
            continue
        match = _TURN_RE.match(line)
        if not match:
            raise UnparseableDialogue(f"malformed turn line {line!r}", chunk_index)
        try:
            at = parse_clock(match.group("time"))
        except ValueError as exc:
            raise UnparseableDialogue(str(exc), chunk_index) from exc
        intent, initiative = _parse_labels(match.group("labels"))
        speaker = match.group("speaker").lower()
        turns.append(
            {
                "at": at,
                "speaker": speaker,
                "text": match.group("text"),
                "intent": intent if speaker == "assistant" else None,
                "initiative": initiative if speaker == "assistant" else None,
            }
        )
    return turns


def _render_turns(turns: Sequence[UtteranceTurn]) -> str:
    if not turns:
        return "(no turns yet)"
    return "\n".join(f"[{t.at:.1f}] {t.speaker}: {t.text}" for t in turns)


def _clamp(value: float, lo: float, hi: float) -> float:
    return min(max(value, lo), hi)


def generate_dialogue(
    description: VideoDescription,
    knowledge: TaskKnowledge,
    profile: UserProfile,
    plan: ChunkPlan,
    backend: ChatBackend,
    session_id: str,
    temperature: float = 0.7,
    addendum_override: str | None = None,
) -> "tuple[DialogueSession, list[dict]]":
    """Generate one session chunk by chunk, then refine the whole dialogue.

    Backend calls: len(plan.chunks) generations + 1 refinement.  Returns the
    session and a list of flag records (timestamps clamped into range).
    """
    addendum = load_addendum(description.source_subset, addendum_override)
    recipe = "\n".join(f"{i + 1}. {s}" for i, s in enumerate(knowledge.recipe_steps))
    flags: list[dict] = []

    goal_turn = UtteranceTurn(at=0.0, speaker="user", text=knowledge.goal)
    turns: list[UtteranceTurn] = [goal_turn]

    for chunk_index, chunk in enumerate(plan.chunks):
        last = chunk_index == len(plan.chunks) - 1
        events = [
            ev
            for ev in description.events
            if chunk.start <= ev.start and (ev.start < chunk.end or last)
        ]
        context = turns[-plan.context_turn_limit :]
        prompt = load_prompt("dialogue_chunk").format(
            profile=profile.description,
            question_rate=f"{profile.question_rate_hint:.0%}",
            goal=knowledge.goal,
            recipe=recipe,
            context_limit=plan.context_turn_limit,
            context=_render_turns(context),
            chunk_start=f"{chunk.start:.1f}",
            chunk_end=f"{chunk.end:.1f}",
            events="\n".join(format_event(ev) for ev in events) or "(no events)",
            addendum=_addendum_block(addendum),
        )
        response = backend.complete(
            [{"role": "user", "content": prompt}], temperature=temperature
        )
        for raw in parse_dialogue_lines(response, chunk_index):
            at = _clamp(raw["at"], chunk.start, chunk.end)
            if at != raw["at"]:
                flags.append(
                    {
                        "flag": "clamped_timestamp",
                        "session_id": session_id,
                        "chunk": chunk_index,
                        "from": raw["at"],
                        "to": at,
                    }
                )
            turns.append(
                UtteranceTurn(
                    at=at,
                    speaker=raw["speaker"],
                    text=raw["text"],
                    intent=raw["intent"],
                    initiative=raw["initiative"],
                )
            )

    refine_prompt = load_prompt("dialogue_refine").format(
        goal=knowledge.goal, dialogue=_render_turns(turns)
    )
    refined = backend.complete(
        [{"role": "user", "content": refine_prompt}], temperature=0.0
    )
    raw_turns = parse_dialogue_lines(refined, None)
    if not raw_turns and len(turns) > 1:
        raise UnparseableDialogue("refinement output contained no turns")

    final: list[UtteranceTurn] = []
    for raw in raw_turns:
        at = _clamp(raw["at"], 0.0, description.duration)
        if at != raw["at"]:
            flags.append(
                {
                    "flag": "clamped_timestamp",
                    "session_id": session_id,
                    "chunk": None,
                    "from": raw["at"],
                    "to": at,
                }
            )
        final.append(
            UtteranceTurn(
                at=at,
                speaker=raw["speaker"],
                text=raw["text"],
                intent=raw["intent"],
                initiative=raw["initiative"],
            )
        )
    if not final or final[0].speaker != "user" or final[0].text != knowledge.goal:
        final.insert(0, goal_turn)
    final.sort(key=lambda t: t.at)

    session = DialogueSession(
        session_id=session_id,
        video_id=description.video_id,
        user_type=profile.kind,
        goal=knowledge.goal,
        knowledge=knowledge,
        turns=tuple(final),
    )
    return session, flags


def annotate_summaries(
    session: DialogueSession,
    backend: ChatBackend,
    max_words: int = SUMMARY_WORD_CAP,
    temperature: float = 0.0,
) -> "tuple[DialogueSession, list[dict]]":
    """Attach a progress summary to every assistant turn (one call each).

    Summaries longer than max_words are truncated at a word boundary and
    flagged.  Sessions without assistant turns issue no calls.
    """
    recipe = ""
    if session.knowledge is not None:
        recipe = "\n".join(
            f"{i + 1}. {s}" for i, s in enumerate(session.knowledge.recipe_steps)
        )
    flags: list[dict] = []
    new_turns: list[UtteranceTurn] = []
    for idx, turn in enumerate(session.turns):
        if turn.speaker != "assistant":
            new_turns.append(turn)
            continue
        prompt = load_prompt("progress_summary").format(
            goal=session.goal,
            recipe=recipe or "(not provided)",
            dialogue=_render_turns(session.turns[: idx + 1]),
        )
        summary = backend.complete(
            [{"role": "user", "content": prompt}], temperature=temperature
        ).strip()
        words = summary.split()
        if len(words) > max_words:
            summary = " ".join(words[:max_words])
            flags.append(
                {
                    "flag": "truncated_summary",
                    "session_id": session.session_id,
                    "turn_index": idx,
                    "words": len(words),
                }
            )
        new_turns.append(replace(turn, progress_summary=summary))
    return replace(session, turns=tuple(new_turns)), flags


def safety_check(session: DialogueSession, backend: ChatBackend) -> "tuple[bool, str]":
    """Classify a session with a safety backend; (flagged, category)."""
    prompt = load_prompt("safety_check").format(dialogue=_render_turns(session.turns))
    response = backend.complete(
        [{"role": "user", "content": prompt}], temperature=0.0
    ).strip()
    first = response.splitlines()[0].strip() if response else ""
    if first.lower().startswith("flagged"):
        category = first.partition(":")[2].strip() or "unspecified"
        return True, category
    return False, ""


# ---------------------------------------------------------------------------
# end-to-end pipeline


@dataclass
class PipelineConfig:
    seed: int = 0
    chunk_minutes: float = DEFAULT_CHUNK_MINUTES
    coverage_min: float = DEFAULT_COVERAGE_MIN
    votes: int = DEFAULT_PREFILTER_VOTES
    recipe_candidates: int = DEFAULT_RECIPE_CANDIDATES
    temperature: float = 0.7
    summarize: bool = False
    eval_video_ids: frozenset = frozenset()
    addenda_overrides: dict = None  # subset -> path

    def __post_init__(self):
        if self.addenda_overrides is None:
            self.addenda_overrides = {}


@dataclass
class PipelineResult:
    train: "list[DialogueSession]"
    val: "list[DialogueSession]"
    test: "list[DialogueSession]"
    audit: "list[dict]"
    failures: "dict[str, str]"


def run_pipeline(
    videos: "list[tuple[VideoDescription, TaskKnowledge | None]]",
    backend: ChatBackend,
    cfg: PipelineConfig | None = None,
    safety_backend: ChatBackend | None = None,
) -> PipelineResult:
    """Run the full synthesis pipeline over a batch of videos."""
    cfg = cfg or PipelineConfig()
    audit: list[dict] = []
    failures: dict[str, str] = {}
    train_pool: list[DialogueSession] = []
    eval_pool: list[DialogueSession] = []

    def note(video_id: str, stage: str, decision: str, reason: str = "", **detail):
        record = {
            "video_id": video_id,
            "stage": stage,
            "decision": decision,
            "reason": reason,
        }
        record.update(detail)
        audit.append(record)

    for description, provided_knowledge in videos:
        video_id = description.video_id
        override = cfg.addenda_overrides.get(description.source_subset)
        try:
            coverage = annotation_coverage(description)
            if coverage < cfg.coverage_min:
                note(
                    video_id,
                    "prefilter",
                    "rejected",
                    f"coverage {coverage:.3f} below {cfg.coverage_min:g}",
                    coverage=coverage,
                )
                continue

            if provided_knowledge is not None:
                knowledge = provided_knowledge
                note(video_id, "recipe", "skipped", "knowledge provided by dataset")
            else:
                knowledge = generate_recipe(
                    description,
                    backend,
                    n_candidates=cfg.recipe_candidates,
                    temperature=cfg.temperature,
                    addendum_override=override,
                )
                note(
                    video_id,
                    "recipe",
                    "generated",
                    f"{len(knowledge.recipe_steps)} steps",
                )

            verdict = prefilter_video(
                description,
                knowledge,
                backend,
                votes=cfg.votes,
                coverage_min=cfg.coverage_min,
                temperature=cfg.temperature,
                addendum_override=override,
            )
            note(
                video_id,
                "prefilter",
                "kept" if verdict.keep else "rejected",
                verdict.reason,
                coverage=verdict.coverage,
                votes=list(verdict.votes),
            )
            if not verdict.keep:
                continue

            plan = build_generation_plan(video_id, cfg.seed)
            chunk_plan = plan_chunks(description, cfg.chunk_minutes)
            sessions: list[DialogueSession] = []
            for planned in plan.sessions:
                session, flags = generate_dialogue(
                    description,
                    knowledge,
                    PROFILES[planned.user_type],
                    chunk_plan,
                    backend,
                    session_id=planned.session_id,
                    temperature=cfg.temperature,
                    addendum_override=override,
                )
                if cfg.summarize:
                    session, summary_flags = annotate_summaries(session, backend)
                    flags.extend(summary_flags)
                for flag in flags:
                    note(
                        video_id,
                        "generation",
                        "flagged",
                        flag["flag"],
                        **{k: v for k, v in flag.items() if k != "flag"},
                    )
                if safety_backend is not None:
                    flagged, category = safety_check(session, safety_backend)
                    note(
                        video_id,
                        "safety",
                        "flagged" if flagged else "clear",
                        category,
                        session_id=session.session_id,
                    )
                scored = replace(
                    session, quality=score_alignment(description, session)
                )
                note(
                    video_id,
                    "quality",
                    "scored",
                    f"score {scored.quality.score:g}",
                    session_id=scored.session_id,
                    score=scored.quality.score,
                )
                sessions.append(scored)

            if video_id in cfg.eval_video_ids:
                eval_pool.extend(sessions)
            else:
                train_pool.extend(sessions)
        except ToolkitError as exc:
            failures[video_id] = f"{type(exc).__name__}: {exc}"
            note(video_id, "pipeline", "failed", str(exc))

    train, dropped = filter_train(train_pool) if train_pool else ([], [])
    for record in dropped:
        note(record.video_id, "filter", "dropped", record.reason, session_id=record.session_id)
    for session in train:
        note(session.video_id, "filter", "kept", "", session_id=session.session_id)

    val: list[DialogueSession] = []
    test: list[DialogueSession] = []
    if eval_pool:
        val, test, removed = split_eval(eval_pool)
        for record in removed:
            note(record.video_id, "split", "removed", record.reason, session_id=record.session_id)
        for session in val:
            note(session.video_id, "split", "val", "", session_id=session.session_id)
        for session in test:
            note(session.video_id, "split", "test", "", session_id=session.session_id)

    train = [replace(s, split="train") for s in train]
    return PipelineResult(
        train=train, val=val, test=test, audit=audit, failures=failures
    )
