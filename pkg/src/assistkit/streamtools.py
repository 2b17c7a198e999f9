"""Deterministic training-time stream utilities.

Three tools for turning a frame-level video timeline plus dialogue turns
into model-ready training inputs:

* negative-frame sub-sampling masks -- keep every positive (speak) frame and
  a uniform rho-fraction of the silent frames, resampled per epoch;
* token budgeting and chunking for iterative progress summarization -- pack
  frames and their attached turns greedily into chunks that fit the context
  window with a reserved slot for a carried-forward summary;
* a drop-middle baseline that keeps the head and the most recent tail of a
  token sequence, aligned to group boundaries.

Everything here is a pure function of its inputs; per-timeline parallelism
is safe.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .corpus import UtteranceTurn, _dumps, _iter_jsonl, _require, check_seconds
from .errors import ToolkitError

DEFAULT_FPS = 2.0
DEFAULT_CONTEXT_LIMIT = 4096
DEFAULT_SUMMARY_RESERVE = 256
DEFAULT_HEAD_KEEP = 512
TOKENS_PER_FRAME_CHOICES = (1, 5, 10)

CONTINUE = "continue"
SUMMARIZE_NOW = "summarize_now"

_TIME_TOL = 1e-9


class OversizedTurn(ToolkitError):
    """A single frame group (frame plus attached turns) exceeds the budget."""


def whitespace_tokenizer(text: str) -> int:
    """Token count used in tests: whitespace-separated words."""
    return len(text.split())


@dataclass(frozen=True, slots=True)
class Frame:
    index: int
    at: float
    positive: bool
    text: str | None = None


@dataclass(frozen=True)
class FrameTimeline:
    """Frames extracted at a fixed rate; each is a speak/silence decision."""

    video_id: str
    frames: tuple[Frame, ...]
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be > 0")
        for i, frame in enumerate(self.frames):
            if frame.index != i:
                raise ValueError(
                    f"frame indices must be contiguous from 0, got {frame.index} at {i}"
                )
            if abs(frame.at - i / self.fps) > _TIME_TOL:
                raise ValueError(
                    f"frame {i}: at={frame.at} does not equal index/fps={i / self.fps}"
                )

    @classmethod
    def from_flags(
        cls,
        video_id: str,
        positives: Iterable[bool],
        fps: float = DEFAULT_FPS,
        texts: Sequence[str | None] | None = None,
    ) -> "FrameTimeline":
        frames = tuple(
            Frame(
                index=i,
                at=i / fps,
                positive=bool(flag),
                text=texts[i] if texts is not None else None,
            )
            for i, flag in enumerate(positives)
        )
        return cls(video_id=video_id, frames=frames, fps=fps)

    def positive_indices(self) -> tuple[int, ...]:
        return tuple(f.index for f in self.frames if f.positive)

    def negative_indices(self) -> tuple[int, ...]:
        return tuple(f.index for f in self.frames if not f.positive)


@dataclass(frozen=True)
class TokenBudget:
    """Context accounting: fixed limit, per-frame cost, pluggable tokenizer."""

    context_limit: int = DEFAULT_CONTEXT_LIMIT
    tokens_per_frame: int = 1
    summary_reserve: int = DEFAULT_SUMMARY_RESERVE
    tokenizer: Callable[[str], int] = whitespace_tokenizer

    def __post_init__(self):
        if self.tokens_per_frame not in TOKENS_PER_FRAME_CHOICES:
            raise ValueError(
                f"tokens_per_frame must be one of {TOKENS_PER_FRAME_CHOICES}"
            )
        if self.summary_reserve < 0:
            raise ValueError("summary_reserve must be >= 0")
        if self.context_limit <= self.tokens_per_frame + self.summary_reserve:
            raise ValueError(
                "context_limit must exceed tokens_per_frame + summary_reserve"
            )

    @property
    def chunk_capacity(self) -> int:
        return self.context_limit - self.summary_reserve


# ---------------------------------------------------------------------------
# negative-frame sub-sampling


@dataclass(frozen=True)
class NfsMask:
    """Training mask: every positive frame plus a sampled slice of negatives."""

    video_id: str
    epoch: int
    rho: float
    kept_indices: tuple[int, ...]

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must be in (0, 1]")
        if list(self.kept_indices) != sorted(set(self.kept_indices)):
            raise ValueError("kept_indices must be sorted and unique")


def nfs_mask(timeline: FrameTimeline, rho: float, seed: int, epoch: int) -> NfsMask:
    """Keep all positives and exactly round(rho * n_neg) negatives.

    The negative sample is uniform without replacement and keyed by
    (seed, epoch), so each epoch resamples while staying reproducible.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must be in (0, 1]")
    positives = timeline.positive_indices()
    negatives = timeline.negative_indices()
    n_keep = round(rho * len(negatives))
    rng = np.random.default_rng([seed, epoch])
    chosen = rng.choice(len(negatives), size=n_keep, replace=False) if n_keep else []
    kept = sorted(set(positives) | {negatives[i] for i in chosen})
    return NfsMask(
        video_id=timeline.video_id,
        epoch=epoch,
        rho=rho,
        kept_indices=tuple(kept),
    )


# ---------------------------------------------------------------------------
# iterative-progress-summarization budgeting


@dataclass(frozen=True)
class TrainingChunk:
    video_id: str
    chunk_index: int
    frame_range: tuple[int, int]  # [start, end) frame indices
    turn_ids: tuple[int, ...]  # indices into the turn sequence
    token_total: int
    has_summary_slot: bool


def _turn_frame(turn: UtteranceTurn, timeline: FrameTimeline) -> int:
    """Frame a turn attaches to: floor(at * fps), clamped to the last frame."""
    idx = int(turn.at * timeline.fps)
    return min(idx, len(timeline.frames) - 1)


def ips_chunk(
    timeline: FrameTimeline,
    turns: Sequence[UtteranceTurn],
    budget: TokenBudget,
) -> list[TrainingChunk]:
    """Greedily pack frames (and their turns) into context-sized chunks.

    Each frame forms an indivisible group of tokens_per_frame plus the
    tokenized text of every turn attached to it, so chunks split only at
    frame boundaries and never mid-turn.  Every chunk must fit in
    context_limit - summary_reserve; chunks after the first carry a summary
    slot in the reserved space.
    """
    if not timeline.frames:
        return []
    turns_by_frame: dict[int, list[int]] = {}
    for turn_id, turn in enumerate(turns):
        turns_by_frame.setdefault(_turn_frame(turn, timeline), []).append(turn_id)

    capacity = budget.chunk_capacity
    chunks: list[TrainingChunk] = []
    start = 0
    running = 0
    chunk_turns: list[int] = []

    def close(end: int):
        chunks.append(
            TrainingChunk(
                video_id=timeline.video_id,
                chunk_index=len(chunks),
                frame_range=(start, end),
                turn_ids=tuple(chunk_turns),
                token_total=running,
                has_summary_slot=len(chunks) > 0,
            )
        )

    for frame in timeline.frames:
        attached = turns_by_frame.get(frame.index, [])
        group = budget.tokens_per_frame + sum(
            budget.tokenizer(turns[t].text) for t in attached
        )
        if group > capacity:
            raise OversizedTurn(
                f"frame {frame.index} with {len(attached)} turn(s) needs "
                f"{group} tokens but chunks hold at most {capacity}"
            )
        if running + group > capacity:
            close(frame.index)
            start, running, chunk_turns = frame.index, 0, []
        running += group
        chunk_turns.extend(attached)
    close(len(timeline.frames))
    return chunks


def ips_trigger(live_token_count: int, next_increment: int, budget: TokenBudget) -> str:
    """Decide whether to summarize before appending the next increment."""
    if live_token_count > budget.context_limit:
        raise ValueError("live_token_count already exceeds the context limit")
    if live_token_count + next_increment > budget.chunk_capacity:
        return SUMMARIZE_NOW
    return CONTINUE


# ---------------------------------------------------------------------------
# drop-middle baseline


@dataclass(frozen=True, slots=True)
class TokenGroup:
    """An indivisible run of tokens (one frame's tokens, one turn, ...)."""

    kind: str
    tokens: int

    def __post_init__(self):
        if self.tokens < 0:
            raise ValueError("tokens must be >= 0")


def drop_middle(
    token_sequence: Sequence[TokenGroup],
    budget: TokenBudget,
    head_keep: int = DEFAULT_HEAD_KEEP,
) -> tuple[TokenGroup, ...]:
    """Fit a sequence into the context limit by dropping middle groups.

    Keeps the longest whole-group prefix of at most head_keep tokens and
    the longest whole-group suffix that still fits in the remaining
    context_limit budget.  Sequences already within the limit pass through
    unchanged.
    """
    if head_keep >= budget.context_limit:
        raise ValueError("head_keep must be < context_limit")
    groups = tuple(token_sequence)
    total = sum(g.tokens for g in groups)
    if total <= budget.context_limit:
        return groups

    head_end = 0
    head_total = 0
    for group in groups:
        if head_total + group.tokens > head_keep:
            break
        head_total += group.tokens
        head_end += 1

    tail_budget = budget.context_limit - head_total
    tail_start = len(groups)
    tail_total = 0
    for i in range(len(groups) - 1, head_end - 1, -1):
        if tail_total + groups[i].tokens > tail_budget:
            break
        tail_total += groups[i].tokens
        tail_start = i
    return groups[:head_end] + groups[tail_start:]


# ---------------------------------------------------------------------------
# serialization


def timeline_to_dict(timeline: FrameTimeline) -> dict:
    frames = []
    for frame in timeline.frames:
        rec: dict = {
            "index": frame.index,
            "at": frame.at,
            "positive": frame.positive,
        }
        if frame.text is not None:
            rec["text"] = frame.text
        frames.append(rec)
    return {"video_id": timeline.video_id, "fps": timeline.fps, "frames": frames}


def timeline_from_dict(obj: dict, line_no: int | None = None) -> FrameTimeline:
    frames = tuple(
        Frame(
            index=int(_require(rec, "index", line_no or 0)),
            at=check_seconds(_require(rec, "at", line_no or 0), "frame time"),
            positive=bool(_require(rec, "positive", line_no or 0)),
            text=rec.get("text"),
        )
        for rec in _require(obj, "frames", line_no or 0)
    )
    return FrameTimeline(
        video_id=_require(obj, "video_id", line_no or 0),
        frames=frames,
        fps=float(obj.get("fps", DEFAULT_FPS)),
    )


def load_timelines(path: str | os.PathLike) -> list[FrameTimeline]:
    return [timeline_from_dict(obj, line_no) for line_no, obj in _iter_jsonl(path)]


def save_timelines(
    timelines: Iterable[FrameTimeline], path: str | os.PathLike
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for timeline in timelines:
            fh.write(_dumps(timeline_to_dict(timeline)) + "\n")


def mask_to_dict(mask: NfsMask) -> dict:
    return {
        "video_id": mask.video_id,
        "epoch": mask.epoch,
        "rho": mask.rho,
        "kept_indices": list(mask.kept_indices),
    }


def mask_from_dict(obj: dict, line_no: int | None = None) -> NfsMask:
    return NfsMask(
        video_id=_require(obj, "video_id", line_no or 0),
        epoch=int(_require(obj, "epoch", line_no or 0)),
        rho=float(_require(obj, "rho", line_no or 0)),
        kept_indices=tuple(int(i) for i in _require(obj, "kept_indices", line_no or 0)),
    )


def save_masks(masks: Iterable[NfsMask], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for mask in masks:
            fh.write(_dumps(mask_to_dict(mask)) + "\n")


def load_masks(path: str | os.PathLike) -> list[NfsMask]:
    return [mask_from_dict(obj, line_no) for line_no, obj in _iter_jsonl(path)]


def chunk_to_dict(chunk: TrainingChunk) -> dict:
    return {
        "video_id": chunk.video_id,
        "chunk_index": chunk.chunk_index,
        "frame_range": list(chunk.frame_range),
        "turn_ids": list(chunk.turn_ids),
        "token_total": chunk.token_total,
        "has_summary_slot": chunk.has_summary_slot,
    }


def chunk_from_dict(obj: dict, line_no: int | None = None) -> TrainingChunk:
    start, end = _require(obj, "frame_range", line_no or 0)
    return TrainingChunk(
        video_id=_require(obj, "video_id", line_no or 0),
        chunk_index=int(_require(obj, "chunk_index", line_no or 0)),
        frame_range=(int(start), int(end)),
        turn_ids=tuple(int(i) for i in _require(obj, "turn_ids", line_no or 0)),
        token_total=int(_require(obj, "token_total", line_no or 0)),
        has_summary_slot=bool(_require(obj, "has_summary_slot", line_no or 0)),
    )


def save_chunks(chunks: Iterable[TrainingChunk], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for chunk in chunks:
            fh.write(_dumps(chunk_to_dict(chunk)) + "\n")


def load_chunks(path: str | os.PathLike) -> list[TrainingChunk]:
    return [chunk_from_dict(obj, line_no) for line_no, obj in _iter_jsonl(path)]
