"""Parser and printer for timestamped video description text.

Grammar (line oriented):

    line      := indent '[' when ']' ' ' payload
    when      := clock | clock '-' clock
    clock     := SECONDS | MM ':' SS        (SS < 60, fractions allowed)
    payload   := 'user:' text | 'assistant:' text
               | 'step:' text | 'mistake:' text | 'correction:' text
               | 'note:' text | text

Indentation is two spaces per nesting level and only meaningful for plain
action lines.  An action line is a coarse action when the next action line in
time order is more deeply indented, otherwise a fine action.  Transcript,
step, mistake and note lines are transparent to that hierarchy and always
carry depth 0.  Blank lines are ignored.

format_description() is the inverse: parse(format(d)) == d for every
description this parser can produce (times quantized to 0.1 s).
"""

from __future__ import annotations

import logging
import re

from .corpus import (
    SUBSETS,
    AnnotationEvent,
    TimeSpan,
    VideoDescription,
)
from .errors import ToolkitError

log = logging.getLogger(__name__)


class MalformedTimestamp(ToolkitError):
    """A description line has an unparseable timestamp bracket or payload."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class NonMonotonicSpan(ToolkitError):
    """A time span ends before it starts."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class EmptyDescription(ToolkitError):
    """No valid annotation events were found in the input."""


_SECONDS_RE = re.compile(r"^\d+(?:\.\d+)?$")
_CLOCK_RE = re.compile(r"^(\d+):([0-5]?\d(?:\.\d+)?)$")

_PREFIX_KINDS = (
    ("user:", "transcript_user"),
    ("assistant:", "transcript_assistant"),
    ("step:", "step_label"),
    ("mistake:", "mistake_correction"),
    ("correction:", "mistake_correction"),
    ("note:", "other"),
)

_KIND_PREFIX = {
    "transcript_user": "user: ",
    "transcript_assistant": "assistant: ",
    "step_label": "step: ",
    "mistake_correction": "mistake: ",
    "other": "note: ",
}


def parse_clock(token: str) -> float:
    """Parse '12', '12.5' or '3:05.5' into seconds."""
    token = token.strip()
    if _SECONDS_RE.match(token):
        return float(token)
    m = _CLOCK_RE.match(token)
    if m:
        return float(m.group(1)) * 60.0 + float(m.group(2))
    raise ValueError(f"unparseable clock value {token!r}")


class LineIssue:
    """A grammar violation on one input line (lenient parse mode)."""

    __slots__ = ("line_no", "line", "reason")

    def __init__(self, line_no: int, line: str, reason: str):
        self.line_no = line_no
        self.line = line
        self.reason = reason

    def __repr__(self):
        return f"LineIssue(line_no={self.line_no}, reason={self.reason!r})"


def parse_description(
    raw_text: str,
    video_id: str,
    subset: str = "synthetic",
    *,
    issues: list[LineIssue] | None = None,
) -> VideoDescription:
    """Parse description text into a VideoDescription.

    Grammar violations raise MalformedTimestamp / NonMonotonicSpan with the
    offending line number.  When ``issues`` is a list, bad lines are recorded
    there and skipped instead, so one stray line does not discard a whole
    file.  Inputs with no valid events raise EmptyDescription either way.

    Unknown subset names are accepted but recorded as 'synthetic'.
    """
    if subset not in SUBSETS:
        log.warning("unknown subset %r for video %s; treating as synthetic", subset, video_id)
        subset = "synthetic"

    def bad(exc_type, line_no: int, line: str, reason: str):
        if issues is not None:
            issues.append(LineIssue(line_no, line, reason))
            return None
        raise exc_type(reason, line_no)

    # (depth, when, kind-or-None, text); None kind marks a plain action line
    # whose coarse/fine classification needs the lookahead pass below.
    rows: list[tuple[int, float | TimeSpan, str | None, str]] = []
    for line_no, line in enumerate(raw_text.splitlines(), start=1):
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip(" "))
        depth = indent // 2
        stripped = line.strip()
        if not stripped.startswith("["):
            bad(MalformedTimestamp, line_no, line, "line does not start with a timestamp bracket")
            continue
        close = stripped.find("]")
        if close < 0:
            bad(MalformedTimestamp, line_no, line, "unclosed timestamp bracket")
            continue
        token = stripped[1:close].strip()
        payload = stripped[close + 1 :].strip()
        if not payload:
            bad(MalformedTimestamp, line_no, line, "no description text after timestamp")
            continue
        parts = token.split("-")
        try:
            if len(parts) == 1:
                when: float | TimeSpan = parse_clock(parts[0])
            elif len(parts) == 2:
                start = parse_clock(parts[0])
                end = parse_clock(parts[1])
                if end < start:
                    bad(
                        NonMonotonicSpan,
                        line_no,
                        line,
                        f"span end {end} before start {start}",
                    )
                    continue
                when = TimeSpan(start, end)
            else:
                raise ValueError(f"unparseable time range {token!r}")
        except ValueError as exc:
            bad(MalformedTimestamp, line_no, line, str(exc))
            continue
        try:
            prefixed = _payload_kind(payload)
        except ValueError as exc:
            bad(MalformedTimestamp, line_no, line, str(exc))
            continue
        if prefixed is None:
            rows.append((depth, when, None, payload))
        else:
            rows.append((0, when, prefixed[0], prefixed[1]))

    if not rows:
        raise EmptyDescription(f"no valid annotation events for video {video_id!r}")

    # Classify in time order so printing and re-parsing is stable: a plain
    # action line is coarse when the next plain action line sits deeper;
    # prefixed lines are transparent to the hierarchy.
    rows.sort(key=lambda row: row[1].start if isinstance(row[1], TimeSpan) else row[1])
    action_rows = [i for i, row in enumerate(rows) if row[2] is None]
    next_action_depth: dict[int, int | None] = {}
    for pos, row_idx in enumerate(action_rows):
        nxt = action_rows[pos + 1] if pos + 1 < len(action_rows) else None
        next_action_depth[row_idx] = rows[nxt][0] if nxt is not None else None

    events: list[AnnotationEvent] = []
    for i, (depth, when, kind, text) in enumerate(rows):
        if kind is None:
            deeper = next_action_depth[i]
            kind = "coarse_action" if deeper is not None and deeper > depth else "fine_action"
            events.append(AnnotationEvent(when=when, text=text, kind=kind, depth=depth))
        else:
            events.append(AnnotationEvent(when=when, text=text, kind=kind, depth=0))
    duration = max(ev.end for ev in events)
    return VideoDescription(
        video_id=video_id, source_subset=subset, duration=duration, events=tuple(events)
    )


def _payload_kind(payload: str) -> tuple[str, str] | None:
    lowered = payload.lower()
    for prefix, kind in _PREFIX_KINDS:
        if lowered.startswith(prefix):
            text = payload[len(prefix) :].strip()
            if not text:
                raise ValueError(f"empty text after {prefix!r} prefix")
            return kind, text
    return None


def format_seconds(value: float) -> str:
    return f"{value:.1f}"


def format_when(when: float | TimeSpan) -> str:
    if isinstance(when, TimeSpan):
        return f"[{format_seconds(when.start)}-{format_seconds(when.end)}]"
    return f"[{format_seconds(when)}]"


def format_event(ev: AnnotationEvent) -> str:
    """Render one event as a description line."""
    prefix = _KIND_PREFIX.get(ev.kind, "")
    indent = "  " * ev.depth if ev.kind in ("coarse_action", "fine_action") else ""
    return f"{indent}{format_when(ev.when)} {prefix}{ev.text}"


def format_description(desc: VideoDescription) -> str:
    """Render a description back to its line format (see module docstring)."""
    return "\n".join(format_event(ev) for ev in desc.events) + "\n"
