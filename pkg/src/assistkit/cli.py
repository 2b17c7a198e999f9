"""Command-line interface.

One executable, fourteen subcommands covering the full workflow: parsing
raw annotations, validating and curating dialogue corpora, synthesizing
sessions, matching and judging predictions, threshold calibration, training
stream utilities, and canonical report emission.

Every option can also come from a config file (``--config``, dotted keys,
see assistkit.config) or a ``--set key=value`` override; an option given
explicitly on the command line wins.  Credentials are environment-only:
ASSIST_EVAL_ENDPOINT, ASSIST_EVAL_MODEL, ASSIST_EVAL_KEY.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .backends import ENV_ENDPOINT, ENV_KEY, ENV_MODEL, backend_from_spec
from .config import apply_overrides, load_config
from .corpus import (
    TaskKnowledge,
    _dumps,
    _iter_jsonl,
    load_descriptions,
    load_predictions,
    load_sessions,
    save_descriptions,
    save_predictions,
    save_sessions,
    subset_of,
    validate_session,
)
from .description import parse_description
from .embedding import HashedBowEmbedder, RemoteEmbedder
from .errors import ConfigError, ToolkitError
from .judge import DEFAULT_N_RUNS, DEFAULT_TEMPERATURE, judge_corpus
from .matching import MatchConfig, dialogue_window_from_sessions, evaluate_streams
from .quality import filter_train, score_alignment, split_eval
from .reporting import (
    canonical_json,
    combined_payload,
    judge_payload,
    match_payload,
    render_csv,
    render_markdown,
    write_text,
)
from .streamtools import (
    TokenBudget,
    TokenGroup,
    drop_middle,
    ips_chunk,
    load_timelines,
    nfs_mask,
    save_chunks,
    save_masks,
)
from .synthesis import PipelineConfig, run_pipeline
from .thresholds import DEFAULT_GRID, rethreshold_stream, sweep_from_dump, sweep_thresholds

NARRATION_WINDOW = 2.5  # seconds, symmetric default for narration corpora


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pick(args, key: str, value, default):
    """Command-line value, else config-file value, else the default."""
    if value != default:
        return value
    return args.run_config.get(key, default)


def _load_subset_map(path: str | None) -> "dict[str, str] | None":
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as fh:
        mapping = json.load(fh)
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path}: subset map must be a JSON object")
    return {str(k): str(v) for k, v in mapping.items()}


def _match_config(args, sessions) -> MatchConfig:
    p_exponent = _pick(args, "match.p_exponent", args.p_exponent, 1.5)
    sim_threshold = _pick(args, "match.sim_threshold", args.sim_threshold, 0.5)
    window_early = _pick(args, "match.window_early", args.window_early, NARRATION_WINDOW)
    window_late = _pick(args, "match.window_late", args.window_late, NARRATION_WINDOW)
    temporal_weight = _pick(args, "match.temporal_weight", args.temporal_weight, 0.1)
    profile = _pick(args, "match.profile", args.profile, "narration")
    if profile == "dialogue":
        window = dialogue_window_from_sessions(sessions)
        return MatchConfig.dialogue_profile(
            window,
            p_exponent=p_exponent,
            sim_threshold=sim_threshold,
            temporal_weight=temporal_weight,
        )
    return MatchConfig(
        p_exponent=p_exponent,
        sim_threshold=sim_threshold,
        window_early=window_early,
        window_late=window_late,
        temporal_weight=temporal_weight,
    )


def _provider(args):
    name = _pick(args, "embed.provider", args.embedder, "hashed-bow")
    dim = _pick(args, "embed.dim", args.dim, 256)
    if name == "hashed-bow":
        return HashedBowEmbedder(dim=dim)
    if name == "remote":
        endpoint = os.environ.get(ENV_ENDPOINT)
        model = os.environ.get(ENV_MODEL)
        if not endpoint or not model:
            raise ConfigError(
                f"remote embedder needs {ENV_ENDPOINT} and {ENV_MODEL} set"
            )
        return RemoteEmbedder(endpoint, model, os.environ.get(ENV_KEY, ""))
    raise ConfigError(f"unknown embedder {name!r}")


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_parse(args) -> int:
    out = _out_dir(args)
    descriptions = []
    for path in args.inputs:
        stem = Path(path).stem
        video_id = args.video_id if (args.video_id and len(args.inputs) == 1) else stem
        subset = args.subset or subset_of(video_id)
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        issues = [] if args.lenient else None
        desc = parse_description(text, video_id, subset, issues=issues)
        descriptions.append(desc)
        skipped = f", {len(issues)} line(s) skipped" if issues else ""
        print(
            f"parsed {video_id}: {len(desc.events)} events, "
            f"duration {desc.duration:g}s{skipped}"
        )
        if issues:
            for issue in issues:
                print(f"  line {issue.line_no}: {issue.reason}", file=sys.stderr)
    save_descriptions(descriptions, out / "descriptions.jsonl")
    print(f"wrote {out / 'descriptions.jsonl'}")
    return 0


def cmd_validate(args) -> int:
    sessions = load_sessions(args.sessions)
    bad = 0
    for session in sessions:
        for violation in validate_session(session):
            bad += 1
            print(f"{session.session_id}: {violation.code}: {violation.message}")
    if bad:
        print(f"{bad} violation(s) in {len(sessions)} session(s)")
        return 1
    print(f"OK ({len(sessions)} sessions)")
    return 0


def cmd_score_quality(args) -> int:
    out = _out_dir(args)
    sessions = load_sessions(args.sessions)
    by_video = {d.video_id: d for d in load_descriptions(args.descriptions)}
    scored = []
    for session in sessions:
        if session.video_id not in by_video:
            raise ToolkitError(f"no description for video {session.video_id}")
        quality = score_alignment(
            by_video[session.video_id], session, turn_times=args.turn_times
        )
        scored.append(replace(session, quality=quality))
        print(f"{session.session_id}: score {quality.score:.3f}")
    save_sessions(scored, out / "scored.jsonl")
    print(f"wrote {out / 'scored.jsonl'} ({len(scored)} sessions)")
    return 0


def cmd_filter(args) -> int:
    out = _out_dir(args)
    kept, dropped = filter_train(load_sessions(args.sessions))
    save_sessions(kept, out / "train.jsonl")
    with open(out / "dropped.jsonl", "w", encoding="utf-8") as fh:
        for record in dropped:
            fh.write(
                _dumps(
                    {
                        "session_id": record.session_id,
                        "video_id": record.video_id,
                        "reason": record.reason,
                    }
                )
                + "\n"
            )
    print(f"kept {len(kept)}, dropped {len(dropped)}")
    return 0


def cmd_split(args) -> int:
    out = _out_dir(args)
    val, test, removed = split_eval(load_sessions(args.sessions))
    save_sessions(val, out / "val.jsonl")
    save_sessions(test, out / "test.jsonl")
    with open(out / "removed.jsonl", "w", encoding="utf-8") as fh:
        for record in removed:
            fh.write(
                _dumps(
                    {
                        "session_id": record.session_id,
                        "video_id": record.video_id,
                        "reason": record.reason,
                    }
                )
                + "\n"
            )
    print(f"val {len(val)}, test {len(test)}, removed {len(removed)}")
    return 0


def _load_knowledge(path: str | None) -> "dict[str, TaskKnowledge]":
    if path is None:
        return {}
    knowledge = {}
    for line_no, obj in _iter_jsonl(path):
        knowledge[obj["video_id"]] = TaskKnowledge(
            goal=obj["goal"], recipe_steps=tuple(obj["recipe_steps"])
        )
    return knowledge


def cmd_synth(args) -> int:
    out = _out_dir(args)
    descriptions = load_descriptions(args.descriptions)
    knowledge = _load_knowledge(args.knowledge)
    videos = [(d, knowledge.get(d.video_id)) for d in descriptions]
    backend = backend_from_spec(_pick(args, "synth.backend", args.backend, None))
    safety = (
        backend_from_spec(args.safety_backend) if args.safety_backend else None
    )
    eval_ids = frozenset(
        v for v in (args.eval_videos or "").split(",") if v
    )
    cfg = PipelineConfig(
        seed=args.seed,
        chunk_minutes=_pick(args, "synth.chunk_minutes", args.chunk_minutes, 5.0),
        coverage_min=_pick(args, "synth.coverage_min", args.coverage_min, 0.5),
        votes=_pick(args, "synth.votes", args.votes, 10),
        recipe_candidates=_pick(args, "synth.candidates", args.candidates, 10),
        temperature=_pick(args, "synth.temperature", args.temperature, 0.7),
        summarize=_pick(args, "synth.summarize", args.summarize, False),
        eval_video_ids=eval_ids,
    )
    result = run_pipeline(videos, backend, cfg, safety_backend=safety)
    save_sessions(result.train, out / "train.jsonl")
    save_sessions(result.val, out / "val.jsonl")
    save_sessions(result.test, out / "test.jsonl")
    with open(out / "audit.jsonl", "w", encoding="utf-8") as fh:
        for record in result.audit:
            fh.write(_dumps(record) + "\n")
    write_text(out / "failures.json", canonical_json(dict(sorted(result.failures.items()))))
    print(
        f"train {len(result.train)}, val {len(result.val)}, test {len(result.test)}, "
        f"failures {len(result.failures)}"
    )
    return 0


def cmd_eval_match(args) -> int:
    out = _out_dir(args)
    predictions = load_predictions(args.predictions)
    sessions = load_sessions(args.sessions)
    cfg = _match_config(args, sessions)
    provider = _provider(args)
    subset_map = _load_subset_map(args.subset_map)
    report = evaluate_streams(
        predictions, sessions, cfg, provider, jobs=args.jobs, subset_map=subset_map
    )
    payload = match_payload(
        report, cfg, provider.name, knowledge_conditioned=args.knowledge_conditioned
    )
    write_text(out / "match.json", canonical_json(payload))
    with open(out / "pairs.jsonl", "w", encoding="utf-8") as fh:
        for vid in report.videos():
            for pair in report.per_video[vid].pairs:
                fh.write(
                    _dumps(
                        {
                            "video_id": vid,
                            "pred_index": pair.pred_index,
                            "ref_index": pair.ref_index,
                            "similarity": pair.similarity,
                            "time_delta": pair.time_delta,
                        }
                    )
                    + "\n"
                )
    overall = report.overall()
    print(
        f"precision {100 * overall.precision:.2f}%  "
        f"recall {100 * overall.recall:.2f}%  f1 {100 * overall.f1:.2f}%  "
        f"({overall.n_videos} videos)"
    )
    print(f"wrote {out / 'match.json'}")
    return 0


def cmd_eval_judge(args) -> int:
    out = _out_dir(args)
    predictions = load_predictions(args.predictions)
    sessions = load_sessions(args.sessions)
    by_ref = {s.video_id: s for s in sessions}
    missing = sorted(p.video_id for p in predictions if p.video_id not in by_ref)
    if missing:
        raise ToolkitError(f"no reference session for: {missing}")
    pairs = [(p, by_ref[p.video_id]) for p in predictions]
    backend = backend_from_spec(_pick(args, "judge.backend", args.backend, None))
    n_runs = _pick(args, "judge.n_runs", args.n_runs, DEFAULT_N_RUNS)
    temperature = _pick(args, "judge.temperature", args.temperature, DEFAULT_TEMPERATURE)
    report = judge_corpus(
        pairs,
        backend,
        concurrency_limit=_pick(args, "judge.concurrency", args.concurrency, 4),
        subset_map=_load_subset_map(args.subset_map),
        n_runs=n_runs,
        temperature=temperature,
        rng=random.Random(args.seed),
    )
    payload = judge_payload(report, backend.model_name, n_runs, temperature)
    write_text(out / "judge.json", canonical_json(payload))
    overall = report.overall()
    if overall:
        print(
            "  ".join(f"{dim} {value:.2f}" for dim, value in overall.items())
            + f"  ({len(report.per_video)} videos, {len(report.failures)} failures)"
        )
    else:
        print(f"no videos judged ({len(report.failures)} failures)")
    print(f"wrote {out / 'judge.json'}")
    return 0


def cmd_apply_threshold(args) -> int:
    out = _out_dir(args)
    streams = load_predictions(args.frames)
    thresholded = [
        rethreshold_stream(s, args.theta, require_text=not args.allow_missing_text)
        for s in streams
    ]
    save_predictions(thresholded, out / "predictions.jsonl")
    total = sum(len(s.utterances) for s in thresholded)
    print(
        f"theta {args.theta:g}: {total} utterance(s) across "
        f"{len(thresholded)} video(s)"
    )
    print(f"wrote {out / 'predictions.jsonl'}")
    return 0


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    sessions = load_sessions(args.sessions)
    cfg = _match_config(args, sessions)
    provider = _provider(args)
    subset_map = _load_subset_map(args.subset_map)
    if args.per_theta and args.frames:
        raise ConfigError("give either --per-theta runs or one --frames dump, not both")
    if args.per_theta:
        runs_by_theta = {}
        for item in args.per_theta:
            if "=" not in item:
                raise ConfigError(f"--per-theta expects THETA=PATH, got {item!r}")
            theta, _, path = item.partition("=")
            runs_by_theta[float(theta)] = load_predictions(path)
        sweep = sweep_thresholds(
            runs_by_theta, sessions, cfg, provider, jobs=args.jobs, subset_map=subset_map
        )
    elif args.frames:
        raw_grid = _pick(args, "sweep.grid", args.grid, None)
        if raw_grid is None:
            grid = DEFAULT_GRID
        elif isinstance(raw_grid, str):
            grid = tuple(float(x) for x in raw_grid.split(","))
        else:
            grid = tuple(float(x) for x in raw_grid)
        sweep = sweep_from_dump(
            load_predictions(args.frames),
            grid,
            sessions,
            cfg,
            provider,
            jobs=args.jobs,
            subset_map=subset_map,
            require_text=not args.allow_missing_text,
        )
    else:
        raise ConfigError("sweep needs --per-theta runs or a --frames dump")
    payload = {
        "kind": "sweep",
        "mode": sweep.mode,
        "selection_rule": sweep.selection_rule,
        "selected_theta": sweep.selected_theta,
        "config": {
            "p_exponent": cfg.p_exponent,
            "sim_threshold": cfg.sim_threshold,
            "window_early": cfg.window_early,
            "window_late": cfg.window_late,
            "temporal_weight": cfg.temporal_weight,
            "embedder": provider.name,
        },
        "runs": [
            {
                "theta": run.theta,
                "n_pred": run.metrics.n_pred,
                "n_matched": run.metrics.n_matched,
                "precision": run.metrics.precision,
                "recall": run.metrics.recall,
                "f1": run.metrics.f1,
            }
            for run in sweep.runs
        ],
    }
    write_text(out / "sweep.json", canonical_json(payload))
    for run in sweep.runs:
        marker = " <- selected" if run.theta == sweep.selected_theta else ""
        print(
            f"theta {run.theta:g}: precision {100 * run.metrics.precision:.2f}%  "
            f"recall {100 * run.metrics.recall:.2f}%  "
            f"f1 {100 * run.metrics.f1:.2f}%{marker}"
        )
    print(f"wrote {out / 'sweep.json'}")
    return 0


def cmd_nfs_mask(args) -> int:
    out = _out_dir(args)
    timelines = load_timelines(args.timelines)
    rho = _pick(args, "stream.rho", args.rho, 0.1)
    epoch = _pick(args, "stream.epoch", args.epoch, 0)
    masks = [nfs_mask(t, rho, args.seed, epoch) for t in timelines]
    save_masks(masks, out / "masks.jsonl")
    for timeline, mask in zip(timelines, masks):
        n_pos = len(timeline.positive_indices())
        print(
            f"{mask.video_id}: kept {len(mask.kept_indices)} of "
            f"{len(timeline.frames)} frames ({n_pos} positives, epoch {epoch})"
        )
    print(f"wrote {out / 'masks.jsonl'}")
    return 0


def cmd_ips_chunk(args) -> int:
    out = _out_dir(args)
    timelines = load_timelines(args.timelines)
    turns_by_video: dict[str, tuple] = {}
    if args.sessions:
        for session in load_sessions(args.sessions):
            turns_by_video[session.video_id] = session.turns
    budget = TokenBudget(
        context_limit=_pick(args, "stream.context_limit", args.context_limit, 4096),
        tokens_per_frame=_pick(args, "stream.tokens_per_frame", args.tokens_per_frame, 1),
        summary_reserve=_pick(args, "stream.summary_reserve", args.summary_reserve, 256),
    )
    all_chunks = []
    for timeline in timelines:
        chunks = ips_chunk(timeline, turns_by_video.get(timeline.video_id, ()), budget)
        all_chunks.extend(chunks)
        print(f"{timeline.video_id}: {len(chunks)} chunk(s)")
    save_chunks(all_chunks, out / "chunks.jsonl")
    print(f"wrote {out / 'chunks.jsonl'}")
    return 0


def cmd_drop_middle(args) -> int:
    out = _out_dir(args)
    groups = [
        TokenGroup(kind=obj["kind"], tokens=int(obj["tokens"]))
        for _, obj in _iter_jsonl(args.groups)
    ]
    budget = TokenBudget(
        context_limit=_pick(args, "stream.context_limit", args.context_limit, 4096),
        tokens_per_frame=1,
        summary_reserve=0,
    )
    head_keep = _pick(args, "stream.head_keep", args.head_keep, 512)
    kept = drop_middle(groups, budget, head_keep=head_keep)
    with open(out / "kept.jsonl", "w", encoding="utf-8") as fh:
        for group in kept:
            fh.write(_dumps({"kind": group.kind, "tokens": group.tokens}) + "\n")
    before = sum(g.tokens for g in groups)
    after = sum(g.tokens for g in kept)
    print(f"kept {after} of {before} tokens ({len(kept)} of {len(groups)} groups)")
    print(f"wrote {out / 'kept.jsonl'}")
    return 0


def cmd_report(args) -> int:
    out = _out_dir(args)
    if not args.match and not args.judge:
        raise ConfigError("report needs --match and/or --judge payload files")

    def load(path):
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)

    payload = combined_payload(
        load(args.match) if args.match else None,
        load(args.judge) if args.judge else None,
    )
    write_text(out / "report.json", canonical_json(payload))
    write_text(out / "report.csv", render_csv(payload))
    write_text(out / "report.md", render_markdown(payload))
    print(f"wrote {out / 'report.json'}, {out / 'report.csv'}, {out / 'report.md'}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="assistkit",
        description="Evaluation and data tooling for proactive task-guidance dialogue.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (dotted key = value lines)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker threads")
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key",
    )

    metric = argparse.ArgumentParser(add_help=False)
    metric.add_argument(
        "--p-exponent", type=float, default=1.5, help="temporal cost exponent"
    )
    metric.add_argument(
        "--sim-threshold",
        type=float,
        default=0.5,
        help="minimum cosine similarity for a match",
    )
    metric.add_argument(
        "--window-early",
        type=float,
        default=NARRATION_WINDOW,
        help="seconds a prediction may precede its reference",
    )
    metric.add_argument(
        "--window-late",
        type=float,
        default=NARRATION_WINDOW,
        help="seconds a prediction may follow its reference",
    )
    metric.add_argument(
        "--temporal-weight", type=float, default=0.1, help="temporal cost weight"
    )
    metric.add_argument(
        "--profile",
        choices=("narration", "dialogue"),
        default="narration",
        help="window profile; dialogue derives windows from assistant turn gaps",
    )
    metric.add_argument(
        "--embedder",
        choices=("hashed-bow", "remote"),
        default="hashed-bow",
        help="sentence embedding provider",
    )
    metric.add_argument("--dim", type=int, default=256, help="hashed-bow dimensions")
    metric.add_argument(
        "--knowledge-conditioned",
        action="store_true",
        help="mark the run as knowledge-conditioned in reports",
    )
    metric.add_argument("--subset-map", help="JSON file mapping video_id to subset")

    fmt = argparse.ArgumentDefaultsHelpFormatter
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser(
        "parse",
        parents=[common],
        formatter_class=fmt,
        help="parse timestamped annotation text into description JSONL",
    )
    p.add_argument("inputs", nargs="+", help="annotation text file(s)")
    p.add_argument("--video-id", help="video id (single input only; default: file stem)")
    p.add_argument("--subset", help="source subset (default: inferred from video id)")
    p.add_argument(
        "--lenient", action="store_true", help="skip malformed lines instead of failing"
    )
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser(
        "validate",
        parents=[common],
        formatter_class=fmt,
        help="check session JSONL structural rules",
    )
    p.add_argument("sessions", help="session JSONL file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser(
        "score-quality",
        parents=[common],
        formatter_class=fmt,
        help="score session/description time alignment",
    )
    p.add_argument("--sessions", required=True, help="session JSONL file")
    p.add_argument("--descriptions", required=True, help="description JSONL file")
    p.add_argument(
        "--turn-times",
        choices=("all", "assistant"),
        default="all",
        help="which turns define the dialogue time set",
    )
    p.set_defaults(func=cmd_score_quality)

    p = sub.add_parser(
        "filter",
        parents=[common],
        formatter_class=fmt,
        help="drop low-quality training sessions (score < 3)",
    )
    p.add_argument("sessions", help="scored session JSONL file")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser(
        "split",
        parents=[common],
        formatter_class=fmt,
        help="select best-per-user-type eval sessions and split val/test",
    )
    p.add_argument("sessions", help="scored session JSONL file")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser(
        "synth",
        parents=[common],
        formatter_class=fmt,
        help="synthesize dialogue sessions from video descriptions",
    )
    p.add_argument("--descriptions", required=True, help="description JSONL file")
    p.add_argument("--backend", help="chat backend: http or scripted:PATH")
    p.add_argument("--safety-backend", help="optional safety-check backend spec")
    p.add_argument("--knowledge", help="JSONL of {video_id, goal, recipe_steps}")
    p.add_argument(
        "--eval-videos", help="comma-separated video ids routed to val/test"
    )
    p.add_argument("--chunk-minutes", type=float, default=5.0, help="chunk length")
    p.add_argument("--coverage-min", type=float, default=0.5, help="coverage gate")
    p.add_argument("--votes", type=int, default=10, help="prefilter votes")
    p.add_argument("--candidates", type=int, default=10, help="recipe candidates")
    p.add_argument("--temperature", type=float, default=0.7, help="sampling temperature")
    p.add_argument(
        "--summarize", action="store_true", help="annotate progress summaries"
    )
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser(
        "eval-match",
        parents=[common, metric],
        formatter_class=fmt,
        help="match predicted utterances against reference sessions",
    )
    p.add_argument("--predictions", required=True, help="prediction JSONL file")
    p.add_argument("--sessions", required=True, help="reference session JSONL file")
    p.set_defaults(func=cmd_eval_match)

    p = sub.add_parser(
        "eval-judge",
        parents=[common],
        formatter_class=fmt,
        help="LLM-as-a-judge scoring of predicted dialogues",
    )
    p.add_argument("--predictions", required=True, help="prediction JSONL file")
    p.add_argument("--sessions", required=True, help="reference session JSONL file")
    p.add_argument("--backend", help="chat backend: http or scripted:PATH")
    p.add_argument("--n-runs", type=int, default=DEFAULT_N_RUNS, help="judge repeats")
    p.add_argument(
        "--temperature", type=float, default=DEFAULT_TEMPERATURE, help="judge temperature"
    )
    p.add_argument("--concurrency", type=int, default=4, help="parallel judge sessions")
    p.add_argument("--subset-map", help="JSON file mapping video_id to subset")
    p.set_defaults(func=cmd_eval_judge)

    p = sub.add_parser(
        "apply-threshold",
        parents=[common],
        formatter_class=fmt,
        help="turn frame-level silence probabilities into utterances",
    )
    p.add_argument("--frames", required=True, help="prediction JSONL with frame records")
    p.add_argument("--theta", type=float, required=True, help="speak iff p_eos <= theta")
    p.add_argument(
        "--allow-missing-text",
        action="store_true",
        help="treat speaking frames without text as silent instead of failing",
    )
    p.set_defaults(func=cmd_apply_threshold)

    p = sub.add_parser(
        "sweep",
        parents=[common, metric],
        formatter_class=fmt,
        help="sweep speaking thresholds and select the best-F1 local maximum",
    )
    p.add_argument("--sessions", required=True, help="reference session JSONL file")
    p.add_argument(
        "--per-theta",
        action="append",
        metavar="THETA=PATH",
        help="precomputed prediction JSONL for one theta (repeatable; exact mode)",
    )
    p.add_argument(
        "--frames", help="frame-decision dump to re-threshold (approximate mode)"
    )
    p.add_argument("--grid", help="comma-separated thetas (default: 0.1..0.9)")
    p.add_argument(
        "--allow-missing-text",
        action="store_true",
        help="treat speaking frames without text as silent instead of failing",
    )
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser(
        "nfs-mask",
        parents=[common],
        formatter_class=fmt,
        help="sample negative-frame training masks",
    )
    p.add_argument("--timelines", required=True, help="frame timeline JSONL file")
    p.add_argument("--rho", type=float, default=0.1, help="kept fraction of negatives")
    p.add_argument("--epoch", type=int, default=0, help="epoch (resamples the mask)")
    p.set_defaults(func=cmd_nfs_mask)

    p = sub.add_parser(
        "ips-chunk",
        parents=[common],
        formatter_class=fmt,
        help="pack frames and turns into context-window training chunks",
    )
    p.add_argument("--timelines", required=True, help="frame timeline JSONL file")
    p.add_argument("--sessions", help="session JSONL supplying the dialogue turns")
    p.add_argument("--context-limit", type=int, default=4096, help="context window")
    p.add_argument(
        "--tokens-per-frame", type=int, default=1, choices=(1, 5, 10), help="frame cost"
    )
    p.add_argument(
        "--summary-reserve", type=int, default=256, help="tokens reserved for summaries"
    )
    p.set_defaults(func=cmd_ips_chunk)

    p = sub.add_parser(
        "drop-middle",
        parents=[common],
        formatter_class=fmt,
        help="fit a token-group sequence into the context limit",
    )
    p.add_argument("--groups", required=True, help="JSONL of {kind, tokens} groups")
    p.add_argument("--context-limit", type=int, default=4096, help="context window")
    p.add_argument("--head-keep", type=int, default=512, help="tokens kept at the head")
    p.set_defaults(func=cmd_drop_middle)

    p = sub.add_parser(
        "report",
        parents=[common],
        formatter_class=fmt,
        help="emit canonical JSON/CSV/markdown reports from eval payloads",
    )
    p.add_argument("--match", help="match-eval payload JSON")
    p.add_argument("--judge", help="judge-eval payload JSON")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: "list[str] | None" = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run_config: dict = {}
        if getattr(args, "config", None):
            run_config.update(load_config(args.config))
        apply_overrides(run_config, getattr(args, "overrides", []))
        args.run_config = run_config
        return args.func(args)
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
