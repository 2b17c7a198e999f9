"""Canonical report payloads and renderers.

The JSON form is the machine artifact and is canonical: fixed key order,
video ids and subset names sorted, metric values as raw fractions, and no
timestamps or host details, so identical inputs produce byte-identical
files.  CSV and markdown are derived views that format precision/recall/F1
as percentages with two decimals and Likert means with two decimals.
"""

from __future__ import annotations

import io
import json
import os

from .judge import DIMENSIONS, JudgeReport
from .matching import AggregateMetrics, CorpusMatchReport, MatchConfig

_METRIC_KEYS = ("n_videos", "n_pred", "n_ref", "n_matched", "precision", "recall", "f1")


def canonical_json(payload: dict) -> str:
    """Serialize a payload with stable formatting (canonical bytes)."""
    return json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=False) + "\n"


def _metrics_dict(metrics: AggregateMetrics) -> dict:
    return {key: getattr(metrics, key) for key in _METRIC_KEYS}


def match_config_dict(
    cfg: MatchConfig, embedder: str, knowledge_conditioned: bool = False
) -> dict:
    return {
        "p_exponent": cfg.p_exponent,
        "sim_threshold": cfg.sim_threshold,
        "window_early": cfg.window_early,
        "window_late": cfg.window_late,
        "temporal_weight": cfg.temporal_weight,
        "embedder": embedder,
        "knowledge_conditioned": bool(knowledge_conditioned),
    }


def match_payload(
    report: CorpusMatchReport,
    cfg: MatchConfig,
    embedder: str,
    knowledge_conditioned: bool = False,
) -> dict:
    per_video = {}
    for vid in report.videos():
        result = report.per_video[vid]
        per_video[vid] = {
            "subset": report.subsets.get(vid, "synthetic"),
            "n_pred": result.n_pred,
            "n_ref": result.n_ref,
            "n_matched": len(result.pairs),
            "precision": result.precision,
            "recall": result.recall,
            "f1": result.f1,
        }
    return {
        "kind": "match-eval",
        "config": match_config_dict(cfg, embedder, knowledge_conditioned),
        "overall": _metrics_dict(report.overall()),
        "per_subset": {
            name: _metrics_dict(m) for name, m in sorted(report.per_subset().items())
        },
        "per_video": per_video,
    }


def judge_payload(report: JudgeReport, model: str, n_runs: int, temperature: float) -> dict:
    per_video = {}
    for vid in report.videos():
        scores = report.per_video[vid]
        per_video[vid] = {
            "subset": report.subsets.get(vid, "synthetic"),
            "correctness": scores.correctness,
            "promptness": scores.promptness,
            "efficiency": scores.efficiency,
            "overall": scores.overall,
            "n_runs": scores.n_runs,
            "per_run": [list(run) for run in scores.per_run],
            "retries": scores.retries,
        }
    return {
        "kind": "judge-eval",
        "config": {"model": model, "n_runs": n_runs, "temperature": temperature},
        "overall": report.overall(),
        "per_subset": report.per_subset(),
        "per_video": per_video,
        "failures": dict(sorted(report.failures.items())),
    }


# ---------------------------------------------------------------------------
# canonical re-emission (rebuilds fixed key order from parsed JSON)


def _reorder(obj: dict, keys: "tuple[str, ...]") -> dict:
    ordered = {key: obj[key] for key in keys if key in obj}
    for key in obj:
        if key not in ordered:
            ordered[key] = obj[key]
    return ordered


def canonicalize_match_payload(obj: dict) -> dict:
    return {
        "kind": "match-eval",
        "config": _reorder(
            obj.get("config", {}),
            (
                "p_exponent",
                "sim_threshold",
                "window_early",
                "window_late",
                "temporal_weight",
                "embedder",
                "knowledge_conditioned",
            ),
        ),
        "overall": _reorder(obj.get("overall", {}), _METRIC_KEYS),
        "per_subset": {
            name: _reorder(m, _METRIC_KEYS)
            for name, m in sorted(obj.get("per_subset", {}).items())
        },
        "per_video": {
            vid: _reorder(
                row,
                ("subset", "n_pred", "n_ref", "n_matched", "precision", "recall", "f1"),
            )
            for vid, row in sorted(obj.get("per_video", {}).items())
        },
    }


def canonicalize_judge_payload(obj: dict) -> dict:
    return {
        "kind": "judge-eval",
        "config": _reorder(obj.get("config", {}), ("model", "n_runs", "temperature")),
        "overall": _reorder(obj.get("overall", {}), DIMENSIONS),
        "per_subset": {
            name: _reorder(m, DIMENSIONS)
            for name, m in sorted(obj.get("per_subset", {}).items())
        },
        "per_video": {
            vid: _reorder(
                row,
                ("subset", *DIMENSIONS, "n_runs", "per_run", "retries"),
            )
            for vid, row in sorted(obj.get("per_video", {}).items())
        },
        "failures": dict(sorted(obj.get("failures", {}).items())),
    }


def combined_payload(match: "dict | None", judge: "dict | None") -> dict:
    return {
        "kind": "report",
        "match": canonicalize_match_payload(match) if match else None,
        "judge": canonicalize_judge_payload(judge) if judge else None,
    }


# ---------------------------------------------------------------------------
# derived views


def _pct(value: float) -> str:
    return f"{100.0 * value:.2f}%"


def _likert(value: float) -> str:
    return f"{value:.2f}"


def _match_rows(match: dict) -> "list[tuple[str, str, dict]]":
    rows = [
        ("video", vid, row) for vid, row in sorted(match.get("per_video", {}).items())
    ]
    rows += [
        ("subset", name, m) for name, m in sorted(match.get("per_subset", {}).items())
    ]
    rows.append(("overall", "", match.get("overall", {})))
    return rows


def render_csv(payload: dict) -> str:
    """Flat CSV: one row per video, subset, and overall scope."""
    match = payload.get("match")
    judge = payload.get("judge")
    buf = io.StringIO()
    columns = ["scope", "name", "n_pred", "n_ref", "n_matched", "precision", "recall", "f1"]
    if judge:
        columns += list(DIMENSIONS)
    buf.write(",".join(columns) + "\n")

    judge_by_name: dict[tuple[str, str], dict] = {}
    if judge:
        for vid, row in judge.get("per_video", {}).items():
            judge_by_name[("video", vid)] = row
        for name, row in judge.get("per_subset", {}).items():
            judge_by_name[("subset", name)] = row
        judge_by_name[("overall", "")] = judge.get("overall", {})

    rows = _match_rows(match) if match else []
    if not rows and judge:
        rows = [(scope, name, {}) for scope, name in judge_by_name]
    for scope, name, row in rows:
        cells = [
            scope,
            name,
            str(row.get("n_pred", "")),
            str(row.get("n_ref", "")),
            str(row.get("n_matched", "")),
            _pct(row["precision"]) if "precision" in row else "",
            _pct(row["recall"]) if "recall" in row else "",
            _pct(row["f1"]) if "f1" in row else "",
        ]
        if judge:
            jrow = judge_by_name.get((scope, name), {})
            cells += [
                _likert(jrow[dim]) if dim in jrow else "" for dim in DIMENSIONS
            ]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def render_markdown(payload: dict) -> str:
    match = payload.get("match")
    judge = payload.get("judge")
    lines = ["# Evaluation report", ""]
    if match:
        cfg = match.get("config", {})
        lines.append(
            "Match config: "
            + ", ".join(f"{key}={cfg[key]}" for key in cfg if key != "embedder")
        )
        lines.append(f"Embedder: {cfg.get('embedder', 'unknown')}")
        lines.append("")
        lines.append("| scope | n_pred | n_ref | matched | precision | recall | F1 |")
        lines.append("|---|---|---|---|---|---|---|")
        for scope, name, row in _match_rows(match):
            label = f"{scope} {name}".strip()
            lines.append(
                f"| {label} | {row.get('n_pred', '')} | {row.get('n_ref', '')} "
                f"| {row.get('n_matched', '')} | {_pct(row['precision'])} "
                f"| {_pct(row['recall'])} | {_pct(row['f1'])} |"
            )
        lines.append("")
    if judge:
        cfg = judge.get("config", {})
        lines.append(
            f"Judge: model={cfg.get('model', 'unknown')}, "
            f"n_runs={cfg.get('n_runs')}, temperature={cfg.get('temperature')}"
        )
        lines.append("")
        header = "| scope | " + " | ".join(DIMENSIONS) + " |"
        lines.append(header)
        lines.append("|---|" + "---|" * len(DIMENSIONS))
        rows = [
            ("subset " + name, row)
            for name, row in sorted(judge.get("per_subset", {}).items())
        ]
        rows.append(("overall", judge.get("overall", {})))
        for label, row in rows:
            cells = " | ".join(
                _likert(row[dim]) if dim in row else "" for dim in DIMENSIONS
            )
            lines.append(f"| {label} | {cells} |")
        if judge.get("failures"):
            lines.append("")
            lines.append("Failures:")
            for vid, message in judge["failures"].items():
                lines.append(f"- {vid}: {message}")
        lines.append("")
    return "\n".join(lines)


def write_text(path: "str | os.PathLike", text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
