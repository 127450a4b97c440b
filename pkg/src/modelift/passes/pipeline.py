"""The Modifier driver: validate, prune, translate, auto-match, normalize, validate."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..errors import ModeliftError
from ..graph import Graph, IssueCategory, IssueRecord
from ..rules import RuleSet, default_rules
from .automatch import MatchConfig, Substitution, auto_match
from .normalize import normalize_specs_pass
from .prune import prune_pass
from .translate import translate_pass

logger = logging.getLogger(__name__)


@dataclass
class TransformReport:
    issues: list[IssueRecord] = field(default_factory=list)
    substitutions: list[Substitution] = field(default_factory=list)
    success: bool = True
    errors: list[str] = field(default_factory=list)

    @property
    def unresolved(self) -> list[IssueRecord]:
        return [i for i in self.issues if i.resolved_by is None]

    def to_json(self) -> dict:
        return {
            "success": self.success,
            "issues": [i.to_json() for i in self.issues],
            "substitutions": [s.to_json() for s in self.substitutions],
            "errors": list(self.errors),
        }


def transform(graph: Graph, cfg: MatchConfig | None = None,
              rules: RuleSet | None = None) -> tuple[Graph, TransformReport]:
    """Turn ``graph`` into a debuggable graph; never raises on unresolved issues."""
    from ..issues import validate

    cfg = cfg or MatchConfig()
    rules = rules or default_rules()
    report = TransformReport()
    initial = validate(graph, rules)

    fixed: dict[tuple, IssueRecord] = {}
    pending: dict[tuple, IssueRecord] = {}

    def absorb(records):
        for rec in records:
            if rec.resolved_by is None:
                pending.setdefault(rec.key, rec)
            else:
                fixed.setdefault(rec.key, rec)

    steps = [
        ("prune", lambda g: prune_pass(g, rules)),
        ("translate", lambda g: translate_pass(g, rules)),
        ("auto_match", None),
        ("normalize_specs", lambda g: normalize_specs_pass(g, rules)),
    ]
    for name, step in steps:
        try:
            if step is None:
                graph, records, subs = auto_match(graph, cfg, rules)
                report.substitutions.extend(subs)
            else:
                graph, records = step(graph)
        except ModeliftError as exc:
            logger.warning("%s pass failed: %s", name, exc)
            report.errors.append(f"{name}: {exc}")
            continue
        absorb(records)

    final = {rec.key: rec for rec in validate(graph, rules)}
    seen = set()
    for rec in initial:
        seen.add(rec.key)
        if rec.key in fixed and rec.key not in final:
            report.issues.append(IssueRecord(rec.category, rec.node_name, fixed[rec.key].detail,
                                             fixed[rec.key].resolved_by))
        else:
            detail = pending[rec.key].detail if rec.key in pending else rec.detail
            report.issues.append(IssueRecord(rec.category, rec.node_name, detail))
    for key, rec in fixed.items():
        if key not in seen and key not in final:
            report.issues.append(rec)
            seen.add(key)
    for key, rec in final.items():
        if key not in seen:
            report.issues.append(rec)
            seen.add(key)
    report.success = not final and not report.unresolved
    return graph, report
