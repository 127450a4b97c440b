"""Rule tables driving the rewrite passes.

The tables ship as ``data/rules.json``.  ``MODELIFT_RULES`` (or an explicit
path) may point to a replacement file, or to a directory holding
``rules.json``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .errors import ParseError
from .interpreter import KERNELS

__all__ = ["TranslationRule", "NormalizationTable", "RuleSet", "load_rules", "default_rules"]

RULES_ENV = "MODELIFT_RULES"


@dataclass(frozen=True)
class TranslationRule:
    source: str
    template: tuple[dict, ...]
    dynamic_only: bool = False

    @classmethod
    def from_json(cls, doc: Mapping) -> "TranslationRule":
        try:
            template = tuple(dict(step) for step in doc["template"])
            for step in template:
                step["op_type"], step["inputs"], step["outputs"]
            return cls(str(doc["source"]), template, bool(doc.get("dynamic_only", False)))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed translation rule {doc!r}: {exc}") from None


@dataclass(frozen=True)
class NormalizationTable:
    defaults: dict[str, dict[str, Any]] = field(default_factory=dict)
    axis_ops: frozenset[str] = frozenset()
    reorder_ops: frozenset[str] = frozenset()
    resize_fallback: str = "linear"


@dataclass(frozen=True)
class RuleSet:
    prune: frozenset[str]
    translate: dict[str, TranslationRule]
    supported: tuple[str, ...]
    normalize: NormalizationTable = NormalizationTable()

    def __post_init__(self):
        missing = sorted(op for op in self.prune if op not in KERNELS)
        if missing:
            raise ParseError(f"prune-list operators without kernels: {missing}")

    @classmethod
    def from_json(cls, doc: Mapping) -> "RuleSet":
        unknown = set(doc) - {"prune", "translate", "supported", "normalize"}
        if unknown:
            raise ParseError(f"unknown rule-table keys {sorted(unknown)}")
        translate = {}
        for entry in doc.get("translate", []):
            rule = TranslationRule.from_json(entry)
            translate[rule.source] = rule
        if "supported" in doc:
            supported = tuple(str(op) for op in doc["supported"])
        else:
            supported = tuple(sorted(op for op in KERNELS if op not in translate))
        norm = doc.get("normalize", {})
        table = NormalizationTable(
            {op: dict(v) for op, v in norm.get("defaults", {}).items()},
            frozenset(norm.get("axis_ops", ())),
            frozenset(norm.get("reorder_ops", ())),
            str(norm.get("resize_fallback", "linear")),
        )
        return cls(frozenset(doc.get("prune", ())), translate, supported, table)


def _read(path: Path) -> RuleSet:
    if path.is_dir():
        path = path / "rules.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read rule table {path}: {exc}") from None
    return RuleSet.from_json(doc)


_DEFAULT: RuleSet | None = None


def default_rules() -> RuleSet:
    global _DEFAULT
    if _DEFAULT is None:
        text = resources.files("modelift").joinpath("data/rules.json").read_text(encoding="utf-8")
        _DEFAULT = RuleSet.from_json(json.loads(text))
    return _DEFAULT


def load_rules(path=None) -> RuleSet:
    """Explicit path first, then $MODELIFT_RULES, then the packaged tables."""
    if path is not None:
        return _read(Path(path))
    env = os.environ.get(RULES_ENV)
    if env:
        return _read(Path(env))
    return default_rules()
