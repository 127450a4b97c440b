"""Debuggability classifier: which nodes block conversion, and why."""

from __future__ import annotations

from .graph import Graph, IssueCategory, IssueRecord
from .interpreter import KERNELS
from .passes.normalize import find_corrections
from .passes.prune import quantized_weight_uses
from .passes.translate import applies
from .rules import RuleSet, default_rules

__all__ = ["validate"]


def validate(graph: Graph, rules: RuleSet | None = None) -> list[IssueRecord]:
    """Classify every node; an empty list means the graph is already debuggable.

    Per node at most one record per category, in node order: STRUCTURE_MISMATCH
    for constant-fed prune-list ops (and arithmetic ops reading quantized weight
    codes), OPERATOR_MISMATCH for ops with a translation rule,
    OPERATOR_NOT_SUPPORTED for ops with neither kernel nor rule, and
    SPECIFICATION_MISMATCH for attribute/ordering anomalies.
    """
    rules = rules or default_rules()
    consts = graph.const_map
    weight_users = {n for n, _ in quantized_weight_uses(graph)}
    spec_fixes = {old.name: note for old, _, note in find_corrections(graph, rules)}
    issues: list[IssueRecord] = []
    for node in graph.nodes:
        op = node.op_type
        rule = rules.translate.get(op)
        if op in rules.prune and node.inputs and all(v in consts for v in node.inputs):
            issues.append(IssueRecord(IssueCategory.STRUCTURE_MISMATCH, node.name,
                                      f"constant-fed {op} (extra operator)"))
        elif node.name in weight_users:
            issues.append(IssueRecord(IssueCategory.STRUCTURE_MISMATCH, node.name,
                                      f"{op} reads quantized weight codes"))
        elif rule is not None and applies(rule, node, graph):
            issues.append(IssueRecord(IssueCategory.OPERATOR_MISMATCH, node.name,
                                      f"{op} has no debuggable counterpart; translation rule available"))
        elif op not in KERNELS and rule is None:
            issues.append(IssueRecord(IssueCategory.OPERATOR_NOT_SUPPORTED, node.name,
                                      f"{op} is neither a supported kernel nor translatable"))
        if node.name in spec_fixes:
            issues.append(IssueRecord(IssueCategory.SPECIFICATION_MISMATCH, node.name,
                                      spec_fixes[node.name]))
    return issues
