"""Attribute normalization: canonical attribute sets and input orders."""

from __future__ import annotations

from ..graph import Graph, IssueCategory, IssueRecord, Node
from ..interpreter import RESIZE_MODES, infer_shapes
from ..rules import RuleSet, default_rules

PASS_NAME = "normalize_specs"


def find_corrections(graph: Graph, rules: RuleSet | None = None) -> list[tuple[Node, Node, str]]:
    """Return (old node, corrected node, description) for every non-canonical node."""
    table = (rules or default_rules()).normalize
    shapes = None
    fixes = []
    for node in graph.nodes:
        attrs = dict(node.attributes)
        inputs = list(node.inputs)
        notes = []

        if node.op_type in table.reorder_ops and "input_order" in attrs:
            order = [int(i) for i in attrs.pop("input_order")]
            if sorted(order) == list(range(len(inputs))):
                inputs = [node.inputs[i] for i in order]
                notes.append(f"inputs reordered by {order}")
            else:
                notes.append(f"dropped invalid input_order {order}")

        for key, value in table.defaults.get(node.op_type, {}).items():
            if key in attrs:
                continue
            if node.op_type == "Clip" and len(inputs) > 1:
                continue
            attrs[key] = value
            notes.append(f"{key}={value!r} filled")

        if node.op_type == "Resize" and attrs.get("mode", "nearest") not in RESIZE_MODES:
            notes.append(f"interpolation {attrs['mode']!r} replaced by {table.resize_fallback!r}")
            attrs["mode"] = table.resize_fallback

        if node.op_type in table.axis_ops and int(attrs.get("axis", 0)) < 0 and inputs:
            if shapes is None:
                shapes = infer_shapes(graph)
            shape = shapes.get(inputs[0])
            if shape is not None:
                axis = int(attrs["axis"])
                attrs["axis"] = axis % len(shape)
                notes.append(f"axis {axis} -> {attrs['axis']}")

        if notes:
            fixed = Node(node.op_type, node.name, inputs, node.outputs, attrs)
            fixes.append((node, fixed, "; ".join(notes)))
    return fixes


def normalize_specs_pass(graph: Graph, rules: RuleSet | None = None) -> tuple[Graph, list[IssueRecord]]:
    fixes = find_corrections(graph, rules)
    if not fixes:
        return graph, []
    replaced = {old.name: new for old, new, _ in fixes}
    nodes = [replaced.get(n.name, n) for n in graph.nodes]
    issues = [IssueRecord(IssueCategory.SPECIFICATION_MISMATCH, old.name, note, PASS_NAME)
              for old, _, note in fixes]
    return graph.replace(nodes=nodes), issues
