"""Translation: expand operators without a debuggable counterpart into basic ops.

A template step wires values with three kinds of references:

* ``$inK`` / ``$outK`` -- the K-th input/output of the node being replaced,
* ``%name`` -- a fresh internal value local to the expansion,
* ``@attr`` -- a derived attribute; used as an input it becomes a new scalar
  float constant, used as an attribute value it is substituted directly.
"""

from __future__ import annotations

import numpy as np

from ..errors import KernelError, TemplateError
from ..graph import ConstTensor, DType, Graph, IssueCategory, IssueRecord, Node, TensorSpec
from ..interpreter import quant_range
from ..rules import RuleSet, TranslationRule, default_rules

PASS_NAME = "translate"


def derived_attributes(node: Node, graph: Graph) -> dict:
    """Node attributes plus quantization parameters resolved from inputs and ranges."""
    consts = graph.const_map
    attrs = dict(node.attributes)
    producer = graph.producers().get(node.inputs[0]) if node.inputs else None
    if node.op_type == "DequantizeLinear" and producer is not None and producer.op_type == "QuantizeLinear":
        # a dynamic tensor carries the parameters its quantizer stamped on it
        upstream = derived_attributes(producer, graph)
        for key in ("scale", "zero_point"):
            if key not in attrs and key in upstream and len(node.inputs) <= (1 if key == "scale" else 2):
                attrs[key] = upstream[key]
    if "scale" not in attrs:
        if len(node.inputs) > 1 and node.inputs[1] in consts:
            attrs["scale"] = float(consts[node.inputs[1]].data.reshape(-1)[0])
        elif node.inputs and node.inputs[0] in consts and consts[node.inputs[0]].quant is not None:
            attrs["scale"] = consts[node.inputs[0]].quant.scale
    if "zero_point" not in attrs:
        if len(node.inputs) > 2 and node.inputs[2] in consts:
            attrs["zero_point"] = int(consts[node.inputs[2]].data.reshape(-1)[0])
        elif node.inputs and node.inputs[0] in consts and consts[node.inputs[0]].quant is not None:
            attrs["zero_point"] = consts[node.inputs[0]].quant.zero_point
        else:
            attrs["zero_point"] = 0
    try:
        attrs["qmin"], attrs["qmax"] = quant_range(attrs.get("dtype", "uint8"))
    except KernelError:
        pass
    return attrs


def _lookup(attrs: dict, key: str, node: Node):
    if key not in attrs:
        raise TemplateError(f"cannot derive attribute {key!r} for {node.op_type} node {node.name!r}")
    return attrs[key]


def expand(node: Node, rule: TranslationRule, graph: Graph, taken: set[str]) -> tuple[list[Node], list[ConstTensor]]:
    attrs = derived_attributes(node, graph)
    consts: dict[str, ConstTensor] = {}

    def fresh(name: str) -> str:
        if name in taken:
            raise TemplateError(f"expansion of {node.name!r} would redefine value {name!r}")
        return name

    def resolve(ref: str) -> str:
        if ref.startswith("$in"):
            k = int(ref[3:])
            if k >= len(node.inputs):
                raise TemplateError(f"{node.name!r} has no input {k}")
            return node.inputs[k]
        if ref.startswith("$out"):
            k = int(ref[4:])
            if k >= len(node.outputs):
                raise TemplateError(f"{node.name!r} has no output {k}")
            return node.outputs[k]
        if ref.startswith("%"):
            return f"{node.name}/{ref[1:]}"
        if ref.startswith("@"):
            key = ref[1:]
            name = f"{node.name}/{key}"
            if name not in consts:
                value = float(_lookup(attrs, key, node))
                consts[name] = ConstTensor(TensorSpec(fresh(name), DType.FLOAT32, (1,)),
                                           np.array([value], dtype=np.float32))
            return name
        raise TemplateError(f"bad template reference {ref!r}")

    nodes = []
    for i, step in enumerate(rule.template):
        step_attrs = {}
        for key, value in step.get("attributes", {}).items():
            if isinstance(value, str) and value.startswith("@"):
                value = _lookup(attrs, value[1:], node)
            step_attrs[key] = value
        ins = [resolve(r) for r in step["inputs"]]
        outs = [resolve(r) for r in step["outputs"]]
        for r, v in zip(step["outputs"], outs):
            if r.startswith("%"):
                fresh(v)
        nodes.append(Node(step["op_type"], fresh(f"{node.name}/{i}_{step['op_type']}"), ins, outs, step_attrs))
    return nodes, list(consts.values())


def applies(rule: TranslationRule, node: Node, graph: Graph) -> bool:
    if not rule.dynamic_only:
        return True
    consts = graph.const_map
    return not (node.inputs and node.inputs[0] in consts)


def translate_pass(graph: Graph, rules: RuleSet | None = None) -> tuple[Graph, list[IssueRecord]]:
    """Replace every node with a translation rule by its template expansion, in place."""
    table = (rules or default_rules()).translate
    issues: list[IssueRecord] = []
    taken = ({c.name for c in graph.constants} | {s.name for s in graph.inputs}
             | set(graph.producers()) | {n.name for n in graph.nodes})
    nodes: list[Node] = []
    new_consts: list[ConstTensor] = []
    for node in graph.nodes:
        rule = table.get(node.op_type)
        if rule is None or not applies(rule, node, graph):
            nodes.append(node)
            continue
        expansion, consts = expand(node, rule, graph, taken)
        taken.update(n.name for n in expansion)
        taken.update(v for n in expansion for v in n.outputs)
        taken.update(c.name for c in consts)
        nodes.extend(expansion)
        new_consts.extend(consts)
        issues.append(IssueRecord(IssueCategory.OPERATOR_MISMATCH, node.name,
                                  f"{node.op_type} -> {' / '.join(n.op_type for n in expansion)}",
                                  PASS_NAME))
    if not issues:
        return graph, []
    return graph.replace(nodes=nodes, constants=list(graph.constants) + new_consts), issues
