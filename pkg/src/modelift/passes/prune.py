"""Pruning: fold constant-fed extra operators into plain float weights."""

from __future__ import annotations

import dataclasses

import numpy as np

from ..errors import FoldError, ModeliftError
from ..graph import ConstTensor, DType, Graph, IssueCategory, IssueRecord, TensorSpec, topo_sort
from ..interpreter import KERNELS, TensorValue, apply_node
from ..rules import RuleSet, default_rules

PASS_NAME = "prune"

# Consumers that take integer codes as-is; any other consumer needs real values.
CODE_CONSUMERS = frozenset({"DequantizeLinear", "QuantizeLinear", "Reshape", "Transpose",
                            "Cast", "Flatten", "Concat"})


def is_constant_fed(node, consts) -> bool:
    return bool(node.inputs) and all(v in consts for v in node.inputs)


def _const_from_value(name: str, value) -> ConstTensor:
    arr = value.array
    dtype = DType.of(arr)
    if dtype.is_float:
        arr = arr.astype(np.float32)
    shape = tuple(arr.shape) or (1,)
    return ConstTensor(TensorSpec(name, dtype, shape), arr.reshape(shape), value.quant)


def quantized_weight_uses(graph: Graph) -> list[tuple[str, str]]:
    """(node name, const name) pairs where an arithmetic node reads quantized codes."""
    consts = graph.const_map
    uses = []
    for node in graph.nodes:
        if node.op_type in CODE_CONSUMERS:
            continue
        for v in node.inputs:
            c = consts.get(v)
            if c is not None and c.spec.dtype.is_quantized and c.quant is not None:
                uses.append((node.name, v))
    return uses


def _dequantize_weights(graph: Graph, issues: list) -> tuple[Graph, set[str]]:
    uses = quantized_weight_uses(graph)
    if not uses:
        return graph, set()
    consts = graph.const_map
    taken = {c.name for c in graph.constants} | {s.name for s in graph.inputs} | set(graph.producers())
    renamed: dict[str, str] = {}
    new_consts = list(graph.constants)
    for _, cname in uses:
        if cname in renamed:
            continue
        c = consts[cname]
        real = ((c.data.astype(np.float64) - c.quant.zero_point) * c.quant.scale).astype(np.float32)
        new_name = f"{cname}_dequantized"
        while new_name in taken:
            new_name += "_"
        taken.add(new_name)
        renamed[cname] = new_name
        new_consts.append(ConstTensor(TensorSpec(new_name, DType.FLOAT32, c.spec.shape), real))
    flagged = {n for n, _ in uses}
    nodes = []
    for node in graph.nodes:
        if node.name in flagged:
            ins = [renamed.get(v, v) for v in node.inputs]
            issues.append(IssueRecord(IssueCategory.STRUCTURE_MISMATCH, node.name,
                                      "quantized weights dequantized as (x - zero_point) * scale",
                                      PASS_NAME))
            node = dataclasses.replace(node, inputs=ins)
        nodes.append(node)
    return graph.replace(constants=new_consts, nodes=nodes), set(renamed)


def prune_pass(graph: Graph, rules: RuleSet | None = None) -> tuple[Graph, list[IssueRecord]]:
    """Fold every prune-list node whose inputs are all constants, to a fixpoint.

    Arithmetic nodes reading quantized constant codes directly get a float
    copy of the weights instead.  Constants left unused by the folding are
    dropped; the graph is otherwise untouched.
    """
    prune = (rules or default_rules()).prune
    issues: list[IssueRecord] = []
    orphan_candidates: set[str] = set()
    changed = True
    while changed:
        graph, replaced = _dequantize_weights(graph, issues)
        orphan_candidates |= replaced
        changed = bool(replaced)
        consts = graph.const_map
        for node in topo_sort(graph):
            if node.op_type not in prune or not is_constant_fed(node, consts):
                continue
            args = [TensorValue(consts[v].data, consts[v].quant) for v in node.inputs]
            try:
                outs = apply_node(node, args, KERNELS)
            except ModeliftError as exc:
                raise FoldError(f"cannot fold {node.op_type} node {node.name!r}: {exc}") from exc
            folded = [_const_from_value(name, value) for name, value in zip(node.outputs, outs)]
            orphan_candidates.update(node.inputs)
            nodes = [n for n in graph.nodes if n.name != node.name]
            graph = graph.replace(nodes=nodes, constants=list(graph.constants) + folded)
            issues.append(IssueRecord(IssueCategory.STRUCTURE_MISMATCH, node.name,
                                      f"constant-fed {node.op_type} folded into {list(node.outputs)}",
                                      PASS_NAME))
            changed = True
            break
    return _drop_dead(graph, orphan_candidates), issues


def _drop_dead(graph: Graph, candidates: set[str]) -> Graph:
    used = {v for n in graph.nodes for v in n.inputs} | set(graph.outputs)
    keep = [c for c in graph.constants if c.name in used or c.name not in candidates]
    if len(keep) == len(graph.constants):
        return graph
    return graph.replace(constants=keep)
