"""Auto-matching of unsupported operators to supported ones.

Candidates are ranked by the Dice similarity of their op_type keywords and
accepted only when substituting them keeps the functional distance within
``alpha``.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..errors import ModeliftError, NoMatchError
from ..graph import Graph, IssueCategory, IssueRecord, Node, topo_sort
from ..interpreter import KERNELS, TensorValue, apply_node, evaluate, random_inputs, run_graph
from ..rules import RuleSet, default_rules

PASS_NAME = "auto_match"


def _normalize(s: str) -> str:
    return re.sub(r"[^0-9A-Z]", "", s.upper())


def lcs_length(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0]
        for j, cb in enumerate(b):
            cur.append(prev[j] + 1 if ca == cb else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def dice_similarity(s1: str, s2: str) -> float:
    """2 * LCS / (|S1| + |S2|) over upper-cased alphanumeric keywords."""
    a, b = _normalize(s1), _normalize(s2)
    if not a and not b:
        return 0.0
    return 2.0 * lcs_length(a, b) / (len(a) + len(b))


@dataclass(frozen=True)
class MatchConfig:
    alpha: float = 0.1
    probe_count: int = 100
    seed: int = 0
    supported: tuple[str, ...] | None = None
    # test-harness stand-ins for the on-device implementation of custom ops
    reference_kernels: Mapping[str, Callable] = field(default_factory=dict)

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.probe_count < 1:
            raise ValueError(f"probe_count must be >= 1, got {self.probe_count}")
        if self.supported is not None:
            object.__setattr__(self, "supported", tuple(self.supported))

    def supported_ops(self, rules: RuleSet | None = None) -> tuple[str, ...]:
        return self.supported if self.supported is not None else (rules or default_rules()).supported


@dataclass(frozen=True)
class Substitution:
    node: str
    old_op_type: str
    new_op_type: str
    score: float
    distance: float

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def rank_candidates(op_type: str, supported: Sequence[str]) -> list[tuple[float, str]]:
    scored = [(dice_similarity(op_type, cand), cand) for cand in supported]
    return sorted(scored, key=lambda sc: (-sc[0], sc[1]))


def _flat_outputs(outputs: Mapping[str, TensorValue], names: Sequence[str]) -> np.ndarray:
    return np.concatenate([outputs[n].array.astype(np.float64).reshape(-1) for n in names])


def _l2(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        return math.inf
    d = float(np.linalg.norm(a - b))
    return d if math.isfinite(d) else math.inf


def trace_distance(graph: Graph, kernels=None) -> float:
    """Largest whole-graph l2 output distance over the recorded traces."""
    worst = 0.0
    for trace in graph.traces:
        try:
            with np.errstate(all="ignore"):
                out = evaluate(graph, trace.inputs, kernels=kernels)
        except ModeliftError:
            return math.inf
        ref = np.concatenate([np.asarray(trace.outputs[n], dtype=np.float64).reshape(-1)
                              for n in graph.outputs])
        worst = max(worst, _l2(_flat_outputs(out, graph.outputs), ref))
    return worst


class _ProbeOracle:
    """Per-operator distance against a reference kernel on seeded random probes."""

    def __init__(self, graph: Graph, node: Node, cfg: MatchConfig):
        self.node = node
        self.reference = cfg.reference_kernels[node.op_type]
        rng = np.random.default_rng(cfg.seed)
        self.args = []
        for _ in range(cfg.probe_count):
            env = run_graph(graph, random_inputs(graph, rng), kernels=cfg.reference_kernels)
            self.args.append([env[v] for v in node.inputs])
        table = {node.op_type: self.reference}
        self.expected = [np.concatenate([v.array.astype(np.float64).reshape(-1)
                                         for v in apply_node(node, args, table)])
                         for args in self.args]

    def distance(self, op_type: str) -> float:
        probe_node = dataclasses.replace(self.node, op_type=op_type)
        worst = 0.0
        for args, ref in zip(self.args, self.expected):
            try:
                with np.errstate(all="ignore"):
                    outs = apply_node(probe_node, args, KERNELS)
            except ModeliftError:
                return math.inf
            got = np.concatenate([v.array.astype(np.float64).reshape(-1) for v in outs])
            worst = max(worst, _l2(got, ref))
        return worst


def _substitute(graph: Graph, node: Node, op_type: str) -> Graph:
    nodes = [dataclasses.replace(n, op_type=op_type) if n.name == node.name else n for n in graph.nodes]
    return graph.replace(nodes=nodes)


def match_node(graph: Graph, node: Node, cfg: MatchConfig, supported: Sequence[str]):
    """Run the candidate loop for one node; return (graph, Substitution) or raise NoMatchError."""
    oracle = None
    if not graph.traces and node.op_type in cfg.reference_kernels:
        try:
            oracle = _ProbeOracle(graph, node, cfg)
        except ModeliftError:
            oracle = None
    for score, cand in rank_candidates(node.op_type, supported):
        trial = _substitute(graph, node, cand)
        if graph.traces:
            others = {n.op_type: cfg.reference_kernels[n.op_type] for n in trial.nodes
                      if n.op_type in cfg.reference_kernels}
            dist = trace_distance(trial, kernels=others or None)
        elif oracle is not None:
            dist = oracle.distance(cand)
        else:
            dist = math.inf
        if dist <= cfg.alpha:
            return trial, Substitution(node.name, node.op_type, cand, score, dist)
    raise NoMatchError(node.name, node.op_type)


def auto_match(graph: Graph, cfg: MatchConfig | None = None, rules: RuleSet | None = None):
    """Auto-match every unsupported node; returns (graph, issues, substitutions)."""
    cfg = cfg or MatchConfig()
    supported = cfg.supported_ops(rules)
    allowed = set(supported)
    issues: list[IssueRecord] = []
    subs: list[Substitution] = []
    for node in topo_sort(graph):
        if node.op_type in allowed:
            continue
        try:
            graph, sub = match_node(graph, node, cfg, supported)
        except NoMatchError as exc:
            issues.append(IssueRecord(IssueCategory.OPERATOR_NOT_SUPPORTED, node.name, str(exc)))
            continue
        subs.append(sub)
        issues.append(IssueRecord(
            IssueCategory.OPERATOR_NOT_SUPPORTED, node.name,
            f"{sub.old_op_type} -> {sub.new_op_type} (dice {sub.score:.4f}, l2 {sub.distance:.3g})",
            PASS_NAME))
    return graph, issues, subs


def auto_match_pass(graph: Graph, cfg: MatchConfig | None = None, rules: RuleSet | None = None,
                    strict: bool = False) -> tuple[Graph, list[IssueRecord]]:
    """Substitute unsupported operators; unmatched nodes are reported unresolved.

    With ``strict`` the first unmatched node raises NoMatchError instead.
    """
    graph, issues, _ = auto_match(graph, cfg, rules)
    if strict:
        for rec in issues:
            if rec.resolved_by is None:
                raise NoMatchError(rec.node_name, graph.node(rec.node_name).op_type)
    return graph, issues
