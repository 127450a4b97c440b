"""Computation-graph data model and the MGF interchange format.

An MGF file is a JSON document describing a DAG of operator nodes over named
values.  Values are produced exactly once: by a graph input, a constant or a
node output.  Constant data and trace arrays are stored row-major as plain JSON
numbers so files stay diffable.
"""

from __future__ import annotations

import dataclasses
import enum
import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import CycleError, ParseError, ValidationError

__all__ = [
    "DType",
    "QuantParams",
    "TensorSpec",
    "ConstTensor",
    "Node",
    "TraceRecord",
    "Graph",
    "FORMAT_VERSION",
    "load_mgf",
    "save_mgf",
    "loads_mgf",
    "dumps_mgf",
    "graph_from_dict",
    "graph_to_dict",
    "check_graph",
    "topo_sort",
    "make_graph",
    "IssueCategory",
    "IssueRecord",
]

FORMAT_VERSION = 1


class DType(enum.Enum):
    FLOAT32 = "float32"
    UINT8 = "uint8"
    INT8 = "int8"
    INT32 = "int32"
    INT64 = "int64"
    BOOL = "bool"

    @property
    def numpy(self) -> np.dtype:
        return np.dtype(self.value)

    @property
    def is_float(self) -> bool:
        return self is DType.FLOAT32

    @property
    def is_quantized(self) -> bool:
        return self in (DType.UINT8, DType.INT8)

    def bounds(self) -> tuple[float, float]:
        if self is DType.FLOAT32:
            f = float(np.finfo(np.float32).max)
            return -f, f
        if self is DType.BOOL:
            return 0, 1
        info = np.iinfo(self.numpy)
        return int(info.min), int(info.max)

    @classmethod
    def parse(cls, text: str) -> "DType":
        try:
            return cls(str(text).lower())
        except ValueError:
            raise ParseError(f"unknown dtype {text!r}") from None

    @classmethod
    def of(cls, array: np.ndarray) -> "DType":
        kind = np.asarray(array).dtype
        if kind.kind == "f":
            return cls.FLOAT32
        if kind == np.bool_:
            return cls.BOOL
        try:
            return cls(kind.name)
        except ValueError:
            return cls.INT64


@dataclass(frozen=True)
class QuantParams:
    """Affine quantization: real = (code - zero_point) * scale."""

    scale: float
    zero_point: int = 0

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValidationError(f"quantization scale must be > 0, got {self.scale}")


@dataclass(frozen=True)
class TensorSpec:
    name: str
    dtype: DType
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class ConstTensor:
    spec: TensorSpec
    data: np.ndarray
    quant: QuantParams | None = None

    @classmethod
    def from_array(cls, name: str, array, dtype: DType | None = None,
                   quant: QuantParams | None = None) -> "ConstTensor":
        array = np.asarray(array)
        dtype = dtype or DType.of(array)
        shape = tuple(int(d) for d in array.shape) or (1,)
        data = np.ascontiguousarray(array, dtype=dtype.numpy).reshape(shape)
        return cls(TensorSpec(name, dtype, shape), data, quant)

    @property
    def name(self) -> str:
        return self.spec.name

    def __eq__(self, other):
        if not isinstance(other, ConstTensor):
            return NotImplemented
        return (self.spec == other.spec and self.quant == other.quant
                and self.data.dtype == other.data.dtype
                and np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True)
class Node:
    op_type: str
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    attributes: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "attributes",
                           {str(k): _plain(v) for k, v in dict(self.attributes).items()})

    __hash__ = None

    def with_attributes(self, **updates) -> "Node":
        attrs = dict(self.attributes)
        attrs.update(updates)
        return dataclasses.replace(self, attributes=attrs)


@dataclass(frozen=True, eq=False)
class TraceRecord:
    """Recorded input/output pair from the original on-device model."""

    inputs: dict[str, np.ndarray]
    outputs: dict[str, np.ndarray]

    def __post_init__(self):
        # traces are stored flat, row-major; real values as float32
        def flat(v):
            a = np.asarray(v).reshape(-1)
            return a.astype(np.float32) if a.dtype.kind == "f" else a

        for field_name in ("inputs", "outputs"):
            object.__setattr__(self, field_name, {k: flat(v) for k, v in getattr(self, field_name).items()})

    def __eq__(self, other):
        if not isinstance(other, TraceRecord):
            return NotImplemented
        return _arrays_equal(self.inputs, other.inputs) and _arrays_equal(self.outputs, other.outputs)

    __hash__ = None


@dataclass(frozen=True)
class Graph:
    name: str
    inputs: tuple[TensorSpec, ...]
    outputs: tuple[str, ...]
    constants: tuple[ConstTensor, ...] = ()
    nodes: tuple[Node, ...] = ()
    traces: tuple[TraceRecord, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "constants", tuple(self.constants))
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if self.traces is not None:
            object.__setattr__(self, "traces", tuple(self.traces))

    __hash__ = None

    def replace(self, **changes) -> "Graph":
        return dataclasses.replace(self, **changes)

    @property
    def const_map(self) -> dict[str, ConstTensor]:
        return {c.name: c for c in self.constants}

    @property
    def input_map(self) -> dict[str, TensorSpec]:
        return {s.name: s for s in self.inputs}

    def node(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def producers(self) -> dict[str, Node]:
        return {out: n for n in self.nodes for out in n.outputs}

    def consumers(self) -> dict[str, list[Node]]:
        users: dict[str, list[Node]] = {}
        for n in self.nodes:
            for v in n.inputs:
                users.setdefault(v, []).append(n)
        return users


class IssueCategory(enum.Enum):
    STRUCTURE_MISMATCH = "STRUCTURE_MISMATCH"
    OPERATOR_MISMATCH = "OPERATOR_MISMATCH"
    OPERATOR_NOT_SUPPORTED = "OPERATOR_NOT_SUPPORTED"
    SPECIFICATION_MISMATCH = "SPECIFICATION_MISMATCH"


@dataclass(frozen=True)
class IssueRecord:
    """One debuggability problem found on a node.

    Categories: STRUCTURE_MISMATCH (constant-fed extra operator),
    OPERATOR_MISMATCH (operator with a translation rule),
    OPERATOR_NOT_SUPPORTED (no kernel, no rule), SPECIFICATION_MISMATCH
    (attribute/ordering anomaly).
    """

    category: IssueCategory
    node_name: str
    detail: str = ""
    resolved_by: str | None = None

    @property
    def key(self) -> tuple[str, IssueCategory]:
        return self.node_name, self.category

    def to_json(self) -> dict:
        return {"category": self.category.value, "node": self.node_name,
                "detail": self.detail, "resolved_by": self.resolved_by}


def _plain(value):
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def _arrays_equal(a: Mapping[str, np.ndarray], b: Mapping[str, np.ndarray]) -> bool:
    if a.keys() != b.keys():
        return False
    return all(np.array_equal(np.asarray(a[k]), np.asarray(b[k])) for k in a)


# -- structural checks -------------------------------------------------------

_TOP_KEYS = {"format_version", "name", "inputs", "outputs", "constants", "nodes", "reference_traces"}


def check_graph(graph: Graph) -> None:
    """Raise ValidationError unless every structural invariant holds."""
    defined: dict[str, str] = {}

    def define(name: str, owner: str):
        if not name:
            raise ValidationError(f"empty value name in {owner}", owner)
        if name in defined:
            raise ValidationError(
                f"value {name!r} assigned twice ({defined[name]} and {owner})", name)
        defined[name] = owner

    for spec in graph.inputs:
        if not spec.shape or any(int(d) < 1 for d in spec.shape):
            raise ValidationError(f"input {spec.name!r} has invalid shape {spec.shape}", spec.name)
        define(spec.name, f"input {spec.name}")
    for const in graph.constants:
        _check_const(const)
        define(const.name, f"constant {const.name}")
    names = set()
    for node in graph.nodes:
        if not node.name:
            raise ValidationError("node with empty name")
        if node.name in names:
            raise ValidationError(f"duplicate node name {node.name!r}", node.name)
        names.add(node.name)
        if not node.outputs:
            raise ValidationError(f"node {node.name!r} has no outputs", node.name)
        for out in node.outputs:
            define(out, f"node {node.name}")
    for node in graph.nodes:
        for v in node.inputs:
            if v not in defined:
                raise ValidationError(
                    f"node {node.name!r} references undefined value {v!r}", v)
    for out in graph.outputs:
        if out not in defined:
            raise ValidationError(f"graph output {out!r} is not produced by anything", out)
    _check_quantized_consumers(graph)
    topo_sort(graph)
    if graph.traces:
        _check_traces(graph)


def _check_const(const: ConstTensor) -> None:
    spec = const.spec
    if not spec.shape or any(int(d) < 1 for d in spec.shape):
        raise ValidationError(f"constant {spec.name!r} has invalid shape {spec.shape}", spec.name)
    if const.data.size != spec.size:
        raise ValidationError(
            f"constant {spec.name!r} has {const.data.size} elements, shape needs {spec.size}",
            spec.name)
    if spec.dtype is DType.FLOAT32:
        if not np.all(np.isfinite(const.data)):
            raise ValidationError(f"constant {spec.name!r} contains non-finite values", spec.name)
    if const.quant is not None and spec.dtype.is_quantized:
        lo, hi = spec.dtype.bounds()
        if not lo <= const.quant.zero_point <= hi:
            raise ValidationError(
                f"zero point {const.quant.zero_point} outside {spec.dtype.value} range", spec.name)


# Ops allowed to consume raw integer codes without quantization parameters.
_CODE_CONSUMERS = {"DequantizeLinear", "Reshape", "Transpose", "Cast", "Concat", "Flatten"}


def _check_quantized_consumers(graph: Graph) -> None:
    consts = graph.const_map
    for node in graph.nodes:
        if node.op_type in _CODE_CONSUMERS:
            continue
        for v in node.inputs:
            c = consts.get(v)
            if c is not None and c.spec.dtype.is_quantized and c.quant is None:
                raise ValidationError(
                    f"{c.spec.dtype.value} constant {v!r} feeds {node.op_type} node "
                    f"{node.name!r} without quantization parameters", node.name)


def _check_traces(graph: Graph) -> None:
    in_specs = graph.input_map
    for i, trace in enumerate(graph.traces):
        if set(trace.inputs) != set(in_specs):
            raise ValidationError(f"trace {i} inputs {sorted(trace.inputs)} != graph inputs")
        if set(trace.outputs) != set(graph.outputs):
            raise ValidationError(f"trace {i} outputs {sorted(trace.outputs)} != graph outputs")
        for name, arr in trace.inputs.items():
            if np.asarray(arr).size != in_specs[name].size:
                raise ValidationError(f"trace {i} input {name!r} has wrong length", name)


def topo_sort(graph: Graph) -> list[Node]:
    """Kahn's algorithm; ready nodes are released in ascending name order."""
    producers = graph.producers()
    pending: dict[str, set[str]] = {}
    dependents: dict[str, list[Node]] = {}
    for node in graph.nodes:
        deps = {producers[v].name for v in node.inputs if v in producers}
        pending[node.name] = deps
        for d in deps:
            dependents.setdefault(d, []).append(node)
    by_name = {n.name: n for n in graph.nodes}
    ready = [name for name, deps in pending.items() if not deps]
    heapq.heapify(ready)
    order: list[Node] = []
    while ready:
        name = heapq.heappop(ready)
        order.append(by_name[name])
        for child in dependents.get(name, ()):
            deps = pending[child.name]
            deps.discard(name)
            if not deps:
                heapq.heappush(ready, child.name)
    if len(order) != len(graph.nodes):
        done = {n.name for n in order}
        stuck = sorted({v for n in graph.nodes if n.name not in done
                        for v in n.inputs if v in producers and producers[v].name not in done})
        raise CycleError(stuck)
    return order


# -- JSON (de)serialization ----------------------------------------------------

def _encode_array(data: np.ndarray) -> list:
    flat = np.asarray(data).reshape(-1)
    if flat.dtype == np.float32:
        # shortest repr that round-trips through float32
        return [float(str(v)) for v in flat]
    if flat.dtype.kind == "f":
        return [float(v) for v in flat]
    if flat.dtype == np.bool_:
        return [bool(v) for v in flat]
    return [int(v) for v in flat]


def graph_to_dict(graph: Graph) -> dict:
    doc: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "name": graph.name,
        "inputs": [{"name": s.name, "dtype": s.dtype.value, "shape": list(s.shape)}
                   for s in graph.inputs],
        "outputs": list(graph.outputs),
        "constants": [],
        "nodes": [],
    }
    for c in graph.constants:
        entry = {"name": c.name, "dtype": c.spec.dtype.value, "shape": list(c.spec.shape),
                 "data": _encode_array(c.data)}
        if c.quant is not None:
            entry["quant"] = {"scale": c.quant.scale, "zero_point": c.quant.zero_point}
        doc["constants"].append(entry)
    for n in graph.nodes:
        doc["nodes"].append({"op_type": n.op_type, "name": n.name, "inputs": list(n.inputs),
                             "outputs": list(n.outputs), "attributes": dict(n.attributes)})
    if graph.traces is not None:
        doc["reference_traces"] = [
            {"inputs": {k: _encode_array(v) for k, v in t.inputs.items()},
             "outputs": {k: _encode_array(v) for k, v in t.outputs.items()}}
            for t in graph.traces]
    return doc


def _require(obj: Mapping, key: str, kind, where: str):
    if key not in obj:
        raise ParseError(f"{where}: missing key {key!r}")
    value = obj[key]
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ParseError(f"{where}: key {key!r} has wrong type {type(value).__name__}")
    return value


def _shape(value, where: str) -> tuple[int, ...]:
    if not isinstance(value, list) or not all(isinstance(d, int) and not isinstance(d, bool)
                                              for d in value):
        raise ParseError(f"{where}: shape must be a list of integers")
    return tuple(value)


def _number_list(value, where: str) -> list:
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
        raise ParseError(f"{where}: expected a list of numbers")
    return value


def graph_from_dict(doc: Mapping, validate: bool = True) -> Graph:
    if not isinstance(doc, Mapping):
        raise ParseError("MGF document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ParseError(f"unknown top-level keys {sorted(unknown)}")
    version = _require(doc, "format_version", int, "document")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {version}")
    name = _require(doc, "name", str, "document")

    inputs = []
    for i, entry in enumerate(_require(doc, "inputs", list, "document")):
        where = f"inputs[{i}]"
        if not isinstance(entry, Mapping):
            raise ParseError(f"{where}: expected an object")
        inputs.append(TensorSpec(_require(entry, "name", str, where),
                                 DType.parse(_require(entry, "dtype", str, where)),
                                 _shape(entry.get("shape"), where)))
    outputs = _require(doc, "outputs", list, "document")
    if not all(isinstance(o, str) for o in outputs):
        raise ParseError("outputs must be value names")

    constants = []
    for i, entry in enumerate(doc.get("constants", [])):
        where = f"constants[{i}]"
        if not isinstance(entry, Mapping):
            raise ParseError(f"{where}: expected an object")
        cname = _require(entry, "name", str, where)
        dtype = DType.parse(_require(entry, "dtype", str, where))
        shape = _shape(entry.get("shape"), where)
        raw = _number_list(entry.get("data"), where)
        expected = int(np.prod(shape, dtype=np.int64)) if shape else 0
        if len(raw) != expected or expected < 1:
            raise ValidationError(
                f"constant {cname!r} has {len(raw)} elements, shape {list(shape)} needs {expected}",
                cname)
        lo, hi = dtype.bounds()
        arr = np.asarray(raw, dtype=np.float64)
        if not dtype.is_float and (np.any(arr < lo) or np.any(arr > hi) or np.any(arr != np.round(arr))):
            raise ValidationError(f"constant {cname!r} has values not representable as {dtype.value}",
                                  cname)
        quant = None
        if "quant" in entry and entry["quant"] is not None:
            q = entry["quant"]
            if not isinstance(q, Mapping):
                raise ParseError(f"{where}: quant must be an object")
            try:
                quant = QuantParams(float(q["scale"]), int(q.get("zero_point", 0)))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{where}: bad quant block ({exc})") from None
        data = np.asarray(raw, dtype=dtype.numpy).reshape(shape)
        constants.append(ConstTensor(TensorSpec(cname, dtype, shape), data, quant))

    nodes = []
    for i, entry in enumerate(_require(doc, "nodes", list, "document")):
        where = f"nodes[{i}]"
        if not isinstance(entry, Mapping):
            raise ParseError(f"{where}: expected an object")
        attrs = entry.get("attributes", {})
        if not isinstance(attrs, Mapping):
            raise ParseError(f"{where}: attributes must be an object")
        ins = _require(entry, "inputs", list, where)
        outs = _require(entry, "outputs", list, where)
        if not all(isinstance(v, str) for v in ins + outs):
            raise ParseError(f"{where}: inputs/outputs must be value names")
        nodes.append(Node(_require(entry, "op_type", str, where), _require(entry, "name", str, where),
                          ins, outs, dict(attrs)))

    traces = None
    if doc.get("reference_traces") is not None:
        traces = []
        for i, entry in enumerate(doc["reference_traces"]):
            where = f"reference_traces[{i}]"
            if not isinstance(entry, Mapping) or not isinstance(entry.get("inputs"), Mapping) \
                    or not isinstance(entry.get("outputs"), Mapping):
                raise ParseError(f"{where}: expected inputs/outputs objects")
            traces.append(TraceRecord(
                {k: np.asarray(_number_list(v, where), dtype=np.float64) for k, v in entry["inputs"].items()},
                {k: np.asarray(_number_list(v, where), dtype=np.float64) for k, v in entry["outputs"].items()}))

    graph = Graph(name, inputs, outputs, constants, nodes, traces)
    if validate:
        check_graph(graph)
    return graph


def dumps_mgf(graph: Graph) -> str:
    return json.dumps(graph_to_dict(graph), indent=1, sort_keys=False)


def loads_mgf(text: str) -> Graph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    return graph_from_dict(doc)


def load_mgf(path) -> Graph:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 ({exc})") from None
    return loads_mgf(text)


def save_mgf(graph: Graph, path) -> None:
    Path(path).write_text(dumps_mgf(graph) + "\n", encoding="utf-8")


def make_graph(name: str, inputs: Iterable, outputs: Sequence[str], nodes: Iterable[Node] = (),
               constants: Iterable[ConstTensor] = (), traces=None) -> Graph:
    """Convenience constructor; ``inputs`` may hold (name, shape) or (name, shape, dtype) tuples."""
    specs = []
    for item in inputs:
        if isinstance(item, TensorSpec):
            specs.append(item)
        else:
            iname, shape, *rest = item
            specs.append(TensorSpec(iname, rest[0] if rest else DType.FLOAT32, tuple(shape)))
    graph = Graph(name, specs, tuple(outputs), tuple(constants), tuple(nodes), traces)
    check_graph(graph)
    return graph
