import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modelift.errors import CycleError, ParseError, ValidationError
from modelift.fixtures import blobs_classifier, conv_relu_graph, dequantized_fc, l2_normalization_graph
from modelift.graph import (
    ConstTensor,
    DType,
    Graph,
    IssueCategory,
    Node,
    QuantParams,
    TensorSpec,
    dumps_mgf,
    graph_to_dict,
    load_mgf,
    loads_mgf,
    make_graph,
    save_mgf,
    topo_sort,
)
from modelift.issues import validate


def relu_graph():
    return make_graph("relu", [("x", (1, 4))], ["y"], [Node("Relu", "r", ["x"], ["y"])])


def test_minimal_file_loads(tmp_path):
    doc = {"format_version": 1, "name": "m",
           "inputs": [{"name": "x", "dtype": "float32", "shape": [1, 4]}],
           "outputs": ["y"], "constants": [],
           "nodes": [{"op_type": "Relu", "name": "r", "inputs": ["x"], "outputs": ["y"], "attributes": {}}]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    g = load_mgf(path)
    assert len(g.nodes) == 1 and g.nodes[0].op_type == "Relu"


def test_undefined_reference_names_value():
    doc = graph_to_dict(relu_graph())
    doc["nodes"].append({"op_type": "Add", "name": "a", "inputs": ["y", "w"], "outputs": ["z"], "attributes": {}})
    with pytest.raises(ValidationError) as err:
        loads_mgf(json.dumps(doc))
    assert err.value.name == "w"
    assert "'w'" in str(err.value)


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(format_version=2),
    lambda d: d.update(extra=1),
    lambda d: d.pop("nodes"),
    lambda d: d["inputs"][0].update(dtype="float16"),
])
def test_schema_violations_are_parse_errors(mutate):
    doc = graph_to_dict(relu_graph())
    mutate(doc)
    with pytest.raises(ParseError):
        loads_mgf(json.dumps(doc))


def test_malformed_json():
    with pytest.raises(ParseError):
        loads_mgf("{not json")


def test_quantized_fixture_has_two_weight_dequantize_branches():
    g = blobs_classifier()
    consts = g.const_map
    weight_dq = [n for n in g.nodes if n.op_type == "DequantizeLinear" and n.inputs[0] in consts]
    assert len(weight_dq) == 2


@pytest.mark.parametrize("build", [relu_graph, blobs_classifier, l2_normalization_graph, conv_relu_graph])
def test_round_trip(tmp_path, build):
    g = build()
    save_mgf(g, tmp_path / "g.json")
    assert load_mgf(tmp_path / "g.json") == g


def test_float_precision_preserved():
    c = ConstTensor.from_array("c", np.array([0.1, 1 / 3, 1e-30, -2.5], dtype=np.float32))
    g = make_graph("c", [("x", (4,))], ["y"], [Node("Add", "a", ["x", "c"], ["y"])], [c])
    back = loads_mgf(dumps_mgf(g))
    assert back.const_map["c"].data.tobytes() == c.data.tobytes()
    assert "0.1," in dumps_mgf(g).replace(" ", "").replace("\n", "")


def test_const_length_and_range_checked():
    with pytest.raises(ValidationError):
        make_graph("bad", [("x", (2,))], ["y"], [Node("Add", "a", ["x", "c"], ["y"])],
                   [ConstTensor(TensorSpec("c", DType.FLOAT32, (3,)), np.zeros(2, np.float32))])
    with pytest.raises(ValidationError):
        QuantParams(0.0, 0)


def test_single_assignment():
    with pytest.raises(ValidationError):
        make_graph("dup", [("x", (2,))], ["y"],
                   [Node("Relu", "a", ["x"], ["y"]), Node("Relu", "b", ["x"], ["y"])])


def test_topo_chain_and_tie_break():
    chain = make_graph("chain", [("x", (2,))], ["c"], [
        Node("Relu", "C", ["b"], ["c"]), Node("Relu", "A", ["x"], ["a"]), Node("Relu", "B", ["a"], ["b"])])
    assert [n.name for n in topo_sort(chain)] == ["A", "B", "C"]
    diamond = make_graph("diamond", [("x", (2,))], ["d"], [
        Node("Add", "D", ["c", "b"], ["d"]), Node("Relu", "C", ["a"], ["c"]),
        Node("Relu", "B", ["a"], ["b"]), Node("Relu", "A", ["x"], ["a"])])
    assert [n.name for n in topo_sort(diamond)] == ["A", "B", "C", "D"]


def test_cycle_detected():
    g = Graph("cyc", [TensorSpec("x", DType.FLOAT32, (2,))], ["y"], [],
              [Node("Add", "self", ["x", "y"], ["y"])])
    with pytest.raises(CycleError) as err:
        topo_sort(g)
    assert "y" in err.value.values


@st.composite
def random_dags(draw):
    n = draw(st.integers(1, 8))
    nodes = []
    for i in range(n):
        pool = ["x"] + [f"v{j}" for j in range(i)]
        k = draw(st.integers(1, 2))
        ins = [draw(st.sampled_from(pool)) for _ in range(k)]
        op = "Add" if k == 2 else "Relu"
        nodes.append(Node(op, draw(st.text("abcdefgh", min_size=1, max_size=3)) + str(i), ins, [f"v{i}"]))
    order = draw(st.permutations(nodes))
    return make_graph("dag", [("x", (2,))], [f"v{n - 1}"], order)


@settings(max_examples=60, deadline=None)
@given(random_dags())
def test_topo_sort_brute_force(g):
    order = topo_sort(g)
    assert sorted(n.name for n in order) == sorted(n.name for n in g.nodes)
    pos = {v: i for i, n in enumerate(order) for v in n.outputs}
    for i, n in enumerate(order):
        assert all(pos.get(v, -1) < i for v in n.inputs)
    # the heap tie-break gives the lexicographically smallest valid order
    valid = [p for p in itertools.permutations(g.nodes)
             if all(all(v == "x" or any(v in q.outputs for q in p[:i]) for v in node.inputs)
                    for i, node in enumerate(p))] if len(g.nodes) <= 6 else None
    if valid:
        assert [n.name for n in order] == min([n.name for n in p] for p in valid)


def test_validate_examples():
    assert validate(conv_relu_graph()) == []
    recs = validate(dequantized_fc())
    assert [r.category for r in recs] == [IssueCategory.STRUCTURE_MISMATCH]
    recs = validate(l2_normalization_graph())
    assert [(r.category, r.node_name) for r in recs] == [(IssueCategory.OPERATOR_NOT_SUPPORTED, "l2_norm")]


@pytest.mark.parametrize("build", [blobs_classifier, dequantized_fc, l2_normalization_graph, conv_relu_graph])
def test_validate_idempotent_and_one_record_per_category(build):
    g = build()
    first, second = validate(g), validate(g)
    assert first == second
    keys = [(r.node_name, r.category) for r in first]
    assert len(keys) == len(set(keys))
