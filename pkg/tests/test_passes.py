import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modelift.equivalence import compare_models
from modelift.errors import NoMatchError
from modelift.fixtures import (
    blobs_classifier,
    conv_relu_graph,
    custom_op_suite,
    dequantized_fc,
    l2_normalization_graph,
    prunable_graph,
    quantized_fc,
    reference_kernels,
)
from modelift.graph import ConstTensor, DType, IssueCategory, Node, QuantParams, make_graph
from modelift.interpreter import KERNELS, TensorValue, apply_node, evaluate, kernel_quantize_linear
from modelift.issues import validate
from modelift.passes import (
    MatchConfig,
    auto_match_pass,
    dice_similarity,
    lcs_length,
    normalize_specs_pass,
    prune_pass,
    transform,
    translate_pass,
)
from modelift.passes.automatch import _normalize, rank_candidates
from modelift.rules import RuleSet, default_rules, load_rules


def brute_lcs(a: str, b: str) -> int:
    """Longest subsequence of the shorter string that is also a subsequence of the longer one."""
    if len(a) > len(b):
        a, b = b, a

    def is_subseq(s, t):
        it = iter(t)
        return all(ch in it for ch in s)

    for k in range(len(a), 0, -1):
        if any(is_subseq("".join(c), b) for c in itertools.combinations(a, k)):
            return k
    return 0


# -- prune -------------------------------------------------------------------

def test_prune_folds_weight_dequantize():
    g = dequantized_fc()
    pruned, issues = prune_pass(g)
    assert [n.op_type for n in pruned.nodes] == ["FullyConnected"]
    assert [(i.category, i.resolved_by) for i in issues] == [(IssueCategory.STRUCTURE_MISMATCH, "prune")]
    w = pruned.const_map["weight"]
    codes = g.const_map["weight_q"].data.astype(np.float64)
    assert w.spec.dtype is DType.FLOAT32
    assert np.allclose(w.data, (codes - 128) * 0.05)
    assert "weight_q" not in pruned.const_map


def test_prune_dequantizes_directly_read_quantized_weights():
    pruned, issues = prune_pass(quantized_fc())
    assert validate(pruned) == []
    x = {"x": np.array([[0.3, -1.0, 2.0]], np.float32)}
    assert np.allclose(evaluate(pruned, x)["y"].array, evaluate(quantized_fc(), x)["y"].array)


def test_prune_noop():
    g = conv_relu_graph()
    pruned, issues = prune_pass(g)
    assert pruned == g and issues == []


def test_prune_transpose_matches_kernel():
    w = np.arange(6, dtype=np.float32).reshape(2, 3)
    g = make_graph("t", [("x", (1, 3))], ["y"], [
        Node("Transpose", "tr", ["w"], ["wt"], {"perm": [1, 0]}),
        Node("Gemm", "gemm", ["x", "wt"], ["y"])], [ConstTensor.from_array("w", w)])
    pruned, _ = prune_pass(g)
    folded = pruned.const_map["wt"].data
    oracle = apply_node(g.nodes[0], [TensorValue(w)], KERNELS)[0].array
    assert np.array_equal(folded, oracle)
    assert np.array_equal(folded, w.T)


@pytest.mark.parametrize("seed", range(5))
def test_prune_preserves_semantics(seed):
    g = prunable_graph(seed)
    pruned, issues = prune_pass(g)
    assert issues and all(i.resolved_by == "prune" for i in issues)
    assert all(n.op_type in ("FullyConnected", "Relu") for n in pruned.nodes)
    assert compare_models(g, pruned, n=20, seed=seed).mean_scaled <= 1e-6


# -- translate ----------------------------------------------------------------

def _single_quantize(scale, zp):
    return make_graph("q", [("x", (1, 16))], ["y"], [
        Node("QuantizeLinear", "q", ["x"], ["y"], {"scale": scale, "zero_point": zp})])


def test_translate_quantize_structure_and_values():
    scale, zp = 0.05, 10
    g = _single_quantize(scale, zp)
    t, issues = translate_pass(g)
    assert [n.op_type for n in t.nodes] == ["Div", "Add", "Clip"]
    assert [(i.category, i.resolved_by) for i in issues] == [(IssueCategory.OPERATOR_MISMATCH, "translate")]
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.uniform(0, 255 * scale, (1, 16)).astype(np.float32)
        cont = evaluate(t, {"x": x})["y"].array.astype(np.float64)
        codes = evaluate(g, {"x": x})["y"].array.astype(np.float64)
        assert np.max(np.abs(cont - codes)) <= 0.5 + 1e-4
        assert np.array_equal(np.clip(np.rint(cont), 0, 255), codes)


def test_translate_dequantize_activation():
    g = make_graph("dq", [("x", (1,))], ["y"], [
        Node("QuantizeLinear", "q", ["x"], ["xq"], {"scale": 0.1, "zero_point": 3}),
        Node("DequantizeLinear", "dq", ["xq"], ["y"])])
    t, issues = translate_pass(g)
    assert [n.op_type for n in t.nodes] == ["Div", "Add", "Clip", "Sub", "Mul"]
    sub_mul = make_graph("sm", [("xq", (1,))], ["y"], [n for n in t.nodes if n.op_type in ("Sub", "Mul")],
                         [c for c in t.constants if c.name.startswith("dq/")])
    assert evaluate(sub_mul, {"xq": np.array([8.0], np.float32)})["y"].array[0] == pytest.approx(0.5)


def test_translate_noop():
    g = conv_relu_graph()
    assert translate_pass(g) == (g, [])


def test_constant_dequantize_is_not_translated():
    g = dequantized_fc()
    t, issues = translate_pass(g)
    assert t == g and issues == []


# -- dice / auto-match ---------------------------------------------------------

def test_dice_examples():
    assert dice_similarity("LpNormalization", "LpNormalization") == 1.0
    assert dice_similarity("Abs", "xyz") == 0.0
    assert dice_similarity("", "") == 0.0
    s1, s2 = _normalize("TFL_L2_NORMALIZATION"), _normalize("LpNormalization")
    assert (s1, s2) == ("TFLL2NORMALIZATION", "LPNORMALIZATION")
    assert brute_lcs(s1, s2) == 14 == lcs_length(s1, s2)
    assert abs(dice_similarity("TFL_L2_NORMALIZATION", "LpNormalization") - 28 / 33) <= 1e-12


words = st.text(alphabet="ABCLNOPRTU_2l", max_size=9)


@settings(max_examples=150, deadline=None)
@given(words, words)
def test_lcs_matches_brute_force_and_dice_properties(a, b):
    na, nb = _normalize(a), _normalize(b)
    assert lcs_length(na, nb) == brute_lcs(na, nb)
    d = dice_similarity(a, b)
    assert d == dice_similarity(b, a)
    assert 0.0 <= d <= 1.0
    assert (d == 1.0) == (na == nb and na != "")
    if na or nb:
        assert Fraction(d).limit_denominator(100) == Fraction(2 * lcs_length(na, nb), len(na) + len(nb))


def test_rank_candidates_ties_lexicographic():
    ranked = rank_candidates("XYZ", ["Sub", "Add", "Mul"])
    assert [c for _, c in ranked] == ["Add", "Mul", "Sub"]


def test_auto_match_l2_normalization():
    g = l2_normalization_graph()
    out, issues = auto_match_pass(g, MatchConfig(alpha=0.1))
    assert out.node("l2_norm").op_type == "LpNormalization"
    assert issues[0].resolved_by == "auto_match"
    with pytest.raises(NoMatchError):
        auto_match_pass(g, MatchConfig(alpha=0.0), strict=True)


def test_auto_match_supported_untouched():
    g = conv_relu_graph()
    assert auto_match_pass(g) == (g, [])


def test_auto_match_with_reference_kernel_probes():
    node = Node("TFL_TANH", "t", ["x"], ["y"])
    g = make_graph("probe", [("x", (1, 8))], ["y"], [node])
    cfg = MatchConfig(alpha=1e-5, reference_kernels=reference_kernels(), probe_count=20)
    out, issues = auto_match_pass(g, cfg)
    assert out.node("t").op_type == "Tanh"
    # without any oracle no candidate can be vetted
    _, issues = auto_match_pass(g, MatchConfig(alpha=100))
    assert issues[0].resolved_by is None


def test_alpha_monotone_subsets():
    suite = custom_op_suite()
    alphas = [0, 0.001, 0.01, 0.1, 100]
    wins = [{g.name for g in suite if transform(g, MatchConfig(alpha=a))[1].success} for a in alphas]
    assert wins[0] == set()
    assert wins[-1] == {g.name for g in suite}
    for lo, hi in zip(wins, wins[1:]):
        assert lo <= hi


# -- normalize -----------------------------------------------------------------

def test_normalize_fills_conv_defaults():
    g = conv_relu_graph()
    bare = g.replace(nodes=[Node(n.op_type, n.name, n.inputs, n.outputs,
                                 {k: v for k, v in n.attributes.items() if k != "strides"} if n.op_type == "Conv2D"
                                 else n.attributes) for n in g.nodes])
    fixed, issues = normalize_specs_pass(bare)
    assert fixed.node("conv").attributes["strides"] == [1, 1]
    assert len(issues) == 1 and issues[0].category is IssueCategory.SPECIFICATION_MISMATCH


def test_normalize_negative_axis_and_reorder():
    g = make_graph("cat", [("a", (1, 2, 3, 3)), ("b", (1, 2, 3, 1))], ["y"], [
        Node("Concat", "cat", ["b", "a"], ["y"], {"axis": -1, "input_order": [1, 0]})])
    fixed, issues = normalize_specs_pass(g)
    node = fixed.node("cat")
    assert node.attributes["axis"] == 3
    assert node.inputs == ("a", "b")
    assert "input_order" not in node.attributes
    assert len(issues) == 1


def test_normalize_resize_fallback_and_noop():
    g = make_graph("rs", [("x", (1, 1, 2, 2))], ["y"], [
        Node("Resize", "rs", ["x"], ["y"], {"mode": "cubic", "scales": [1, 1, 2, 2]})])
    assert [r.category for r in validate(g)] == [IssueCategory.SPECIFICATION_MISMATCH]
    fixed, issues = normalize_specs_pass(g)
    assert fixed.node("rs").attributes["mode"] == "linear"
    assert normalize_specs_pass(fixed) == (fixed, [])


# -- transform -----------------------------------------------------------------

def test_transform_quantized_fixture():
    g = blobs_classifier()
    out, report = transform(g)
    assert report.success and not report.errors
    cats = {i.category for i in report.issues}
    assert {IssueCategory.STRUCTURE_MISMATCH, IssueCategory.OPERATOR_MISMATCH} <= cats
    assert all(i.resolved_by for i in report.issues)
    assert not {"QuantizeLinear", "DequantizeLinear"} & {n.op_type for n in out.nodes}
    assert validate(out) == []


def test_transform_debuggable_graph_unchanged():
    g = conv_relu_graph()
    out, report = transform(g)
    assert out == g and report.success and report.issues == []


def test_transform_unmatched_custom_op():
    out, report = transform(l2_normalization_graph(), MatchConfig(alpha=0.0))
    assert not report.success
    assert [(i.category, i.resolved_by) for i in report.unresolved] == [(IssueCategory.OPERATOR_NOT_SUPPORTED, None)]


@pytest.mark.parametrize("build", [blobs_classifier, l2_normalization_graph, dequantized_fc, quantized_fc,
                                   lambda: prunable_graph(3)])
def test_transform_idempotent(build):
    once, _ = transform(build())
    twice, report = transform(once)
    assert twice == once
    assert report.success and report.issues == []


def test_transform_report_json():
    _, report = transform(blobs_classifier())
    doc = report.to_json()
    assert set(doc) == {"success", "issues", "substitutions", "errors"}
    assert {"category", "node", "detail", "resolved_by"} == set(doc["issues"][0])


# -- rule tables ---------------------------------------------------------------

def test_default_rules_shape():
    rules = default_rules()
    assert set(rules.prune) == {"DequantizeLinear", "QuantizeLinear", "Reshape", "Transpose", "Cast"}
    assert set(rules.translate) == {"QuantizeLinear", "DequantizeLinear"}
    assert "LpNormalization" in rules.supported


def test_rules_from_env(tmp_path, monkeypatch):
    import json

    from importlib import resources
    doc = json.loads(resources.files("modelift").joinpath("data/rules.json").read_text())
    doc["supported"] = ["Relu"]
    (tmp_path / "rules.json").write_text(json.dumps(doc))
    monkeypatch.setenv("MODELIFT_RULES", str(tmp_path))
    assert load_rules().supported == ("Relu",)


def test_rules_reject_prune_op_without_kernel():
    doc = {"prune": ["Mystery"], "translate": [], "supported": []}
    with pytest.raises(Exception):
        RuleSet.from_json(doc)


def test_fixture_quant_params_valid():
    for c in blobs_classifier().constants:
        if c.spec.dtype is DType.UINT8:
            assert isinstance(c.quant, QuantParams)
    assert kernel_quantize_linear(np.float32(2.0), 1 / 50, 128).array == 228
