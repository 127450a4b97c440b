"""Seeded synthetic models and data used by the tests, demos and CLI examples.

All builders are pure functions of their arguments.  The on-device style
graphs mimic what a converter emits: uint8 weights behind DequantizeLinear,
activation Quantize/Dequantize pairs, custom op names, with numerical traces
recorded from an independent reference implementation.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .dataset import Dataset
from .graph import ConstTensor, DType, Graph, Node, QuantParams, TraceRecord, make_graph
from .interpreter import TensorValue

__all__ = [
    "blobs_centers",
    "blobs_dataset",
    "blobs_classifier",
    "quantized_mlp",
    "quantized_fc",
    "dequantized_fc",
    "l2_normalization_graph",
    "custom_op_suite",
    "reference_kernels",
    "prunable_graph",
    "conv_relu_graph",
]

BLOBS_CLASSES = 4
BLOBS_DIM = 8
BLOBS_PER_CLASS = 200
BLOBS_MIN_GAP = 3.0
BLOBS_NOISE = 0.9

# u in [0, 1] maps to x = 4u - 2 in the [-2, 2] box the centers live in
_X_SCALE = 4.0
_X_SHIFT = -2.0
_ACT_SCALE = 1.0 / 50.0
_ACT_ZP = 128


def _quantize_weights(w: np.ndarray) -> tuple[np.ndarray, QuantParams]:
    """Symmetric-range uint8 codes around zero point 128."""
    scale = max(float(np.abs(w).max()) / 127.0, 1e-8)
    codes = np.clip(np.rint(w / scale) + 128, 0, 255).astype(np.uint8)
    return codes, QuantParams(scale, 128)


def blobs_centers(seed: int = 0, num_classes: int = BLOBS_CLASSES, dim: int = BLOBS_DIM,
                  min_gap: float = BLOBS_MIN_GAP) -> np.ndarray:
    """Class centers uniform in [-2, 2]^dim, pairwise at least ``min_gap`` apart (rejection)."""
    rng = np.random.default_rng([seed, 0])
    centers: list[np.ndarray] = []
    while len(centers) < num_classes:
        cand = rng.uniform(-2.0, 2.0, dim)
        if all(np.linalg.norm(cand - c) >= min_gap for c in centers):
            centers.append(cand)
    return np.stack(centers)


def blobs_dataset(seed: int = 0, per_class: int = BLOBS_PER_CLASS, noise: float = BLOBS_NOISE) -> Dataset:
    """Gaussian blobs, returned in the attack input space u = (x + 2) / 4 clipped to [0, 1]."""
    centers = blobs_centers(seed)
    rng = np.random.default_rng([seed, 1])
    labels = np.repeat(np.arange(len(centers)), per_class)
    x = centers[labels] + noise * rng.standard_normal((len(labels), centers.shape[1]))
    u = np.clip((x - _X_SHIFT) / _X_SCALE, 0.0, 1.0)
    return Dataset(len(centers), u, labels)


def blobs_classifier(seed: int = 0) -> Graph:
    """Quantized nearest-centroid classifier over the blobs input space.

    u -> Q/DQ -> FullyConnected(DQ(4 I), -2) -> Q/DQ -> Gemm(DQ(2 mu), -|mu|^2) -> logits
    """
    centers = blobs_centers(seed)
    c, d = centers.shape
    w1_codes = np.zeros((d, d), dtype=np.uint8)
    np.fill_diagonal(w1_codes, 255)
    w1_scale = _X_SCALE / 255.0
    w2_codes, w2_q = _quantize_weights(2.0 * centers)
    constants = [
        ConstTensor.from_array("fc1/weight_q", w1_codes, DType.UINT8, QuantParams(w1_scale, 0)),
        ConstTensor.from_array("fc1/bias", np.full(d, _X_SHIFT, dtype=np.float32)),
        ConstTensor.from_array("head/weight_q", w2_codes, DType.UINT8, w2_q),
        ConstTensor.from_array("head/bias", (-np.sum(centers ** 2, axis=1)).reshape(1, c).astype(np.float32)),
    ]
    nodes = [
        Node("QuantizeLinear", "input_quant", ["input"], ["input_q"],
             {"scale": 1.0 / 255.0, "zero_point": 0}),
        Node("DequantizeLinear", "input_dequant", ["input_q"], ["input_dq"]),
        Node("DequantizeLinear", "fc1/weight_dequant", ["fc1/weight_q"], ["fc1/weight"]),
        Node("FullyConnected", "fc1", ["input_dq", "fc1/weight", "fc1/bias"], ["hidden"]),
        Node("QuantizeLinear", "hidden_quant", ["hidden"], ["hidden_q"],
             {"scale": _ACT_SCALE, "zero_point": _ACT_ZP}),
        Node("DequantizeLinear", "hidden_dequant", ["hidden_q"], ["hidden_dq"]),
        Node("DequantizeLinear", "head/weight_dequant", ["head/weight_q"], ["head/weight"]),
        Node("Gemm", "head", ["hidden_dq", "head/weight", "head/bias"], ["logits"],
             {"alpha": 1.0, "beta": 1.0, "transA": 0, "transB": 1}),
    ]
    return make_graph(f"blobs_classifier_{seed}", [("input", (1, d))], ["logits"], nodes, constants)


def quantized_mlp(seed: int = 0) -> Graph:
    """The quantized on-device style MLP; the blobs classifier doubles as this fixture."""
    return blobs_classifier(seed)


def _tiny_fc_params():
    codes = np.array([[130, 120, 128], [100, 160, 140]], dtype=np.uint8)
    quant = QuantParams(0.05, 128)
    bias = np.array([0.25, -0.5], dtype=np.float32)
    return codes, quant, bias


def quantized_fc() -> Graph:
    """A FullyConnected reading uint8 weight codes directly, as an on-device runtime does."""
    codes, quant, bias = _tiny_fc_params()
    constants = [ConstTensor.from_array("weight", codes, DType.UINT8, quant),
                 ConstTensor.from_array("bias", bias)]
    nodes = [Node("FullyConnected", "fc", ["x", "weight", "bias"], ["y"])]
    return make_graph("quantized_fc", [("x", (1, 3))], ["y"], nodes, constants)


def dequantized_fc() -> Graph:
    """The converted form of :func:`quantized_fc`: uint8 weights -> DequantizeLinear -> FullyConnected."""
    codes, quant, bias = _tiny_fc_params()
    constants = [ConstTensor.from_array("weight_q", codes, DType.UINT8, quant),
                 ConstTensor.from_array("bias", bias)]
    nodes = [Node("DequantizeLinear", "weight_dequant", ["weight_q"], ["weight"]),
             Node("FullyConnected", "fc", ["x", "weight", "bias"], ["y"])]
    return make_graph("dequantized_fc", [("x", (1, 3))], ["y"], nodes, constants)


# independent float64 implementations of what custom ops compute on device


def _ref_l2_normalize(inputs, attrs):
    x = inputs[0].real()
    norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    return [TensorValue(x / np.maximum(norm, 1e-12))]


def _ref_relu(inputs, attrs):
    return [TensorValue(np.where(inputs[0].real() > 0, inputs[0].real(), 0.0))]


def _ref_logistic(inputs, attrs):
    return [TensorValue(1.0 / (1.0 + np.exp(-inputs[0].real())))]


def _ref_tanh(inputs, attrs):
    x = inputs[0].real()
    return [TensorValue((np.exp(x) - np.exp(-x)) / (np.exp(x) + np.exp(-x)))]


def _ref_softmax(inputs, attrs):
    x = inputs[0].real()
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return [TensorValue(e / e.sum(axis=-1, keepdims=True))]


def _ref_add(inputs, attrs):
    return [TensorValue(inputs[0].real() + inputs[1].real())]


def _ref_mul(inputs, attrs):
    return [TensorValue(inputs[0].real() * inputs[1].real())]


def _ref_sub(inputs, attrs):
    return [TensorValue(inputs[0].real() - inputs[1].real())]


def _ref_avg_pool(inputs, attrs):
    x = inputs[0].real()
    n, ch, h, w = x.shape
    return [TensorValue(x.reshape(n, ch, h // 2, 2, w // 2, 2).mean(axis=(3, 5)))]


REFERENCE_OPS: dict[str, Callable] = {
    "TFL_L2_NORMALIZATION": _ref_l2_normalize,
    "TFL_RELU": _ref_relu,
    "TFL_LOGISTIC": _ref_logistic,
    "TFL_TANH": _ref_tanh,
    "TFL_SOFTMAX": _ref_softmax,
    "TFL_ADD": _ref_add,
    "TFL_MUL": _ref_mul,
    "TFL_SUB": _ref_sub,
    "TFL_AVERAGE_POOL_2D": _ref_avg_pool,
    "CUSTOM_RELU6_FREE": _ref_relu,
}


def reference_kernels() -> dict[str, Callable]:
    """Stand-ins for the on-device implementations of the custom ops used here."""
    return dict(REFERENCE_OPS)


def _record_traces(graph: Graph, count: int, noise: float, rng: np.random.Generator) -> list[TraceRecord]:
    """Run the graph with the reference kernels and add noise of exact l2 norm ``noise``."""
    from .interpreter import evaluate

    traces = []
    for _ in range(count):
        feeds = {s.name: rng.uniform(-1.0, 1.0, s.shape).astype(np.float32) for s in graph.inputs}
        outs = evaluate(graph, feeds, float_dtype=np.float64, kernels=REFERENCE_OPS)
        recorded = {}
        for name in graph.outputs:
            y = outs[name].array.astype(np.float64)
            e = rng.standard_normal(y.shape)
            recorded[name] = (y + noise * e / np.linalg.norm(e)).astype(np.float32)
        traces.append(TraceRecord(feeds, recorded))
    return traces


def l2_normalization_graph(seed: int = 0, trace_count: int = 3, noise: float = 1e-3) -> Graph:
    """A dense layer followed by the custom op ``TFL_L2_NORMALIZATION``, with recorded traces."""
    rng = np.random.default_rng([seed, 6])
    w = rng.normal(0.0, 0.5, (6, 8)).astype(np.float32)
    nodes = [Node("FullyConnected", "embed", ["x", "w"], ["h"]),
             Node("TFL_L2_NORMALIZATION", "l2_norm", ["h"], ["y"])]
    g = make_graph("l2_normalization", [("x", (1, 8))], ["y"], nodes, [ConstTensor.from_array("w", w)])
    return g.replace(traces=_record_traces(g, trace_count, noise, rng))


# op, arity, input shape, l2 norm of the noise planted in its traces
CUSTOM_SUITE = [
    ("TFL_L2_NORMALIZATION", 1, (1, 8), 5e-4),
    ("TFL_RELU", 1, (1, 8), 5e-4),
    ("TFL_LOGISTIC", 1, (1, 8), 5e-3),
    ("TFL_TANH", 1, (1, 8), 5e-3),
    ("TFL_SOFTMAX", 1, (1, 8), 5e-2),
    ("TFL_ADD", 2, (1, 8), 5e-2),
    ("TFL_MUL", 2, (1, 8), 0.5),
    ("TFL_SUB", 2, (1, 8), 0.5),
    ("TFL_AVERAGE_POOL_2D", 1, (1, 2, 4, 4), 2.0),
    ("CUSTOM_RELU6_FREE", 1, (1, 8), 5.0),
]


def custom_op_suite(seed: int = 0, trace_count: int = 3) -> list[Graph]:
    """Ten single-custom-op graphs whose traces carry increasing amounts of noise."""
    graphs = []
    for i, (op, arity, shape, noise) in enumerate(CUSTOM_SUITE):
        rng = np.random.default_rng([seed, 7, i])
        inputs = [(f"x{k}", shape) for k in range(arity)]
        attrs = {"kernel_shape": [2, 2], "strides": [2, 2]} if len(shape) == 4 else {}
        node = Node(op, op.lower(), [name for name, _ in inputs], ["y"], attrs)
        g = make_graph(f"custom_{op.lower()}", inputs, ["y"], [node])
        graphs.append(g.replace(traces=_record_traces(g, trace_count, noise, rng)))
    return graphs


def prunable_graph(seed: int) -> Graph:
    """Random two-layer net whose weights reach the math through constant-fed
    DequantizeLinear / Transpose / Reshape chains."""
    rng = np.random.default_rng([seed, 9])
    d_in = int(rng.integers(2, 7))
    d_hid = int(rng.integers(2, 7))
    d_out = int(rng.integers(2, 5))
    constants: list[ConstTensor] = []
    nodes: list[Node] = []

    def weight_chain(tag: str, rows: int, cols: int) -> str:
        """Emit a chain producing a float (rows, cols) weight and return its value name."""
        w = rng.normal(0.0, 1.0, (rows, cols))
        style = int(rng.integers(0, 3))
        if style == 0:
            codes, q = _quantize_weights(w)
            constants.append(ConstTensor.from_array(f"{tag}_q", codes, DType.UINT8, q))
            nodes.append(Node("DequantizeLinear", f"{tag}_dq", [f"{tag}_q"], [tag]))
        elif style == 1:
            codes, q = _quantize_weights(w.T)
            constants.append(ConstTensor.from_array(f"{tag}_qt", codes, DType.UINT8, q))
            nodes.append(Node("DequantizeLinear", f"{tag}_dq", [f"{tag}_qt"], [f"{tag}_t"]))
            nodes.append(Node("Transpose", f"{tag}_transpose", [f"{tag}_t"], [tag], {"perm": [1, 0]}))
        else:
            constants.append(ConstTensor.from_array(f"{tag}_flat", w.reshape(-1).astype(np.float32)))
            nodes.append(Node("Reshape", f"{tag}_reshape", [f"{tag}_flat"], [f"{tag}_r"],
                              {"shape": [cols, rows]}))
            nodes.append(Node("Transpose", f"{tag}_transpose", [f"{tag}_r"], [tag], {"perm": [1, 0]}))
        return tag

    w1 = weight_chain("w1", d_hid, d_in)
    constants.append(ConstTensor.from_array("b1", rng.normal(0, 0.5, d_hid).astype(np.float32)))
    nodes.append(Node("FullyConnected", "fc1", ["x", w1, "b1"], ["h"]))
    nodes.append(Node("Relu", "relu", ["h"], ["a"]))
    w2 = weight_chain("w2", d_out, d_hid)
    nodes.append(Node("FullyConnected", "fc2", ["a", w2], ["y"]))
    return make_graph(f"prunable_{seed}", [("x", (1, d_in))], ["y"], nodes, constants)


def conv_relu_graph(seed: int = 0) -> Graph:
    """A small float CNN that is debuggable as is."""
    rng = np.random.default_rng([seed, 11])
    constants = [
        ConstTensor.from_array("conv/w", rng.normal(0, 0.5, (4, 2, 3, 3)).astype(np.float32)),
        ConstTensor.from_array("conv/b", rng.normal(0, 0.1, 4).astype(np.float32)),
        ConstTensor.from_array("fc/w", rng.normal(0, 0.5, (3, 16)).astype(np.float32)),
    ]
    nodes = [
        Node("Conv2D", "conv", ["x", "conv/w", "conv/b"], ["c"],
             {"strides": [1, 1], "pads": [1, 1, 1, 1], "dilations": [1, 1], "group": 1}),
        Node("Relu", "relu", ["c"], ["r"]),
        Node("MaxPool2D", "pool", ["r"], ["p"], {"kernel_shape": [2, 2], "strides": [2, 2], "pads": [0, 0, 0, 0]}),
        Node("Flatten", "flatten", ["p"], ["f"], {"axis": 1}),
        Node("FullyConnected", "fc", ["f", "fc/w"], ["y"]),
    ]
    return make_graph(f"conv_relu_{seed}", [("x", (1, 2, 4, 4))], ["y"], nodes, constants)
