"""Behavioral distance between a source graph and its transformed counterpart.

Differences are scaled by the output range r of the *reference* output: 255
for uint8 outputs, max(ref) - min(ref) otherwise (falling back to 1 when the
reference is constant).  For float outputs the estimate can understate the
true difference, because the observed range is at most the real one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import EmptyDataset, ShapeError
from .graph import Graph
from .interpreter import TensorValue, evaluate, random_inputs

__all__ = [
    "DiffReport",
    "output_range",
    "scaled_mean_diff",
    "scaled_max_diff",
    "compare_models",
    "predict_labels",
    "agreement_rate",
]


def _raw(value) -> np.ndarray:
    return value.array if isinstance(value, TensorValue) else np.asarray(value)


def output_range(ref) -> float:
    arr = _raw(ref)
    if arr.dtype == np.uint8:
        return 255.0
    r = float(np.max(arr) - np.min(arr)) if arr.size else 0.0
    return r if r > 0 else 1.0


def _abs_diff(ref, test) -> np.ndarray:
    a, b = _raw(ref), _raw(test)
    if a.shape != b.shape:
        if a.size != b.size:
            raise ShapeError("compare", a.shape, b.shape)
        b = b.reshape(a.shape)
    return np.abs(a.astype(np.float64) - b.astype(np.float64))


def scaled_mean_diff(ref, test, r: float | None = None) -> float:
    """(1 / (r k)) * sum |y_i - y'_i| over the k output elements."""
    diff = _abs_diff(ref, test)
    r = output_range(ref) if r is None else r
    # the mean of |d| cannot exceed its max; clamp away summation round-off
    return float(min(diff.sum() / diff.size, diff.max()) / r)


def scaled_max_diff(ref, test, r: float | None = None) -> float:
    """(1 / r) * max |y - y'|."""
    diff = _abs_diff(ref, test)
    r = output_range(ref) if r is None else r
    return float(diff.max() / r)


@dataclass
class DiffReport:
    mean_scaled: float
    max_scaled: float
    range_r: float
    probe_count: int
    per_output: dict[str, dict] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"mean_scaled": self.mean_scaled, "max_scaled": self.max_scaled,
                "range_r": self.range_r, "probes": self.probe_count, "outputs": self.per_output}


def _check_compatible(g_ref: Graph, g_test: Graph) -> None:
    ref_in = {s.name: tuple(s.shape) for s in g_ref.inputs}
    test_in = {s.name: tuple(s.shape) for s in g_test.inputs}
    if ref_in != test_in:
        raise ShapeError("inputs", ref_in, test_in)
    if len(g_ref.outputs) != len(g_test.outputs):
        raise ShapeError("outputs", len(g_ref.outputs), len(g_test.outputs))


def compare_models(g_ref: Graph, g_test: Graph, n: int = 100, seed: int = 0) -> DiffReport:
    """Scaled mean/max differences over ``n`` seeded random probes.

    Per output the probe means are averaged and the probe maxima maximized;
    ``range_r`` is the mean range used.  The headline numbers are the mean of
    the per-output means and the max of the per-output maxima.
    """
    _check_compatible(g_ref, g_test)
    if n < 1:
        raise ValueError("need at least one probe")
    rng = np.random.default_rng(seed)
    means = np.zeros((n, len(g_ref.outputs)))
    maxes = np.zeros_like(means)
    ranges = np.zeros_like(means)
    for p in range(n):
        probe = random_inputs(g_ref, rng)
        ref = evaluate(g_ref, probe)
        test = evaluate(g_test, probe)
        for j, (a, b) in enumerate(zip(g_ref.outputs, g_test.outputs)):
            if ref[a].shape != test[b].shape:
                raise ShapeError(b, ref[a].shape, test[b].shape)
            r = output_range(ref[a])
            means[p, j] = scaled_mean_diff(ref[a], test[b], r)
            maxes[p, j] = scaled_max_diff(ref[a], test[b], r)
            ranges[p, j] = r
    per_output = {
        name: {"mean_scaled": float(means[:, j].mean()), "max_scaled": float(maxes[:, j].max()),
               "range_r": float(ranges[:, j].mean())}
        for j, name in enumerate(g_ref.outputs)
    }
    return DiffReport(float(means.mean(axis=0).mean()), float(maxes.max()),
                      float(ranges.mean()), n, per_output)


def predict_labels(graph: Graph, inputs: np.ndarray) -> np.ndarray:
    """Top-1 class of the first graph output for each flat sample row."""
    inputs = np.asarray(inputs)
    spec = graph.inputs[0]
    if len(graph.inputs) != 1:
        raise ShapeError("inputs", "a single graph input", [s.name for s in graph.inputs])
    if spec.shape[0] == 1 and len(inputs):
        batch = inputs.reshape((len(inputs),) + tuple(spec.shape[1:]))
        scores = evaluate(graph, {spec.name: batch}, batch=True)[graph.outputs[0]].array
        return np.argmax(scores.reshape(len(inputs), -1), axis=1)
    labels = [np.argmax(evaluate(graph, {spec.name: x})[graph.outputs[0]].array) for x in inputs]
    return np.asarray(labels, dtype=np.int64)


def agreement_rate(g_ref: Graph, g_test: Graph, dataset: Dataset) -> tuple[float, float, float]:
    """Top-1 accuracies of both graphs on ``dataset`` and their absolute difference."""
    if len(dataset) == 0:
        raise EmptyDataset("agreement_rate needs at least one sample")
    acc_ref = float(np.mean(predict_labels(g_ref, dataset.inputs) == dataset.labels))
    acc_test = float(np.mean(predict_labels(g_test, dataset.inputs) == dataset.labels))
    return acc_ref, acc_test, abs(acc_ref - acc_test)
