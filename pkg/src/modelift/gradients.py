"""Reverse-mode gradients through a Graph.

The forward pass is the interpreter run in float64; each differentiable op
registers a vector-Jacobian product ``vjp(args, attrs, outs, gout)`` returning
one gradient (or None) per input.  Kinks (Relu at 0, Clip at its bounds) get
subgradient 0; max pooling routes the gradient to the first maximal element.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonDifferentiable
from .graph import Graph, topo_sort
from .interpreter import (
    LP_EPS,
    TensorValue,
    avg_pool_divisor,
    clip_bounds,
    conv_geometry,
    pool_geometry,
    resize_matrices,
    run_graph,
    transpose_perm,
    window_slices,
)

__all__ = ["VJPS", "LossKind", "LossSpec", "input_gradient", "check_differentiable", "graph_vjp"]


def unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    shape = tuple(shape)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _relu(args, attrs, outs, g):
    return [g * (args[0] > 0)]


def _sigmoid(args, attrs, outs, g):
    y = outs[0]
    return [g * y * (1.0 - y)]


def _tanh(args, attrs, outs, g):
    return [g * (1.0 - outs[0] ** 2)]


def _softmax(args, attrs, outs, g):
    y = outs[0]
    axis = int(attrs.get("axis", -1))
    return [y * (g - np.sum(g * y, axis=axis, keepdims=True))]


def _add(args, attrs, outs, g):
    return [unbroadcast(g, args[0].shape), unbroadcast(g, args[1].shape)]


def _sub(args, attrs, outs, g):
    return [unbroadcast(g, args[0].shape), unbroadcast(-g, args[1].shape)]


def _mul(args, attrs, outs, g):
    a, b = args
    return [unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)]


def _div(args, attrs, outs, g):
    a, b = args
    return [unbroadcast(g / b, a.shape), unbroadcast(-g * a / (b * b), b.shape)]


def _clip(args, attrs, outs, g):
    lo, hi = clip_bounds([TensorValue(a) for a in args], attrs)
    x = args[0]
    return [g * ((x > lo) & (x < hi))] + [None] * (len(args) - 1)


def _reshape(args, attrs, outs, g):
    return [g.reshape(args[0].shape)]


def _transpose(args, attrs, outs, g):
    perm = transpose_perm(args[0].ndim, attrs)
    return [np.transpose(g, np.argsort(perm))]


def _concat(args, attrs, outs, g):
    axis = int(attrs["axis"])
    cuts = np.cumsum([a.shape[axis] for a in args])[:-1]
    return list(np.split(g, cuts, axis=axis))


def _gemm(args, attrs, outs, g):
    a, b = args[0], args[1]
    ta, tb = int(attrs.get("transA", 0)), int(attrs.get("transB", 0))
    alpha = float(attrs.get("alpha", 1.0))
    am = a.T if ta else a
    bm = b.T if tb else b
    ga = alpha * g @ bm.T
    gb = alpha * am.T @ g
    grads = [ga.T if ta else ga, gb.T if tb else gb]
    if len(args) > 2:
        grads.append(unbroadcast(float(attrs.get("beta", 1.0)) * g, args[2].shape))
    return grads


def _fully_connected(args, attrs, outs, g):
    x, w = args[0], args[1]
    grads = [g @ w, g.reshape(-1, g.shape[-1]).T @ x.reshape(-1, x.shape[-1])]
    if len(args) > 2:
        grads.append(unbroadcast(g, args[2].shape))
    return grads


def _conv2d(args, attrs, outs, g):
    x, w = args[0], args[1]
    group = int(attrs.get("group", 1))
    o, cg, kh, kw = w.shape
    stride, dil, (pt, pl, pb, pr), out_hw = conv_geometry(x.shape, (kh, kw), attrs)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    og = o // group
    for gi in range(group):
        cs = slice(gi * cg, (gi + 1) * cg)
        osl = slice(gi * og, (gi + 1) * og)
        for ki in range(kh):
            for kj in range(kw):
                si, sj = window_slices(ki, kj, stride, dil, out_hw)
                gxp[:, cs, si, sj] += np.einsum("nohw,oc->nchw", g[:, osl], w[osl, :, ki, kj])
                gw[osl, :, ki, kj] += np.einsum("nohw,nchw->oc", g[:, osl], xp[:, cs, si, sj])
    h, wd = x.shape[2:]
    grads = [gxp[:, :, pt:pt + h, pl:pl + wd], gw]
    if len(args) > 2:
        grads.append(g.sum(axis=(0, 2, 3)).reshape(args[2].shape))
    return grads


def _max_pool(args, attrs, outs, g):
    x, y = args[0], outs[0]
    (kh, kw), (stride, dil, (pt, pl, pb, pr), out_hw) = pool_geometry(x.shape, attrs)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)), constant_values=-np.inf)
    gxp = np.zeros_like(xp)
    taken = np.zeros(y.shape, dtype=bool)
    for ki in range(kh):
        for kj in range(kw):
            si, sj = window_slices(ki, kj, stride, dil, out_hw)
            hit = (xp[:, :, si, sj] == y) & ~taken
            gxp[:, :, si, sj] += g * hit
            taken |= hit
    h, w = x.shape[2:]
    return [gxp[:, :, pt:pt + h, pl:pl + w]]


def _avg_pool(args, attrs, outs, g):
    x = args[0]
    (kh, kw), (stride, dil, (pt, pl, pb, pr), out_hw) = pool_geometry(x.shape, attrs)
    gs = g / avg_pool_divisor(x.shape, attrs)
    gxp = np.zeros((x.shape[0], x.shape[1], x.shape[2] + pt + pb, x.shape[3] + pl + pr))
    for ki in range(kh):
        for kj in range(kw):
            si, sj = window_slices(ki, kj, stride, dil, out_hw)
            gxp[:, :, si, sj] += gs
    h, w = x.shape[2:]
    return [gxp[:, :, pt:pt + h, pl:pl + w]]


def _resize(args, attrs, outs, g):
    mh, mw = resize_matrices(args[0].shape, attrs)
    return [np.einsum("ih,ncij,jw->nchw", mh, g, mw)]


def _lp_normalization(args, attrs, outs, g):
    x = args[0]
    axis = int(attrs.get("axis", -1))
    norm = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))
    safe = np.maximum(norm, LP_EPS)
    y = x / safe
    gx = np.where(norm > LP_EPS, (g - y * np.sum(g * y, axis=axis, keepdims=True)) / safe, g / LP_EPS)
    return [gx]


def _cast(args, attrs, outs, g):
    return [g]


VJP = Callable[[list, dict, list, np.ndarray], list]

VJPS: dict[str, VJP] = {
    "Conv2D": _conv2d,
    "Gemm": _gemm,
    "FullyConnected": _fully_connected,
    "Relu": _relu,
    "Sigmoid": _sigmoid,
    "Tanh": _tanh,
    "Softmax": _softmax,
    "Add": _add,
    "Sub": _sub,
    "Mul": _mul,
    "Div": _div,
    "Clip": _clip,
    "Reshape": _reshape,
    "Transpose": _transpose,
    "Flatten": _reshape,
    "Concat": _concat,
    "MaxPool2D": _max_pool,
    "AveragePool2D": _avg_pool,
    "Resize": _resize,
    "LpNormalization": _lp_normalization,
    "Cast": _cast,
}


def check_differentiable(graph: Graph) -> None:
    """Raise NonDifferentiable naming the first blocking node; the message lists all blockers."""
    topo_sort(graph)
    blocked = [n for n in graph.nodes
               if n.op_type not in VJPS
               or (n.op_type == "Cast" and not str(n.attributes.get("to", "float32")).startswith("float"))]
    if blocked:
        first = blocked[0]
        exc = NonDifferentiable(first.op_type, first.name)
        if len(blocked) > 1:
            ops = sorted({n.op_type for n in blocked})
            exc.args = (f"{exc.args[0]}; {len(blocked)} blocking nodes in total ({', '.join(ops)})",)
        raise exc


def graph_vjp(graph: Graph, inputs: dict, output_grads: dict, *, batch: bool = False) -> dict[str, np.ndarray]:
    """Backpropagate ``output_grads`` (value name -> array) to every float value."""
    check_differentiable(graph)
    env = run_graph(graph, inputs, float_dtype=np.float64, batch=batch)
    return _backward(graph, env, output_grads)


def _backward(graph: Graph, env: dict, output_grads: dict) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {k: np.asarray(v, dtype=np.float64) for k, v in output_grads.items()}
    for node in reversed(topo_sort(graph)):
        gout = grads.get(node.outputs[0])
        if gout is None:
            continue
        args = [env[v].real() for v in node.inputs]
        outs = [env[v].real() for v in node.outputs]
        for name, gin in zip(node.inputs, VJPS[node.op_type](args, node.attributes, outs, gout)):
            if gin is None:
                continue
            grads[name] = grads[name] + gin if name in grads else gin
    return grads


class LossKind(enum.Enum):
    CROSS_ENTROPY = "cross_entropy"


@dataclass(frozen=True)
class LossSpec:
    label: int | np.ndarray
    targeted: bool = False
    target_label: int | np.ndarray | None = None
    kind: LossKind = LossKind.CROSS_ENTROPY

    def __post_init__(self):
        if self.targeted:
            if self.target_label is None:
                raise ValueError("targeted loss needs a target_label")
            if np.any(np.asarray(self.target_label) == np.asarray(self.label)):
                raise ValueError("target_label must differ from label")

    @property
    def class_index(self):
        return self.target_label if self.targeted else self.label

    def value_and_grad(self, logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-row cross-entropy of ``logits`` (N, C) and its gradient."""
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        idx = np.broadcast_to(np.asarray(self.class_index), (len(z),))
        rows = np.arange(len(z))
        grad = np.exp(logp)
        grad[rows, idx] -= 1.0
        return -logp[rows, idx], grad


def input_gradient(graph: Graph, input, loss: LossSpec, *, input_name: str | None = None,
                   batch: bool = False) -> TensorValue:
    """d loss / d input through the whole graph (loss on the first graph output)."""
    name = input_name or graph.inputs[0].name
    x = input.array if isinstance(input, TensorValue) else np.asarray(input)
    feeds = {name: np.asarray(x, dtype=np.float64)}
    for spec in graph.inputs:
        if spec.name not in feeds:
            raise ValueError(f"graph input {spec.name!r} must be fixed; only {name!r} is provided")
    check_differentiable(graph)
    env = run_graph(graph, feeds, float_dtype=np.float64, batch=batch)
    out = env[graph.outputs[0]].array
    n = out.shape[0] if batch else 1
    _, dz = loss.value_and_grad(out.reshape(n, -1))
    grads = _backward(graph, env, {graph.outputs[0]: dz.reshape(out.shape)})
    shape = env[name].shape
    g = grads.get(name)
    return TensorValue(np.zeros(shape) if g is None else g.reshape(shape))
