"""Reference forward execution of a Graph.

Kernels are plain functions ``kernel(inputs, attrs) -> list`` over
:class:`TensorValue` inputs.  Floating arithmetic is carried out in float64 and
rounded to the evaluation float type (float32 unless asked otherwise) when a
value leaves the kernel.  Quantized tensors that carry quantization parameters
are read as the real numbers they encode, the way an on-device runtime treats
them; raw integer codes are only visible to Quantize/Dequantize/Cast and the
layout ops.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DomainError, KernelError, ModeliftError, ShapeError, UnknownOperator
from .graph import ConstTensor, DType, Graph, Node, QuantParams, topo_sort

__all__ = [
    "TensorValue",
    "KERNELS",
    "SUPPORTED_OPS",
    "evaluate",
    "run_graph",
    "infer_shapes",
    "kernel_quantize_linear",
    "kernel_dequantize_linear",
    "quant_range",
    "random_inputs",
    "apply_node",
]

FLT_MAX = float(np.finfo(np.float32).max)


@dataclass(frozen=True, eq=False)
class TensorValue:
    array: np.ndarray
    quant: QuantParams | None = None

    @property
    def dtype(self) -> DType:
        return DType.of(self.array)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.array.shape)

    @property
    def data(self) -> np.ndarray:
        return self.array.reshape(-1)

    def real(self) -> np.ndarray:
        """Values as float64, decoding quantized codes when parameters are attached."""
        a = self.array
        if self.quant is not None and a.dtype.kind in "iu":
            return (a.astype(np.float64) - self.quant.zero_point) * self.quant.scale
        return a.astype(np.float64)


Kernel = Callable[[Sequence[TensorValue], Mapping], list]


def quant_range(dtype: str = "uint8") -> tuple[int, int]:
    if dtype == "uint8":
        return 0, 255
    if dtype == "int8":
        return -128, 127
    raise KernelError(f"unsupported quantized dtype {dtype!r}")


def _check_scale(scale: float) -> float:
    scale = float(scale)
    if not scale > 0:
        raise DomainError(f"quantization scale must be > 0, got {scale}")
    return scale


def kernel_quantize_linear(x, scale: float, zero_point: int, dtype: str = "uint8") -> TensorValue:
    """y = saturate(round_half_even(x / scale + zero_point)), cast to the code type."""
    scale = _check_scale(scale)
    x = x.real() if isinstance(x, TensorValue) else np.asarray(x, dtype=np.float64)
    lo, hi = quant_range(dtype)
    codes = np.clip(np.rint(x / scale + zero_point), lo, hi)
    return TensorValue(codes.astype(dtype), QuantParams(scale, int(zero_point)))


def kernel_dequantize_linear(x, scale: float, zero_point: int) -> TensorValue:
    """y = (x - zero_point) * scale."""
    scale = _check_scale(scale)
    codes = x.array if isinstance(x, TensorValue) else np.asarray(x)
    return TensorValue((codes.astype(np.float64) - zero_point) * scale)


# -- quantization kernels ----------------------------------------------------

def _qparams(inputs: Sequence[TensorValue], attrs: Mapping, source: TensorValue | None):
    if "scale" in attrs:
        return attrs["scale"], int(attrs.get("zero_point", 0))
    if len(inputs) >= 2:
        scale = float(inputs[1].real().reshape(-1)[0])
        zp = int(inputs[2].array.reshape(-1)[0]) if len(inputs) >= 3 else 0
        return scale, zp
    if source is not None and source.quant is not None:
        return source.quant.scale, source.quant.zero_point
    raise KernelError("quantization parameters missing (no scale attribute, input or tensor quant)")


def _quantize(inputs, attrs):
    scale, zp = _qparams(inputs, attrs, None)
    return [kernel_quantize_linear(inputs[0], scale, zp, attrs.get("dtype", "uint8"))]


def _dequantize(inputs, attrs):
    scale, zp = _qparams(inputs, attrs, inputs[0])
    return [kernel_dequantize_linear(inputs[0], scale, zp)]


# -- computing kernels -------------------------------------------------------

def _pair(value, default) -> tuple[int, int]:
    if value is None:
        return default
    value = list(value) if isinstance(value, (list, tuple)) else [value, value]
    return int(value[0]), int(value[1])


def _pads(value) -> tuple[int, int, int, int]:
    if value is None:
        return 0, 0, 0, 0
    value = [int(v) for v in value]
    if len(value) == 2:
        return value[0], value[1], value[0], value[1]
    if len(value) != 4:
        raise KernelError(f"pads must have 2 or 4 entries, got {value}")
    return tuple(value)


def conv_geometry(x_shape, k_shape, attrs):
    sh, sw = _pair(attrs.get("strides"), (1, 1))
    dh, dw = _pair(attrs.get("dilations"), (1, 1))
    pt, pl, pb, pr = _pads(attrs.get("pads"))
    kh, kw = k_shape
    h, w = x_shape[-2:]
    oh = (h + pt + pb - dh * (kh - 1) - 1) // sh + 1
    ow = (w + pl + pr - dw * (kw - 1) - 1) // sw + 1
    if oh < 1 or ow < 1:
        raise KernelError(f"window {k_shape} does not fit input {x_shape[-2:]}")
    return (sh, sw), (dh, dw), (pt, pl, pb, pr), (oh, ow)


def window_slices(ki, kj, stride, dilation, out_hw):
    (sh, sw), (dh, dw), (oh, ow) = stride, dilation, out_hw
    return (slice(ki * dh, ki * dh + sh * (oh - 1) + 1, sh),
            slice(kj * dw, kj * dw + sw * (ow - 1) + 1, sw))


def _conv2d(inputs, attrs):
    x = inputs[0].real()
    w = inputs[1].real()
    if x.ndim != 4 or w.ndim != 4:
        raise KernelError(f"Conv2D expects NCHW input and OIHW weights, got {x.shape} and {w.shape}")
    group = int(attrs.get("group", 1))
    n, c, _, _ = x.shape
    o, cg, kh, kw = w.shape
    if c != cg * group or o % group:
        raise KernelError(f"channel mismatch: input {c}, weights {w.shape}, group {group}")
    stride, dil, (pt, pl, pb, pr), out_hw = conv_geometry(x.shape, (kh, kw), attrs)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    y = np.zeros((n, o, *out_hw))
    og = o // group
    for g in range(group):
        xs = xp[:, g * cg:(g + 1) * cg]
        ws = w[g * og:(g + 1) * og]
        for ki in range(kh):
            for kj in range(kw):
                si, sj = window_slices(ki, kj, stride, dil, out_hw)
                y[:, g * og:(g + 1) * og] += np.einsum("nchw,oc->nohw", xs[:, :, si, sj], ws[:, :, ki, kj])
    if len(inputs) > 2:
        y += inputs[2].real().reshape(1, -1, 1, 1)
    return [y]


def _gemm(inputs, attrs):
    a = inputs[0].real()
    b = inputs[1].real()
    if attrs.get("transA", 0):
        a = a.T
    if attrs.get("transB", 0):
        b = b.T
    y = float(attrs.get("alpha", 1.0)) * (a @ b)
    if len(inputs) > 2:
        y = y + float(attrs.get("beta", 1.0)) * inputs[2].real()
    return [y]


def _fully_connected(inputs, attrs):
    # weights stored [out, in]
    y = inputs[0].real() @ inputs[1].real().T
    if len(inputs) > 2:
        y = y + inputs[2].real()
    return [y]


def _softmax(inputs, attrs):
    x = inputs[0].real()
    axis = int(attrs.get("axis", -1))
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return [e / e.sum(axis=axis, keepdims=True)]


def _unary(fn):
    def kernel(inputs, attrs):
        return [fn(inputs[0].real())]
    return kernel


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _binary(fn):
    def kernel(inputs, attrs):
        if len(inputs) != 2:
            raise KernelError(f"binary operator expects 2 inputs, got {len(inputs)}")
        return [fn(inputs[0].real(), inputs[1].real())]
    return kernel


def clip_bounds(inputs, attrs) -> tuple[float, float]:
    lo = float(attrs["min"]) if "min" in attrs else (
        float(inputs[1].real().reshape(-1)[0]) if len(inputs) > 1 else -FLT_MAX)
    hi = float(attrs["max"]) if "max" in attrs else (
        float(inputs[2].real().reshape(-1)[0]) if len(inputs) > 2 else FLT_MAX)
    return lo, hi


def _clip(inputs, attrs):
    lo, hi = clip_bounds(inputs, attrs)
    return [np.clip(inputs[0].real(), lo, hi)]


def reshape_target(shape_in, target) -> tuple[int, ...]:
    target = [int(d) for d in target]
    out = [shape_in[i] if d == 0 else d for i, d in enumerate(target)]
    if out.count(-1) > 1:
        raise KernelError(f"at most one -1 allowed in reshape target {target}")
    total = int(np.prod(shape_in))
    if -1 in out:
        known = int(np.prod([d for d in out if d != -1]))
        if known == 0 or total % known:
            raise KernelError(f"cannot reshape {tuple(shape_in)} to {target}")
        out[out.index(-1)] = total // known
    if int(np.prod(out)) != total:
        raise KernelError(f"cannot reshape {tuple(shape_in)} to {target}")
    return tuple(out)


def _layout(fn):
    """Layout ops move codes unchanged and keep quantization parameters."""
    def kernel(inputs, attrs):
        x = inputs[0]
        return [TensorValue(fn(x.array, attrs), x.quant)]
    return kernel


def _reshape(x, attrs):
    if "shape" not in attrs:
        raise KernelError("Reshape requires a 'shape' attribute")
    return x.reshape(reshape_target(x.shape, attrs["shape"]))


def transpose_perm(ndim, attrs) -> tuple[int, ...]:
    perm = attrs.get("perm")
    return tuple(range(ndim))[::-1] if perm is None else tuple(int(p) for p in perm)


def _transpose(x, attrs):
    return np.transpose(x, transpose_perm(x.ndim, attrs))


def _flatten(x, attrs):
    axis = int(attrs.get("axis", 1))
    if axis < 0:
        axis += x.ndim
    lead = int(np.prod(x.shape[:axis]))
    return x.reshape(lead, -1)


def _concat(inputs, attrs):
    if "axis" not in attrs:
        raise KernelError("Concat requires an 'axis' attribute")
    return [np.concatenate([t.real() for t in inputs], axis=int(attrs["axis"]))]


def pool_geometry(x_shape, attrs):
    if "kernel_shape" not in attrs:
        raise KernelError("pooling requires 'kernel_shape'")
    kh, kw = _pair(attrs["kernel_shape"], None)
    return (kh, kw), conv_geometry(x_shape, (kh, kw), attrs)


def _max_pool(inputs, attrs):
    x = inputs[0].real()
    if x.ndim != 4:
        raise KernelError(f"MaxPool2D expects NCHW input, got {x.shape}")
    (kh, kw), (stride, dil, (pt, pl, pb, pr), out_hw) = pool_geometry(x.shape, attrs)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)), constant_values=-np.inf)
    y = np.full(x.shape[:2] + out_hw, -np.inf)
    for ki in range(kh):
        for kj in range(kw):
            si, sj = window_slices(ki, kj, stride, dil, out_hw)
            y = np.maximum(y, xp[:, :, si, sj])
    return [y]


def avg_pool_divisor(x_shape, attrs):
    (kh, kw), (stride, dil, (pt, pl, pb, pr), out_hw) = pool_geometry(x_shape, attrs)
    if attrs.get("count_include_pad", 0):
        return np.full(out_hw, float(kh * kw))
    mask = np.pad(np.ones(x_shape[-2:]), ((pt, pb), (pl, pr)))
    div = np.zeros(out_hw)
    for ki in range(kh):
        for kj in range(kw):
            si, sj = window_slices(ki, kj, stride, dil, out_hw)
            div += mask[si, sj]
    return div


def _avg_pool(inputs, attrs):
    x = inputs[0].real()
    if x.ndim != 4:
        raise KernelError(f"AveragePool2D expects NCHW input, got {x.shape}")
    (kh, kw), (stride, dil, (pt, pl, pb, pr), out_hw) = pool_geometry(x.shape, attrs)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    y = np.zeros(x.shape[:2] + out_hw)
    for ki in range(kh):
        for kj in range(kw):
            si, sj = window_slices(ki, kj, stride, dil, out_hw)
            y += xp[:, :, si, sj]
    return [y / avg_pool_divisor(x.shape, attrs)]


RESIZE_MODES = ("nearest", "linear")


def resize_matrix(n_in: int, n_out: int, mode: str) -> np.ndarray:
    """Row i holds the interpolation weights of output sample i over the input axis."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    if mode == "nearest":
        # asymmetric coordinates, floor rounding
        idx = np.minimum(np.floor(np.arange(n_out) * scale).astype(int), n_in - 1)
        m[np.arange(n_out), idx] = 1.0
    elif mode == "linear":
        # half-pixel centers, edges clamped
        src = np.clip((np.arange(n_out) + 0.5) * scale - 0.5, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        np.add.at(m, (np.arange(n_out), lo), 1.0 - frac)
        np.add.at(m, (np.arange(n_out), hi), frac)
    else:
        raise KernelError(f"unsupported Resize mode {mode!r}")
    return m


def resize_matrices(x_shape, attrs):
    if len(x_shape) != 4:
        raise KernelError(f"Resize expects NCHW input, got {x_shape}")
    mode = attrs.get("mode", "nearest")
    if "sizes" in attrs:
        oh, ow = [int(s) for s in attrs["sizes"]][-2:]
    elif "scales" in attrs:
        sc = [float(s) for s in attrs["scales"]][-2:]
        oh, ow = int(np.floor(x_shape[2] * sc[0])), int(np.floor(x_shape[3] * sc[1]))
    else:
        raise KernelError("Resize requires 'scales' or 'sizes'")
    if oh < 1 or ow < 1:
        raise KernelError(f"Resize output size ({oh}, {ow}) is empty")
    return resize_matrix(x_shape[2], oh, mode), resize_matrix(x_shape[3], ow, mode)


def _resize(inputs, attrs):
    x = inputs[0].real()
    mh, mw = resize_matrices(x.shape, attrs)
    return [np.einsum("ih,nchw,jw->ncij", mh, x, mw)]


LP_EPS = 1e-12


def _lp_normalization(inputs, attrs):
    x = inputs[0].real()
    if int(attrs.get("p", 2)) != 2:
        raise KernelError("LpNormalization supports p=2 only")
    axis = int(attrs.get("axis", -1))
    norm = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))
    return [x / np.maximum(norm, LP_EPS)]


def _argmax(inputs, attrs):
    x = inputs[0].real()
    axis = int(attrs.get("axis", 0))
    out = np.argmax(x, axis=axis)
    if int(attrs.get("keepdims", 1)):
        out = np.expand_dims(out, axis)
    return [out.astype(np.int64)]


def _cast(inputs, attrs):
    to = DType.parse(attrs.get("to", "float32"))
    # raw codes, like an ONNX Cast; quantization parameters are dropped
    return [np.asarray(inputs[0].array).astype(np.float64 if to.is_float else to.numpy)]


KERNELS: dict[str, Kernel] = {
    "Conv2D": _conv2d,
    "Gemm": _gemm,
    "FullyConnected": _fully_connected,
    "Relu": _unary(lambda x: np.maximum(x, 0.0)),
    "Sigmoid": _unary(_sigmoid),
    "Tanh": _unary(np.tanh),
    "Softmax": _softmax,
    "Add": _binary(np.add),
    "Sub": _binary(np.subtract),
    "Mul": _binary(np.multiply),
    "Div": _binary(np.divide),
    "Clip": _clip,
    "Reshape": _layout(_reshape),
    "Transpose": _layout(_transpose),
    "Flatten": _layout(_flatten),
    "Concat": _concat,
    "MaxPool2D": _max_pool,
    "AveragePool2D": _avg_pool,
    "Resize": _resize,
    "LpNormalization": _lp_normalization,
    "QuantizeLinear": _quantize,
    "DequantizeLinear": _dequantize,
    "ArgMax": _argmax,
    "Cast": _cast,
}

SUPPORTED_OPS = frozenset(KERNELS)


# -- evaluation ----------------------------------------------------------------

def _as_value(raw, float_dtype) -> TensorValue:
    if isinstance(raw, TensorValue):
        tv = raw
    else:
        tv = TensorValue(np.asarray(raw))
    arr = tv.array
    if arr.dtype.kind == "f" and arr.dtype != float_dtype:
        return TensorValue(arr.astype(float_dtype), tv.quant)
    return tv


def _const_value(const: ConstTensor, float_dtype) -> TensorValue:
    data = const.data
    if data.dtype.kind == "f":
        data = data.astype(float_dtype)
    return TensorValue(data, const.quant)


def _bind_inputs(graph: Graph, inputs: Mapping, float_dtype, batch: bool) -> dict[str, TensorValue]:
    env = {}
    for spec in graph.inputs:
        if spec.name not in inputs:
            raise ShapeError(spec.name, spec.shape, "missing input")
        raw = inputs[spec.name]
        quant = raw.quant if isinstance(raw, TensorValue) else None
        arr = np.asarray(raw.array if isinstance(raw, TensorValue) else raw)
        if batch:
            if arr.shape[1:] != tuple(spec.shape[1:]):
                raise ShapeError(spec.name, ("N",) + tuple(spec.shape[1:]), arr.shape)
        elif arr.shape != tuple(spec.shape):
            if arr.size != spec.size:
                raise ShapeError(spec.name, spec.shape, arr.shape)
            arr = arr.reshape(spec.shape)
        if spec.dtype.is_float:
            arr = arr.astype(float_dtype)
        else:
            arr = arr.astype(spec.dtype.numpy)
        env[spec.name] = TensorValue(arr, quant)
    return env


def _finish(result, float_dtype) -> TensorValue:
    if isinstance(result, TensorValue):
        return _as_value(result, float_dtype)
    arr = np.asarray(result)
    if arr.dtype.kind == "f":
        arr = arr.astype(float_dtype)
    return TensorValue(arr)


def apply_node(node: Node, args: list[TensorValue], kernels: Mapping[str, Kernel],
               float_dtype=np.float32) -> list[TensorValue]:
    kernel = kernels.get(node.op_type)
    if kernel is None:
        raise UnknownOperator(node.op_type, node.name)
    try:
        results = kernel(args, node.attributes)
    except ModeliftError:
        raise
    except (ValueError, IndexError, TypeError, KeyError) as exc:
        raise ShapeError(node.name, [a.shape for a in args], f"{type(exc).__name__}: {exc}") from None
    if len(results) != len(node.outputs):
        raise ShapeError(node.name, f"{len(node.outputs)} outputs", f"{len(results)} outputs")
    return [_finish(r, float_dtype) for r in results]


def run_graph(graph: Graph, inputs: Mapping, *, float_dtype=np.float32,
              kernels: Mapping[str, Kernel] | None = None, batch: bool = False,
              skip_failures: bool = False) -> dict[str, TensorValue]:
    """Evaluate every node and return the full value environment.

    With ``skip_failures`` nodes whose kernel is missing or fails are skipped
    (their outputs stay unbound) instead of raising; shape inference uses this.
    """
    float_dtype = np.dtype(float_dtype)
    table = KERNELS if kernels is None else {**KERNELS, **kernels}
    env = {c.name: _const_value(c, float_dtype) for c in graph.constants}
    env.update(_bind_inputs(graph, inputs, float_dtype, batch))
    for node in topo_sort(graph):
        if skip_failures:
            if any(v not in env for v in node.inputs):
                continue
            try:
                outs = apply_node(node, [env[v] for v in node.inputs], table, float_dtype)
            except (ModeliftError, FloatingPointError, ZeroDivisionError):
                continue
        else:
            outs = apply_node(node, [env[v] for v in node.inputs], table, float_dtype)
        env.update(zip(node.outputs, outs))
    return env


def evaluate(graph: Graph, inputs: Mapping, *, float_dtype=np.float32,
             kernels: Mapping[str, Kernel] | None = None, batch: bool = False) -> dict[str, TensorValue]:
    """Run ``graph`` on ``inputs`` (name -> TensorValue or array) and return its outputs.

    ``batch=True`` lets the leading dimension of every input differ from the
    declared one; the graph is then evaluated on the whole batch at once.
    """
    env = run_graph(graph, inputs, float_dtype=float_dtype, kernels=kernels, batch=batch)
    return {name: env[name] for name in graph.outputs}


def infer_shapes(graph: Graph, kernels: Mapping[str, Kernel] | None = None) -> dict[str, tuple[int, ...]]:
    """Static shapes of every value that can be computed from a dummy run."""
    dummy = {}
    for spec in graph.inputs:
        fill = 0.5 if spec.dtype.is_float else 0
        dummy[spec.name] = np.full(spec.shape, fill, dtype=spec.dtype.numpy)
    with np.errstate(all="ignore"):
        env = run_graph(graph, dummy, kernels=kernels, skip_failures=True)
    return {k: v.shape for k, v in env.items()}


def random_inputs(graph: Graph, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """One probe: uniform [0, 1) for float inputs, uniform codes over the dtype range otherwise."""
    probe = {}
    for spec in graph.inputs:
        if spec.dtype.is_float:
            probe[spec.name] = rng.random(spec.shape).astype(np.float32)
        elif spec.dtype is DType.BOOL:
            probe[spec.name] = rng.integers(0, 2, spec.shape).astype(bool)
        else:
            lo, hi = spec.dtype.bounds()
            probe[spec.name] = rng.integers(lo, hi, spec.shape, dtype=spec.dtype.numpy, endpoint=True)
    return probe
