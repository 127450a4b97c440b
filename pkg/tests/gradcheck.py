"""Finite-difference harness shared by the gradient tests and the acceptance suite."""

import numpy as np

from modelift.gradients import graph_vjp
from modelift.graph import Node, make_graph
from modelift.interpreter import run_graph

H = 1e-3
REL_TOL = 1e-4


def _normal(shape):
    return lambda rng: rng.normal(size=shape)


def _away_from(points, shape, gap=0.02):
    def gen(rng):
        x = rng.normal(size=shape)
        for p in points:
            close = np.abs(x - p) < gap
            x[close] += np.sign(x[close] - p + 1e-12) * 2 * gap
        return x
    return gen


def _distinct(shape):
    return lambda rng: rng.permutation(int(np.prod(shape))).reshape(shape) * 0.05 + rng.uniform(0, 0.01)


def _nonzero(shape):
    return lambda rng: rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.5, 2.0, size=shape)


# op, attributes, generators for each input
CASES = {
    "Conv2D": ("Conv2D", {"strides": [2, 1], "pads": [1, 0, 1, 2], "dilations": [1, 2]},
               [_normal((1, 2, 5, 6)), _normal((3, 2, 3, 2)), _normal((3,))]),
    "Conv2D_grouped": ("Conv2D", {"group": 2, "pads": [1, 1, 1, 1]},
                       [_normal((2, 4, 4, 4)), _normal((4, 2, 3, 3))]),
    "Gemm": ("Gemm", {"alpha": 0.7, "beta": 1.3, "transB": 1}, [_normal((3, 4)), _normal((5, 4)), _normal((5,))]),
    "Gemm_transA": ("Gemm", {"transA": 1}, [_normal((4, 3)), _normal((4, 2)), _normal((3, 2))]),
    "FullyConnected": ("FullyConnected", {}, [_normal((2, 4)), _normal((3, 4)), _normal((3,))]),
    "Relu": ("Relu", {}, [_away_from([0.0], (2, 5))]),
    "Sigmoid": ("Sigmoid", {}, [_normal((2, 5))]),
    "Tanh": ("Tanh", {}, [_normal((2, 5))]),
    "Softmax": ("Softmax", {"axis": 0}, [_normal((3, 4))]),
    "Add": ("Add", {}, [_normal((2, 3, 4)), _normal((3, 1))]),
    "Sub": ("Sub", {}, [_normal((3, 1)), _normal((2, 3, 4))]),
    "Mul": ("Mul", {}, [_normal((2, 3, 4)), _normal((4,))]),
    "Div": ("Div", {}, [_normal((2, 3)), _nonzero((2, 1))]),
    "Clip": ("Clip", {"min": -0.5, "max": 0.5}, [_away_from([-0.5, 0.5], (3, 4))]),
    "Reshape": ("Reshape", {"shape": [4, -1]}, [_normal((2, 3, 2))]),
    "Transpose": ("Transpose", {"perm": [2, 0, 1]}, [_normal((2, 3, 4))]),
    "Flatten": ("Flatten", {"axis": 2}, [_normal((2, 3, 2, 2))]),
    "Concat": ("Concat", {"axis": 1}, [_normal((2, 3)), _normal((2, 2))]),
    "MaxPool2D": ("MaxPool2D", {"kernel_shape": [2, 2], "strides": [1, 2], "pads": [1, 0, 0, 1]},
                  [_distinct((1, 2, 4, 5))]),
    "AveragePool2D": ("AveragePool2D", {"kernel_shape": [3, 2], "strides": [2, 1], "pads": [1, 0, 1, 1]},
                      [_normal((1, 2, 5, 4))]),
    "AveragePool2D_incl": ("AveragePool2D", {"kernel_shape": [2, 2], "pads": [1, 1, 1, 1], "count_include_pad": 1},
                           [_normal((1, 1, 3, 3))]),
    "Resize_nearest": ("Resize", {"mode": "nearest", "scales": [1, 1, 2, 3]}, [_normal((1, 2, 2, 3))]),
    "Resize_linear": ("Resize", {"mode": "linear", "sizes": [1, 2, 5, 3]}, [_normal((1, 2, 3, 4))]),
    "LpNormalization": ("LpNormalization", {"axis": 1, "p": 2}, [_normal((3, 4))]),
    "Cast": ("Cast", {"to": "float32"}, [_normal((2, 3))]),
}


def single_node_graph(op, attrs, shapes):
    names = [f"in{i}" for i in range(len(shapes))]
    node = Node(op, "n", names, ["y"], attrs)
    return make_graph(op, [(n, s) for n, s in zip(names, shapes)], ["y"], [node])


def vjp_errors(case, seeds=range(10)):
    """Relative error of each input's reverse-mode gradient against central differences."""
    op, attrs, gens = CASES[case]
    errors = []
    for seed in seeds:
        rng = np.random.default_rng([seed, 42])
        args = [g(rng) for g in gens]
        graph = single_node_graph(op, attrs, [a.shape for a in args])
        feeds = {f"in{i}": a for i, a in enumerate(args)}
        y = run_graph(graph, feeds, float_dtype=np.float64)["y"].array
        gout = rng.normal(size=y.shape)
        grads = graph_vjp(graph, feeds, {"y": gout})

        def loss(fd):
            return float(np.sum(gout * run_graph(graph, fd, float_dtype=np.float64)["y"].array))

        for i, a in enumerate(args):
            numeric = np.zeros_like(a)
            for idx in np.ndindex(a.shape):
                plus, minus = a.copy(), a.copy()
                plus[idx] += H
                minus[idx] -= H
                numeric[idx] = (loss({**feeds, f"in{i}": plus}) - loss({**feeds, f"in{i}": minus})) / (2 * H)
            errors.append(np.linalg.norm(grads[f"in{i}"] - numeric) / max(np.linalg.norm(numeric), 1e-8))
    return errors
