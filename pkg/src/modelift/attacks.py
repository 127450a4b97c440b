"""White-box l2 attacks (BIM, PGD) on debuggable graphs and fooling-rate reporting.

Both methods take l2-normalized gradient steps and project back onto the l2
ball around the clean sample and then onto the input box; PGD differs from
BIM only by starting at a seeded random point inside the ball.  Samples are
attacked independently; for graphs whose leading input dimension is 1 they
are processed as one batch, which yields the same per-sample gradients.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .equivalence import predict_labels
from .errors import EmptyDataset
from .gradients import LossSpec, check_differentiable, input_gradient
from .graph import Graph
from .interpreter import TensorValue

__all__ = [
    "AttackMethod",
    "AttackConfig",
    "AttackReport",
    "default_step_size",
    "attack_batch",
    "run_attack",
    "fooling_rate",
]

# step sizes used at the three reference budgets
REFERENCE_STEPS = {0.01: 0.0001, 0.1: 0.001, 1.0: 0.04}


def default_step_size(l2_budget: float) -> float:
    for budget, step in REFERENCE_STEPS.items():
        if np.isclose(budget, l2_budget):
            return step
    return 0.04 * l2_budget


class AttackMethod(enum.Enum):
    BIM = "bim"
    PGD = "pgd"


@dataclass(frozen=True)
class AttackConfig:
    method: AttackMethod = AttackMethod.PGD
    l2_budget: float = 1.0
    steps: int = 400
    step_size: float | None = None
    input_clip: tuple[float, float] = (0.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", AttackMethod(self.method))
        if self.step_size is None:
            object.__setattr__(self, "step_size", default_step_size(self.l2_budget))
        if not self.l2_budget > 0:
            raise ValueError("l2_budget must be > 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        lo, hi = self.input_clip
        if not lo < hi:
            raise ValueError("input_clip must be an increasing pair")


@dataclass
class AttackReport:
    m: int
    n: int
    fooling_rate: float
    method: str
    l2_budget: float
    targeted: bool
    samples: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"method": self.method, "l2_budget": self.l2_budget, "targeted": self.targeted,
                "m": self.m, "n": self.n, "fooling_rate": self.fooling_rate, "samples": self.samples}


def _project(x: np.ndarray, x0: np.ndarray, budget: float, clip) -> np.ndarray:
    """l2-ball projection, box clip, then a final re-projection if clipping left the ball."""
    def ball(z):
        delta = z - x0
        norm = np.linalg.norm(delta, axis=1, keepdims=True)
        factor = np.minimum(1.0, budget / np.maximum(norm, 1e-300))
        return x0 + delta * factor

    x = np.clip(ball(x), *clip)
    if np.any(np.linalg.norm(x - x0, axis=1) > budget):
        x = np.clip(ball(x), *clip)
    return x


def _random_start(x0: np.ndarray, cfg: AttackConfig, indices) -> np.ndarray:
    start = np.empty_like(x0)
    d = x0.shape[1]
    for row, idx in enumerate(indices):
        rng = np.random.default_rng([cfg.seed, int(idx)])
        direction = rng.standard_normal(d)
        direction /= np.linalg.norm(direction)
        radius = cfg.l2_budget * rng.random() ** (1.0 / d)
        start[row] = x0[row] + radius * direction
    return _project(start, x0, cfg.l2_budget, cfg.input_clip)


def attack_batch(graph: Graph, x0: np.ndarray, labels, cfg: AttackConfig,
                 targets=None, indices=None) -> np.ndarray:
    """Attack each row of ``x0`` (N, features); ``targets`` switches to targeted mode.

    ``indices`` identify the samples for seeding the PGD start, so a sample gets
    the same start whether it is attacked alone or inside a batch.
    """
    check_differentiable(graph)
    spec = graph.inputs[0]
    x0 = np.asarray(x0, dtype=np.float64).reshape(len(x0), -1)
    if cfg.steps == 0:
        return x0.copy()
    labels = np.asarray(labels).reshape(-1)
    indices = np.arange(len(x0)) if indices is None else np.asarray(indices)
    targeted = targets is not None
    loss = LossSpec(labels, targeted, None if targets is None else np.asarray(targets).reshape(-1))
    x = _random_start(x0, cfg, indices) if cfg.method is AttackMethod.PGD else x0.copy()
    batched = spec.shape[0] == 1
    sign = -1.0 if targeted else 1.0
    for _ in range(cfg.steps):
        if batched:
            feed = x.reshape((len(x),) + tuple(spec.shape[1:]))
            g = input_gradient(graph, feed, loss, batch=True).array.reshape(len(x), -1)
        else:
            g = np.stack([
                input_gradient(graph, x[i].reshape(spec.shape),
                               LossSpec(labels[i], targeted, None if targets is None else targets[i]))
                .array.reshape(-1)
                for i in range(len(x))])
        norm = np.linalg.norm(g, axis=1, keepdims=True)
        direction = np.divide(g, norm, out=np.zeros_like(g), where=norm > 0)
        x = _project(x + sign * cfg.step_size * direction, x0, cfg.l2_budget, cfg.input_clip)
    return x


def run_attack(graph: Graph, sample, true_label: int, cfg: AttackConfig,
               loss: LossSpec | None = None) -> tuple[TensorValue, bool]:
    """Attack one sample; success means misclassified (or hitting the target, when targeted)."""
    arr = sample.array if isinstance(sample, TensorValue) else np.asarray(sample)
    shape = arr.shape
    target = loss.target_label if loss is not None and loss.targeted else None
    adv = attack_batch(graph, arr.reshape(1, -1), [true_label], cfg,
                       None if target is None else [target])
    pred = int(predict_labels(graph, adv)[0])
    success = pred == target if target is not None else pred != true_label
    return TensorValue(adv.reshape(shape).astype(np.float32)), bool(success)


def fooling_rate(graph: Graph, dataset: Dataset, cfg: AttackConfig, targeted: bool = False,
                 batch_size: int = 1024) -> AttackReport:
    """p = n / m over the correctly classified samples of ``dataset``.

    Targeted mode aims every sample at class (label + 1) mod num_classes.
    """
    if len(dataset) == 0:
        raise EmptyDataset("dataset has no samples")
    check_differentiable(graph)
    clean = predict_labels(graph, dataset.inputs)
    correct = np.flatnonzero(clean == dataset.labels)
    if len(correct) == 0:
        raise EmptyDataset("the model classifies no sample correctly (m = 0)")
    x0 = dataset.inputs[correct]
    labels = dataset.labels[correct]
    targets = (labels + 1) % dataset.num_classes if targeted else None
    adv = np.empty_like(x0)
    for start in range(0, len(correct), batch_size):
        sl = slice(start, start + batch_size)
        adv[sl] = attack_batch(graph, x0[sl], labels[sl], cfg,
                               None if targets is None else targets[sl], correct[sl])
    preds = predict_labels(graph, adv)
    hits = preds == targets if targeted else preds != labels
    dist = np.linalg.norm(adv - x0, axis=1)
    records = [{"index": int(i), "label": int(y), "predicted": int(p), "l2": float(d), "success": bool(h)}
               for i, y, p, d, h in zip(correct, labels, preds, dist, hits)]
    n = int(hits.sum())
    m = len(correct)
    return AttackReport(m, n, n / m, cfg.method.value, cfg.l2_budget, targeted, records)
