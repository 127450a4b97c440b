"""Labeled sample sets and their JSON file format.

File layout::

    {"num_classes": int, "samples": [{"input": [num, ...], "label": int}, ...]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError


@dataclass(frozen=True, eq=False)
class Dataset:
    num_classes: int
    inputs: np.ndarray  # (N, features), flat row-major samples
    labels: np.ndarray  # (N,) int

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        if inputs.ndim == 1:
            inputs = inputs.reshape(1, -1) if inputs.size else inputs.reshape(0, 0)
        object.__setattr__(self, "inputs", inputs.reshape(len(inputs), -1) if len(inputs) else inputs)
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64).reshape(-1))
        if len(self.inputs) != len(self.labels):
            raise ValueError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, mask) -> "Dataset":
        return Dataset(self.num_classes, self.inputs[mask], self.labels[mask])

    def to_json(self) -> dict:
        return {"num_classes": int(self.num_classes),
                "samples": [{"input": [float(v) for v in x], "label": int(y)}
                            for x, y in zip(self.inputs, self.labels)]}

    @classmethod
    def from_json(cls, doc) -> "Dataset":
        try:
            samples = doc["samples"]
            inputs = [s["input"] for s in samples]
            labels = [s["label"] for s in samples]
            if len({len(x) for x in inputs}) > 1:
                raise ParseError("samples have differing input lengths")
            return cls(int(doc["num_classes"]), np.asarray(inputs, dtype=np.float64), labels)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed dataset: {exc}") from None


def load_dataset(path) -> Dataset:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from None
    return Dataset.from_json(doc)


def save_dataset(dataset: Dataset, path) -> None:
    Path(path).write_text(json.dumps(dataset.to_json()) + "\n", encoding="utf-8")
