"""Exception hierarchy shared by every modelift module."""

from __future__ import annotations


class ModeliftError(Exception):
    """Base class for all modelift errors."""


class ParseError(ModeliftError):
    """Malformed MGF/JSON input or schema violation."""


class ValidationError(ModeliftError):
    def __init__(self, message: str, name: str | None = None):
        super().__init__(message)
        self.name = name


class CycleError(ValidationError):
    def __init__(self, values: list[str]):
        super().__init__(f"dependency cycle through values {values}", values[0] if values else None)
        self.values = values


class UnknownOperator(ModeliftError):
    def __init__(self, op_type: str, node: str):
        super().__init__(f"no kernel registered for {op_type!r} (node {node!r})")
        self.op_type = op_type
        self.node = node


class ShapeError(ModeliftError):
    def __init__(self, node: str, expected, got):
        super().__init__(f"shape error at {node!r}: expected {expected}, got {got}")
        self.node = node
        self.expected = expected
        self.got = got


class DomainError(ModeliftError, ValueError):
    pass


class KernelError(ModeliftError):
    """A kernel rejected its inputs or attributes."""


class FoldError(ModeliftError):
    pass


class TemplateError(ModeliftError):
    pass


class NoMatchError(ModeliftError):
    def __init__(self, node: str, op_type: str):
        super().__init__(f"no supported operator matches {op_type!r} (node {node!r})")
        self.node = node
        self.op_type = op_type


class EmptyDataset(ModeliftError):
    pass


class NonDifferentiable(ModeliftError):
    def __init__(self, op_type: str, node: str | None = None):
        where = f" (node {node!r})" if node else ""
        super().__init__(f"operator {op_type!r} has no gradient rule{where}; run `modelift transform` first")
        self.op_type = op_type
        self.node = node
