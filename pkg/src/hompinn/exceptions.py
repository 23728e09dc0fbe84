"""Shared exception types."""


class ContractViolationError(ValueError):
    """An operation was called outside its documented preconditions."""


class SingularEvaluationError(ArithmeticError):
    """Division by zero encountered while evaluating a taped expression."""


class EvaluationError(RuntimeError):
    """Evaluation failed, e.g. non-finite network parameters."""


class DivergenceError(RuntimeError):
    """Optimizer received a non-finite gradient entry.

    ``index`` identifies the first offending coordinate in the flat
    trainable vector.
    """

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class ConfigError(ValueError):
    """Experiment configuration violates the documented schema."""
