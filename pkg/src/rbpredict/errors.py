"""
Exceptions raised by `rbpredict`.

All exceptions derive from :class:`RBPredictError`. Problems with input data or configuration are
:class:`ValidationError` (and thus also ``ValueError``), numerical failures are
:class:`ComputationError`. The command line interface maps ``ValidationError`` to exit code 2.
"""
import typing

__all__ = [
    'RBPredictError', 'ValidationError', 'ComputationError',
    # graph
    'CycleDetected', 'MissingDuration', 'PathBudgetExceeded', 'MissingFeature',
    # rbm
    'NonPositiveEfficiency', 'EmptyResourceSet', 'NonPositiveMean', 'DurationAboveNormal',
    'Infeasible', 'MissingCrashParams',
    # synthgen
    'InvalidConfig', 'RateOutOfRange',
    # ingest
    'SchemaViolation', 'VersionMismatch', 'ParseError', 'UnsupportedFormat', 'MissingColumn',
    'EmptyTrainingSet',
    # tensor
    'ShapeMismatch', 'NonScalarOutput',
    # gnn, loss, train
    'FeatureDimMismatch', 'TimestampRegression', 'UnknownActivity', 'MaskAllEmpty',
    'NonFiniteGradient', 'DivergedLoss', 'NoLabels',
    # bayes
    'VarianceUnderflow', 'SingularInnovation',
    # active, metrics, baselines
    'BudgetExhausted', 'LengthMismatch', 'TooFewSamples', 'SingularSystem',
]


class RBPredictError(Exception):
    pass


class ValidationError(RBPredictError, ValueError):
    pass


class ComputationError(RBPredictError, ArithmeticError):
    pass


class CycleDetected(ValidationError):
    def __init__(self, edge: typing.Tuple[str, str]):
        self.edge = edge
        super().__init__('Precedence edges contain a cycle through {} -> {}'.format(*edge))


class MissingDuration(ValidationError):
    def __init__(self, activity: str):
        self.activity = activity
        super().__init__('No duration for activity {}'.format(activity))


class PathBudgetExceeded(ComputationError):
    def __init__(self, count: int, budget: int):
        self.count, self.budget = count, budget
        super().__init__('{} source-sink paths exceed the budget of {}'.format(count, budget))


class MissingFeature(ValidationError):
    def __init__(self, activity: str, name: str):
        self.activity, self.name = activity, name
        super().__init__('Feature {} missing for activity {}'.format(name, activity))


class NonPositiveEfficiency(ValidationError):
    pass


class EmptyResourceSet(ValidationError):
    pass


class NonPositiveMean(ValidationError):
    pass


class DurationAboveNormal(ValidationError):
    pass


class Infeasible(ValidationError):
    def __init__(self, t_max: float, minimal_makespan: typing.Optional[float] = None):
        self.t_max, self.minimal_makespan = t_max, minimal_makespan
        super().__init__('T_max={} is below the makespan at minimal durations ({})'.format(
            t_max, minimal_makespan))


class MissingCrashParams(ValidationError):
    def __init__(self, activity: str):
        self.activity = activity
        super().__init__('No crash parameters for activity {}'.format(activity))


class InvalidConfig(ValidationError):
    pass


class RateOutOfRange(ValidationError):
    pass


class SchemaViolation(ValidationError):
    def __init__(self, path: str, reason: str):
        self.path, self.reason = path, reason
        super().__init__('{}: {}'.format(path, reason))


class VersionMismatch(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, line: int, expected: str):
        self.line, self.expected = line, expected
        super().__init__('line {}: expected {}'.format(line, expected))


class UnsupportedFormat(ValidationError):
    pass


class MissingColumn(ValidationError):
    def __init__(self, name: str):
        self.name = name
        super().__init__('Missing column {}'.format(name))


class EmptyTrainingSet(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    def __init__(self, op: str, got, expected):
        self.op, self.got, self.expected = op, got, expected
        super().__init__('{}: got shape {}, expected {}'.format(op, got, expected))


class NonScalarOutput(ValidationError):
    pass


class FeatureDimMismatch(ValidationError):
    pass


class TimestampRegression(ValidationError):
    pass


class UnknownActivity(ValidationError):
    pass


class MaskAllEmpty(ValidationError):
    pass


class NonFiniteGradient(ComputationError):
    pass


class DivergedLoss(ComputationError):
    pass


class NoLabels(ValidationError):
    pass


class VarianceUnderflow(ComputationError):
    pass


class SingularInnovation(ComputationError):
    pass


class BudgetExhausted(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class SingularSystem(ComputationError):
    pass
