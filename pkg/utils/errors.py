"""
Exception and warning types raised across the GRIP toolkit
"""
import numpy as np


class GripError(Exception):
    """Base class for every error raised by this package"""


class InvalidConfig(GripError, ValueError):
    pass


class DimensionMismatch(GripError, ValueError):
    pass


class LengthMismatch(GripError, ValueError):
    pass


class NonFiniteInput(GripError, ValueError):
    pass


class NotPositiveDefinite(GripError, np.linalg.LinAlgError):
    pass


class ConvergenceFailure(GripError, RuntimeError):
    pass


class InsufficientSamples(GripError, ValueError):
    pass


class InsufficientRows(GripError, ValueError):
    pass


class RankDeficient(GripError, ValueError):
    def __init__(self, message: str, columns=()):
        super().__init__(message)
        self.columns = list(columns)


class NonFiniteLoss(GripError, FloatingPointError):
    pass


class DegenerateGradient(GripError, RuntimeError):
    pass


class ZeroSignalVariance(GripError, ValueError):
    pass


class EmptyTruth(GripError, ValueError):
    pass


class TooFewTrials(GripError, ValueError):
    pass


class EmptyDataset(GripError, ValueError):
    pass


class NotBinary(GripError, ValueError):
    pass


class NonPositiveForLog(GripError, ValueError):
    pass


class TrialFailure(GripError, RuntimeError):
    """Wraps any error raised inside a trial together with its id"""

    def __init__(self, trial_id: int, message: str):
        super().__init__(f"trial {trial_id}: {message}")
        self.trial_id = trial_id


class DegenerateFeatureWarning(UserWarning):
    pass


class NotConvergedWarning(UserWarning):
    pass


class CalibrationWarning(UserWarning):
    pass


class FewSamplesWarning(UserWarning):
    pass
