"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: config/usage problems exit 2,
I/O problems exit 1, capability problems (a bank cannot serve the
requested method) exit 3.
"""


class ZooRankError(Exception):
    """Base class for all package errors."""


class ValidationError(ZooRankError):
    """A bank or config violates one of its invariants."""


class FormatError(ZooRankError):
    """A serialized file is malformed (bad magic, short read, dim mismatch)."""


class ShapeError(ZooRankError):
    """Array arguments have incompatible shapes or lengths."""


class ConsistencyError(ZooRankError):
    """Inputs that must agree (dataset ids, labels, model sets) do not."""


class CapabilityError(ZooRankError):
    """A bank lacks data required by the requested operation."""

    def __init__(self, message, model_id=None):
        super().__init__(message)
        self.model_id = model_id


class DegenerateInputError(ZooRankError):
    """Input is structurally too small for the operation (e.g. one class)."""


class CapacityError(ZooRankError):
    """A sampling request exceeds the available classes or samples."""


class TrainingError(ZooRankError):
    """Optimization diverged; carries the offending step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
