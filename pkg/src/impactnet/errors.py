"""Exception hierarchy shared by every stage of the pipeline.

The CLI maps these onto exit codes: validation problems exit 2, I/O
failures exit 3, solver/training failures exit 4.
"""


class PipelineError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(PipelineError, ValueError):
    """Input rejected before any work was done (CLI exit code 2)."""


class InvalidParameterError(ValidationError):
    pass


class InvalidStateError(ValidationError):
    pass


class MalformedEventError(ValidationError):
    pass


class SchemaError(ValidationError):
    """A required column or header key is missing or unrecognised."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class DataError(ValidationError):
    """A sample value could not be used (non-finite, unparsable)."""

    def __init__(self, message, row=None, line=None):
        super().__init__(message)
        self.row = row
        self.line = line


class StructuralError(ValidationError):
    """Row counts, rates or window geometry disagree with the header."""


class ContaminationError(ValidationError):
    """A test-split event reached training or augmentation."""


class FormatError(ValidationError):
    """A model or report file could not be decoded."""


class SolverError(PipelineError):
    """An optimiser failed to converge (CLI exit code 4)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TrainingError(SolverError):
    pass
