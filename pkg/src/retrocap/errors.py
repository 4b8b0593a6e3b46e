"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: usage errors exit 2, data-format
errors exit 3, numerical failures exit 4.
"""


class RetrocapError(Exception):
    """Base class for all pipeline errors."""


class DataFormatError(RetrocapError):
    """A file does not conform to one of the on-disk formats."""


class ValidationError(DataFormatError):
    """Structurally valid file whose contents violate an invariant.

    Carries the offending row index when one exists.
    """

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class NumericalError(RetrocapError):
    """A computation produced non-finite or otherwise unusable values."""
