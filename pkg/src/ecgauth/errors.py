"""Exception hierarchy shared by the toolkit."""


class EcgAuthError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(EcgAuthError):
    """An argument or object violates a documented invariant."""


class FormatError(EcgAuthError):
    """A file or stream does not follow the expected structure."""


class ParseError(FormatError):
    """A line inside an otherwise well-formed file cannot be parsed."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class VersionError(FormatError):
    """A persisted file declares an unsupported format version."""


class NumericalError(EcgAuthError):
    """A numerical routine failed (rank deficiency, non-real residue)."""


class EmptyDetectionError(EcgAuthError):
    """R-peak detection found no peaks."""


class EmptySliceSetError(EcgAuthError):
    """Window slicing kept no complete windows."""


class DuplicateEntityError(EcgAuthError):
    """An entity id is already enrolled (or collides on merge)."""


class InsufficientDataError(EcgAuthError):
    """A record is shorter than the required sampling time period."""


class EnrollmentError(EcgAuthError):
    """Enrollment of one entity failed; wraps the underlying cause."""
