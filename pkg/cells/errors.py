"""Error base classes shared by every analysis module."""


class DomainError(Exception):
    """A contract violation of one of the analysis operations.

    Management commands report the subclass name and exit with status 1.
    """

    @property
    def name(self):
        return type(self).__name__


class SchemaError(Exception):
    """Raised when an input document does not match its schema."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}
