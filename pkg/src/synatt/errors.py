"""Exception types shared across the package."""


class DataError(Exception):
    """Malformed or inconsistent input data (files, datasets, alignments)."""


class ConlluParseError(DataError):
    """A CoNLL-U token line that violates the format contract."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class NumericError(Exception):
    """Non-finite values or a failed numeric verification."""
