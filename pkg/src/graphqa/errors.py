"""Exception hierarchy shared across the package."""


class GraphQAError(Exception):
    """Base class for all graphqa errors."""


class LoadError(GraphQAError):
    """A resource file could not be read."""

    def __init__(self, path, reason):
        self.path = str(path)
        self.reason = str(reason)
        super().__init__(f"{self.path}: {self.reason}")


class ParseError(LoadError):
    """A resource file contains a malformed line."""

    def __init__(self, path, line_no, reason):
        self.line_no = line_no
        super().__init__(path, f"line {line_no}: {reason}")


class TrainingError(GraphQAError):
    """Training could not proceed (empty data, non-finite gradient)."""


class ModelError(GraphQAError):
    """A model file is malformed, incompatible, or missing."""
