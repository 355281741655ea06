class FedkernError(Exception):
    """Base class for errors raised by fedkern."""


class ParseError(FedkernError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(FedkernError, ValueError):
    """Invalid run or partition configuration."""


class ProtocolError(FedkernError, RuntimeError):
    """The secure protocol could not complete (e.g. no valid mask-removal tree)."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
