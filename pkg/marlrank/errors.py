"""Exception hierarchy shared by every layer.

Each error carries the process exit code the CLI reports for it.
"""


class MarlRankError(Exception):
    """Base error with a human readable detail and an exit code."""

    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class CheckFailure(MarlRankError):
    exit_code = 1


class DivergenceError(MarlRankError):
    """Non-finite loss or gradient during training."""

    exit_code = 1


class ConfigError(MarlRankError):
    exit_code = 2


class DataError(MarlRankError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, detail: str, line: str, line_number: int | None = None):
        where = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{where}{detail} in {line!r}")
        self.line = line
        self.line_number = line_number


class EmptyDatasetError(DataError):
    pass


class FoldLayoutError(DataError):
    pass


class CheckpointError(DataError):
    pass


class ShapeError(DataError):
    pass


class EpisodeFinishedError(MarlRankError):
    """A step was requested after the episode horizon."""

    exit_code = 1
