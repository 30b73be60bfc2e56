from typing import Optional


class WeakRankError(Exception):
    """Base class for every error raised by the toolkit."""


class DataValidationError(WeakRankError):
    def __init__(self, detail: str, path: Optional[str] = None, line_number: Optional[int] = None):
        self.detail = detail
        self.path = path
        self.line_number = line_number
        where = ""
        if path is not None:
            where = f"{path}"
            if line_number is not None:
                where += f":{line_number}"
            where += ": "
        elif line_number is not None:
            where = f"line {line_number}: "
        super().__init__(f"{where}{detail}")


class LabelerError(WeakRankError):
    pass


class TrainingError(WeakRankError):
    pass


class SynthesisError(WeakRankError):
    pass


class StageError(WeakRankError):
    """Raised at the pipeline boundary, tagged with the stage that failed."""

    def __init__(self, stage: str, detail: str):
        self.stage = stage
        self.detail = detail
        super().__init__(f"[{stage}] {detail}")
