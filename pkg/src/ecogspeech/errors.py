"""Exception hierarchy shared by every stage of the pipeline."""


class EcogSpeechError(Exception):
    """Base class; ``stage`` is filled in by the CLI for provenance."""

    stage = None

    def to_record(self):
        return {
            "error": type(self).__name__,
            "message": str(self),
            "stage": self.stage,
        }


class InvalidInputError(EcogSpeechError, ValueError):
    pass


class DegenerateChannelError(InvalidInputError):
    def __init__(self, electrode, filt):
        self.electrode = electrode
        self.filter = filt
        super().__init__(
            f"zero baseline variance at electrode {electrode}, filter {filt}"
        )


class TrialRangeError(InvalidInputError):
    def __init__(self, trials):
        self.trials = list(trials)
        super().__init__(f"event windows out of range for trials {self.trials}")


class ClassTooSmallError(InvalidInputError):
    def __init__(self, label, count, needed):
        self.label = label
        super().__init__(
            f"class {label!r} has {count} trials, needs at least {needed}"
        )


class FormatError(EcogSpeechError):
    pass


class ChecksumError(FormatError):
    pass


class ShapeMismatchError(FormatError):
    pass


class UnknownLabelError(FormatError):
    pass


class DivergedError(EcogSpeechError):
    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")


class SearchFailedError(EcogSpeechError):
    pass


class ConvergenceError(EcogSpeechError):
    def __init__(self, lower, upper, iterations):
        self.lower = lower
        self.upper = upper
        super().__init__(
            f"capacity solver stopped after {iterations} iterations with "
            f"bounds [{lower:.12g}, {upper:.12g}]"
        )


class UndefinedTaskError(EcogSpeechError):
    pass


class UndefinedTestError(EcogSpeechError):
    pass


class SplitUndefinedError(EcogSpeechError):
    pass


class GroupEmptyError(EcogSpeechError):
    pass
