"""Exception types shared across the flare pipeline."""


class FlareError(Exception):
    """Base class for all flare errors."""


# --- capture parsing ---------------------------------------------------------

class CaptureError(FlareError):
    """Problem with a capture file; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingHeaderError(CaptureError):
    pass


class MalformedRowError(CaptureError):
    pass


class NonNumericFieldError(CaptureError):
    pass


class NegativeTimestampError(CaptureError):
    pass


class ZeroSizeError(CaptureError):
    pass


class UnknownStationError(FlareError):
    def __init__(self, station: str):
        self.station = station
        super().__init__(f"station {station!r} appears in no capture row")


# --- segmentation / features -------------------------------------------------

class EmptyTraceError(FlareError):
    pass


class EmptyInputError(FlareError):
    pass


class EmptyWindowError(FlareError):
    pass


# --- learners ----------------------------------------------------------------

class DatasetError(FlareError):
    pass


class TooFewSamplesError(FlareError):
    pass


class NonConvergenceWarning(UserWarning):
    """Optimizer hit max_iters before reaching the gradient tolerance."""


# --- fusion ------------------------------------------------------------------

class UnlabeledWindowError(FlareError):
    pass


class DimensionMismatchError(FlareError):
    pass


class InsufficientDataError(FlareError):
    def __init__(self, target_class: str, message: str):
        self.target_class = target_class
        super().__init__(f"{target_class}: {message}")


class FilteredWindowError(FlareError):
    """Window contains no packet above the activity threshold."""


# --- analysis ----------------------------------------------------------------

class LengthMismatchError(FlareError):
    pass


class WrongRunCountError(FlareError):
    pass


class SingleClassError(FlareError):
    pass


class BinMismatchError(FlareError):
    pass


class UnknownModelNameError(FlareError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"model name {name!r} not present in the corpus")


# --- simulator ---------------------------------------------------------------

class InvalidSpecError(FlareError):
    pass


class InvalidThroughputError(FlareError):
    pass
