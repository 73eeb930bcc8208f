"""Exception hierarchy. Every error carries a stable ``code`` string."""


class IetError(Exception):
    code = "IET_ERROR"


class InvalidArrayError(IetError, ValueError):
    code = "INVALID_ARRAY"


class EmptySeriesError(IetError, ValueError):
    code = "EMPTY_SERIES"


class AllFilteredError(IetError, ValueError):
    code = "ALL_FILTERED"


class SeriesTooShortError(IetError, ValueError):
    code = "SERIES_TOO_SHORT"


class NoQualifyingSegmentError(IetError, ValueError):
    code = "NO_QUALIFYING_SEGMENT"

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class EmptySampleError(IetError, ValueError):
    code = "EMPTY_SAMPLE"


class NoAdmissibleStatisticError(IetError):
    code = "NO_ADMISSIBLE_STATISTIC"


class NonMonotoneBandsError(IetError):
    code = "NON_MONOTONE_BANDS"


class EmptyTableError(IetError, ValueError):
    code = "EMPTY_TABLE"


class ProviderExhaustedError(IetError):
    code = "PROVIDER_EXHAUSTED"


class ArrayTooShortError(IetError, ValueError):
    code = "ARRAY_TOO_SHORT"


class MalformedCSVError(IetError, ValueError):
    code = "MALFORMED_CSV"

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownFieldError(IetError, ValueError):
    code = "UNKNOWN_FIELD"

    def __init__(self, field):
        super().__init__(f"unknown field {field!r}")
        self.field = field


class MissingFieldError(IetError, ValueError):
    code = "MISSING_FIELD"

    def __init__(self, field):
        super().__init__(f"missing field {field!r}")
        self.field = field


class InvalidTableError(IetError, ValueError):
    code = "INVALID_TABLE"


class UnsupportedPlatformError(IetError, RuntimeError):
    code = "UNSUPPORTED_PLATFORM"


class AffinityFailedError(IetError, RuntimeError):
    code = "AFFINITY_FAILED"
