"""Exception hierarchy for the store."""


class StoreError(Exception):
    """Base class for all store errors."""


class DuplicateName(StoreError):
    pass


class UnknownVideo(StoreError):
    pass


class OutOfRange(StoreError):
    pass


class FormatMismatch(StoreError):
    pass


class DimensionMismatch(StoreError):
    pass


class EmptyInput(StoreError):
    pass


class CorruptGop(StoreError):
    pass


class CorruptPair(StoreError):
    pass


class LengthMismatch(StoreError):
    pass


class NegativeInput(StoreError):
    pass


class NoQualifyingCover(StoreError):
    pass


class BudgetUnsatisfiable(StoreError):
    pass


class IoError(StoreError):
    pass
