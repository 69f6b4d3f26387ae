"""Exception types shared across the package."""


class HeavyFedError(Exception):
    """Base class for all package-specific errors."""


class EmptyInput(HeavyFedError):
    """An operation received an empty sample set or dataset."""


class DimensionMismatch(HeavyFedError):
    """Vector, parameter or dataset dimensions do not agree."""


class InvalidConfig(HeavyFedError):
    """A parameter value violates its documented constraints."""


class TooFewVectors(HeavyFedError):
    """An aggregation rule received fewer vectors than it requires."""


class IndivisibleSplit(HeavyFedError):
    """Dataset size is not divisible by the requested shard count."""


class ParseError(HeavyFedError):
    """A CSV record failed to parse; the message names row and column."""


class MissingColumn(HeavyFedError):
    """A required CSV column is absent from the header."""


class ConfigError(HeavyFedError):
    """An experiment config file is invalid; carries the offending field path."""

    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class NonFiniteState(HeavyFedError):
    """The parameter vector left the finite range; records the failing round."""

    def __init__(self, round_index: int):
        super().__init__(f"parameter vector became non-finite in round {round_index}")
        self.round_index = round_index
