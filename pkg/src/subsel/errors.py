"""Exception types shared across the engine."""


class SubselError(Exception):
    """Base class for all engine errors."""


class InvalidInputError(SubselError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class CapacityError(SubselError):
    """A run would materialize more kernel storage than the configured budget."""

    def __init__(self, required_bytes: int, budget_bytes: int):
        self.required_bytes = int(required_bytes)
        self.budget_bytes = int(budget_bytes)
        super().__init__(
            f"kernel storage requires {self.required_bytes} bytes "
            f"but the memory budget is {self.budget_bytes} bytes"
        )


class FeatureFormatError(SubselError):
    """A feature-matrix file is malformed; carries the offending byte offset."""

    def __init__(self, message: str, offset: int):
        self.offset = int(offset)
        super().__init__(f"{message} (byte offset {self.offset})")
