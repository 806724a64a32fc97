"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input failed a structural or invariant check."""


class ConfigurationError(ValidationError):
    """Model configuration is incomplete or inconsistent."""


class DomainError(ValueError):
    """Argument lies outside the mathematical domain of the operation."""


class GridTooLargeError(ValidationError):
    """Exhaustive grid exceeds the cell cap and no override was given."""

    def __init__(self, cells, cap):
        super().__init__(
            f"grid has {cells} cells, above the cap of {cap}; pass an override to run it anyway"
        )
        self.cells = cells
        self.cap = cap
