"""Exception types shared across the library."""


class ContractError(ValueError):
    """A caller violated a documented precondition (bad shapes, bad config)."""


class DegenerateColumnError(ContractError):
    """A dictionary column has zero norm."""


class IncoherenceError(ContractError):
    """Strict mode: a coherence precondition does not hold."""


class BudgetError(RuntimeError):
    """A combinatorial enumeration or net construction exceeds its budget."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class NumericalError(RuntimeError):
    """A computation produced non-finite values; carries context in the message."""


class DatasetFormatError(RuntimeError):
    """A dataset file is unreadable or structurally invalid."""


class SchemaVersionError(DatasetFormatError):
    """A dataset file was written with an unsupported schema version."""
