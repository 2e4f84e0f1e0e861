"""Exception hierarchy. Each family maps to a distinct CLI exit code."""


class BeamPredError(Exception):
    exit_code = 1


class ConfigError(BeamPredError, ValueError):
    exit_code = 2


class DomainError(BeamPredError, ValueError):
    """Input outside the mathematical domain of an operation."""
    exit_code = 4


class GeometryError(DomainError):
    pass


class ContractError(BeamPredError, ValueError):
    """Shapes, lengths or invariants of arguments do not line up."""
    exit_code = 4


class ParseError(BeamPredError, ValueError):
    exit_code = 3

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ScoringError(BeamPredError):
    exit_code = 4


class InsufficientDataError(BeamPredError, ValueError):
    exit_code = 4


class TrainingError(BeamPredError, ArithmeticError):
    exit_code = 5
