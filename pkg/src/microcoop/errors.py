"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class MicrocoopError(Exception):
    exit_code = 3


class ValidationError(MicrocoopError, ValueError):
    exit_code = 1


class DimensionError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class SizeError(ValidationError):
    pass


class ScenarioParseError(ValidationError):
    pass


class MissingCoalitionError(ValidationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class InfeasibleError(MicrocoopError):
    exit_code = 2

    def __init__(self, message, coalition=None):
        super().__init__(message)
        self.coalition = coalition


class EmptyCoreError(InfeasibleError):
    pass


class SolverStallError(MicrocoopError):
    exit_code = 3

    def __init__(self, message, iterations):
        super().__init__(message)
        self.iterations = iterations
