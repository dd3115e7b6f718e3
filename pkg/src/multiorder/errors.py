"""Exception hierarchy shared by every module."""


class MultiOrderError(Exception):
    pass


class ShapeError(MultiOrderError, ValueError):
    pass


class DomainError(MultiOrderError, ValueError):
    pass


class ArgumentError(MultiOrderError, ValueError):
    pass


class ValidationError(MultiOrderError, ValueError):
    pass


class SpecError(MultiOrderError, ValueError):
    pass


class ContractError(MultiOrderError, RuntimeError):
    pass


class CheckpointError(MultiOrderError, ValueError):
    pass
