class ManevKitError(Exception):
    pass


class ConfigError(ManevKitError):
    pass


class GridError(ManevKitError):
    pass


class ConstraintError(ManevKitError):
    pass


class DomainError(ManevKitError):
    pass


class ConvergenceError(ManevKitError):
    pass


class DivergenceError(ConvergenceError):
    pass


class BracketError(ConvergenceError):
    pass
