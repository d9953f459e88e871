"""Exception types shared across the package."""


class BrokerGameError(Exception):
    """Base class for all package errors."""


class ValidationError(BrokerGameError):
    """A parameter or configuration value violates its contract."""


class TableRangeError(BrokerGameError):
    """A time-gridded table was evaluated outside its domain."""


class IntegrationBlowupError(BrokerGameError):
    """An ODE integration produced a non-finite value."""


class ModelInconsistencyError(BrokerGameError):
    """A solved coefficient violates a structural sign condition."""


class AdmissibilityError(BrokerGameError):
    """The solved coefficients leave the admissible region of the control problem."""


class ExistenceError(BrokerGameError):
    """The matrix Riccati system blew up; no solution on the horizon."""


class FilterDegeneracyError(BrokerGameError):
    """A filter gain or observation transform is undefined for these inputs."""


class SimulationBlowupError(BrokerGameError):
    """A simulated path produced a non-finite state."""


class MetricUndefinedError(BrokerGameError):
    """An experiment statistic is undefined (e.g. zero traded notional)."""
