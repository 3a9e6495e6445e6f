"""Exception types raised across the toolkit.

Every error derives from :class:`DrccOtsError` so callers (the CLI in
particular) can map whole families onto exit codes.
"""


class DrccOtsError(Exception):
    """Base class for all toolkit errors."""


class InputError(DrccOtsError):
    """Malformed or inconsistent user input."""


class MalformedDocument(InputError):
    pass


class DanglingLineEndpoint(InputError):
    pass


class InfeasibleBounds(InputError):
    pass


class DisconnectedBaseGraph(InputError):
    pass


class RaggedRows(InputError):
    pass


class NonNumericCell(InputError):
    pass


class EmptyFile(InputError):
    pass


class DegenerateCoordinate(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class QuantileDomain(InputError):
    pass


class MeanOutsideSupport(InputError):
    pass


class EmptyCluster(DrccOtsError):
    pass


class IslandedTopology(DrccOtsError):
    pass


class UnboundedDual(DrccOtsError):
    pass


class NoFeasibleStart(DrccOtsError):
    pass


class NumericalBreakdown(DrccOtsError):
    pass


class CurtailmentInfeasible(DrccOtsError):
    pass
