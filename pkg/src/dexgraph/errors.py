"""Exception hierarchy shared by every module of the package."""


class DexGraphError(Exception):
    """Base class for all errors raised by dexgraph."""


class UnreadableFile(DexGraphError):
    pass


class TooFewPoints(DexGraphError):
    pass


class DegenerateGeometry(DexGraphError):
    pass


class ResolutionTooCoarse(DexGraphError):
    pass


class EmptyGraph(DexGraphError):
    pass


class NoAdmissibleNode(DexGraphError):
    pass


class NoPath(DexGraphError):
    """Raised when start and goal cannot be joined without releasing the object."""

    def __init__(self, message, start_component=None, goal_component=None):
        super().__init__(message)
        self.start_component = start_component
        self.goal_component = goal_component


class InvalidStart(DexGraphError):
    pass


class InvalidGoal(DexGraphError):
    pass


class EmptyIntersection(DexGraphError):
    pass


class NoValidPoses(DexGraphError):
    pass


class NoPushPoint(DexGraphError):
    pass


class ExecutionStall(DexGraphError):
    pass


class ContactLost(DexGraphError):
    pass
