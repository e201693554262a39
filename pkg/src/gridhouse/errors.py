"""Exception types shared across the package."""


class GridhouseError(Exception):
    """Base class for all package errors."""


class BudgetExhausted(GridhouseError):
    """Raised when an episode step or failure budget would be exceeded."""


class UnknownClass(GridhouseError):
    """Raised when a class name is not in the object vocabulary."""


class ClassNotOnMap(GridhouseError):
    """Raised when a semantic-map channel has no confident cell."""


class NoWaypoint(GridhouseError):
    """Raised when every waypoint strategy fails for a target."""


class Unreachable(GridhouseError):
    """Raised when no path exists between two planning nodes."""


class ParseError(GridhouseError):
    """Raised on instructions outside the template grammar."""


class GenerationFailed(GridhouseError):
    """Raised when the scene generator exhausts its retry budget."""


class MalformedInput(GridhouseError):
    """Raised on inputs that violate an operation's preconditions."""


class EmptyInput(GridhouseError):
    """Raised when an aggregate is asked for on an empty collection."""
