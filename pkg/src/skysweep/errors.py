"""Exception types shared across the package.

Everything raised on purpose derives from SkysweepError so callers can
catch one base class at e.g. the CLI boundary.
"""


class SkysweepError(Exception):
    """Base class for all errors raised by this package."""


# --- road network construction / ingestion ---------------------------------

class DuplicateLink(SkysweepError):
    """The same undirected node pair appears more than once in the link list."""


class SelfLoop(SkysweepError):
    """A link connects a node to itself."""


class CoordinateOutOfRange(SkysweepError):
    """A node coordinate falls outside the unit square."""


class DisconnectedGraph(SkysweepError):
    """The road network is not connected."""


class UnknownNode(SkysweepError):
    """A node id was referenced that does not exist."""


class ParseError(SkysweepError):
    """Malformed input text; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# --- routing environment ----------------------------------------------------

class TerminalState(SkysweepError):
    """An operation was requested on an episode that already finished."""


class InfeasibleAction(SkysweepError):
    """step() was called with a node the current mask forbids."""


# --- policy -----------------------------------------------------------------

class ShapeMismatch(SkysweepError):
    """Tensor arguments do not have the shapes the operation requires."""


class NonFiniteActivation(SkysweepError):
    """A NaN or infinity appeared in a forward activation."""


class NonFiniteGradient(SkysweepError):
    """A NaN or infinity appeared in a gradient during training."""


class AllMasked(SkysweepError):
    """decode_step() was asked to score a state with no feasible action."""


class AlreadyExpanded(SkysweepError):
    """The multi-depot adapter was applied to already-expanded parameters."""


# --- solvers ----------------------------------------------------------------

class InstanceTooLarge(SkysweepError):
    """The instance exceeds the size guard of an exhaustive solver."""


class ModelTooLarge(SkysweepError):
    """The model exceeds the size guard of the brute-force MILP checker."""


class InconsistentAttributes(SkysweepError):
    """Requested attribute flags disagree with the instance contents."""


class UsageError(SkysweepError):
    """Bad command-line arguments."""
