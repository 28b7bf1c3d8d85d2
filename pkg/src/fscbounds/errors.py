"""Exception types shared across the package.

Every operation that can refuse its input raises one of these named
errors rather than a bare ValueError, so callers (and the CLI exit-code
mapping) can tell usage mistakes from numeric failures.
"""


class FscBoundsError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(FscBoundsError, ValueError):
    """Tensor shape does not match the declared alphabet sizes."""


class NotStochastic(FscBoundsError, ValueError):
    """A row of a probability table does not sum to one.

    Carries ``row`` (the offending index tuple) and ``deficit``
    (row sum minus one).
    """

    def __init__(self, row, deficit):
        self.row = row
        self.deficit = deficit
        super().__init__(f"row {row} sums to 1{deficit:+.3e}")


class UnknownName(FscBoundsError, ValueError):
    """Unrecognised built-in channel or Q-graph name."""


class EpsilonOutOfRange(FscBoundsError, ValueError):
    """Channel parameter outside its admissible interval."""


class NotFiniteMemory(FscBoundsError, ValueError):
    """Channel does not have the finite-memory state structure."""


class NotUnifilar(FscBoundsError, ValueError):
    """Channel state evolution is not a deterministic function."""


class NotFiniteClass(FscBoundsError, ValueError):
    """Channel is neither unifilar nor finite-memory, so the exact
    finite MDP construction does not apply."""


class IndexOutOfRange(FscBoundsError, IndexError):
    """Node or symbol index outside the declared alphabet."""


class BudgetExceeded(FscBoundsError, RuntimeError):
    """Enumeration would exceed the configured iteration budget."""


class StateBudgetExceeded(FscBoundsError, RuntimeError):
    """Reachable-state exploration grew past the configured cap."""


class NonFinite(FscBoundsError, ValueError):
    """A parameter vector contains NaN or infinity."""


class NotConverged(FscBoundsError, RuntimeError):
    """Iterative solver hit its iteration cap.

    Carries the best gain bracket seen (``lo``, ``hi``) and, when
    available, the last iterate packaged as a partial solution.
    """

    def __init__(self, message, lo=None, hi=None, partial=None):
        self.lo = lo
        self.hi = hi
        self.partial = partial
        super().__init__(message)


class MultichainDetected(FscBoundsError, RuntimeError):
    """The chain induced by a policy has more than one closed
    recurrent class. Carries ``policy``."""

    def __init__(self, message, policy=None):
        self.policy = policy
        super().__init__(message)


class UnreachableOutput(FscBoundsError, ValueError):
    """Conditioning on an output that has probability zero under the
    current belief and input."""


class BcjrViolated(FscBoundsError, RuntimeError):
    """Encoder fails the belief-invariance check; the single-letter
    rate formula would not be a valid lower bound."""


class PeriodicClass(FscBoundsError, RuntimeError):
    """The initial state/node pair is not inside an aperiodic closed
    communicating class."""


class EmptyFeasibleSet(FscBoundsError, RuntimeError):
    """Constrained minimisation found no feasible grid point."""
