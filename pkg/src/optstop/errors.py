"""Exception hierarchy shared by all solver layers."""


class OptstopError(Exception):
    """Base class for all errors raised by this package."""


class NonConvergent(OptstopError):
    """Adaptive quadrature or an iterative solver exhausted its budget."""


class NoSignChange(OptstopError):
    """Root bracket does not straddle a sign change."""


class OutOfDomain(OptstopError):
    """Evaluation point outside the process state interval."""


class AtKink(OptstopError):
    """Generator applied at a declared kink of the reward."""


class UnknownProcess(OptstopError):
    """Catalog name not recognised."""


class BadParams(OptstopError):
    """Catalog or config parameters outside their valid range."""


class NotFound(OptstopError):
    """Inequality-threshold scan exhausted without a hit."""


class NotSingleCrossing(OptstopError):
    """(alpha - L)g does not cross zero exactly once (negative then positive)."""


class UnresolvedSign(OptstopError):
    """Sign-scan grid too coarse: refinement moved component endpoints."""


class PreconditionFailed(OptstopError):
    """Interval fed to the expansion step violates its entry condition."""


class NonTermination(OptstopError):
    """Region merge loop exceeded its iteration guard."""


class MajorantViolated(OptstopError):
    """Computed value function dips below the reward: wrong region."""


class EquationMismatch(OptstopError):
    """Derivative and integral threshold equations disagree beyond tolerance."""


class MomentDiverges(OptstopError):
    """Exponential moment required by the characteristic exponent does not exist."""


class AliasingDetected(OptstopError):
    """DFT-inverted kernel row fails the total-mass identity."""


class HypothesisViolated(OptstopError):
    """A verification-theorem hypothesis fails at the candidate solution."""


class UnsupportedProcess(OptstopError):
    """No simulation scheme available for this process."""


class DominanceViolated(OptstopError):
    """A perturbed stopping rule beat the solver value beyond noise."""
