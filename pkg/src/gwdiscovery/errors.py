"""Exception hierarchy shared by all modules."""


class GWDiscoveryError(Exception):
    """Base class for every error raised by this package."""


class DomainError(GWDiscoveryError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class RejectsZeroOffspring(DomainError):
    """The offspring law puts mass on zero children (the tree could die out)."""


class RejectsSubcritical(DomainError):
    """The offspring law has no mass on two or more children, so m = 1."""


class RejectsBadMass(DomainError):
    """Probabilities are non-positive or do not sum to one."""


class DeterministicOffspring(DomainError):
    """A quantity that needs Var(G) > 0 was requested for a point-mass law."""


class OverflowGuard(GWDiscoveryError, RuntimeError):
    """A generation outgrew the configured node budget."""


class ConfigError(GWDiscoveryError, ValueError):
    """An experiment configuration is malformed."""


class EmptyReport(GWDiscoveryError, ValueError):
    """A report with no rows was about to be written."""
