"""Exception types shared across the package."""


class StarsenseError(Exception):
    """Base class for all package-specific errors."""


class CutoffExceeded(StarsenseError):
    """An occupation pattern exceeds the photon cutoff of its space."""


class SpaceMismatch(StarsenseError):
    """Two objects live on incompatible Fock spaces."""


class ZeroProbabilityBranch(StarsenseError):
    """A measurement outcome with zero probability was conditioned on."""


class DecompositionFailure(StarsenseError):
    """A conditional state does not split into a coherent block plus a
    diagonal residue."""


class SingularOutcome(StarsenseError):
    """An outcome probability vanishes while its derivative does not;
    the Fisher information is singular at this point."""


class ZeroWeights(StarsenseError):
    """All combination weights are zero."""


class NotNormalized(StarsenseError):
    """A pure state expected to be normalized is not."""


class NotEffectivelyScalar(StarsenseError):
    """An outcome model does not depend on the phases through a single
    scalar along the requested direction."""


class FlatLikelihood(StarsenseError):
    """The log-likelihood is constant over the identifiability window."""


class MissingPattern(StarsenseError):
    """A required detection-pattern estimate is absent."""


class ConfigError(StarsenseError):
    """A scenario configuration file or flag is invalid."""
