"""Exception types shared across the package."""


class FolilabError(Exception):
    """Base class for all folilab errors."""


class NonImmersion(FolilabError):
    """Embedding Jacobian is rank deficient at the requested chart point."""


class IllConditioned(FolilabError):
    """A Gram-matrix solve exceeded its conditioning tolerance."""


class NotTangent(FolilabError):
    """A vector expected to be tangent (or leafwise) is not, within tolerance."""


class InvalidParams(FolilabError):
    """Model parameters violate a constructor precondition."""


class UnsupportedDrift(FolilabError):
    """Requested drift specification is not available for the model."""


class BumpTooLarge(FolilabError):
    """Bumped trajectories left the linear regime of the variational oracle."""


class WeightDegeneracy(FolilabError):
    """Effective sample size of a weighted particle set collapsed."""


class EmptyEnsemble(FolilabError):
    """An ensemble reduction was asked to run on no samples."""


class ConfigError(FolilabError):
    """Experiment configuration is malformed or inconsistent."""
