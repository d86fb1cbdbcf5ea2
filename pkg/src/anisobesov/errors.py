"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented exit classes: 2 = bad configuration, 3 = numeric guard tripped,
4 = I/O.
"""


class AnisoBesovError(Exception):
    """Base class for all library errors."""

    exit_code = 3


class ConfigInvalid(AnisoBesovError):
    """Experiment configuration failed schema or consistency validation."""

    exit_code = 2


class StorageError(AnisoBesovError):
    """Persisted artifact is corrupt or inconsistent with the request."""

    exit_code = 4


# --- dilation geometry -----------------------------------------------------

class NotExpansive(AnisoBesovError):
    """Matrix has an eigenvalue of modulus <= 1."""


class Singular(AnisoBesovError):
    """Matrix is singular."""


class ConstructionFailed(AnisoBesovError):
    """Ellipsoid construction produced a non positive-definite shape."""


class RegionTooLarge(AnisoBesovError):
    """Cube enumeration would exceed the configured cap."""


# --- weights ----------------------------------------------------------------

class NotPositiveDefinite(AnisoBesovError):
    """Weight matrix has an eigenvalue at or below tolerance."""


class DimensionMismatch(AnisoBesovError):
    """Vector dimensions of the operands disagree."""


class QuadratureUnderflow(AnisoBesovError):
    """A ball received fewer quadrature nodes than the minimum (8)."""


class FitDegenerate(AnisoBesovError):
    """Sampled norm values span too large a dynamic range to fit."""


class MissingCube(AnisoBesovError):
    """A reducing family has no entry for a requested cube."""


# --- filters ----------------------------------------------------------------

class UnsupportedDilation(AnisoBesovError):
    """Dilation admits no real matrix logarithm; filters cannot be built."""


class AnnulusEmpty(AnisoBesovError):
    """No admissible frequency annulus fits inside [-pi, pi]^d."""


class NormalizationSingular(AnisoBesovError):
    """Partition-of-unity normalizer vanished on the annulus."""


class NegativeMass(AnisoBesovError):
    """Low-pass square-root argument dipped below -tolerance."""


# --- transform ---------------------------------------------------------------

class AliasRisk(AnisoBesovError):
    """A scale-k multiplier support exceeds the representable frequency cube."""


class HypothesisViolated(AnisoBesovError):
    """A sampling-lemma hypothesis (band-limit certificate) is absent."""


# --- operators ---------------------------------------------------------------

class GridTooCoarse(AnisoBesovError):
    """Requested derivative order exceeds what the grid resolves."""


class IndexMismatch(AnisoBesovError):
    """Matrix column index set does not cover the coefficient support."""
