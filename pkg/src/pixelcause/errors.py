"""Semantic exception hierarchy.

Every public operation raises one of these instead of bare ValueError/RuntimeError
so callers (and the CLI exit-code mapping) can tell contract violations, failed
verifications and I/O problems apart.
"""


class PixelCauseError(Exception):
    """Base class for all package errors."""


class ConfigError(PixelCauseError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class VerificationError(PixelCauseError):
    """A verification that should have passed did not (CLI exit code 3)."""


class StorageError(PixelCauseError):
    """File format / I-O contract violation (CLI exit code 4)."""


# --- finite-world operations ---------------------------------------------


class ZeroMarginal(PixelCauseError):
    """Observational posterior requested for an image with P(I=i) = 0."""

    def __init__(self, image: int):
        self.image = image
        super().__init__(f"image {image} has zero marginal probability")


class AmbiguousClustering(PixelCauseError):
    """A single-linkage chain spans more than twice the tolerance."""


class SizeMismatch(PixelCauseError):
    """Two partitions cover different numbers of images."""


class RejectionExhausted(PixelCauseError):
    """Rejection sampling gave up after the configured number of attempts."""


class SolveFailed(PixelCauseError):
    """No in-range root found for an algebraic tie constraint."""


class NotACoarsening(PixelCauseError):
    """Macro-variable construction requires the causal partition to coarsen
    the observational one, and it does not for this world."""


# --- learner ---------------------------------------------------------------


class DimensionMismatch(PixelCauseError):
    """Input length does not match the model/batch dimensions."""


class NonFiniteLoss(PixelCauseError):
    """Training produced a NaN/inf loss; aborted with diagnostics."""


class NonFiniteObjective(PixelCauseError):
    """A manipulation restart produced a non-finite objective."""


# --- pipeline ---------------------------------------------------------------


class EmptyBatch(PixelCauseError):
    """Metric requested over an empty batch of manipulation records."""


class InsufficientClasses(PixelCauseError):
    """Manipulator learning needs at least two causal classes."""


class UnknownObservationalClass(PixelCauseError):
    """A record's observational value is not in the declared class set."""


class OracleAnswerMissing(PixelCauseError):
    """Manipulation error requested before the oracle answered every record."""


# --- file ingestion ---------------------------------------------------------


class BadMagic(StorageError):
    """IDX file does not start with the expected magic number."""


class CountMismatch(StorageError):
    """IDX image and label files declare different item counts."""


class TruncatedFile(StorageError):
    """File ends before the declared payload is complete."""


class ConfigHashMismatch(StorageError):
    """Artifact file embeds a different config hash than expected."""


# --- annotation service ------------------------------------------------------


class AnnotationError(PixelCauseError):
    """Base class for annotation-service domain errors."""


class UnknownExperiment(AnnotationError):
    pass


class InsufficientImages(AnnotationError):
    pass


class DuplicateVote(AnnotationError):
    pass


class BadLabel(AnnotationError):
    pass


class NoDecidedLabels(AnnotationError):
    pass
