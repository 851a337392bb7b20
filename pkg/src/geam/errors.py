"""Exception types shared across the package.

Every error raised by the library derives from GeamError so callers (and the
CLI) can catch one base class and still report the precise failure kind.
"""

from __future__ import annotations


class GeamError(Exception):
    """Base class for all library errors."""


# -- chemistry ---------------------------------------------------------------

class ChemError(GeamError):
    """Base class for molecular-graph and SMILES errors."""


class SmilesSyntaxError(ChemError):
    """Malformed SMILES text. Carries the 0-based offset of the bad token."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class UnsupportedFeature(ChemError):
    """Valid SMILES construct outside the supported subset."""


class ValenceError(ChemError):
    """Bond-order sum (plus attachment markers) exceeds the element's cap."""


class AromaticityError(ChemError):
    """Aromatic atom or bond not part of a fully aromatic ring."""


class InvalidSite(ChemError):
    """Atom index is not an open attachment point."""


# -- fingerprints ------------------------------------------------------------

class WidthMismatch(GeamError):
    """Fingerprints of different widths compared."""


class EmptyReference(GeamError):
    """Novelty requested against an empty reference set."""


# -- tensors -----------------------------------------------------------------

class ShapeMismatch(GeamError):
    """Operands have incompatible shapes."""


class NonPositiveTemperature(GeamError):
    """Gumbel-Softmax temperature must be > 0."""


class NegativeVariance(GeamError):
    """Diagonal covariance entries must be >= 0."""


class CheckpointFormatError(GeamError):
    """Parameter checkpoint file is malformed."""


# -- bottleneck / vocabulary -------------------------------------------------

class EmptyDecomposition(GeamError):
    """A graph with no fragments reached the bottleneck."""


class EmptyDataset(GeamError):
    """An operation that needs data received none."""


class EmptySupport(GeamError):
    """Fragment scoring needs at least one supporting molecule."""


class EmptyVocabulary(GeamError):
    """Assembly needs at least one fragment in the vocabulary."""


# -- assembly ----------------------------------------------------------------

class NoOpenSites(GeamError):
    """Policy asked to act on a state without attachment points."""


# -- genetic operators -------------------------------------------------------

class PopulationTooSmall(GeamError):
    """Parent selection needs at least two population members."""


class CrossoverFailed(GeamError):
    """No valid offspring after the retry budget."""


class ReproductionFailed(GeamError):
    """GA could not produce a valid, large-enough offspring."""


# -- oracles -----------------------------------------------------------------

class BudgetExceeded(GeamError):
    """The oracle call budget is exhausted."""


class PropertyRangeError(GeamError):
    """A property value fell outside its documented range."""


class OracleFailure(GeamError):
    """The oracle could not evaluate a molecule."""


# -- harness -----------------------------------------------------------------

class EnumerationTooLarge(GeamError):
    """Exact enumeration requested beyond the configured size limit."""


class ConfigError(GeamError):
    """Invalid or inconsistent run configuration."""
