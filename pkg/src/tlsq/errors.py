"""Exception types shared across the library."""


class TlsqError(Exception):
    """Base class for all library-specific failures."""


class DimensionMismatch(TlsqError):
    """Operand shapes are incompatible for the requested operation."""


class ImaginaryResidue(TlsqError):
    """An inverse tube transform left an imaginary part too large to discard."""


class RankDeficient(TlsqError):
    """A design is not of full tubal rank in every Fourier slice."""


class SketchRankDeficient(RankDeficient):
    """A row-subsampled design lost column rank in at least one Fourier slice.

    `slice_index` is the 1-based Fourier slice where the loss was detected.
    """

    def __init__(self, message, slice_index=None):
        super().__init__(message)
        self.slice_index = slice_index


class DegenerateDistribution(TlsqError):
    """Every row has zero sampling weight; the caller must pick a fallback."""


class ZeroProbabilityRow(TlsqError):
    """A zero-probability row carries nonzero weight in a variance formula."""


class FileFormatError(TlsqError):
    """A tensor file has a bad magic number, version, or payload size."""
