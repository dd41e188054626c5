"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`DrugClipError`. The ``exit_code`` attribute is what the command line
returns when the error escapes a subcommand.
"""


class DrugClipError(Exception):
    exit_code = 2


# --- SMILES parsing -------------------------------------------------------

class SmilesError(DrugClipError, ValueError):
    """Base class for SMILES syntax errors."""


class EmptyInput(SmilesError):
    pass


class UnknownToken(SmilesError):
    pass


class UnclosedRing(SmilesError):
    pass


class UnbalancedParen(SmilesError):
    pass


class MultiFragment(SmilesError):
    pass


class RingBondConflict(SmilesError):
    pass


class DuplicateBond(SmilesError):
    pass


class InvalidBondCode(DrugClipError, ValueError):
    pass


# --- ontology ---------------------------------------------------------------

class InvalidCodeFormat(DrugClipError, ValueError):
    pass


class UnknownCode(DrugClipError, LookupError):
    pass


class EmptyDiseaseSet(DrugClipError, ValueError):
    pass


# --- numerics ---------------------------------------------------------------

class ShapeMismatch(DrugClipError, ValueError):
    pass


class NumericalError(DrugClipError, ArithmeticError):
    exit_code = 3


class NoTape(DrugClipError, RuntimeError):
    pass


class UnknownParameter(DrugClipError, LookupError):
    pass


# --- data files -------------------------------------------------------------

class MalformedRow(DrugClipError, ValueError):
    pass


class DuplicateTrialId(DrugClipError, ValueError):
    pass


class DuplicateDrugId(DrugClipError, ValueError):
    pass


class UnparseableDate(DrugClipError, ValueError):
    pass


class UnsupportedVersion(DrugClipError, ValueError):
    pass


class CorruptCheckpoint(DrugClipError, ValueError):
    pass


# --- training / evaluation --------------------------------------------------

class EmptyDataset(DrugClipError, ValueError):
    pass


class InvalidDateRange(DrugClipError, ValueError):
    pass


class EmptyDrugDb(DrugClipError, ValueError):
    pass


class InvalidK(DrugClipError, ValueError):
    pass


class EmptyTestSet(DrugClipError, ValueError):
    exit_code = 4
