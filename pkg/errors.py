"""
Exception hierarchy shared by the series engine, the catalog and the tools.
"""


class QSeriesError(Exception):
    """Base exception for q-series operations"""
    pass


class NotInvertible(QSeriesError):
    """Raised when a coefficient or series has no inverse"""
    pass


class DenominatorMismatch(QSeriesError):
    """Raised when two series with different exponent denominators meet"""
    pass


class FractionalExponent(QSeriesError):
    """Raised when an operation needs integer exponents"""
    pass


class WindowMiss(QSeriesError):
    """Raised when a z-coefficient outside the complete window is requested"""
    pass


class NonTruncating(QSeriesError):
    """Raised when infinitely many factors affect a finite order"""
    pass


class PoleAtNegativeIndex(QSeriesError):
    """Raised when a negative Pochhammer subscript hits a zero factor"""
    pass


class NonSummable(QSeriesError):
    """Raised when infinitely many lattice points contribute to a finite order"""
    pass


class BadParameters(QSeriesError):
    """Raised when a generator receives parameters outside its range"""
    pass


class NonIntegerExponent(QSeriesError):
    """Raised when prodmake produces a non-integral exponent"""

    def __init__(self, index: int, value):
        self.index = index
        self.value = value
        super().__init__(f"exponent a_{index} = {value} is not an integer")


class LeadingUnit(QSeriesError):
    """Raised when prodmake receives a series whose leading coefficient is not 1"""

    def __init__(self, unit):
        self.unit = unit
        super().__init__(f"leading coefficient is {unit}, expected 1")


class NotationError(QSeriesError):
    """Raised when a product or factor string cannot be parsed"""

    def __init__(self, text: str, position: int, reason: str):
        self.text = text
        self.position = position
        super().__init__(f"{reason} at position {position} in {text!r}")


class SchemaError(QSeriesError):
    """Raised when a catalog or configuration file violates its schema"""
    pass


class UnknownIdentity(QSeriesError):
    """Raised when a catalog id or alias is not found"""
    pass


class InsufficientPrecision(QSeriesError):
    """Raised when a series is known to a lower order than a comparison needs"""
    pass
