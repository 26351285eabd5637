"""Exceptions raised by mfcarbon

Structural and input problems derive from ValueError, numerical breakdown
from ArithmeticError. The command line maps the first group to exit code 1
and the second to exit code 2.
"""


class StructuralError(ValueError):
    'Custom exception for inconsistent dimensions or shapes'


class RangeError(ValueError):
    'Custom exception for a time outside the horizon'


class ConfigurationError(ValueError):
    'Custom exception for an invalid combination of inputs'


class ValidationError(ValueError):
    'Custom exception for a violated parameter constraint'


class ParseError(ValidationError):
    'Custom exception for a malformed configuration line'

    def __init__(self, lineno, message):
        self.lineno = lineno
        super().__init__(f'line {lineno}: {message}')


class SingularityError(ArithmeticError):
    'Custom exception for a numerically singular block'


class DivergenceError(ArithmeticError):
    'Custom exception for non-finite values'
