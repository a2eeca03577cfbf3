"""
Exact scalars of the form r_0 + sum_p r_p ln p with rational r's.

The numbers 1, ln 2, ln 3, ln 5, ... are linearly independent over the
rationals, so two such values have a rational ratio exactly when their
coordinate vectors are proportional. Key 1 holds the coefficient of the
unit, every other key is a prime.
"""
import re
import math
from fractions import Fraction
from dataclasses import dataclass

from sympy import factorint

UNIT = 1

_TERM_PATTERN = re.compile(
    r'\s*([+-])?\s*'
    r'(?:(\d+(?:/\d+)?)\s*\*?\s*)?'
    r'(?:(?:ln|log)\(\s*(\d+(?:/\d+)?)\s*\))?'
)

def _rational(value) -> Fraction:
    if isinstance(value, float):
        raise TypeError(f'Exact values need int, Fraction or "p/q" input, got float {value}')
    return Fraction(value)

@dataclass(frozen=True, order=False)
class ExactLog:
    terms: tuple[tuple[int, Fraction], ...] = ()

    @classmethod
    def _from_dict(cls, coefficients: dict[int, Fraction]) -> 'ExactLog':
        return cls(tuple(sorted((k, Fraction(c)) for k, c in coefficients.items() if c != 0)))

    @classmethod
    def rational(cls, value) -> 'ExactLog':
        """The rational number value itself"""
        return cls._from_dict({UNIT: _rational(value)})

    @classmethod
    def log(cls, value) -> 'ExactLog':
        """ln(value) for a positive rational value"""
        q = _rational(value)
        if q <= 0:
            raise ValueError(f'Logarithm of non-positive rational {q}')
        coefficients: dict[int, Fraction] = {}
        for prime, power in factorint(q.numerator).items():
            coefficients[prime] = coefficients.get(prime, Fraction(0)) + power
        for prime, power in factorint(q.denominator).items():
            coefficients[prime] = coefficients.get(prime, Fraction(0)) - power
        return cls._from_dict(coefficients)

    @classmethod
    def parse(cls, literal: str, base: Fraction | None = None) -> 'ExactLog':
        """
        Parses "p/q", "ln(q)", "r*ln(q)" and signed sums of those
        A bare rational r means r*ln(base) when a base is given, the number r otherwise
        """
        text = literal.strip()
        if not text:
            raise ValueError('Empty exact literal')
        total = cls()
        position = 0
        while position < len(text):
            match = _TERM_PATTERN.match(text, position)
            if not match or match.end() == position or not (match.group(2) or match.group(3)):
                raise ValueError(f'Malformed exact literal {literal!r} at position {position}')
            sign = -1 if match.group(1) == '-' else 1
            coefficient = Fraction(match.group(2)) if match.group(2) else Fraction(1)
            if match.group(3):
                term = cls.log(Fraction(match.group(3))) * coefficient
            elif base is not None:
                term = cls.log(base) * coefficient
            else:
                term = cls.rational(coefficient)
            total = total + term * sign
            position = match.end()
            if position < len(text) and text[position] not in '+-' and not text[position].isspace():
                raise ValueError(f'Malformed exact literal {literal!r} at position {position}')
        return total

    def coefficient(self, key: int) -> Fraction:
        for k, c in self.terms:
            if k == key:
                return c
        return Fraction(0)

    def as_dict(self) -> dict[int, Fraction]:
        return dict(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: 'ExactLog') -> 'ExactLog':
        merged = self.as_dict()
        for k, c in other.terms:
            merged[k] = merged.get(k, Fraction(0)) + c
        return ExactLog._from_dict(merged)

    def __neg__(self) -> 'ExactLog':
        return ExactLog(tuple((k, -c) for k, c in self.terms))

    def __sub__(self, other: 'ExactLog') -> 'ExactLog':
        return self + (-other)

    def __mul__(self, factor) -> 'ExactLog':
        r = _rational(factor)
        return ExactLog._from_dict({k: c * r for k, c in self.terms})

    __rmul__ = __mul__

    def __abs__(self) -> 'ExactLog':
        return -self if float(self) < 0 else self

    def __float__(self) -> float:
        return math.fsum(float(c) * (1.0 if k == UNIT else math.log(k)) for k, c in self.terms)

    def __lt__(self, other: 'ExactLog') -> bool:
        return float(self) < float(other)

    def ratio(self, other: 'ExactLog') -> Fraction | None:
        """self/other when it is rational, None otherwise"""
        if other.is_zero():
            raise ZeroDivisionError('Ratio against an exact zero')
        key, c = other.terms[0]
        r = self.coefficient(key) / c
        return r if other * r == self else None

    def exp_negated(self) -> str:
        """Literal for exp(-self)"""
        if self.coefficient(UNIT) == 0 and all(c.denominator == 1 for _, c in self.terms):
            value = Fraction(1)
            for prime, c in self.terms:
                value *= Fraction(prime) ** int(-c)
            return str(value)
        return f'exp(-({self}))'

    def __str__(self) -> str:
        if not self.terms:
            return '0'
        pieces = []
        for k, c in self.terms:
            magnitude = abs(c)
            if k == UNIT:
                body = str(magnitude)
            elif magnitude == 1:
                body = f'ln({k})'
            else:
                body = f'{magnitude}*ln({k})'
            pieces.append(('-' if c < 0 else '+', body))
        first_sign, first_body = pieces[0]
        text = ('-' if first_sign == '-' else '') + first_body
        for sign, body in pieces[1:]:
            text += f' {sign} {body}'
        return text

ZERO = ExactLog()
