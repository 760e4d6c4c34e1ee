"""Exact algebra of polynomial vector fields on R^n.

Coefficients are rationals held in ``sympy.Poly`` objects over QQ, so
brackets, divergences and homogeneity checks compare structurally.
Floating point appears only in ``evaluate``.
"""
import enum
import logging
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from sympy import QQ, Poly
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations
from sympy.utilities.lambdify import lambdify

from laboratory.exceptions import DimensionMismatchError, ExpressionParseError
from laboratory.expressions import coordinate_symbols

logger = logging.getLogger(__name__)

_POLY_TEXT = re.compile(r'^[\sx0-9+\-*/^()]*$')


class Degree(enum.Enum):
    """Homogeneity marker for the zero field, homogeneous of every degree."""

    ANY = 'any'


class Polynomial:
    """Multivariate polynomial with rational coefficients in x1..xn."""

    def __init__(self, n: int, terms: Optional[Mapping[Tuple[int, ...], Union[int, Fraction, sympy.Rational]]] = None):
        if n < 1:
            raise DimensionMismatchError("Polynomials need at least one variable.")
        self.n = n
        rep: Dict[Tuple[int, ...], sympy.Rational] = {}
        for exponents, coeff in (terms or {}).items():
            exponents = tuple(int(e) for e in exponents)
            if len(exponents) != n or any(e < 0 for e in exponents):
                raise DimensionMismatchError(f"Exponent vector {exponents} does not fit dimension {n}.")
            value = sympy.Rational(coeff.numerator, coeff.denominator) if isinstance(coeff, Fraction) else sympy.Rational(coeff)
            if value != 0:
                rep[exponents] = rep.get(exponents, sympy.Rational(0)) + value
        self._poly = Poly.from_dict(rep or {(0,) * n: 0}, *coordinate_symbols(n), domain=QQ)

    @classmethod
    def from_poly(cls, poly: Poly) -> "Polynomial":
        obj = cls.__new__(cls)
        obj.n = len(poly.gens)
        obj._poly = poly
        return obj

    @classmethod
    def from_expr(cls, expr, n: int) -> "Polynomial":
        gens = coordinate_symbols(n)
        expr = sympy.sympify(expr)
        if expr.free_symbols - set(gens):
            raise DimensionMismatchError(f"{expr} is not a polynomial in x1..x{n}.")
        try:
            return cls.from_poly(Poly(expr, *gens, domain=QQ))
        except sympy.PolynomialError as exc:
            raise ExpressionParseError(f"{expr} is not a polynomial: {exc}") from exc

    @classmethod
    def parse(cls, text: str, n: int) -> "Polynomial":
        """Parse the literal grammar: x1..xn, rationals, + - * ^ and integer powers."""
        if not isinstance(text, str) or not text.strip() or not _POLY_TEXT.match(text):
            raise ExpressionParseError(f"Invalid polynomial literal {text!r}.")
        gens = coordinate_symbols(n)
        indices = [int(i) for i in re.findall(r'x(\d+)', text)]
        if any(i < 1 or i > n for i in indices):
            raise ExpressionParseError(f"{text!r} uses a variable outside x1..x{n}.")
        if re.search(r'x(?!\d)', text):
            raise ExpressionParseError(f"Dangling variable name in {text!r}.")
        try:
            expr = parse_expr(
                text,
                local_dict={str(g): g for g in gens},
                transformations=standard_transformations + (convert_xor,),
            )
        except (SyntaxError, TypeError, ValueError, sympy.SympifyError) as exc:
            raise ExpressionParseError(f"Could not parse {text!r}: {exc}") from exc
        return cls.from_expr(expr, n)

    @classmethod
    def constant(cls, value, n: int) -> "Polynomial":
        return cls(n, {(0,) * n: Fraction(value)})

    @classmethod
    def variable(cls, index: int, n: int) -> "Polynomial":
        exponents = [0] * n
        exponents[index] = 1
        return cls(n, {tuple(exponents): 1})

    @property
    def poly(self) -> Poly:
        return self._poly

    @property
    def terms(self) -> Dict[Tuple[int, ...], Fraction]:
        return {
            monom: Fraction(int(coeff.p), int(coeff.q))
            for monom, coeff in self._poly.as_dict().items()
            if coeff != 0
        }

    def as_expr(self) -> sympy.Expr:
        return self._poly.as_expr()

    def is_zero(self) -> bool:
        return self._poly.is_zero

    def _check(self, other: "Polynomial") -> None:
        if not isinstance(other, Polynomial):
            raise TypeError(f"Expected a Polynomial, got {type(other).__name__}.")
        if other.n != self.n:
            raise DimensionMismatchError(f"Dimension {self.n} does not match {other.n}.")

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        return Polynomial.from_poly(self._poly + other._poly)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        return Polynomial.from_poly(self._poly - other._poly)

    def __mul__(self, other: Union["Polynomial", int, Fraction]) -> "Polynomial":
        if isinstance(other, (int, Fraction)):
            return Polynomial.from_poly(self._poly * sympy.Rational(other.numerator, other.denominator))
        self._check(other)
        return Polynomial.from_poly(self._poly * other._poly)

    __rmul__ = __mul__

    def __neg__(self) -> "Polynomial":
        return Polynomial.from_poly(-self._poly)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __hash__(self) -> int:
        return hash((self.n, tuple(sorted(self.terms.items()))))

    def __repr__(self) -> str:
        return f"Polynomial({self})"

    def __str__(self) -> str:
        return str(self.as_expr()).replace('**', '^')

    def diff(self, index: int) -> "Polynomial":
        if not 0 <= index < self.n:
            raise DimensionMismatchError(f"No variable x{index + 1} in dimension {self.n}.")
        return Polynomial.from_poly(self._poly.diff(self._poly.gens[index]))

    def weighted_degrees(self, weights: "DilationWeights") -> set:
        if len(weights) != self.n:
            raise DimensionMismatchError("Weights and polynomial differ in dimension.")
        return {sum(a * s for a, s in zip(monom, weights.sigma)) for monom in self.terms}

    @cached_property
    def _compiled(self):
        return lambdify(self._poly.gens, self.as_expr(), modules='numpy')

    def evaluate(self, points) -> np.ndarray:
        """Evaluate at one point or at rows of a ``(k, n)`` array."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.n:
            raise DimensionMismatchError(f"Expected points of dimension {self.n}, got {pts.shape[1]}.")
        values = np.broadcast_to(np.asarray(self._compiled(*pts.T), dtype=float), (pts.shape[0],))
        return float(values[0]) if single else values.copy()


@dataclass(frozen=True)
class DilationWeights:
    """Exponents of delta_lambda(x) = (lambda^sigma_1 x_1, ..., lambda^sigma_n x_n)."""

    sigma: Tuple[int, ...]

    def __post_init__(self):
        sigma = tuple(int(s) for s in self.sigma)
        object.__setattr__(self, 'sigma', sigma)
        if not sigma or sigma[0] != 1:
            raise DimensionMismatchError("Dilation weights must start with sigma_1 = 1.")
        if any(b < a for a, b in zip(sigma, sigma[1:])):
            raise DimensionMismatchError(f"Dilation weights {sigma} must be non-decreasing.")

    @classmethod
    def isotropic(cls, n: int) -> "DilationWeights":
        return cls((1,) * n)

    def __len__(self) -> int:
        return len(self.sigma)

    def dilate(self, points, lam: float) -> np.ndarray:
        return np.asarray(points, dtype=float) * np.power(float(lam), np.asarray(self.sigma, dtype=float))


class PolyVectorField:
    """X = sum_j a_j d/dx_j with polynomial coefficients a_j."""

    def __init__(self, coeffs: Sequence[Polynomial]):
        coeffs = tuple(coeffs)
        if not coeffs:
            raise DimensionMismatchError("A vector field needs at least one coefficient.")
        n = len(coeffs)
        for c in coeffs:
            if c.n != n:
                raise DimensionMismatchError(f"Coefficient {c} has dimension {c.n}, field has {n}.")
        self.coeffs: Tuple[Polynomial, ...] = coeffs

    @classmethod
    def parse(cls, texts: Sequence[str], n: Optional[int] = None) -> "PolyVectorField":
        n = len(texts) if n is None else n
        if len(texts) != n:
            raise DimensionMismatchError(f"Field literal has {len(texts)} coefficients, dimension is {n}.")
        return cls([Polynomial.parse(str(t), n) for t in texts])

    @classmethod
    def coordinate(cls, index: int, n: int) -> "PolyVectorField":
        """The constant field d/dx_{index+1}."""
        return cls([Polynomial.constant(1 if j == index else 0, n) for j in range(n)])

    @classmethod
    def zero(cls, n: int) -> "PolyVectorField":
        return cls([Polynomial.constant(0, n) for _ in range(n)])

    @property
    def n(self) -> int:
        return len(self.coeffs)

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.coeffs)

    def to_json(self) -> List[str]:
        return [str(c) for c in self.coeffs]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash(self.coeffs)

    def __neg__(self) -> "PolyVectorField":
        return PolyVectorField([-c for c in self.coeffs])

    def __add__(self, other: "PolyVectorField") -> "PolyVectorField":
        _same_dimension(self, other)
        return PolyVectorField([a + b for a, b in zip(self.coeffs, other.coeffs)])

    def __sub__(self, other: "PolyVectorField") -> "PolyVectorField":
        _same_dimension(self, other)
        return PolyVectorField([a - b for a, b in zip(self.coeffs, other.coeffs)])

    def __repr__(self) -> str:
        return f"PolyVectorField({self.to_json()})"

    def apply(self, p: Polynomial) -> Polynomial:
        return apply(self, p)

    def evaluate(self, points) -> np.ndarray:
        return evaluate(self, points)


def _same_dimension(X: PolyVectorField, Y) -> None:
    if Y.n != X.n:
        raise DimensionMismatchError(f"Dimension {X.n} does not match {Y.n}.")


def apply(X: PolyVectorField, p: Polynomial) -> Polynomial:
    """Directional derivative Xp = sum_j a_j dp/dx_j."""
    _same_dimension(X, p)
    result = Polynomial.constant(0, X.n)
    for j, a in enumerate(X.coeffs):
        if not a.is_zero():
            result = result + a * p.diff(j)
    return result


def lie_bracket(X: PolyVectorField, Y: PolyVectorField) -> PolyVectorField:
    """[X, Y] = XY - YX, coefficient-wise X(b_j) - Y(a_j)."""
    _same_dimension(X, Y)
    return PolyVectorField([apply(X, b) - apply(Y, a) for a, b in zip(X.coeffs, Y.coeffs)])


def divergence(X: PolyVectorField) -> Polynomial:
    result = Polynomial.constant(0, X.n)
    for j, a in enumerate(X.coeffs):
        result = result + a.diff(j)
    return result


def homogeneity_degree(X: PolyVectorField, weights: DilationWeights) -> Union[int, Degree, None]:
    """Degree d with X(f o delta_lambda) = lambda^d (Xf) o delta_lambda.

    Each nonzero a_j must be delta_lambda-homogeneous of weighted degree
    sigma_j - d. Returns ``Degree.ANY`` for the zero field and None when
    the slots disagree.
    """
    if len(weights) != X.n:
        raise DimensionMismatchError(f"Weights of length {len(weights)} for a field of dimension {X.n}.")
    candidates = set()
    for sigma_j, a in zip(weights.sigma, X.coeffs):
        if a.is_zero():
            continue
        degrees = a.weighted_degrees(weights)
        if len(degrees) != 1:
            return None
        candidates.add(sigma_j - degrees.pop())
    if not candidates:
        return Degree.ANY
    return candidates.pop() if len(candidates) == 1 else None


def evaluate(X: PolyVectorField, points) -> np.ndarray:
    """Coefficient vector X_x at one point, or an array ``(k, n)`` for rows of points."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != X.n:
        raise DimensionMismatchError(f"Expected points of dimension {X.n}, got {pts.shape[-1]}.")
    if pts.ndim == 1:
        return np.array([c.evaluate(pts) for c in X.coeffs])
    return np.stack([c.evaluate(pts) for c in X.coeffs], axis=1)
