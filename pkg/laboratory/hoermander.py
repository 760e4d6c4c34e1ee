"""Structural checks on Hoermander frames and polynomial group laws."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from scipy import linalg

from laboratory.conf import lab_setting
from laboratory.exceptions import DimensionMismatchError, GroupLawError
from laboratory.expressions import coordinate_symbols
from laboratory.fields import (
    Degree,
    DilationWeights,
    Polynomial,
    PolyVectorField,
    divergence,
    evaluate,
    homogeneity_degree,
    lie_bracket,
)

logger = logging.getLogger(__name__)

Word = Tuple[int, ...]


@dataclass(frozen=True)
class Frame:
    """Generators X_1..X_m on R^n with their dilation weights.

    Structurally invalid fields are accepted so that negative controls can be
    built; ``structure_report`` is what enforces homogeneity and divergence.
    """

    fields: Tuple[PolyVectorField, ...]
    weights: DilationWeights
    name: str = 'literal'

    def __post_init__(self):
        object.__setattr__(self, 'fields', tuple(self.fields))
        if not self.fields:
            raise DimensionMismatchError("A frame needs at least one vector field.")
        n = len(self.weights)
        for X in self.fields:
            if X.n != n:
                raise DimensionMismatchError(f"Field of dimension {X.n} in a frame of dimension {n}.")

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def m(self) -> int:
        return len(self.fields)

    def to_json(self) -> dict:
        return {
            'name': self.name,
            'n': self.n,
            'fields': [X.to_json() for X in self.fields],
            'weights': list(self.weights.sigma),
        }

    @cached_property
    def coefficient_matrix(self) -> Tuple[Tuple[Polynomial, ...], ...]:
        """a[i][k]: coefficient of d/dx_k in X_i."""
        return tuple(X.coeffs for X in self.fields)

    def evaluate(self, points) -> np.ndarray:
        """Evaluated coefficients, shape ``(k, m, n)`` for rows of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([evaluate(X, pts) for X in self.fields], axis=1)


@dataclass(frozen=True)
class LieBasisResult:
    elements: Tuple[Tuple[Word, PolyVectorField], ...]
    step: int

    def up_to(self, step: int) -> List[PolyVectorField]:
        return [X for word, X in self.elements if len(word) <= step]

    def words(self) -> List[Word]:
        return [word for word, _ in self.elements]


@dataclass(frozen=True)
class PrincipalMatrixResult:
    point: Tuple[float, ...]
    S: np.ndarray
    A: np.ndarray


@dataclass(frozen=True)
class HoermanderReport:
    satisfied: bool
    step: Optional[int]
    max_step: int
    points_checked: int
    rank_failures: Tuple[Tuple[Tuple[float, ...], int], ...] = ()


@dataclass(frozen=True)
class FieldStructure:
    index: int
    degree: Union[int, str, None]
    divergence: str
    divergence_free: bool


@dataclass(frozen=True)
class StructureReport:
    fields: Tuple[FieldStructure, ...]
    homogeneous_of_degree_one: bool
    divergence_free: bool

    @property
    def satisfied(self) -> bool:
        return self.homogeneous_of_degree_one and self.divergence_free


def generate_brackets(frame: Frame, max_step: int) -> LieBasisResult:
    """Generators and left-nested brackets [[X_a, X_b], X_c]... up to ``max_step``.

    Zero brackets and brackets equal to +/- an earlier element are dropped.
    """
    if max_step < 1:
        raise ValueError("max_step must be at least 1.")

    elements: List[Tuple[Word, PolyVectorField]] = []
    seen = set()

    def keep(word: Word, X: PolyVectorField) -> bool:
        if X.is_zero() or X in seen or -X in seen:
            return False
        seen.add(X)
        elements.append((word, X))
        return True

    layer = []
    for i, X in enumerate(frame.fields):
        if keep((i,), X):
            layer.append(((i,), X))

    for _ in range(2, max_step + 1):
        next_layer = []
        for word, Z in layer:
            for i, X in enumerate(frame.fields):
                bracket = lie_bracket(Z, X)
                if keep(word + (i,), bracket):
                    next_layer.append((word + (i,), bracket))
        if not next_layer:
            break
        layer = next_layer

    logger.debug(f"Generated {len(elements)} bracket fields up to step {max_step} for frame {frame.name}")
    return LieBasisResult(elements=tuple(elements), step=max_step)


def rank_at(fields: Sequence[PolyVectorField], x, tolerance: Optional[float] = None) -> int:
    """Dimension of span{Z_x}, by column-pivoted QR.

    A pivot counts as zero below ``tolerance`` times the largest entry.
    """
    if not fields:
        return 0
    tolerance = lab_setting('RANK_TOLERANCE') if tolerance is None else tolerance
    matrix = np.column_stack([evaluate(Z, x) for Z in fields])
    scale = np.abs(matrix).max()
    if scale == 0.0:
        return 0
    _, R, _ = linalg.qr(matrix, mode='economic', pivoting=True)
    pivots = np.abs(np.diag(R))
    return int(np.count_nonzero(pivots > tolerance * scale))


def _with_origin(points, n: int) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, n)
    if not np.any(np.all(pts == 0.0, axis=1)):
        pts = np.vstack([np.zeros(n), pts])
    return pts


def check_hoermander(
    frame: Frame,
    points,
    max_step: Optional[int] = None,
    threads: Optional[int] = None,
    tolerance: Optional[float] = None,
) -> HoermanderReport:
    """Smallest step s <= max_step whose brackets span R^n at every point.

    The origin is always among the checked points.
    """
    max_step = frame.n if max_step is None else max_step
    threads = lab_setting('THREADS') if threads is None else threads
    pts = _with_origin(points, frame.n)
    basis = generate_brackets(frame, max_step)

    failures: List[Tuple[Tuple[float, ...], int]] = []
    for step in range(1, max_step + 1):
        fields = basis.up_to(step)
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            ranks = list(pool.map(lambda x: rank_at(fields, x, tolerance), pts))
        failures = [(tuple(map(float, x)), r) for x, r in zip(pts, ranks) if r < frame.n]
        if not failures:
            logger.info(f"Frame {frame.name} is Hoermander of step {step} on {len(pts)} points")
            return HoermanderReport(True, step, max_step, len(pts))

    for x, r in failures[:5]:
        logger.warning(f"Frame {frame.name}: rank {r} < {frame.n} at {list(x)} with step {max_step}")
    return HoermanderReport(False, None, max_step, len(pts), tuple(failures))


def principal_matrix(frame: Frame, x) -> PrincipalMatrixResult:
    """S(x) has column i = X_i(x); A(x) = S S^T."""
    x = np.asarray(x, dtype=float)
    S = np.column_stack([evaluate(X, x) for X in frame.fields])
    return PrincipalMatrixResult(point=tuple(map(float, x)), S=S, A=S @ S.T)


def check_ntd(frame: Frame, points) -> bool:
    """Non-totally-degenerate: A(x) is not the zero matrix at any point."""
    coeffs = frame.evaluate(points)
    return bool(np.all(np.abs(coeffs).reshape(coeffs.shape[0], -1).max(axis=1) > 0.0))


def structure_report(frame: Frame) -> StructureReport:
    """Per-field homogeneity degree and divergence under the frame weights."""
    entries = []
    for i, X in enumerate(frame.fields):
        degree = homogeneity_degree(X, frame.weights)
        div = divergence(X)
        entries.append(FieldStructure(
            index=i,
            degree=degree.value if isinstance(degree, Degree) else degree,
            divergence=str(div),
            divergence_free=div.is_zero(),
        ))
    return StructureReport(
        fields=tuple(entries),
        homogeneous_of_degree_one=all(e.degree == 1 for e in entries),
        divergence_free=all(e.divergence_free for e in entries),
    )


@dataclass(frozen=True)
class GroupLaw:
    """(x, y) -> x * y given by n polynomials in the 2n variables (x, y)."""

    n: int
    product: Tuple[Polynomial, ...] = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'product', tuple(self.product))
        if len(self.product) != self.n:
            raise DimensionMismatchError(f"Group law has {len(self.product)} components, expected {self.n}.")
        for p in self.product:
            if p.n != 2 * self.n:
                raise DimensionMismatchError("Group law components must be polynomials in 2n variables.")

    @cached_property
    def _symbols(self):
        gens = coordinate_symbols(2 * self.n)
        return gens[:self.n], gens[self.n:]

    def _substitute(self, p: Polynomial, zero_left: bool) -> Polynomial:
        """Set x = 0 (or y = 0) and express the result in the remaining n variables."""
        xs, ys = self._symbols
        keep, drop = (ys, xs) if zero_left else (xs, ys)
        expr = p.as_expr().subs({s: 0 for s in drop})
        expr = expr.subs(dict(zip(keep, coordinate_symbols(self.n))), simultaneous=True)
        return Polynomial.from_expr(expr, self.n)

    def verify_neutral(self) -> None:
        for k, p in enumerate(self.product):
            coordinate = Polynomial.variable(k, self.n)
            if self._substitute(p, zero_left=False) != coordinate:
                raise GroupLawError(f"x * 0 != x in component {k + 1}.")
            if self._substitute(p, zero_left=True) != coordinate:
                raise GroupLawError(f"0 * y != y in component {k + 1}.")

    def multiply(self, a, b) -> np.ndarray:
        point = np.concatenate([np.asarray(a, dtype=float), np.asarray(b, dtype=float)])
        return np.array([p.evaluate(point) for p in self.product])

    def left_translation_jacobian(self, a, x) -> np.ndarray:
        """Jacobian of y -> a * y at y = x, entry [k, l] = d(a*y)_k / dy_l."""
        point = np.concatenate([np.asarray(a, dtype=float), np.asarray(x, dtype=float)])
        return np.array([[p.diff(self.n + l).evaluate(point) for l in range(self.n)] for p in self.product])


def jacobian_basis(law: GroupLaw) -> List[PolyVectorField]:
    """J_i: the i-th column of the Jacobian of y -> x * y at y = 0."""
    law.verify_neutral()
    basis = []
    for i in range(law.n):
        column = [law._substitute(p.diff(law.n + i), zero_left=False) for p in law.product]
        basis.append(PolyVectorField(column))
    return basis


def horizontal_frame(law: GroupLaw, weights: DilationWeights, name: str = 'horizontal') -> Frame:
    """Frame of the Jacobian-basis fields lying in the first layer (sigma_i = 1)."""
    if len(weights) != law.n:
        raise DimensionMismatchError("Weights and group law differ in dimension.")
    basis = jacobian_basis(law)
    layer = [J for J, sigma in zip(basis, weights.sigma) if sigma == 1]
    return Frame(fields=tuple(layer), weights=weights, name=name)


def is_carnot(law: GroupLaw, weights: DilationWeights, points, max_step: Optional[int] = None) -> bool:
    """The first layer Lie-generates the whole algebra at the sampled points."""
    frame = horizontal_frame(law, weights)
    if not structure_report(frame).satisfied:
        return False
    return check_hoermander(frame, points, max_step=max_step).satisfied


def principal_symbol(frame: Frame) -> sympy.Matrix:
    """Symbolic A(x) = S(x) S(x)^T."""
    S = sympy.Matrix([[a.as_expr() for a in X.coeffs] for X in frame.fields]).T
    return (S * S.T).applyfunc(sympy.expand)
