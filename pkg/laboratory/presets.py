"""Built-in frames, norms, potentials and drifts.

Presets are addressed by name: ``heisenberg:<m>`` or ``grushin``.
"""
import logging
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Tuple

import sympy

from laboratory.enum import PotentialFamily
from laboratory.exceptions import ExpressionParseError, PreconditionError
from laboratory.expressions import ScalarExpr
from laboratory.fields import DilationWeights, Polynomial, PolyVectorField
from laboratory.geometry import ExhaustionNorm, apply_field, grushin_norm, kaplan_norm
from laboratory.hoermander import Frame, GroupLaw, horizontal_frame

logger = logging.getLogger(__name__)

T = sympy.Symbol('t', positive=True)

_PRESET = re.compile(r'^(?:heisenberg:(?P<m>\d+)|(?P<grushin>grushin))$')


@dataclass(frozen=True)
class Preset:
    name: str
    frame: Frame
    norm: ExhaustionNorm
    m: int = 0

    @property
    def is_heisenberg(self) -> bool:
        return self.m > 0

    @property
    def homogeneous_dimension(self) -> int:
        return sum(self.frame.weights.sigma)


def heisenberg_weights(m: int) -> DilationWeights:
    return DilationWeights((1,) * (2 * m) + (2,))


def heisenberg_group_law(m: int) -> GroupLaw:
    """(x, y, t) * (x', y', t') = (x + x', y + y', t + t' + 1/2 sum(x'_i y_i - x_i y'_i))."""
    n = 2 * m + 1
    components = []
    for k in range(n):
        terms = {}
        left = [0] * (2 * n)
        right = [0] * (2 * n)
        left[k] = 1
        right[n + k] = 1
        terms[tuple(left)] = 1
        terms[tuple(right)] = 1
        if k == n - 1:
            for i in range(m):
                # x'_i y_i
                e = [0] * (2 * n)
                e[n + i] = 1
                e[m + i] = 1
                terms[tuple(e)] = Fraction(1, 2)
                # -x_i y'_i
                e = [0] * (2 * n)
                e[i] = 1
                e[n + m + i] = 1
                terms[tuple(e)] = Fraction(-1, 2)
        components.append(Polynomial(2 * n, terms))
    return GroupLaw(n=n, product=tuple(components))


def heisenberg_frame(m: int) -> Frame:
    """X_i = d/dx_i + (y_i/2) d/dt, Y_i = d/dy_i - (x_i/2) d/dt from the group law."""
    if m < 1:
        raise PreconditionError("The Heisenberg group H^m needs m >= 1.")
    return horizontal_frame(heisenberg_group_law(m), heisenberg_weights(m), name=f'heisenberg:{m}')


def grushin_frame() -> Frame:
    """X_1 = d/dx1, X_2 = x1 d/dx2."""
    return Frame(
        fields=(
            PolyVectorField.coordinate(0, 2),
            PolyVectorField([Polynomial.constant(0, 2), Polynomial.variable(0, 2)]),
        ),
        weights=DilationWeights((1, 2)),
        name='grushin',
    )


def resolve_preset(name: str, c: float = 1.0) -> Preset:
    match = _PRESET.match(str(name).strip().lower())
    if not match:
        raise ExpressionParseError(f"Unknown preset {name!r}; use 'heisenberg:<m>' or 'grushin'.")
    if match.group('grushin'):
        return Preset(name='grushin', frame=grushin_frame(), norm=grushin_norm())
    m = int(match.group('m'))
    return Preset(name=f'heisenberg:{m}', frame=heisenberg_frame(m), norm=kaplan_norm(m, c), m=m)


def _gradient_surrogate(preset: Preset, alpha) -> Tuple[sympy.Expr, sympy.Expr]:
    """Smooth stand-in for |grad_X N|^2 N^-alpha and the constant c with Q >= c |grad_X N|^2 N^-alpha on N >= 1."""
    z = preset.norm.expr.variables
    if preset.is_heisenberg:
        rho2 = sum(v ** 2 for v in z[:-1])
        n4 = rho2 ** 2 + 16 * z[-1] ** 2
        shift = 2
        numerator = rho2
    else:
        x1, x2 = z
        n4 = x1 ** 4 + x2 ** 2
        shift = 6
        numerator = x1 ** 2 * (4 * x1 ** 4 + x2 ** 2) / 4
    exponent = -(alpha + shift) / 4
    return numerator * (1 + n4) ** exponent, sympy.Integer(2) ** exponent


def _norm_fourth(preset: Preset) -> sympy.Expr:
    z = preset.norm.expr.variables
    if preset.is_heisenberg:
        return sum(v ** 2 for v in z[:-1]) ** 2 + 16 * z[-1] ** 2
    return z[0] ** 4 + z[1] ** 2


def potential(preset: Preset, family: str, alpha: float) -> Tuple[ScalarExpr, ScalarExpr]:
    """Q and the matching profile q_hat(t) = c t^-alpha for a potential family.

    gradient: rho^2 (1 + N^4)^(-(alpha+2)/4) on H^m (the analogue on Grushin),
    plain: (1 + N^4)^(-alpha/4), drift-example: the sum of both.
    The Kaplan constant c_m must be 1 for the gradient surrogate to match.
    """
    alpha = sympy.nsimplify(alpha, rational=True)
    family = PotentialFamily(family)
    z = preset.norm.expr.variables
    gradient, c_gradient = _gradient_surrogate(preset, alpha)
    plain = (1 + _norm_fourth(preset)) ** (-alpha / 4)
    if family == PotentialFamily.GRADIENT:
        Q, c = gradient, c_gradient
    elif family == PotentialFamily.PLAIN:
        # (1 + N^4)^(-alpha/4) >= 2^(-alpha/4) N^-alpha on N >= 1, and |grad_X N| <= 1 for the presets
        Q, c = plain, sympy.Integer(2) ** (-alpha / 4)
    else:
        Q, c = plain + gradient, c_gradient
    return ScalarExpr(Q, z), ScalarExpr(c * T ** (-alpha), (T,))


def smoothstep(s: sympy.Expr) -> sympy.Expr:
    """C^2 transition: 0 for s <= 0, 1 for s >= 1, s^3 (10 - 15 s + 6 s^2) between."""
    return sympy.Piecewise(
        (0, s <= 0),
        (s ** 3 * (10 - 15 * s + 6 * s ** 2), s < 1),
        (1, True),
    )


def drift(preset: Preset, kind: str, beta: float = 0.0) -> Tuple[ScalarExpr, ...]:
    """b = 0 (``none``) or b_beta = chi(N) N^-beta grad_X N (``radial-cutoff``).

    chi vanishes on {N <= 1} and equals 1 on {N >= 2}.
    """
    z = preset.norm.expr.variables
    if kind == 'none':
        return tuple(ScalarExpr.constant(0, len(z)) for _ in range(preset.frame.m))
    if kind != 'radial-cutoff':
        raise ExpressionParseError(f"Unknown drift kind {kind!r}.")
    beta = sympy.nsimplify(beta, rational=True)
    N = preset.norm.expr.expr
    cutoff = smoothstep(N - 1)
    return tuple(
        ScalarExpr(cutoff * N ** (-beta) * apply_field(X, preset.norm.expr).expr, z)
        for X in preset.frame.fields
    )


def literal_frame(fields, weights, n=None) -> Frame:
    """Frame from JSON literals: lists of coefficient strings and a weight vector."""
    n = len(weights) if n is None else n
    return Frame(
        fields=tuple(PolyVectorField.parse(list(f), n) for f in fields),
        weights=DilationWeights(tuple(weights)),
    )


def literal_norm(expression: str, weights, unit_box, name: str = 'literal') -> ExhaustionNorm:
    n = len(weights)
    return ExhaustionNorm(
        expr=ScalarExpr.parse(expression, n),
        weights=DilationWeights(tuple(weights)),
        unit_box=tuple(float(v) for v in unit_box),
        singular_points=((0.0,) * n,),
        name=name,
    )