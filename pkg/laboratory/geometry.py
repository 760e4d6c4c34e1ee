"""Exhaustion norms, horizontal calculus and the geometric factor S(r).

S(r) is obtained from the coarea identity

    S(r) = d/dr F(r),   F(r) = integral over {N < r} of |grad_X N|^2 dx,

with F estimated by quasi Monte Carlo over the bounding box of {N < r}.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
import sympy
from scipy.stats import qmc

from laboratory.conf import lab_setting
from laboratory.exceptions import DimensionMismatchError, FitError, MonteCarloError
from laboratory.expressions import ScalarExpr, coordinate_symbols
from laboratory.fields import DilationWeights, PolyVectorField
from laboratory.hoermander import Frame

logger = logging.getLogger(__name__)

_CHUNK = 1 << 16


@dataclass(frozen=True)
class ExhaustionNorm:
    """N(x) >= 0 with compact sublevels; ``unit_box`` bounds {N < 1} axis by axis.

    For a delta_lambda-homogeneous norm {N < r} lies in the box with
    half-widths unit_box[i] * r^sigma_i.
    """

    expr: ScalarExpr
    weights: DilationWeights
    unit_box: Tuple[float, ...]
    singular_set_hint: str = ''
    singular_points: Tuple[Tuple[float, ...], ...] = ()
    name: str = 'literal'

    def __post_init__(self):
        if self.expr.n != len(self.weights) or len(self.unit_box) != len(self.weights):
            raise DimensionMismatchError("Norm expression, weights and unit box must share a dimension.")

    @property
    def n(self) -> int:
        return len(self.weights)

    def __call__(self, points, strict: bool = True):
        return self.expr.evaluate(points, strict=strict)

    def half_widths(self, r: float) -> np.ndarray:
        return np.asarray(self.unit_box, dtype=float) * np.power(float(r), np.asarray(self.weights.sigma, dtype=float))

    def to_json(self) -> dict:
        return {
            'name': self.name,
            'expression': str(self.expr),
            'weights': list(self.weights.sigma),
            'unit_box': list(self.unit_box),
            'singular_set_hint': self.singular_set_hint,
        }


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    samples: int
    replicates: int

    @property
    def relative_error(self) -> float:
        return self.stderr / abs(self.value) if self.value else math.inf


@dataclass(frozen=True)
class SurfaceFactorEstimate:
    radii: Tuple[float, ...]
    values: Tuple[float, ...]
    stderrs: Tuple[float, ...]
    exponent: Optional[float] = None
    log_constant: Optional[float] = None
    carnot_prediction: Optional[Tuple[float, ...]] = field(default=None)

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise FitError("Radii must be strictly increasing.")
        if any(v < 0 for v in self.values):
            raise FitError("Surface factor estimates must be non-negative.")


def kaplan_norm(m: int, c: float = 1.0) -> ExhaustionNorm:
    """N(x, y, t) = c((|x|^2 + |y|^2)^2 + 16 t^2)^(1/4) on H^m, weights (1, ..., 1, 2)."""
    if m < 1:
        raise DimensionMismatchError("The Heisenberg group H^m needs m >= 1.")
    n = 2 * m + 1
    z = coordinate_symbols(n)
    rho2 = sum(v ** 2 for v in z[:-1])
    c_exact = sympy.nsimplify(c, rational=True)
    expr = c_exact * (rho2 ** 2 + 16 * z[-1] ** 2) ** sympy.Rational(1, 4)
    half = 1.0 / float(c)
    return ExhaustionNorm(
        expr=ScalarExpr(expr, z),
        weights=DilationWeights((1,) * (2 * m) + (2,)),
        unit_box=(half,) * (2 * m) + (half ** 2 / 4.0,),
        singular_set_hint='grad N vanishes on the t-axis; N is not smooth at the origin',
        singular_points=((0.0,) * n,),
        name=f'kaplan:{m}',
    )


def grushin_norm() -> ExhaustionNorm:
    """N(x) = (x1^4 + x2^2)^(1/4), weights (1, 2)."""
    x1, x2 = coordinate_symbols(2)
    return ExhaustionNorm(
        expr=ScalarExpr((x1 ** 4 + x2 ** 2) ** sympy.Rational(1, 4), (x1, x2)),
        weights=DilationWeights((1, 2)),
        unit_box=(1.0, 1.0),
        singular_set_hint='grad_X N vanishes on {x1 = 0}; N is not smooth at the origin',
        singular_points=((0.0, 0.0),),
        name='grushin',
    )


def homogeneous_dimension(weights: DilationWeights) -> int:
    return int(sum(weights.sigma))


def apply_field(X: PolyVectorField, u: ScalarExpr) -> ScalarExpr:
    """X u = sum_k a_k du/dx_k, symbolically."""
    if X.n != u.n:
        raise DimensionMismatchError(f"Field of dimension {X.n} applied to an expression in {u.n} variables.")
    expr = sum(
        (a.as_expr() * sympy.diff(u.expr, v) for a, v in zip(X.coeffs, u.variables) if not a.is_zero()),
        sympy.Integer(0),
    )
    return ScalarExpr(expr, u.variables)


@lru_cache(maxsize=256)
def horizontal_gradient_exprs(frame: Frame, u: ScalarExpr) -> Tuple[ScalarExpr, ...]:
    return tuple(apply_field(X, u) for X in frame.fields)


@lru_cache(maxsize=256)
def gradient_norm_squared(frame: Frame, u: ScalarExpr) -> ScalarExpr:
    """|grad_X u|^2 as a single expression."""
    parts = horizontal_gradient_exprs(frame, u)
    return ScalarExpr(sum((p.expr ** 2 for p in parts), sympy.Integer(0)), u.variables)


def horizontal_gradient(frame: Frame, u: ScalarExpr, x) -> np.ndarray:
    """(X_1 u, ..., X_m u) at x; rows of points give shape ``(k, m)``."""
    values = [g.evaluate(x) for g in horizontal_gradient_exprs(frame, u)]
    return np.array(values) if np.ndim(values[0]) == 0 else np.stack(values, axis=1)


def horizontal_divergence_expr(frame: Frame, F: Sequence[ScalarExpr]) -> ScalarExpr:
    if len(F) != frame.m:
        raise DimensionMismatchError(f"div_X needs {frame.m} components, got {len(F)}.")
    expr = sum((apply_field(X, Fi).expr for X, Fi in zip(frame.fields, F)), sympy.Integer(0))
    return ScalarExpr(expr, F[0].variables)


def horizontal_divergence(frame: Frame, F: Sequence[ScalarExpr], x):
    """div_X F = sum_i X_i F_i at x."""
    return horizontal_divergence_expr(frame, F).evaluate(x)


def sublaplacian_expr(frame: Frame, u: ScalarExpr) -> ScalarExpr:
    """sum_i X_i^2 u = div_X(grad_X u)."""
    return horizontal_divergence_expr(frame, horizontal_gradient_exprs(frame, u))


def radial_power_sublaplacian(norm: ExhaustionNorm, grad_squared: ScalarExpr, p: float, D: int) -> ScalarExpr:
    """Closed form p(p + D - 2) N^(p-2) |grad_X N|^2 of the sub-Laplacian of N^p.

    Valid for norms whose power N^(2-D) is a fundamental solution, i.e. the
    Kaplan norm on H^m.
    """
    p = sympy.nsimplify(p, rational=True)
    expr = p * (p + D - 2) * norm.expr.expr ** (p - 2) * grad_squared.expr
    return ScalarExpr(expr, norm.expr.variables)


def _replicate_seeds(seed: int, replicates: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(replicates)


def _box_integral(
    norm: ExhaustionNorm,
    weight: ScalarExpr,
    half_widths: np.ndarray,
    samples: int,
    seed: np.random.SeedSequence,
    indicator,
) -> float:
    """Scrambled Halton estimate of the integral of weight * indicator(N) over the box."""
    sampler = qmc.Halton(d=norm.n, scramble=True, seed=np.random.default_rng(seed))
    volume = float(np.prod(2.0 * half_widths))
    total = 0.0
    remaining = samples
    while remaining > 0:
        size = min(_CHUNK, remaining)
        pts = (2.0 * sampler.random(size) - 1.0) * half_widths
        values = norm(pts, strict=False)
        mask = indicator(values)
        if mask.any():
            w = weight.evaluate(pts[mask], strict=False)
            total += float(np.nansum(np.where(np.isfinite(w), w, 0.0)))
        remaining -= size
    return volume * total / samples


def _replicated(
    norm: ExhaustionNorm,
    weight: ScalarExpr,
    half_widths: np.ndarray,
    samples: int,
    replicates: int,
    seed: int,
    threads: int,
    indicator,
) -> Estimate:
    if samples < 1000:
        raise MonteCarloError(f"At least 1000 samples are required, got {samples}.")
    if replicates < 2:
        raise MonteCarloError("At least two replicates are required for an error bar.")
    per_replicate = max(1, samples // replicates)
    seeds = _replicate_seeds(seed, replicates)

    def run(s):
        return _box_integral(norm, weight, half_widths, per_replicate, s, indicator)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        estimates = np.array(list(pool.map(run, seeds)))
    logger.debug(f"Monte Carlo replicates finished: {estimates.tolist()}")
    return Estimate(
        value=float(estimates.mean()),
        stderr=float(estimates.std(ddof=1) / math.sqrt(replicates)),
        samples=per_replicate * replicates,
        replicates=replicates,
    )


def volume_functional(
    frame: Frame,
    norm: ExhaustionNorm,
    r: float,
    samples: Optional[int] = None,
    replicates: Optional[int] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> Estimate:
    """F(r): integral of |grad_X N|^2 over {N < r}.

    Points where the integrand is not finite (the singular set of N)
    contribute 0.
    """
    if r <= 0:
        raise ValueError("r must be positive.")
    return _replicated(
        norm,
        gradient_norm_squared(frame, norm.expr),
        norm.half_widths(r),
        lab_setting('MC_SAMPLES') if samples is None else samples,
        lab_setting('MC_REPLICATES') if replicates is None else replicates,
        lab_setting('SEED') if seed is None else seed,
        lab_setting('THREADS') if threads is None else threads,
        lambda values: values < r,
    )


def surface_factor(
    frame: Frame,
    norm: ExhaustionNorm,
    r: float,
    delta: Optional[float] = None,
    samples: Optional[int] = None,
    replicates: Optional[int] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    max_relative_error: Optional[float] = None,
) -> Estimate:
    """S(r) ~ (F(r + delta) - F(r - delta)) / (2 delta), from common samples in the shell."""
    if r <= 0:
        raise ValueError("r must be positive.")
    delta = r / 50.0 if delta is None else delta
    if not 0 < delta < r:
        raise ValueError("delta must lie in (0, r).")
    max_relative_error = lab_setting('MC_MAX_RELATIVE_ERROR') if max_relative_error is None else max_relative_error

    shell = _replicated(
        norm,
        gradient_norm_squared(frame, norm.expr),
        norm.half_widths(r + delta),
        lab_setting('MC_SAMPLES') if samples is None else samples,
        lab_setting('MC_REPLICATES') if replicates is None else replicates,
        lab_setting('SEED') if seed is None else seed,
        lab_setting('THREADS') if threads is None else threads,
        lambda values: (values > r - delta) & (values < r + delta),
    )
    estimate = Estimate(
        value=max(shell.value, 0.0) / (2.0 * delta),
        stderr=shell.stderr / (2.0 * delta),
        samples=shell.samples,
        replicates=shell.replicates,
    )
    if estimate.relative_error > max_relative_error:
        raise MonteCarloError(
            f"S({r}) = {estimate.value:.6g} +/- {estimate.stderr:.3g} exceeds the relative error "
            f"threshold {max_relative_error}.",
            estimate=estimate.value,
            stderr=estimate.stderr,
        )
    return estimate


def power_law_fit(radii: Sequence[float], values: Sequence[float]) -> Tuple[float, float]:
    """Least squares fit of log S = log c + p log r; returns (p, log c)."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if radii.size < 4:
        raise FitError(f"A power-law fit needs at least 4 radii, got {radii.size}.")
    if radii.min() <= 0 or radii.max() / radii.min() < 2.0:
        raise FitError("Radii must be positive and span at least one octave.")
    if np.any(values <= 0):
        raise FitError("Power-law fit needs positive surface factor values.")
    exponent, log_constant = np.polyfit(np.log(radii), np.log(values), 1)
    return float(exponent), float(log_constant)


def surface_factor_scan(
    frame: Frame,
    norm: ExhaustionNorm,
    radii: Sequence[float],
    samples: Optional[int] = None,
    replicates: Optional[int] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    delta_ratio: float = 0.02,
    max_relative_error: Optional[float] = None,
    carnot: bool = False,
) -> SurfaceFactorEstimate:
    """S(r) on a list of radii plus the power-law fit.

    With ``carnot`` set, also reports D * F(1) * r^(D-1), the exact relation
    for delta_lambda-homogeneous norms on Carnot groups.
    """
    radii = sorted(float(r) for r in radii)
    seed = lab_setting('SEED') if seed is None else seed
    estimates = []
    for k, r in enumerate(radii):
        estimates.append(surface_factor(
            frame, norm, r,
            delta=delta_ratio * r,
            samples=samples, replicates=replicates, seed=seed + k,
            threads=threads, max_relative_error=max_relative_error,
        ))
        logger.info(f"S({r}) = {estimates[-1].value:.6g} +/- {estimates[-1].stderr:.3g}")

    values = [e.value for e in estimates]
    exponent = log_constant = None
    if len(radii) >= 4:
        exponent, log_constant = power_law_fit(radii, values)

    prediction = None
    if carnot:
        D = homogeneous_dimension(norm.weights)
        F1 = volume_functional(frame, norm, 1.0, samples=samples, replicates=replicates, seed=seed, threads=threads)
        prediction = tuple(D * F1.value * r ** (D - 1) for r in radii)

    return SurfaceFactorEstimate(
        radii=tuple(radii),
        values=tuple(values),
        stderrs=tuple(e.stderr for e in estimates),
        exponent=exponent,
        log_constant=log_constant,
        carnot_prediction=prediction,
    )
