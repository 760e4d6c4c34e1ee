"""Sampled verification of the Liouville criterion for L = sum X_i^2 + sum b_i X_i - Q.

The criterion asks for
  (S)  Q >= 0, Q not identically 0;
  (G)  far from the origin (N > rho0)
           Q >= |grad_X N|^2 q_hat(N),
           |b|^2 + (div_X b)_- <= kappa |grad_X N|^2 (int_rho0^N sqrt(q_hat))^2 q_hat(N),
       and near it (N <= rho0)  |b|^2 + (div_X b)_- <= kappa Q;
and the divergence of
       int_rho0^infty  exp{Lambda (int_rho0^r sqrt(q_hat))^2} / S(r) dr.

Sampling never proves an inequality; the reports carry the worst witness.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import sympy
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.special import logsumexp
from scipy.stats import qmc

from laboratory.conf import lab_setting
from laboratory.enum import IntegralVerdict, Overall
from laboratory.exceptions import DimensionMismatchError, PreconditionError, QuadratureError
from laboratory.expressions import ScalarExpr
from laboratory.geometry import (
    ExhaustionNorm,
    SurfaceFactorEstimate,
    gradient_norm_squared,
    horizontal_divergence_expr,
    power_law_fit,
)
from laboratory.hoermander import Frame

logger = logging.getLogger(__name__)

POSITIVITY_TOLERANCE = 1e-12
RELATIVE_TOLERANCE = 1e-9
BLOW_UP_SLOPE = 0.05
GRID_PER_OCTAVE = 32
TAIL_OCTAVES = 10
DECAY_RATIO = 0.75
TAIL_EPSILON = 0.5


@dataclass(frozen=True)
class OperatorSpec:
    """Frame X, drift b = (b_1..b_m) and potential Q of the operator L."""

    frame: Frame
    drift: Tuple[ScalarExpr, ...]
    potential: ScalarExpr

    def __post_init__(self):
        object.__setattr__(self, 'drift', tuple(self.drift))
        if len(self.drift) != self.frame.m:
            raise DimensionMismatchError(f"Drift has {len(self.drift)} components for {self.frame.m} fields.")
        for expr in self.drift + (self.potential,):
            if expr.n != self.frame.n:
                raise DimensionMismatchError("Drift and potential must be expressions in x1..xn.")

    @classmethod
    def without_drift(cls, frame: Frame, potential: ScalarExpr) -> "OperatorSpec":
        return cls(frame, tuple(ScalarExpr.constant(0, frame.n) for _ in range(frame.m)), potential)

    @cached_property
    def has_drift(self) -> bool:
        return not all(b.is_zero() for b in self.drift)

    @cached_property
    def drift_norm_squared(self) -> ScalarExpr:
        return ScalarExpr(sum((b.expr ** 2 for b in self.drift), sympy.Integer(0)), self.potential.variables)

    @cached_property
    def drift_divergence(self) -> ScalarExpr:
        return horizontal_divergence_expr(self.frame, self.drift)

    def drift_defect(self, points) -> np.ndarray:
        """|b|^2 + (div_X b)_- at each row of ``points``."""
        pts = np.atleast_2d(points)
        if not self.has_drift:
            return np.zeros(pts.shape[0])
        div = self.drift_divergence.evaluate(pts)
        return self.drift_norm_squared.evaluate(pts) + np.maximum(-div, 0.0)


@dataclass(frozen=True)
class CriterionConfig:
    norm: ExhaustionNorm
    rho0: float
    q_hat: ScalarExpr
    kappa: float
    lam: float
    r_max_octaves: int = 10

    def __post_init__(self):
        if self.rho0 <= 0:
            raise PreconditionError("rho0 must be positive.")
        if self.kappa <= 0 or self.lam <= 0:
            raise PreconditionError("kappa and Lambda must be positive.")
        if self.q_hat.n != 1:
            raise DimensionMismatchError("q_hat must be a function of one variable t.")
        radii = self.rho0 * np.power(2.0, np.linspace(0.0, self.r_max_octaves, 64))[1:]
        values = self.q_hat.evaluate(radii[:, None])
        if np.any(values < -POSITIVITY_TOLERANCE):
            raise PreconditionError("q_hat must be non-negative on (rho0, infinity).")
        if not np.any(values > POSITIVITY_TOLERANCE):
            raise PreconditionError("q_hat must not vanish identically.")

    @property
    def r_max(self) -> float:
        return self.rho0 * 2.0 ** self.r_max_octaves


@dataclass(frozen=True)
class SamplingPlan:
    near_samples: int = 2000
    far_samples_per_octave: int = 500
    seed: int = 20240229
    singular_radius: float = 1e-6


@dataclass(frozen=True)
class PowerLawSurface:
    """S(r) = constant * r^exponent."""

    constant: float
    exponent: float


@dataclass(frozen=True)
class SCheck:
    passed: bool
    min_value: float
    max_value: float
    points: int
    witness: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class FarCheck:
    passed: bool
    potential_ok: bool
    kappa_estimate: float
    inner_octave_kappa: float
    octave_kappas: Tuple[float, ...]
    growth_slope: Optional[float]
    blow_up: bool
    points: int
    r_max: float
    potential_witness: Optional[Tuple[float, ...]] = None
    kappa_witness: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class NearCheck:
    passed: bool
    kappa_estimate: float
    points: int
    witness: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class IntegralReport:
    verdict: str
    method: str
    diagnostics: Dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class CriterionReport:
    S: SCheck
    G_far: FarCheck
    G_near: NearCheck
    integral: IntegralReport
    overall: str
    notes: Tuple[str, ...] = ()

    @property
    def S_ok(self) -> bool:
        return self.S.passed

    @property
    def G_far_ok(self) -> bool:
        return self.G_far.passed

    @property
    def G_near_ok(self) -> bool:
        return self.G_near.passed


def _halton_box(norm: ExhaustionNorm, radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    sampler = qmc.Halton(d=norm.n, scramble=True, seed=rng)
    return (2.0 * sampler.random(count) - 1.0) * norm.half_widths(radius)


def _rejection(norm: ExhaustionNorm, lo: float, hi: float, count: int, rng: np.random.Generator, keep=None) -> np.ndarray:
    """``count`` points with lo < N <= hi, drawn from the bounding box of {N < hi}."""
    accepted: List[np.ndarray] = []
    total = 0
    for _ in range(64):
        pts = _halton_box(norm, hi, max(4 * count, 256), rng)
        values = norm(pts, strict=False)
        mask = (values > lo) & (values <= hi)
        if keep is not None:
            mask &= keep(pts)
        accepted.append(pts[mask])
        total += int(mask.sum())
        if total >= count:
            break
    if total < count:
        raise PreconditionError(f"Could not sample {count} points with {lo} < N <= {hi}.")
    return np.concatenate(accepted)[:count]


def sample_far(norm: ExhaustionNorm, cfg: CriterionConfig, plan: SamplingPlan) -> np.ndarray:
    """Equal counts in every octave shell (rho0 2^k, rho0 2^(k+1)] up to r_max."""
    seeds = np.random.SeedSequence(plan.seed).spawn(cfg.r_max_octaves)
    shells = [
        _rejection(norm, cfg.rho0 * 2.0 ** k, cfg.rho0 * 2.0 ** (k + 1), plan.far_samples_per_octave,
                   np.random.default_rng(seeds[k]))
        for k in range(cfg.r_max_octaves)
    ]
    return np.concatenate(shells)


def sample_near(norm: ExhaustionNorm, cfg: CriterionConfig, plan: SamplingPlan) -> np.ndarray:
    """Points of {N <= rho0} away from the declared singular points."""
    singular = np.asarray(norm.singular_points, dtype=float).reshape(-1, norm.n)

    def away(pts):
        if singular.size == 0:
            return np.ones(pts.shape[0], dtype=bool)
        distances = np.linalg.norm(pts[:, None, :] - singular[None, :, :], axis=2)
        return distances.min(axis=1) > plan.singular_radius

    rng = np.random.default_rng(np.random.SeedSequence(plan.seed).spawn(cfg.r_max_octaves + 1)[-1])
    return _rejection(norm, -1.0, cfg.rho0, plan.near_samples, rng, keep=away)


def check_S(spec: OperatorSpec, points) -> SCheck:
    """Q >= 0 everywhere sampled and Q > 0 somewhere."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1000:
        raise PreconditionError(f"check_S needs at least 1000 points, got {pts.shape[0]}.")
    Q = spec.potential.evaluate(pts)
    lowest = int(np.argmin(Q))
    nonnegative = Q[lowest] >= -POSITIVITY_TOLERANCE
    nontrivial = Q.max() > POSITIVITY_TOLERANCE
    witness = None if nonnegative else tuple(map(float, pts[lowest]))
    if not nonnegative:
        logger.info(f"Q is negative at {list(witness)}: {Q[lowest]:.3g}")
    return SCheck(
        passed=bool(nonnegative and nontrivial),
        min_value=float(Q.min()),
        max_value=float(Q.max()),
        points=pts.shape[0],
        witness=witness,
    )


class InnerIntegral:
    """t -> int_rho0^t sqrt(q_hat), tabulated on a log grid and interpolated monotonically.

    Each grid cell is integrated with adaptive quadrature.
    """

    def __init__(self, q_hat: ScalarExpr, rho0: float, octaves: int, per_octave: int = GRID_PER_OCTAVE):
        self.rho0 = float(rho0)
        self.top = self.rho0 * 2.0 ** octaves
        self.grid = self.rho0 * np.power(2.0, np.linspace(0.0, octaves, octaves * per_octave + 1))
        self._q = q_hat

        def sqrt_q(t: float) -> float:
            return math.sqrt(max(float(q_hat.evaluate(np.array([t]))), 0.0))

        cumulative = [0.0]
        for a, b in zip(self.grid[:-1], self.grid[1:]):
            result = integrate.quad(sqrt_q, a, b, full_output=1, limit=200)
            if len(result) > 3:
                raise QuadratureError(f"Quadrature of sqrt(q_hat) on [{a:.6g}, {b:.6g}] failed: {result[3]}")
            cumulative.append(cumulative[-1] + result[0])
        self.values = np.asarray(cumulative)
        self._interpolant = PchipInterpolator(np.log(self.grid), self.values, extrapolate=False)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t > self.top * (1 + 1e-12)):
            raise PreconditionError(f"Inner integral requested beyond its table ({self.top:.6g}).")
        clipped = np.clip(t, self.rho0, self.top)
        return np.nan_to_num(self._interpolant(np.log(clipped)), nan=0.0)


def check_G_far(
    spec: OperatorSpec,
    cfg: CriterionConfig,
    points,
    inner: Optional[InnerIntegral] = None,
) -> FarCheck:
    """Potential lower bound and drift control on {N > rho0}, octave by octave.

    kappa_k is the largest needed constant in the shell (rho0 2^k, rho0 2^(k+1)].
    The innermost shell is reported but does not enter the decision, since the
    inner integral vanishes at rho0. The check fails when the kappa sequence
    grows along the ladder or its maximum exceeds cfg.kappa.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    N = cfg.norm(pts)
    mask = N > cfg.rho0
    pts, N = pts[mask], N[mask]
    if pts.shape[0] == 0:
        raise PreconditionError("No sample lies in {N > rho0}.")
    octaves = max(cfg.r_max_octaves, int(math.ceil(math.log2(N.max() / cfg.rho0))))
    inner = inner or InnerIntegral(cfg.q_hat, cfg.rho0, octaves)

    grad2 = gradient_norm_squared(spec.frame, cfg.norm.expr).evaluate(pts)
    qN = cfg.q_hat.evaluate(N[:, None])
    Q = spec.potential.evaluate(pts)

    required = grad2 * qN
    shortfall = required * (1.0 - RELATIVE_TOLERANCE) - POSITIVITY_TOLERANCE - Q
    potential_ok = bool(np.all(shortfall <= 0.0))
    potential_witness = None if potential_ok else tuple(map(float, pts[int(np.argmax(shortfall))]))

    lhs = spec.drift_defect(pts)
    rhs = required * inner(N) ** 2
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(rhs > 0.0, lhs / rhs, np.where(lhs > POSITIVITY_TOLERANCE, np.inf, 0.0))

    shell = np.clip(np.ceil(np.log2(N / cfg.rho0) - 1e-12).astype(int) - 1, 0, None)
    n_shells = int(shell.max()) + 1
    octave_kappas = np.zeros(n_shells)
    np.maximum.at(octave_kappas, shell, ratio)

    outer = octave_kappas[1:]
    kappa_estimate = float(outer.max()) if outer.size else 0.0
    witness = None
    if outer.size and kappa_estimate > 0.0:
        candidates = np.where(shell >= 1, ratio, -np.inf)
        witness = tuple(map(float, pts[int(np.argmax(candidates))]))

    slope = None
    blow_up = bool(np.isinf(kappa_estimate))
    positive = [(k, v) for k, v in enumerate(octave_kappas) if k >= 1 and v > 0.0]
    if not blow_up and len(positive) >= 2:
        tail = positive[len(positive) // 2:] if len(positive) >= 4 else positive
        ks = np.array([k for k, _ in tail], dtype=float)
        logs = np.log([v for _, v in tail])
        radii = np.log(cfg.rho0 * 2.0 ** (ks + 1))
        slope = float(np.polyfit(radii, logs, 1)[0])
        blow_up = slope > BLOW_UP_SLOPE

    passed = potential_ok and not blow_up and kappa_estimate <= cfg.kappa
    logger.info(
        f"G far: potential_ok={potential_ok} kappa={kappa_estimate:.4g} slope={slope} blow_up={blow_up}"
    )
    return FarCheck(
        passed=bool(passed),
        potential_ok=potential_ok,
        kappa_estimate=kappa_estimate,
        inner_octave_kappa=float(octave_kappas[0]),
        octave_kappas=tuple(map(float, octave_kappas)),
        growth_slope=slope,
        blow_up=blow_up,
        points=pts.shape[0],
        r_max=cfg.r_max,
        potential_witness=potential_witness,
        kappa_witness=witness,
    )


def check_G_near(spec: OperatorSpec, cfg: CriterionConfig, points) -> NearCheck:
    """|b|^2 + (div_X b)_- <= kappa Q on {N <= rho0}; kappa reported as 1 without drift."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    pts = pts[cfg.norm(pts, strict=False) <= cfg.rho0]
    if pts.shape[0] == 0:
        raise PreconditionError("No sample lies in {N <= rho0}.")
    lhs = spec.drift_defect(pts)
    Q = spec.potential.evaluate(pts)

    uncovered = (lhs > POSITIVITY_TOLERANCE) & (Q <= POSITIVITY_TOLERANCE)
    if uncovered.any():
        witness = tuple(map(float, pts[int(np.argmax(uncovered))]))
        logger.info(f"G near: drift does not vanish where Q = 0, e.g. at {list(witness)}")
        return NearCheck(False, math.inf, pts.shape[0], witness)

    if not np.any(lhs > 0.0):
        return NearCheck(True, 1.0, pts.shape[0])
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(Q > POSITIVITY_TOLERANCE, lhs / Q, 0.0)
    worst = int(np.argmax(ratio))
    kappa = float(ratio[worst])
    return NearCheck(kappa <= cfg.kappa, kappa, pts.shape[0], tuple(map(float, pts[worst])))


def _surface_law(surface: Union[PowerLawSurface, SurfaceFactorEstimate]) -> PowerLawSurface:
    if isinstance(surface, PowerLawSurface):
        return surface
    exponent, log_constant = surface.exponent, surface.log_constant
    if exponent is None:
        exponent, log_constant = power_law_fit(surface.radii, surface.values)
    return PowerLawSurface(constant=math.exp(log_constant), exponent=round(exponent, 2))


def _closed_form(law: PowerLawSurface, power: Tuple[float, float]) -> IntegralReport:
    """q_hat = c t^p and S = c_S r^(D-1): divergent iff -p <= 2 or D <= 2."""
    _, p = power
    D = law.exponent + 1.0
    divergent = (-p <= 2.0 + 1e-12) or D <= 2.0 + 1e-12
    return IntegralReport(
        verdict=IntegralVerdict.DIVERGENT.value if divergent else IntegralVerdict.CONVERGENT.value,
        method='closed-form',
        diagnostics={'q_hat_exponent': p, 'homogeneous_dimension': D},
    )


def _ladder(law: PowerLawSurface, cfg: CriterionConfig, octaves: int) -> IntegralReport:
    """Per-octave increments of the integral on R_k = rho0 2^k, in log space."""
    inner = InnerIntegral(cfg.q_hat, cfg.rho0, octaves)

    def log_integrand(r: np.ndarray) -> np.ndarray:
        return cfg.lam * inner(r) ** 2 - math.log(law.constant) - law.exponent * np.log(r)

    samples_per_octave = 2 * GRID_PER_OCTAVE + 1
    log_increments = []
    tail_r, tail_logf = [], []
    for k in range(1, octaves + 1):
        s = np.linspace(math.log(cfg.rho0) + (k - 1) * math.log(2.0), math.log(cfg.rho0) + k * math.log(2.0),
                        samples_per_octave)
        r = np.exp(s)
        log_f = log_integrand(r)
        weights = np.full(samples_per_octave, s[1] - s[0])
        weights[[0, -1]] *= 0.5
        log_increments.append(float(logsumexp(log_f + s, b=weights)))
        if k > octaves - TAIL_OCTAVES:
            tail_r.append(r)
            tail_logf.append(log_f)

    L = np.asarray(log_increments)
    tail = L[-TAIL_OCTAVES:]
    r_tail = np.concatenate(tail_r)
    log_f_tail = np.concatenate(tail_logf)
    log_rf = np.log(r_tail) + log_f_tail
    log_decay = (1.0 + TAIL_EPSILON) * np.log(r_tail) + log_f_tail
    steps = np.diff(tail)

    nondecreasing = bool(np.all(steps >= -RELATIVE_TOLERANCE * np.abs(tail[:-1])))
    bounded_below = bool(log_rf.min() >= log_rf[0] - RELATIVE_TOLERANCE * abs(log_rf[0]))
    geometric = bool(np.all(steps <= math.log(DECAY_RATIO)))
    dominated = bool(np.all(np.diff(log_decay) <= RELATIVE_TOLERANCE * np.abs(log_decay[:-1])))

    if nondecreasing or bounded_below:
        verdict = IntegralVerdict.DIVERGENT
    elif geometric and dominated:
        verdict = IntegralVerdict.CONVERGENT
    else:
        verdict = IntegralVerdict.UNDETERMINED
    return IntegralReport(
        verdict=verdict.value,
        method='ladder',
        diagnostics={
            'octaves': octaves,
            'log_increments_tail': [float(v) for v in tail],
            'increments_nondecreasing': nondecreasing,
            'r_times_integrand_bounded_below': bounded_below,
            'geometric_decay': geometric,
            'dominated_by_p_integral': dominated,
        },
    )


def classify_integral(
    surface: Union[PowerLawSurface, SurfaceFactorEstimate],
    cfg: CriterionConfig,
    method: str = 'auto',
    octaves: Optional[int] = None,
) -> IntegralReport:
    """Divergence verdict for int_rho0^infty exp{Lambda (int sqrt(q_hat))^2} / S(r) dr.

    ``auto`` takes the closed form when q_hat is a power law c t^p and the
    ladder classifier otherwise.
    """
    law = _surface_law(surface)
    if law.constant <= 0:
        raise PreconditionError("Surface factor constant must be positive.")
    octaves = lab_setting('LADDER_OCTAVES') if octaves is None else octaves
    power = cfg.q_hat.power_law()
    if method == 'closed-form' or (method == 'auto' and power is not None):
        if power is None:
            raise PreconditionError("The closed form needs q_hat = c t^p.")
        report = _closed_form(law, power)
    else:
        report = _ladder(law, cfg, octaves)
    logger.info(f"Integral verdict {report.verdict} via {report.method}")
    return report


def liouville_check(
    spec: OperatorSpec,
    cfg: CriterionConfig,
    surface: Union[PowerLawSurface, SurfaceFactorEstimate],
    plan: Optional[SamplingPlan] = None,
    method: str = 'auto',
) -> CriterionReport:
    """Combine the hypothesis checks with the integral verdict.

    The criterion only ever concludes that Liouville holds; a failed check
    leaves the question open.
    """
    plan = plan or SamplingPlan(seed=lab_setting('SEED'))
    far = sample_far(cfg.norm, cfg, plan)
    near = sample_near(cfg.norm, cfg, plan)

    s_check = check_S(spec, np.concatenate([near, far]))
    inner = InnerIntegral(cfg.q_hat, cfg.rho0, cfg.r_max_octaves)
    far_check = check_G_far(spec, cfg, far, inner=inner)
    near_check = check_G_near(spec, cfg, near)
    integral = classify_integral(surface, cfg, method=method)

    holds = (
        s_check.passed and far_check.passed and near_check.passed
        and integral.verdict == IntegralVerdict.DIVERGENT.value
    )
    notes = (f"(G) sampled up to N = {cfg.r_max:g} (rho0 * 2^{cfg.r_max_octaves}).",)
    return CriterionReport(
        S=s_check,
        G_far=far_check,
        G_near=near_check,
        integral=integral,
        overall=(Overall.LIOUVILLE_HOLDS if holds else Overall.INCONCLUSIVE).value,
        notes=notes,
    )
