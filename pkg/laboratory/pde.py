"""Monotone finite differences for L u = sum X_i^2 u + sum b_i X_i u - Q u on boxes.

Each X_i^2 u is split into the second derivative along v_i(x) = X_i(x) and
the first-order correction sum_k (X_i a_ik) du/dx_k. The second derivative
is the difference quotient

    [u(x + k v_i) - 2 u(x) + u(x - k v_i)] / k^2

with a fixed step k (default sqrt(h)) and multilinear interpolation between
nodes. Points x +/- k v_i outside the closed box take the Dirichlet data
there, so the stencil of a node never depends on the size of the box.
First-order terms are upwinded. The result is stored as M = -L_h on the
interior nodes plus a coupling block C to the Dirichlet points:

    L_h u = -(M u_interior + C g).
"""
import csv
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import sympy
from scipy import sparse
from scipy.stats import qmc
from scipy.sparse import linalg as splinalg

from laboratory.conf import lab_setting
from laboratory.enum import BarrierVariant, SolverMethod
from laboratory.exceptions import AssemblyError, DimensionMismatchError, PreconditionError, SolverError
from laboratory.expressions import ScalarExpr
from laboratory.fields import apply, evaluate
from laboratory.geometry import ExhaustionNorm, gradient_norm_squared
from laboratory.criterion import OperatorSpec
from laboratory.hoermander import Frame

logger = logging.getLogger(__name__)

BoundaryData = Union[float, ScalarExpr, Callable[[np.ndarray], np.ndarray], np.ndarray]


def is_node_multiple(j: float, h: float) -> bool:
    ratio = float(j) / float(h)
    return abs(ratio - round(ratio)) <= 1e-9 * max(1.0, abs(ratio))


@dataclass(frozen=True)
class BoxDomain:
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    cells: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'lo', tuple(float(v) for v in self.lo))
        object.__setattr__(self, 'hi', tuple(float(v) for v in self.hi))
        object.__setattr__(self, 'cells', tuple(int(c) for c in self.cells))
        if not len(self.lo) == len(self.hi) == len(self.cells):
            raise DimensionMismatchError("lo, hi and cells must have the same length.")
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise AssemblyError("Box corners must satisfy lo < hi componentwise.")
        if any(c < 2 for c in self.cells):
            raise AssemblyError("Every axis needs at least two cells to have interior nodes.")

    @classmethod
    def centered(cls, j: float, n: int, h: float) -> "BoxDomain":
        """(-j, j)^n with node spacing h; j/h must be an integer so the origin is a node."""
        if h <= 0 or j <= 0:
            raise PreconditionError("Half width and spacing must be positive.")
        if not is_node_multiple(j, h):
            raise PreconditionError(f"Half width {j} is not an integer multiple of the spacing {h}.")
        cells = 2 * int(round(j / h))
        return cls(lo=(-float(j),) * n, hi=(float(j),) * n, cells=(cells,) * n)

    @property
    def n(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(c + 1 for c in self.cells)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def spacing(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / np.asarray(self.cells)

    @cached_property
    def strides(self) -> np.ndarray:
        return np.array([int(np.prod(self.shape[k + 1:])) for k in range(self.n)], dtype=np.int64)

    def axes(self) -> List[np.ndarray]:
        return [np.linspace(a, b, c + 1) for a, b, c in zip(self.lo, self.hi, self.cells)]

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(size, n)`` in C order."""
        grids = np.meshgrid(*self.axes(), indexing='ij')
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def multi_index(self) -> np.ndarray:
        return np.stack(np.unravel_index(np.arange(self.size), self.shape), axis=1)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        idx = self.multi_index
        return np.all((idx > 0) & (idx < np.asarray(self.cells)), axis=1)

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    @cached_property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(~self.interior_mask)

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(points)
        scale = tol * max(1.0, float(np.max(np.abs(self.lo + self.hi))))
        return np.all((pts >= np.asarray(self.lo) - scale) & (pts <= np.asarray(self.hi) + scale), axis=1)

    def node_index(self, point) -> int:
        """Flat index of the node at ``point``; raises if it is not a node."""
        rel = (np.asarray(point, dtype=float) - np.asarray(self.lo)) / self.spacing
        idx = np.rint(rel).astype(np.int64)
        if np.any(np.abs(rel - idx) > 1e-9) or np.any(idx < 0) or np.any(idx > np.asarray(self.cells)):
            raise PreconditionError(f"{list(point)} is not a node of the box.")
        return int(np.ravel_multi_index(tuple(idx), self.shape))


@dataclass(frozen=True)
class GridField:
    domain: BoxDomain
    values: np.ndarray
    metadata: Dict[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.domain.size,):
            raise DimensionMismatchError(f"Expected {self.domain.size} node values, got {values.shape}.")
        if not np.all(np.isfinite(values)):
            raise SolverError("Grid field has non-finite values.")
        object.__setattr__(self, 'values', values)

    @property
    def grid(self) -> np.ndarray:
        return self.values.reshape(self.domain.shape)

    def at(self, point) -> float:
        return float(self.values[self.domain.node_index(point)])

    def restrict(self, sub: BoxDomain) -> "GridField":
        """Values on the nodes of a sub-box sharing this grid."""
        offset = (np.asarray(sub.lo) - np.asarray(self.domain.lo)) / self.domain.spacing
        start = np.rint(offset).astype(int)
        if (np.any(np.abs(offset - start) > 1e-9) or not np.allclose(sub.spacing, self.domain.spacing)
                or np.any(start < 0) or np.any(start + np.asarray(sub.cells) > np.asarray(self.domain.cells))):
            raise PreconditionError("Sub-box does not lie on this grid.")
        window = tuple(slice(s, s + c + 1) for s, c in zip(start, sub.cells))
        return GridField(sub, self.grid[window].ravel())

    def write_csv(self, handle: TextIO) -> None:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow([f'x{i + 1}' for i in range(self.domain.n)] + ['u'])
        for point, value in zip(self.domain.nodes, self.values):
            writer.writerow([f'{v:.10g}' for v in point] + [f'{value:.12g}'])


@dataclass(frozen=True)
class StructureCheck:
    diagonal_positive: bool
    offdiagonal_nonpositive: bool
    dominance_defect: float
    violating_rows: int

    @property
    def is_m_matrix(self) -> bool:
        return self.diagonal_positive and self.offdiagonal_nonpositive and self.dominance_defect <= 1e-10


@dataclass(frozen=True)
class DiscreteOperator:
    domain: BoxDomain
    matrix: sparse.csr_matrix
    coupling: sparse.csr_matrix
    exterior_points: np.ndarray
    potential: np.ndarray
    metadata: Dict[str, object] = field(default_factory=dict, compare=False)

    @property
    def unknowns(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def coupling_points(self) -> np.ndarray:
        """Boundary nodes followed by exterior stencil points."""
        return np.vstack([self.domain.nodes[self.domain.boundary], self.exterior_points.reshape(-1, self.domain.n)])

    def boundary_data(self, g: BoundaryData) -> np.ndarray:
        count = self.coupling.shape[1]
        if np.isscalar(g):
            return np.full(count, float(g))
        if isinstance(g, ScalarExpr):
            return g.evaluate(self.coupling_points)
        if callable(g):
            return np.asarray(g(self.coupling_points), dtype=float).reshape(count)
        values = np.asarray(g, dtype=float)
        if values.shape != (count,):
            raise DimensionMismatchError(f"Boundary data needs {count} values, got {values.shape}.")
        return values

    def interior_data(self, f) -> np.ndarray:
        count = self.unknowns
        if f is None:
            return np.zeros(count)
        if np.isscalar(f):
            return np.full(count, float(f))
        points = self.domain.nodes[self.domain.interior]
        if isinstance(f, GridField):
            return f.values[self.domain.interior]
        if isinstance(f, ScalarExpr):
            return f.evaluate(points)
        if callable(f):
            return np.asarray(f(points), dtype=float).reshape(count)
        values = np.asarray(f, dtype=float)
        if values.shape == (self.domain.size,):
            return values[self.domain.interior]
        if values.shape != (count,):
            raise DimensionMismatchError(f"Right-hand side needs {count} values, got {values.shape}.")
        return values

    def apply(self, u: Union[GridField, np.ndarray], g: BoundaryData) -> np.ndarray:
        """L_h u at the interior nodes, with Dirichlet data g on the coupling points."""
        values = u.values if isinstance(u, GridField) else np.asarray(u, dtype=float)
        interior = values[self.domain.interior] if values.shape == (self.domain.size,) else values
        return -(self.matrix @ interior + self.coupling @ self.boundary_data(g))

    def structure(self) -> StructureCheck:
        """M-matrix sign pattern and weak diagonal dominance of the rows of [M C]."""
        full = sparse.hstack([self.matrix, self.coupling]).tocsr()
        diag = self.matrix.diagonal()
        off = full - sparse.diags(diag, shape=full.shape)
        off = off.tocsr()
        off.eliminate_zeros()
        positive_off = np.zeros(full.shape[0], dtype=bool)
        if off.nnz:
            rows = np.repeat(np.arange(full.shape[0]), np.diff(off.indptr))
            positive_off[rows[off.data > 1e-14 * max(1.0, np.abs(diag).max())]] = True
        absolute_off = np.asarray(abs(off).sum(axis=1)).ravel()
        defect = absolute_off - diag
        scale = np.maximum(1.0, np.abs(diag))
        violating = (diag <= 0) | positive_off | (defect > 1e-10 * scale)
        return StructureCheck(
            diagonal_positive=bool(np.all(diag > 0)),
            offdiagonal_nonpositive=not bool(positive_off.any()),
            dominance_defect=float(np.max(defect / scale)) if defect.size else 0.0,
            violating_rows=int(violating.sum()),
        )


def _interpolation(dom: BoxDomain, pts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Corner node indices and multilinear weights (>= 0, summing to 1) for points in the closed box."""
    rel = (pts - np.asarray(dom.lo)) / dom.spacing
    cells = np.asarray(dom.cells)
    base = np.clip(np.floor(rel).astype(np.int64), 0, cells - 1)
    theta = np.clip(rel - base, 0.0, 1.0)
    corners, weights = [], []
    for bits in itertools.product((0, 1), repeat=dom.n):
        b = np.asarray(bits)
        corners.append((base + b) @ dom.strides)
        weights.append(np.prod(np.where(b == 1, theta, 1.0 - theta), axis=1))
    return np.stack(corners, axis=1), np.stack(weights, axis=1)


class _Triplets:
    """COO accumulator for L_h rows over columns [all nodes | exterior points]."""

    def __init__(self, dom: BoxDomain):
        self.dom = dom
        self.rows: List[np.ndarray] = []
        self.cols: List[np.ndarray] = []
        self.vals: List[np.ndarray] = []
        self.exterior: List[np.ndarray] = []
        self.exterior_count = 0

    def add(self, rows, cols, vals):
        keep = vals != 0.0
        self.rows.append(np.asarray(rows)[keep])
        self.cols.append(np.asarray(cols)[keep])
        self.vals.append(np.asarray(vals)[keep])

    def add_exterior(self, rows, points, vals):
        count = points.shape[0]
        cols = self.dom.size + self.exterior_count + np.arange(count)
        self.exterior.append(points)
        self.exterior_count += count
        self.add(rows, cols, vals)

    def matrix(self, n_rows: int) -> sparse.csr_matrix:
        shape = (n_rows, self.dom.size + self.exterior_count)
        if not self.rows:
            return sparse.csr_matrix(shape)
        return sparse.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))), shape=shape
        ).tocsr()


def assemble(spec: OperatorSpec, dom: BoxDomain, step: Optional[float] = None) -> DiscreteOperator:
    """Discretize L on the box; the result has the M-matrix sign pattern when Q >= 0."""
    frame = spec.frame
    if frame.n != dom.n:
        raise DimensionMismatchError(f"Frame of dimension {frame.n} on a box of dimension {dom.n}.")
    h = dom.spacing
    k = math.sqrt(float(h.min())) if step is None else float(step)
    if k <= 0:
        raise AssemblyError("Directional step must be positive.")

    interior = dom.interior
    points = dom.nodes[interior]
    rows = np.arange(interior.size)
    coefficients = frame.evaluate(points)
    if not np.all(np.isfinite(coefficients)):
        raise AssemblyError("Frame coefficients are not finite on the grid.")
    Q = spec.potential.evaluate(points)
    if np.any(Q < -1e-12):
        raise PreconditionError("Q must be non-negative on the grid.")
    Q = np.maximum(Q, 0.0)

    acc = _Triplets(dom)
    for i in range(frame.m):
        v = coefficients[:, i, :]
        active = np.any(v != 0.0, axis=1)
        r_active = rows[active]
        acc.add(r_active, interior[active], np.full(r_active.size, -2.0 / k ** 2))
        for sign in (1.0, -1.0):
            target = points[active] + sign * k * v[active]
            inside = dom.contains(target)
            corners, weights = _interpolation(dom, target[inside])
            acc.add(
                np.repeat(r_active[inside], corners.shape[1]),
                corners.ravel(),
                weights.ravel() / k ** 2,
            )
            outside = ~inside
            acc.add_exterior(r_active[outside], target[outside], np.full(int(outside.sum()), 1.0 / k ** 2))

    # first-order coefficient beta_k = sum_i (X_i a_ik + b_i a_ik)
    beta = np.zeros((interior.size, dom.n))
    for i, X in enumerate(frame.fields):
        for kk, a in enumerate(X.coeffs):
            correction = apply(X, a)
            if not correction.is_zero():
                beta[:, kk] += correction.evaluate(points)
    if spec.has_drift:
        for i, b in enumerate(spec.drift):
            if b.is_zero():
                continue
            beta += b.evaluate(points)[:, None] * coefficients[:, i, :]

    for axis in range(dom.n):
        coeff = beta[:, axis]
        magnitude = np.abs(coeff) / h[axis]
        neighbour = interior + np.where(coeff > 0, 1, -1) * dom.strides[axis]
        moving = coeff != 0.0
        acc.add(rows[moving], neighbour[moving], magnitude[moving])
        acc.add(rows[moving], interior[moving], -magnitude[moving])

    acc.add(rows, interior, -Q)

    L = acc.matrix(interior.size).tocsc()
    coupling_columns = np.concatenate([dom.boundary, dom.size + np.arange(acc.exterior_count)])
    M = (-L[:, interior]).tocsr()
    C = (-L[:, coupling_columns]).tocsr()
    exterior = np.vstack(acc.exterior) if acc.exterior_count else np.zeros((0, dom.n))

    logger.info(
        f"Assembled {frame.name} on {dom.shape} nodes: {M.shape[0]} unknowns, nnz={M.nnz + C.nnz}, "
        f"{acc.exterior_count} exterior points, step={k:.4g}"
    )
    return DiscreteOperator(
        domain=dom,
        matrix=M,
        coupling=C,
        exterior_points=exterior,
        potential=Q,
        metadata={'frame': frame.name, 'scheme': 'directional-interpolated', 'step': k, 'drift': spec.has_drift},
    )


def _sweep(M: sparse.csr_matrix, b: np.ndarray, x0: np.ndarray, limit: float, max_iter: int) -> Tuple[np.ndarray, int]:
    """Symmetric Gauss-Seidel until the max-norm residual drops below ``limit``."""
    lower = sparse.tril(M, format='csr')
    upper = sparse.triu(M, format='csr')
    x = x0.copy()
    for iteration in range(1, max_iter + 1):
        x += splinalg.spsolve_triangular(lower, b - M @ x, lower=True)
        x += splinalg.spsolve_triangular(upper, b - M @ x, lower=False)
        if np.max(np.abs(M @ x - b)) <= limit:
            return x, iteration
    raise SolverError(
        f"Gauss-Seidel sweeps did not converge in {max_iter} iterations.",
        residual=float(np.max(np.abs(M @ x - b))),
        iterations=max_iter,
    )


def _bicgstab(M: sparse.csr_matrix, b: np.ndarray, limit: float, max_iter: int) -> Tuple[np.ndarray, int]:
    ilu = splinalg.spilu(M.tocsc(), drop_tol=1e-5, fill_factor=10)
    preconditioner = splinalg.LinearOperator(M.shape, ilu.solve)
    counter = {'iterations': 0}

    def count(_):
        counter['iterations'] += 1

    x, info = splinalg.bicgstab(M, b, rtol=1e-14, atol=limit, maxiter=max_iter, M=preconditioner, callback=count)
    if info != 0:
        raise SolverError(f"BiCGSTAB stopped with info={info}.", residual=float(np.max(np.abs(M @ x - b))),
                          iterations=counter['iterations'])
    return x, counter['iterations']


def solve_dirichlet(
    op: DiscreteOperator,
    boundary: BoundaryData = 0.0,
    rhs=None,
    method: Optional[str] = None,
    tolerance: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> GridField:
    """Solve L_h u = rhs in the box with u = boundary on the Dirichlet points.

    The max-norm residual is verified against tolerance * (1 + |rhs| + |boundary|).
    """
    method = SolverMethod(method or lab_setting('SOLVER_METHOD'))
    tolerance = lab_setting('SOLVER_TOLERANCE') if tolerance is None else tolerance
    max_iter = lab_setting('SOLVER_MAX_ITER') if max_iter is None else max_iter

    g = op.boundary_data(boundary)
    f = op.interior_data(rhs)
    b = -f - op.coupling @ g
    limit = tolerance * (1.0 + (np.abs(f).max() if f.size else 0.0) + (np.abs(g).max() if g.size else 0.0))

    if method == SolverMethod.AUTO:
        method = SolverMethod.DIRECT if op.unknowns <= lab_setting('DIRECT_SOLVER_LIMIT') else SolverMethod.BICGSTAB

    iterations = 0
    if method == SolverMethod.DIRECT:
        with np.errstate(all='ignore'):
            u = splinalg.spsolve(op.matrix.tocsc(), b)
    elif method == SolverMethod.SWEEP:
        u, iterations = _sweep(op.matrix, b, np.zeros_like(b), limit, max_iter)
    else:
        try:
            u, iterations = _bicgstab(op.matrix, b, limit, max_iter)
        except (SolverError, RuntimeError) as exc:
            logger.warning(f"Krylov solve failed ({exc}); falling back to Gauss-Seidel sweeps")
            method = SolverMethod.SWEEP
            u, iterations = _sweep(op.matrix, b, np.zeros_like(b), limit, max_iter)

    u = np.atleast_1d(np.asarray(u, dtype=float))
    residual = float(np.max(np.abs(op.matrix @ u - b))) if u.size else 0.0
    if not np.all(np.isfinite(u)) or residual > limit:
        raise SolverError(f"Residual {residual:.3g} above {limit:.3g} ({method.value}).", residual=residual,
                          iterations=iterations)
    logger.info(f"Solved {op.unknowns} unknowns with {method.value}: residual {residual:.3g}, {iterations} iterations")

    values = np.empty(op.domain.size)
    values[op.domain.interior] = u
    values[op.domain.boundary] = g[:op.domain.boundary.size]
    return GridField(op.domain, values, metadata={'method': method.value, 'residual': residual,
                                                  'iterations': iterations})


@dataclass(frozen=True)
class WMPReport:
    passed: bool
    trials: int
    max_value: float
    structure: StructureCheck


def wmp_test(op: DiscreteOperator, trials: int = 5, seed: Optional[int] = None, threshold: float = 1e-10) -> WMPReport:
    """Boundary data <= 0 and L_h u >= 0 must give u <= 0."""
    rng = np.random.default_rng(lab_setting('SEED') if seed is None else seed)
    structure = op.structure()
    highest = -math.inf
    for _ in range(trials):
        f = rng.uniform(0.0, 1.0, op.unknowns)
        g = -rng.uniform(0.0, 1.0, op.coupling.shape[1])
        try:
            u = solve_dirichlet(op, g, f, method='direct')
        except SolverError as exc:
            logger.info(f"Maximum principle trial could not be solved: {exc}")
            highest = math.inf
            break
        highest = max(highest, float(u.values.max()))
    passed = structure.is_m_matrix and highest <= threshold
    return WMPReport(passed=passed, trials=trials, max_value=highest, structure=structure)


@dataclass(frozen=True)
class ComparisonReport:
    passed: bool
    trials: int
    max_violation: float


def comparison_test(op: DiscreteOperator, trials: int = 5, seed: Optional[int] = None, tolerance: float = 1e-9) -> ComparisonReport:
    """g1 <= g2 and f1 >= f2 must give u1 <= u2."""
    rng = np.random.default_rng(lab_setting('SEED') if seed is None else seed)
    worst = -math.inf
    for _ in range(trials):
        g2 = rng.uniform(-1.0, 1.0, op.coupling.shape[1])
        g1 = g2 - rng.uniform(0.0, 1.0, g2.size)
        f2 = rng.uniform(-1.0, 1.0, op.unknowns)
        f1 = f2 + rng.uniform(0.0, 1.0, f2.size)
        u1 = solve_dirichlet(op, g1, f1)
        u2 = solve_dirichlet(op, g2, f2)
        worst = max(worst, float(np.max(u1.values - u2.values)))
    return ComparisonReport(passed=worst <= tolerance, trials=trials, max_violation=worst)


def constant_solution_residual(op: DiscreteOperator) -> float:
    """max |L_h 1 + Q| over interior nodes; omega = 1 solves L omega = -Q."""
    ones = np.ones(op.domain.size)
    return float(np.max(np.abs(op.apply(ones, 1.0) + op.potential)))


@dataclass(frozen=True)
class RungDiagnostics:
    j: float
    center: float
    minimum: float
    maximum: float
    bound_defect: float
    monotonicity_defect: Optional[float]
    ring_profile: Tuple[Tuple[float, float], ...]
    outer_ring_value: float
    residual: float


@dataclass(frozen=True)
class InvadingRun:
    gamma: float
    ladder: Tuple[float, ...]
    h: float
    solutions: Tuple[GridField, ...] = field(repr=False)
    diagnostics: Tuple[RungDiagnostics, ...]
    limit_estimate: float
    bounds_ok: bool
    monotone: bool

    @property
    def centers(self) -> Tuple[float, ...]:
        return tuple(d.center for d in self.diagnostics)

    @property
    def centers_decreasing(self) -> bool:
        c = self.centers
        return all(b <= a + 1e-12 for a, b in zip(c, c[1:]))


def slice_profile(u: GridField, j: float) -> Tuple[Tuple[Tuple[float, float], ...], float]:
    """Ring means of u on the slice {last coordinate = 0} and the mean over 0.75 j <= rho < j."""
    dom = u.domain
    nodes = dom.nodes
    on_slice = np.abs(nodes[:, -1]) < 1e-12
    rho = np.linalg.norm(nodes[on_slice, :-1], axis=1)
    values = u.values[on_slice]
    h = float(dom.spacing[0])
    bins = np.floor(rho / h + 1e-9).astype(int)
    profile = tuple(
        (float(b * h), float(values[bins == b].mean())) for b in np.unique(bins)
    )
    ring = (rho >= 0.75 * j - 1e-12) & (rho < j - 1e-12)
    outer = float(values[ring].mean()) if ring.any() else float(values[rho.argmax()])
    return profile, outer


def _aitken(centers: Sequence[float]) -> float:
    if len(centers) < 3:
        return float(centers[-1])
    c1, c2, c3 = centers[-3:]
    d1, d2 = c2 - c1, c3 - c2
    if abs(d2) < abs(d1) and d2 != d1:
        estimate = c3 - d2 ** 2 / (d2 - d1)
        return float(min(max(estimate, 0.0), c3))
    return float(c3)


def invading_run(
    spec: OperatorSpec,
    ladder: Sequence[float],
    gamma: float,
    h: Optional[float] = None,
    method: Optional[str] = None,
    step: Optional[float] = None,
    tolerance: float = 1e-6,
) -> InvadingRun:
    """Dirichlet problems L u_j = 0 in (-j, j)^n, u_j = gamma outside, on a common grid.

    Records the bounds 0 <= u_j <= gamma and the monotonicity u_j' <= u_j on
    the smaller box for j' > j.
    """
    if gamma <= 0:
        raise PreconditionError("gamma must be positive.")
    ladder = tuple(sorted(float(j) for j in ladder))
    if not ladder:
        raise PreconditionError("The ladder needs at least one half width.")
    h = lab_setting('GRID_SPACING') if h is None else float(h)
    misaligned = [j for j in ladder if not is_node_multiple(j, h)]
    if misaligned:
        raise PreconditionError(f"Half widths {misaligned} are not integer multiples of the spacing {h}.")
    n = spec.frame.n
    origin = np.zeros(n)

    solutions: List[GridField] = []
    diagnostics: List[RungDiagnostics] = []
    for j in ladder:
        dom = BoxDomain.centered(j, n, h)
        op = assemble(spec, dom, step=step)
        u = solve_dirichlet(op, gamma, 0.0, method=method)
        monotonicity = None
        if solutions:
            previous = solutions[-1]
            monotonicity = float(np.max(u.restrict(previous.domain).values - previous.values))
        profile, outer = slice_profile(u, j)
        diagnostics.append(RungDiagnostics(
            j=j,
            center=u.at(origin),
            minimum=float(u.values.min()),
            maximum=float(u.values.max()),
            bound_defect=float(max(-u.values.min(), u.values.max() - gamma, 0.0)),
            monotonicity_defect=monotonicity,
            ring_profile=profile,
            outer_ring_value=outer,
            residual=float(u.metadata.get('residual', 0.0)),
        ))
        solutions.append(u)
        logger.info(f"Rung j={j}: u(0)={diagnostics[-1].center:.6g}, outer ring {outer:.6g}")

    bounds_ok = all(d.bound_defect <= tolerance for d in diagnostics)
    monotone = all(d.monotonicity_defect is None or d.monotonicity_defect <= tolerance for d in diagnostics)
    return InvadingRun(
        gamma=float(gamma),
        ladder=ladder,
        h=h,
        solutions=tuple(solutions),
        diagnostics=tuple(diagnostics),
        limit_estimate=_aitken([d.center for d in diagnostics]),
        bounds_ok=bounds_ok,
        monotone=monotone,
    )


@dataclass(frozen=True)
class BarrierSpec:
    variant: str
    A: float
    beta: float
    R0: float

    def __post_init__(self):
        object.__setattr__(self, 'variant', BarrierVariant(self.variant).value)
        if self.A <= 0 or self.R0 <= 0:
            raise PreconditionError("Barrier amplitude and cutoff radius must be positive.")


def barrier_window(variant: str, m: int, alpha: float) -> float:
    """Upper end of the admissible beta interval (0, upper)."""
    if BarrierVariant(variant) == BarrierVariant.CYLINDRICAL:
        return min(2.0 * m - 2.0, alpha - 2.0)
    return min(alpha - 2.0, 2.0)


def validate_barrier(barrier: BarrierSpec, m: int, alpha: float) -> None:
    upper = barrier_window(barrier.variant, m, alpha)
    if not 0.0 < barrier.beta < upper:
        raise PreconditionError(
            f"beta = {barrier.beta} is outside the admissible window (0, {upper:g}) for the "
            f"{barrier.variant} barrier with m = {m}, alpha = {alpha}."
        )


def _horizontal_radius(points: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.atleast_2d(points)[:, :-1], axis=1)


def barrier_profile(barrier: BarrierSpec, norm: ExhaustionNorm, points) -> np.ndarray:
    """V = A rho^-beta (cylindrical) or A N^-beta (radial)."""
    pts = np.atleast_2d(points)
    radius = _horizontal_radius(pts) if barrier.variant == BarrierVariant.CYLINDRICAL else norm(pts)
    return barrier.A * radius ** (-barrier.beta)


def barrier_expression(barrier: BarrierSpec, norm: ExhaustionNorm) -> ScalarExpr:
    z = norm.expr.variables
    beta = sympy.nsimplify(barrier.beta, rational=True)
    A = sympy.nsimplify(barrier.A, rational=True)
    if barrier.variant == BarrierVariant.CYLINDRICAL:
        return ScalarExpr(A * sum(v ** 2 for v in z[:-1]) ** (-beta / 2), z)
    return ScalarExpr(A * norm.expr.expr ** (-beta), z)


def barrier_samples(barrier: BarrierSpec, norm: ExhaustionNorm, r_max: float, count: int, seed: int) -> np.ndarray:
    """Scrambled Halton points of {N <= r_max} outside the barrier cutoff."""
    if r_max <= barrier.R0:
        raise PreconditionError("r_max must exceed the barrier cutoff R0.")
    sampler = qmc.Halton(d=norm.n, scramble=True, seed=np.random.default_rng(seed))
    half = norm.half_widths(r_max)
    kept: List[np.ndarray] = []
    total = 0
    for _ in range(1000):
        pts = (2.0 * sampler.random(max(4 * count, 1024)) - 1.0) * half
        N = norm(pts, strict=False)
        radius = _horizontal_radius(pts) if barrier.variant == BarrierVariant.CYLINDRICAL else N
        pts = pts[(radius >= barrier.R0) & (N <= r_max)]
        kept.append(pts)
        total += pts.shape[0]
        if total >= count:
            break
    if total < count:
        raise PreconditionError("Could not place barrier samples outside the cutoff.")
    return np.concatenate(kept)[:count]


def barrier_sublaplacian(barrier: BarrierSpec, frame: Frame, norm: ExhaustionNorm, m: int, points) -> np.ndarray:
    """Closed forms of sum X_i^2 V on H^m.

    cylindrical: f'' + (2m - 1) f'/rho = A beta (beta + 2 - 2m) rho^(-beta-2);
    radial:      -A beta (2m - beta) N^(-beta-2) |grad_X N|^2.
    """
    pts = np.atleast_2d(points)
    A, beta = barrier.A, barrier.beta
    if barrier.variant == BarrierVariant.CYLINDRICAL:
        rho = _horizontal_radius(pts)
        return A * beta * (beta + 2.0 - 2.0 * m) * rho ** (-beta - 2.0)
    D = 2 * m + 2
    grad2 = gradient_norm_squared(frame, norm.expr).evaluate(pts)
    return -A * beta * (D - 2.0 - beta) * norm(pts) ** (-beta - 2.0) * grad2


@dataclass(frozen=True)
class BarrierReport:
    passed: bool
    max_excess: float
    A_min: float
    samples: int
    witness: Optional[Tuple[float, ...]] = None


def barrier_check(
    barrier: BarrierSpec,
    spec: OperatorSpec,
    norm: ExhaustionNorm,
    samples,
    m: int,
    alpha: float,
    enforce_window: bool = True,
) -> BarrierReport:
    """sum X_i^2 V + Q <= 0 on the samples outside the cutoff, and the smallest amplitude that works."""
    if enforce_window:
        validate_barrier(barrier, m, alpha)
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    radius = _horizontal_radius(pts) if barrier.variant == BarrierVariant.CYLINDRICAL else norm(pts)
    if np.any(radius < barrier.R0 - 1e-12):
        raise PreconditionError(f"Barrier samples must lie outside the cutoff R0 = {barrier.R0}.")

    laplacian = barrier_sublaplacian(barrier, spec.frame, norm, m, pts)
    Q = spec.potential.evaluate(pts)
    excess = laplacian + Q
    worst = int(np.argmax(excess))

    unit = laplacian / barrier.A
    if np.all(unit < 0.0):
        A_min = float(np.max(Q / -unit))
    elif np.any((unit >= 0.0) & (Q > 0.0)):
        A_min = math.inf
    else:
        A_min = 0.0
    return BarrierReport(
        passed=bool(excess[worst] <= 0.0),
        max_excess=float(excess[worst]),
        A_min=A_min,
        samples=pts.shape[0],
        witness=tuple(map(float, pts[worst])),
    )


@dataclass(frozen=True)
class Step2Report:
    status: str
    passed: bool
    delta: float
    min_w: Optional[float] = None
    per_rung_min_w: Tuple[float, ...] = ()
    reason: str = ''


def step2_certificate(
    run: InvadingRun,
    barrier: BarrierSpec,
    delta: float,
    norm: ExhaustionNorm,
    m: int,
    alpha: float,
    tolerance: float = 1e-6,
) -> Step2Report:
    """w_j = u_j - gamma + delta V >= 0 outside the cutoff on every rung.

    Needs delta >= gamma and delta >= gamma / V(R0); the lower bound
    u_j >= gamma - delta V then passes to the limit.
    """
    if barrier_window(barrier.variant, m, alpha) <= 0.0:
        return Step2Report('inapplicable', False, delta, reason='barrier inapplicable: the beta window is empty')
    try:
        validate_barrier(barrier, m, alpha)
    except PreconditionError as exc:
        return Step2Report('inapplicable', False, delta, reason=str(exc))

    v_cutoff = barrier.A * barrier.R0 ** (-barrier.beta)
    if delta < run.gamma or delta < run.gamma / v_cutoff:
        return Step2Report(
            'skipped', False, delta,
            reason=f"delta must be >= gamma = {run.gamma:g} and >= gamma / V(R0) = {run.gamma / v_cutoff:g}",
        )

    minima = []
    for u in run.solutions:
        nodes = u.domain.nodes
        radius = _horizontal_radius(nodes) if barrier.variant == BarrierVariant.CYLINDRICAL else norm(nodes, strict=False)
        outside = radius >= barrier.R0
        if not outside.any():
            continue
        w = u.values[outside] - run.gamma + delta * barrier_profile(barrier, norm, nodes[outside])
        minima.append(float(w.min()))
    lowest = min(minima) if minima else None
    passed = lowest is not None and lowest >= -tolerance
    return Step2Report('passed' if passed else 'failed', passed, delta, lowest, tuple(minima))


@dataclass(frozen=True)
class IBPReport:
    h: float
    defects: Tuple[float, ...]

    @property
    def max_defect(self) -> float:
        return max(self.defects) if self.defects else 0.0


def upwind_field_apply(X, dom: BoxDomain, values: np.ndarray) -> np.ndarray:
    """X u at every node with one-sided differences in the direction of each coefficient.

    Values beyond the box are taken as 0.
    """
    grid = values.reshape(dom.shape)
    coefficients = evaluate(X, dom.nodes)
    result = np.zeros(dom.size)
    for axis in range(dom.n):
        a = coefficients[:, axis]
        if not np.any(a):
            continue
        padded = np.pad(grid, [(1, 1) if k == axis else (0, 0) for k in range(dom.n)])
        forward = (np.take(padded, np.arange(2, dom.shape[axis] + 2), axis=axis) - grid) / dom.spacing[axis]
        backward = (grid - np.take(padded, np.arange(0, dom.shape[axis]), axis=axis)) / dom.spacing[axis]
        result += np.where(a > 0, a * forward.ravel(), a * backward.ravel())
    return result


def ibp_defect(frame: Frame, dom: BoxDomain, u: np.ndarray, v: np.ndarray) -> float:
    """max_i |sum_nodes (v X_i u + u X_i v)| * cell volume."""
    volume = float(np.prod(dom.spacing))
    return max(
        abs(float(np.sum(v * upwind_field_apply(X, dom, u) + u * upwind_field_apply(X, dom, v)))) * volume
        for X in frame.fields
    )


def bump(dom: BoxDomain, center: np.ndarray, radius: float) -> np.ndarray:
    """exp(-1 / (1 - |x - c|^2 / r^2)) inside the ball, 0 outside."""
    s = np.sum((dom.nodes - center) ** 2, axis=1) / radius ** 2
    out = np.zeros(dom.size)
    inside = s < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    return out


def discrete_ibp_test(frame: Frame, dom: BoxDomain, trials: int = 10, seed: Optional[int] = None) -> IBPReport:
    """Integration-by-parts defect for random overlapping bump pairs supported inside the box.

    The pairs depend only on the seed and the box corners, so refinements of
    the same box see the same functions.
    """
    rng = np.random.default_rng(lab_setting('SEED') if seed is None else seed)
    lo, hi = np.asarray(dom.lo), np.asarray(dom.hi)
    middle, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    radius = 0.6 * float(half.min())
    defects = []
    for _ in range(trials):
        cu = middle + rng.uniform(-0.2, 0.2, dom.n) * half
        cv = middle + rng.uniform(-0.2, 0.2, dom.n) * half
        defects.append(ibp_defect(frame, dom, bump(dom, cu, radius), bump(dom, cv, radius)))
    return IBPReport(h=float(dom.spacing.min()), defects=tuple(defects))


def flip_offdiagonal(op: DiscreteOperator) -> DiscreteOperator:
    """Copy of ``op`` with the first off-diagonal entry of M made positive; a negative control."""
    M = op.matrix.tolil(copy=True)
    for row in range(M.shape[0]):
        for col, value in zip(M.rows[row], M.data[row]):
            if col != row and value != 0.0:
                M[row, col] = abs(value) + 1.0
                return replace(op, matrix=M.tocsr())
    raise AssemblyError("Operator has no off-diagonal entry to flip.")
