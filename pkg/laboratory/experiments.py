"""Runners shared by the ``lab`` command and the HTTP views.

Each runner takes a validated config (see ``laboratory.api.serializers``)
and returns ``(report, exit_code, artifacts)``: a JSON-ready report body,
0 on pass or 1 on a scientific failure, and a mapping of CSV file names to
their text.
"""
import dataclasses
import itertools
import logging
import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from laboratory import reports
from laboratory.criterion import CriterionConfig, OperatorSpec, PowerLawSurface, SamplingPlan, liouville_check
from laboratory.enum import Command, DichotomyVerdict, Overall
from laboratory.exceptions import DimensionMismatchError, PreconditionError
from laboratory.expressions import ScalarExpr
from laboratory.geometry import ExhaustionNorm, homogeneous_dimension, sublaplacian_expr, surface_factor_scan
from laboratory.hoermander import Frame, check_hoermander, check_ntd, principal_symbol, structure_report
from laboratory import pde
from laboratory.presets import Preset, drift, literal_frame, literal_norm, potential, resolve_preset

logger = logging.getLogger(__name__)

Result = Tuple[Dict[str, Any], int, Dict[str, str]]

LIMIT_FRACTION = 0.05
DECAY_FRACTION = 0.5
DISTINCT_RING_RATIO = 0.6


def resolve_source(cfg: Dict[str, Any]) -> Tuple[Frame, Optional[ExhaustionNorm], Optional[Preset]]:
    if 'preset' in cfg:
        preset = resolve_preset(cfg['preset'], cfg.get('kaplan_c', 1.0))
        return preset.frame, preset.norm, preset
    literal = cfg['frame']
    frame = dataclasses.replace(literal_frame(literal['vector_fields'], literal['weights']), name=literal['name'])
    norm = None
    if 'norm' in cfg:
        n = cfg['norm']
        if len(n['weights']) != frame.n:
            raise DimensionMismatchError("Norm and frame differ in dimension.")
        norm = literal_norm(n['expression'], n['weights'], n['unit_box'], n['name'])
    return frame, norm, None


def _require_preset(preset: Optional[Preset], what: str) -> Preset:
    if preset is None:
        raise PreconditionError(f"{what} needs a preset.")
    return preset


def resolve_potential(section: Optional[Dict[str, Any]], frame: Frame, preset: Optional[Preset]
                      ) -> Tuple[ScalarExpr, Optional[ScalarExpr]]:
    if not section:
        return ScalarExpr.constant(0, frame.n), None
    if 'expression' in section:
        return ScalarExpr.parse(section['expression'], frame.n), None
    return potential(_require_preset(preset, "A potential family"), section['family'], section['alpha'])


def resolve_drift(section: Dict[str, Any], frame: Frame, preset: Optional[Preset]) -> Tuple[ScalarExpr, ...]:
    kind = section.get('kind', 'none')
    if kind == 'none':
        return tuple(ScalarExpr.constant(0, frame.n) for _ in range(frame.m))
    if kind == 'literal':
        expressions = section['expressions']
        if len(expressions) != frame.m:
            raise DimensionMismatchError(f"Drift needs {frame.m} components, got {len(expressions)}.")
        return tuple(ScalarExpr.parse(text, frame.n) for text in expressions)
    return drift(_require_preset(preset, "The radial-cutoff drift"), kind, section['beta'])


def run_check_frame(cfg: Dict[str, Any]) -> Result:
    frame, _, _ = resolve_source(cfg)
    rng = np.random.default_rng(cfg['seed'])
    radius = cfg['point_radius']
    points = rng.uniform(-radius, radius, size=(cfg['points'], frame.n))

    structure = structure_report(frame)
    hoermander = check_hoermander(
        frame, points, max_step=cfg.get('max_step'), threads=cfg['threads'], tolerance=cfg.get('tolerance'),
    )
    ntd = check_ntd(frame, np.vstack([np.zeros(frame.n), points]))
    passed = structure.satisfied and hoermander.satisfied and ntd
    body = {
        'frame': frame.to_json(),
        'structure': structure,
        'hoermander': hoermander,
        'ntd': ntd,
        'principal_symbol': [[str(entry) for entry in row] for row in principal_symbol(frame).tolist()],
        'passed': passed,
    }
    return body, 0 if passed else 1, {}


def run_surface_factor(cfg: Dict[str, Any]) -> Result:
    frame, norm, _ = resolve_source(cfg)
    estimate = surface_factor_scan(
        frame, norm, cfg['radii'],
        samples=cfg.get('samples'), replicates=cfg.get('replicates'), seed=cfg['seed'], threads=cfg['threads'],
        delta_ratio=cfg['delta_ratio'], max_relative_error=cfg.get('max_relative_error'), carnot=cfg['carnot'],
    )
    D = homogeneous_dimension(norm.weights)
    body = {
        'norm': norm.to_json(),
        'homogeneous_dimension': D,
        'expected_exponent': D - 1,
        'estimate': estimate,
    }
    artifacts = {'surface_factor.csv': reports.csv_text(['r', 'S', 'stderr'], reports.surface_rows(estimate))}
    return body, 0, artifacts


def _surface(section: Dict[str, Any], frame: Frame, norm: ExhaustionNorm, cfg: Dict[str, Any]):
    model = section['model']
    if model == 'homogeneous':
        return PowerLawSurface(section['constant'], homogeneous_dimension(norm.weights) - 1)
    if model == 'power-law':
        return PowerLawSurface(section['constant'], section['exponent'])
    return surface_factor_scan(
        frame, norm, section['radii'],
        samples=section.get('samples'), replicates=section.get('replicates'),
        seed=cfg['seed'], threads=cfg['threads'],
    )


def run_criterion(cfg: Dict[str, Any]) -> Result:
    frame, norm, preset = resolve_source(cfg)
    Q, q_hat = resolve_potential(cfg['potential'], frame, preset)
    if 'q_hat' in cfg:
        q_hat = ScalarExpr.parse_in(cfg['q_hat'], ['t'])
    spec = OperatorSpec(frame, resolve_drift(cfg['drift'], frame, preset), Q)
    criterion = CriterionConfig(
        norm=norm, rho0=cfg['rho0'], q_hat=q_hat, kappa=cfg['kappa'], lam=cfg['lam'],
        r_max_octaves=cfg['r_max_octaves'],
    )
    plan = SamplingPlan(
        near_samples=cfg['sampling']['near_samples'],
        far_samples_per_octave=cfg['sampling']['far_samples_per_octave'],
        seed=cfg['seed'],
    )
    report = liouville_check(spec, criterion, _surface(cfg['surface'], frame, norm, cfg), plan,
                             method=cfg['integral_method'])
    body = {
        'potential': str(Q),
        'q_hat': str(q_hat),
        'drift': [str(b) for b in spec.drift],
        'criterion': report,
        'S_ok': report.S_ok,
        'G_far_ok': report.G_far_ok,
        'G_near_ok': report.G_near_ok,
    }
    return body, 0 if report.overall == Overall.LIOUVILLE_HOLDS else 1, {}


def _data(value, n: int):
    return value if isinstance(value, float) else ScalarExpr.parse(value, n)


def run_solve(cfg: Dict[str, Any]) -> Result:
    frame, _, preset = resolve_source(cfg)
    Q, _ = resolve_potential(cfg.get('potential'), frame, preset)
    spec = OperatorSpec(frame, resolve_drift(cfg['drift'], frame, preset), Q)
    dom = pde.BoxDomain.centered(cfg['half_width'], frame.n, cfg['h'])
    op = pde.assemble(spec, dom, step=cfg.get('step'))
    u = pde.solve_dirichlet(op, _data(cfg['boundary'], frame.n), _data(cfg['rhs'], frame.n), method=cfg['method'])

    structure = op.structure()
    body: Dict[str, Any] = {
        'unknowns': op.unknowns,
        'operator': op.metadata,
        'solution': u.metadata,
        'structure': structure,
        'constant_solution_residual': pde.constant_solution_residual(op),
        'min': float(u.values.min()),
        'max': float(u.values.max()),
    }
    passed = structure.is_m_matrix
    if cfg['wmp_trials']:
        body['wmp'] = pde.wmp_test(op, cfg['wmp_trials'], cfg['seed'])
        passed = passed and body['wmp'].passed
    if cfg['comparison_trials']:
        body['comparison'] = pde.comparison_test(op, cfg['comparison_trials'], cfg['seed'])
        passed = passed and body['comparison'].passed
    if cfg['ibp_trials']:
        coarse = pde.discrete_ibp_test(frame, dom, cfg['ibp_trials'], cfg['seed'])
        fine = pde.discrete_ibp_test(frame, pde.BoxDomain.centered(cfg['half_width'], frame.n, cfg['h'] / 2),
                                     cfg['ibp_trials'], cfg['seed'])
        body['ibp'] = {'coarse': coarse, 'fine': fine,
                       'ratio': coarse.max_defect / fine.max_defect if fine.max_defect else math.inf}
    if 'exact' in cfg:
        exact = ScalarExpr.parse(cfg['exact'], frame.n).evaluate(dom.nodes)
        body['max_error'] = float(np.max(np.abs(u.values - exact)))
    body['passed'] = passed
    artifacts = {'field.csv': reports.field_csv(u)} if cfg['dump_field'] else {}
    return body, 0 if passed else 1, artifacts


def _barrier_for(preset: Preset, spec: OperatorSpec, alpha: float, section: Dict[str, Any], seed: int):
    """Barrier with amplitude max(1, 1.1 A_min) unless A is given, and its check."""
    trial = pde.BarrierSpec(section['variant'], section.get('A', 1.0), section['beta'], section['R0'])
    samples = pde.barrier_samples(trial, preset.norm, section['r_max'], section['samples'], seed)
    check = pde.barrier_check(trial, spec, preset.norm, samples, preset.m, alpha)
    if 'A' in section or not math.isfinite(check.A_min):
        return trial, check
    barrier = dataclasses.replace(trial, A=max(1.0, 1.1 * check.A_min))
    return barrier, pde.barrier_check(barrier, spec, preset.norm, samples, preset.m, alpha)


def _verdict(alpha: float, run: pde.InvadingRun, certificate: Optional[pde.Step2Report]) -> str:
    centers = run.centers
    if not run.centers_decreasing:
        return DichotomyVerdict.UNDETERMINED
    if (alpha > 2 and run.limit_estimate >= LIMIT_FRACTION * run.gamma
            and certificate is not None and certificate.passed):
        return DichotomyVerdict.NONUNIQUENESS_WITNESSED
    if centers[-1] <= DECAY_FRACTION * centers[0] or run.limit_estimate < LIMIT_FRACTION * run.gamma:
        return DichotomyVerdict.LIOUVILLE_CONSISTENT
    return DichotomyVerdict.UNDETERMINED


def _distinct_limits(runs: List[pde.InvadingRun]) -> Dict[str, Any]:
    """Pairs of gammas whose outermost ring values differ by at least 0.6 |gamma_1 - gamma_2|."""
    pairs = []
    for a, b in itertools.combinations(runs, 2):
        gap = abs(a.diagnostics[-1].outer_ring_value - b.diagnostics[-1].outer_ring_value)
        pairs.append({
            'gammas': [a.gamma, b.gamma],
            'outer_ring_gap': gap,
            'limit_gap': abs(a.limit_estimate - b.limit_estimate),
            'distinct': gap >= DISTINCT_RING_RATIO * abs(a.gamma - b.gamma),
        })
    return {'pairs': pairs, 'distinct': all(p['distinct'] for p in pairs)}


def run_dichotomy(cfg: Dict[str, Any]) -> Result:
    _, _, preset = resolve_source(cfg)
    preset = _require_preset(preset, "The dichotomy experiment")
    artifacts: Dict[str, str] = {}
    outcomes = []
    for alpha in cfg['alphas']:
        Q, _ = potential(preset, cfg['family'], alpha)
        spec = OperatorSpec.without_drift(preset.frame, Q)
        entry: Dict[str, Any] = {'alpha': alpha, 'runs': []}

        barrier = None
        section = cfg['barrier']
        if alpha > 2 and preset.is_heisenberg:
            upper = pde.barrier_window(section['variant'], preset.m, alpha)
            if 0.0 < section['beta'] < upper:
                barrier, entry['barrier_check'] = _barrier_for(preset, spec, alpha, section, cfg['seed'])
                entry['barrier'] = barrier
            else:
                entry['barrier_note'] = f"beta = {section['beta']} outside the window (0, {upper:g})"

        runs = []
        verdicts = []
        for gamma in cfg['gammas']:
            run = pde.invading_run(spec, cfg['ladder'], gamma, h=cfg['h'], method=cfg['method'], step=cfg.get('step'))
            certificate = None
            if barrier is not None:
                delta = cfg.get('delta', max(gamma, gamma / (barrier.A * barrier.R0 ** (-barrier.beta))))
                certificate = pde.step2_certificate(run, barrier, delta, preset.norm, preset.m, alpha)
            verdict = _verdict(alpha, run, certificate)
            verdicts.append(verdict)
            runs.append(run)
            entry['runs'].append({
                'gamma': gamma,
                'run': run,
                'centers': run.centers,
                'centers_decreasing': run.centers_decreasing,
                'certificate': certificate,
                'verdict': verdict,
            })
            artifacts[f'slice_alpha{alpha:g}_gamma{gamma:g}.csv'] = reports.profile_csv(run, f'{alpha:g}/{gamma:g}')

        if all(v == DichotomyVerdict.NONUNIQUENESS_WITNESSED for v in verdicts):
            entry['verdict'] = DichotomyVerdict.NONUNIQUENESS_WITNESSED
        elif all(v == DichotomyVerdict.LIOUVILLE_CONSISTENT for v in verdicts):
            entry['verdict'] = DichotomyVerdict.LIOUVILLE_CONSISTENT
        else:
            entry['verdict'] = DichotomyVerdict.UNDETERMINED
        if len(runs) > 1:
            entry['distinct_limits'] = _distinct_limits(runs)
        logger.info(f"alpha = {alpha}: {entry['verdict']}")
        outcomes.append(entry)

    decided = all(e['verdict'] != DichotomyVerdict.UNDETERMINED for e in outcomes)
    body = {'preset': preset.name, 'verdicts': {f'{e["alpha"]:g}': e['verdict'] for e in outcomes},
            'alphas': outcomes}
    return body, 0 if decided else 1, artifacts


def run_barrier(cfg: Dict[str, Any]) -> Result:
    _, _, preset = resolve_source(cfg)
    preset = _require_preset(preset, "The barrier check")
    if not preset.is_heisenberg:
        raise PreconditionError("Barriers are defined on the Heisenberg presets.")
    alpha = cfg['alpha']
    section = cfg['barrier']
    upper = pde.barrier_window(section['variant'], preset.m, alpha)
    body: Dict[str, Any] = {'window': [0.0, upper]}
    if upper <= 0.0:
        body['status'] = 'inapplicable'
        body['reason'] = 'the beta window is empty'
        return body, 1, {}

    Q, _ = potential(preset, cfg['family'], alpha)
    spec = OperatorSpec.without_drift(preset.frame, Q)
    if cfg['enforce_window']:
        pde.validate_barrier(pde.BarrierSpec(section['variant'], 1.0, section['beta'], section['R0']), preset.m, alpha)
        barrier, check = _barrier_for(preset, spec, alpha, section, cfg['seed'])
    else:
        barrier = pde.BarrierSpec(section['variant'], section.get('A', 1.0), section['beta'], section['R0'])
        samples = pde.barrier_samples(barrier, preset.norm, section['r_max'], section['samples'], cfg['seed'])
        check = pde.barrier_check(barrier, spec, preset.norm, samples, preset.m, alpha, enforce_window=False)

    # closed form against symbolic differentiation on a few samples
    points = pde.barrier_samples(barrier, preset.norm, section['r_max'], 16, cfg['seed'] + 1)
    closed = pde.barrier_sublaplacian(barrier, preset.frame, preset.norm, preset.m, points)
    symbolic = sublaplacian_expr(preset.frame, pde.barrier_expression(barrier, preset.norm)).evaluate(points)
    body.update({
        'status': 'passed' if check.passed else 'failed',
        'barrier': barrier,
        'check': check,
        'closed_form_defect': float(np.max(np.abs(closed - symbolic) / np.maximum(1.0, np.abs(symbolic)))),
    })
    return body, 0 if check.passed else 1, {}


RUNNERS = {
    Command.CHECK_FRAME: run_check_frame,
    Command.SURFACE_FACTOR: run_surface_factor,
    Command.CRITERION: run_criterion,
    Command.SOLVE: run_solve,
    Command.DICHOTOMY: run_dichotomy,
    Command.BARRIER: run_barrier,
}


def execute(command: str, cfg: Dict[str, Any]) -> Tuple[Dict[str, Any], Dict[str, str]]:
    """Run one command on a validated config and wrap the result in a report envelope."""
    command = Command(command)
    body, exit_code, artifacts = RUNNERS[command](cfg)
    return reports.envelope(command.value, cfg, body, exit_code), artifacts
