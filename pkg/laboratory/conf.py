from typing import Any

from django.conf import settings

DEFAULTS = {
    'SEED': 20240229,
    'THREADS': 1,
    'RANK_TOLERANCE': 1e-9,
    'MC_SAMPLES': 1_000_000,
    'MC_REPLICATES': 8,
    'MC_MAX_RELATIVE_ERROR': 0.2,
    'SOLVER_METHOD': 'auto',
    'SOLVER_MAX_ITER': 100_000,
    'SOLVER_TOLERANCE': 1e-8,
    'DIRECT_SOLVER_LIMIT': 100_000,
    'LADDER_OCTAVES': 40,
    'R_MAX_OCTAVES': 10,
    'GRID_SPACING': 0.125,
}


def lab_setting(name: str) -> Any:
    """Read a laboratory tunable from ``settings.LABORATORY``, falling back to the defaults."""
    if settings.configured:
        overrides = getattr(settings, 'LABORATORY', {}) or {}
        if name in overrides:
            return overrides[name]
    return DEFAULTS[name]
