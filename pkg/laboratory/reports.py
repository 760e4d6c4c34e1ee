"""JSON-ready report documents and CSV artifacts."""
import csv
import dataclasses
import io
import json
import math
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from django.utils import timezone

import laboratory
from laboratory.expressions import ScalarExpr

TOOL = 'liouville-lab'


def _float(value: float) -> Any:
    if math.isnan(value):
        return 'nan'
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return value


def to_jsonable(value: Any) -> Any:
    """Dataclasses, numpy values and expressions as plain JSON data.

    Non-finite floats become the strings "inf", "-inf" and "nan".
    """
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {
            f.name: to_jsonable(getattr(value, f.name))
            for f in dataclasses.fields(value)
            if f.repr
        }
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return _float(float(value))
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, ScalarExpr):
        return str(value)
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        return [to_jsonable(v) for v in value]
    if value is None or isinstance(value, str):
        return value
    if hasattr(value, 'to_json'):
        return to_jsonable(value.to_json())
    return str(value)


def envelope(command: str, resolved_config: Dict[str, Any], body: Dict[str, Any], exit_code: int) -> Dict[str, Any]:
    """Report document shared by every command; ``created`` is the only field that varies between runs."""
    return {
        'tool': TOOL,
        'version': laboratory.__version__,
        'command': command,
        'resolved_config': to_jsonable(resolved_config),
        'created': timezone.now().isoformat(),
        'exit_code': int(exit_code),
        'report': to_jsonable(body),
    }


def dumps(document: Dict[str, Any]) -> str:
    return json.dumps(document, sort_keys=True, indent=2, allow_nan=False) + '\n'


def without_timestamp(document: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v for k, v in document.items() if k != 'created'}


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([f'{v:.12g}' if isinstance(v, float) else v for v in row])
    return buffer.getvalue()


def surface_rows(estimate) -> List[tuple]:
    return [(float(r), float(s), float(e)) for r, s, e in zip(estimate.radii, estimate.values, estimate.stderrs)]


def field_csv(u) -> str:
    buffer = io.StringIO()
    u.write_csv(buffer)
    return buffer.getvalue()


def profile_csv(run, label: Optional[str] = None) -> str:
    """Slice ring profiles of every rung of an invading run."""
    rows = []
    for d in run.diagnostics:
        for radius, value in d.ring_profile:
            rows.append((label or '', d.j, radius, value))
    return csv_text(['label', 'j', 'rho', 'u'], rows)


def error_body(exc) -> Dict[str, Any]:
    """Report body for a run stopped by a laboratory error."""
    body = {'error': type(exc).__name__, 'message': str(exc)}
    for name in ('residual', 'iterations', 'estimate', 'stderr', 'point'):
        if hasattr(exc, name):
            body[name] = getattr(exc, name)
    return body
