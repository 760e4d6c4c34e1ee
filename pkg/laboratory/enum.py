from django.db import models


class Command(models.TextChoices):
        CHECK_FRAME = 'check-frame', 'Check frame'
        SURFACE_FACTOR = 'surface-factor', 'Surface factor'
        CRITERION = 'criterion', 'Criterion'
        SOLVE = 'solve', 'Dirichlet solve'
        DICHOTOMY = 'dichotomy', 'Dichotomy'
        BARRIER = 'barrier', 'Barrier'


class RunStatus(models.TextChoices):
        PASSED = 'passed', 'Passed'
        FAILED = 'failed', 'Failed'
        ERROR = 'error', 'Error'


class IntegralVerdict(models.TextChoices):
        DIVERGENT = 'divergent', 'Divergent'
        CONVERGENT = 'convergent', 'Convergent'
        UNDETERMINED = 'undetermined', 'Undetermined'


class Overall(models.TextChoices):
        LIOUVILLE_HOLDS = 'liouville_holds', 'Liouville holds'
        INCONCLUSIVE = 'inconclusive', 'Inconclusive'


class DichotomyVerdict(models.TextChoices):
        LIOUVILLE_CONSISTENT = 'liouville-consistent', 'Liouville consistent'
        NONUNIQUENESS_WITNESSED = 'nonuniqueness-witnessed', 'Nonuniqueness witnessed'
        UNDETERMINED = 'undetermined', 'Undetermined'


class BarrierVariant(models.TextChoices):
        CYLINDRICAL = 'cylindrical', 'Cylindrical A*rho^-beta'
        RADIAL = 'radial', 'Radial A*N^-beta'


class PotentialFamily(models.TextChoices):
        GRADIENT = 'gradient', 'Gradient weighted |grad_X N|^2 N^-alpha'
        PLAIN = 'plain', 'Plain N^-alpha'
        DRIFT_EXAMPLE = 'drift-example', '(1 + |grad_X N|^2) N^-alpha'


class SolverMethod(models.TextChoices):
        AUTO = 'auto', 'Automatic'
        DIRECT = 'direct', 'Sparse direct'
        SWEEP = 'sweep', 'Symmetric Gauss-Seidel sweeps'
        BICGSTAB = 'bicgstab', 'ILU preconditioned BiCGSTAB'
