from typing import Any, Dict

from rest_framework import serializers

from laboratory.conf import lab_setting
from laboratory.enum import BarrierVariant, Command, PotentialFamily, SolverMethod
from laboratory.models import ExperimentRun
from laboratory.pde import is_node_multiple


class StrictSerializer(serializers.Serializer):
    """Rejects keys it does not declare; nested sections listed in ``nested_defaults`` are filled from {}."""

    nested_defaults = ()

    def to_internal_value(self, data):
        if not isinstance(data, dict):
            raise serializers.ValidationError({'non_field_errors': ['Expected a JSON object.']})
        unknown = sorted(set(data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({name: ['Unknown field.'] for name in unknown})
        data = dict(data)
        for name in self.nested_defaults:
            data.setdefault(name, {})
        return super().to_internal_value(data)


class NumberOrExpressionField(serializers.Field):
    """A JSON number, or an expression string in x1..xn."""

    def to_internal_value(self, data):
        if isinstance(data, bool):
            raise serializers.ValidationError('Expected a number or an expression string.')
        if isinstance(data, (int, float)):
            return float(data)
        if isinstance(data, str) and data.strip():
            return data.strip()
        raise serializers.ValidationError('Expected a number or an expression string.')

    def to_representation(self, value):
        return value


class FrameLiteralSerializer(StrictSerializer):
    name = serializers.CharField(default='literal')
    vector_fields = serializers.ListField(
        child=serializers.ListField(child=serializers.CharField(), allow_empty=False),
        allow_empty=False,
    )
    weights = serializers.ListField(child=serializers.IntegerField(min_value=1), allow_empty=False)

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        n = len(attrs['weights'])
        for coefficients in attrs['vector_fields']:
            if len(coefficients) != n:
                raise serializers.ValidationError(
                    f"Every vector field needs {n} coefficients to match the weights."
                )
        return attrs


class NormLiteralSerializer(StrictSerializer):
    name = serializers.CharField(default='literal')
    expression = serializers.CharField()
    weights = serializers.ListField(child=serializers.IntegerField(min_value=1), allow_empty=False)
    unit_box = serializers.ListField(child=serializers.FloatField(min_value=0.0), allow_empty=False)

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        if len(attrs['unit_box']) != len(attrs['weights']):
            raise serializers.ValidationError("unit_box and weights must have the same length.")
        return attrs


class OperatorSourceSerializer(StrictSerializer):
    """Either a named preset or a literal frame (with an optional literal norm)."""

    preset = serializers.CharField(required=False)
    kaplan_c = serializers.FloatField(default=1.0, min_value=1e-12)
    frame = FrameLiteralSerializer(required=False)
    norm = NormLiteralSerializer(required=False)
    seed = serializers.IntegerField(required=False, min_value=0)
    threads = serializers.IntegerField(required=False, min_value=1)

    requires_norm = False

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        has_preset, has_frame = 'preset' in attrs, 'frame' in attrs
        if has_preset == has_frame:
            raise serializers.ValidationError("Give exactly one of 'preset' or 'frame'.")
        if has_frame and self.requires_norm and 'norm' not in attrs:
            raise serializers.ValidationError({'norm': ["A literal frame needs a literal norm here."]})
        if has_preset and 'norm' in attrs:
            raise serializers.ValidationError({'norm': ["Presets carry their own norm."]})
        attrs.setdefault('seed', lab_setting('SEED'))
        attrs.setdefault('threads', lab_setting('THREADS'))
        return attrs


class CheckFrameConfigSerializer(OperatorSourceSerializer):
    points = serializers.IntegerField(default=50, min_value=0)
    point_radius = serializers.FloatField(default=1.0, min_value=0.0)
    max_step = serializers.IntegerField(required=False, min_value=1)
    tolerance = serializers.FloatField(required=False, min_value=0.0)


class SurfaceFactorConfigSerializer(OperatorSourceSerializer):
    requires_norm = True

    radii = serializers.ListField(child=serializers.FloatField(min_value=1e-12), allow_empty=False)
    samples = serializers.IntegerField(required=False, min_value=1)
    replicates = serializers.IntegerField(required=False, min_value=1)
    delta_ratio = serializers.FloatField(default=0.02, min_value=1e-6, max_value=0.5)
    max_relative_error = serializers.FloatField(required=False, min_value=0.0)
    carnot = serializers.BooleanField(default=False)


class PotentialSerializer(StrictSerializer):
    family = serializers.ChoiceField(choices=PotentialFamily.choices, required=False)
    alpha = serializers.FloatField(required=False, min_value=0.0)
    expression = serializers.CharField(required=False)

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        if 'expression' in attrs:
            if 'family' in attrs:
                raise serializers.ValidationError("Give either 'expression' or 'family', not both.")
        elif 'family' not in attrs or 'alpha' not in attrs:
            raise serializers.ValidationError("A potential needs 'expression', or 'family' and 'alpha'.")
        return attrs


class DriftSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=['none', 'radial-cutoff', 'literal'], default='none')
    beta = serializers.FloatField(default=0.0)
    expressions = serializers.ListField(child=serializers.CharField(), required=False)

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        if (attrs['kind'] == 'literal') != ('expressions' in attrs):
            raise serializers.ValidationError("'expressions' goes with kind 'literal' and only with it.")
        return attrs


class SurfaceModelSerializer(StrictSerializer):
    model = serializers.ChoiceField(choices=['homogeneous', 'power-law', 'sampled'], default='homogeneous')
    constant = serializers.FloatField(default=1.0, min_value=1e-300)
    exponent = serializers.FloatField(required=False)
    radii = serializers.ListField(child=serializers.FloatField(min_value=1e-12), required=False)
    samples = serializers.IntegerField(required=False, min_value=1)
    replicates = serializers.IntegerField(required=False, min_value=1)

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        if attrs['model'] == 'power-law' and 'exponent' not in attrs:
            raise serializers.ValidationError({'exponent': ["A power-law surface needs an exponent."]})
        if attrs['model'] == 'sampled' and len(attrs.get('radii', [])) < 4:
            raise serializers.ValidationError({'radii': ["A sampled surface needs at least 4 radii."]})
        return attrs


class SamplingSerializer(StrictSerializer):
    near_samples = serializers.IntegerField(default=2000, min_value=1)
    far_samples_per_octave = serializers.IntegerField(default=500, min_value=1)


class CriterionConfigSerializer(OperatorSourceSerializer):
    requires_norm = True
    nested_defaults = ('drift', 'surface', 'sampling')

    potential = PotentialSerializer()
    q_hat = serializers.CharField(required=False)
    drift = DriftSerializer()
    rho0 = serializers.FloatField(min_value=1e-12)
    kappa = serializers.FloatField(min_value=1e-12)
    # ``lambda`` is a keyword; mapped onto this field in ``to_internal_value``
    lam = serializers.FloatField(default=1.0, min_value=1e-12)
    r_max_octaves = serializers.IntegerField(required=False, min_value=1, max_value=60)
    surface = SurfaceModelSerializer()
    sampling = SamplingSerializer()
    integral_method = serializers.ChoiceField(choices=['auto', 'closed-form', 'ladder'], default='auto')

    def to_internal_value(self, data):
        if isinstance(data, dict) and 'lambda' in data:
            data = dict(data)
            if 'lam' in data:
                raise serializers.ValidationError({'lambda': ["Give 'lambda' or 'lam', not both."]})
            data['lam'] = data.pop('lambda')
        return super().to_internal_value(data)

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        attrs = super().validate(attrs)
        if 'expression' in attrs['potential'] and 'q_hat' not in attrs:
            raise serializers.ValidationError({'q_hat': ["A literal potential needs a literal q_hat(t)."]})
        attrs.setdefault('r_max_octaves', lab_setting('R_MAX_OCTAVES'))
        return attrs


class SolveConfigSerializer(OperatorSourceSerializer):
    nested_defaults = ('drift',)

    potential = PotentialSerializer(required=False)
    drift = DriftSerializer()
    half_width = serializers.FloatField(min_value=1e-12)
    h = serializers.FloatField(required=False, min_value=1e-12)
    step = serializers.FloatField(required=False, min_value=1e-12)
    boundary = NumberOrExpressionField(default=0.0)
    rhs = NumberOrExpressionField(default=0.0)
    exact = serializers.CharField(required=False)
    method = serializers.ChoiceField(choices=SolverMethod.choices, required=False)
    wmp_trials = serializers.IntegerField(default=3, min_value=0)
    comparison_trials = serializers.IntegerField(default=0, min_value=0)
    ibp_trials = serializers.IntegerField(default=0, min_value=0)
    dump_field = serializers.BooleanField(default=False)

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        attrs = super().validate(attrs)
        attrs.setdefault('h', lab_setting('GRID_SPACING'))
        attrs.setdefault('method', lab_setting('SOLVER_METHOD'))
        if not is_node_multiple(attrs['half_width'], attrs['h']):
            raise serializers.ValidationError(
                {'half_width': [f"Half width must be an integer multiple of h = {attrs['h']}."]})
        return attrs


class BarrierSectionSerializer(StrictSerializer):
    variant = serializers.ChoiceField(choices=BarrierVariant.choices, default=BarrierVariant.RADIAL)
    beta = serializers.FloatField(default=0.5, min_value=0.0)
    R0 = serializers.FloatField(default=2.0, min_value=1e-12)
    A = serializers.FloatField(required=False, min_value=1e-12)
    samples = serializers.IntegerField(default=2000, min_value=1)
    r_max = serializers.FloatField(default=64.0, min_value=1e-12)


class DichotomyConfigSerializer(OperatorSourceSerializer):
    nested_defaults = ('barrier',)

    alphas = serializers.ListField(child=serializers.FloatField(min_value=0.0), allow_empty=False)
    gammas = serializers.ListField(child=serializers.FloatField(min_value=1e-12), default=[1.0], allow_empty=False)
    family = serializers.ChoiceField(choices=PotentialFamily.choices, default=PotentialFamily.GRADIENT)
    ladder = serializers.ListField(child=serializers.FloatField(min_value=1e-12), default=[2.0, 4.0, 8.0],
                                   allow_empty=False)
    h = serializers.FloatField(required=False, min_value=1e-12)
    step = serializers.FloatField(required=False, min_value=1e-12)
    method = serializers.ChoiceField(choices=SolverMethod.choices, required=False)
    barrier = BarrierSectionSerializer()
    delta = serializers.FloatField(required=False, min_value=0.0)

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        attrs = super().validate(attrs)
        if 'frame' in attrs:
            raise serializers.ValidationError({'preset': ["The dichotomy experiment runs on a preset."]})
        attrs.setdefault('h', lab_setting('GRID_SPACING'))
        attrs.setdefault('method', lab_setting('SOLVER_METHOD'))
        misaligned = [j for j in attrs['ladder'] if not is_node_multiple(j, attrs['h'])]
        if misaligned:
            raise serializers.ValidationError(
                {'ladder': [f"Half widths {misaligned} are not integer multiples of h = {attrs['h']}."]})
        return attrs


class BarrierConfigSerializer(OperatorSourceSerializer):
    nested_defaults = ('barrier',)

    alpha = serializers.FloatField(min_value=0.0)
    family = serializers.ChoiceField(choices=PotentialFamily.choices, default=PotentialFamily.GRADIENT)
    barrier = BarrierSectionSerializer()
    enforce_window = serializers.BooleanField(default=True)

    def validate(self, attrs: Dict[str, Any]) -> Dict[str, Any]:
        attrs = super().validate(attrs)
        if 'frame' in attrs:
            raise serializers.ValidationError({'preset': ["Barriers are defined on the Heisenberg presets."]})
        return attrs


CONFIG_SERIALIZERS = {
    Command.CHECK_FRAME: CheckFrameConfigSerializer,
    Command.SURFACE_FACTOR: SurfaceFactorConfigSerializer,
    Command.CRITERION: CriterionConfigSerializer,
    Command.SOLVE: SolveConfigSerializer,
    Command.DICHOTOMY: DichotomyConfigSerializer,
    Command.BARRIER: BarrierConfigSerializer,
}


class ReportEnvelopeSerializer(serializers.Serializer):
    tool = serializers.CharField()
    version = serializers.CharField()
    command = serializers.ChoiceField(choices=Command.choices)
    resolved_config = serializers.JSONField()
    created = serializers.CharField()
    exit_code = serializers.IntegerField(min_value=0, max_value=2)
    report = serializers.JSONField()


class ExperimentRunListSerializer(serializers.ModelSerializer):
    class Meta:
        model = ExperimentRun
        fields = ['id', 'command', 'status', 'exit_code', 'seed', 'version', 'created']


class ExperimentRunSerializer(serializers.ModelSerializer):
    class Meta:
        model = ExperimentRun
        fields = ['id', 'command', 'status', 'exit_code', 'seed', 'version', 'config', 'report', 'created',
                  'modified']
        read_only_fields = fields


class RunSummarySerializer(serializers.Serializer):
    total = serializers.IntegerField()
    by_command = serializers.DictField(child=serializers.IntegerField())
    by_status = serializers.DictField(child=serializers.IntegerField())
