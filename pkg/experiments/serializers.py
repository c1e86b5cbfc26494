import json
import logging

from django.conf import settings
from rest_framework import serializers

from .models import ExperimentRun

logger = logging.getLogger(__name__)

KINDS = [kind for kind, _ in ExperimentRun.KIND_CHOICES]

# replications per sweep point when neither the file nor --reps says otherwise
DEFAULT_REPS = {
    'estimation-sweep': 200,
    'threshold-sweep': 100,
    'mac-sim': 1,
    'analysis-table': 1,
    'validate': 1,
}

# keys that do not change any emitted number and stay out of the CSV header
RUNTIME_KEYS = ('jobs', 'out')


class PositiveFloatField(serializers.FloatField):
    default_error_messages = {
        'not_positive': 'Ensure this value is greater than 0.',
    }

    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        if value <= 0:
            self.fail('not_positive')
        return value


def probability(**kwargs):
    return serializers.FloatField(min_value=0.0, max_value=1.0, **kwargs)


class StrictSerializer(serializers.Serializer):
    """Rejects unknown keys; missing nested sections are validated from ``{}`` so their defaults apply."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown key.'] for key in unknown})
            data = dict(data)
            for name, field in self.fields.items():
                if isinstance(field, StrictSerializer) and name not in data:
                    data[name] = {}
        return super().to_internal_value(data)


class SweepSerializer(StrictSerializer):
    variable = serializers.RegexField(r'^q[0-9]*$', default='q')
    start = probability(default=0.0)
    stop = probability(default=1.0)
    step = serializers.FloatField(min_value=1e-6, default=0.05)

    def validate(self, attrs):
        if attrs['start'] > attrs['stop']:
            raise serializers.ValidationError({'stop': ['Must not be smaller than start.']})
        return attrs


class EstimationSerializer(StrictSerializer):
    T = serializers.IntegerField(min_value=2, max_value=8, default=4)
    D = serializers.IntegerField(min_value=1, default=100)
    n_all = serializers.IntegerField(min_value=1, allow_null=True, default=None)
    q = serializers.ListField(child=probability(), default=list)
    protocols = serializers.ListField(
        child=serializers.ChoiceField(['method1', 'method2', 'baseline']),
        default=lambda: ['method1', 'method2', 'baseline'], min_length=1,
    )
    sweep = SweepSerializer()

    def validate(self, attrs):
        T = attrs['T']
        if not attrs['q']:
            attrs['q'] = [0.1] * T
        if len(attrs['q']) != T:
            raise serializers.ValidationError({'q': [f'Expected {T} activity probabilities.']})
        variable = attrs['sweep']['variable']
        if variable != 'q' and not 1 <= int(variable[1:] or 0) <= T:
            raise serializers.ValidationError({'sweep': {'variable': [f'Use q or q1..q{T}.']}})
        return attrs


class ThresholdSerializer(StrictSerializer):
    T_values = serializers.ListField(child=serializers.IntegerField(min_value=2, max_value=8),
                                     default=lambda: [5, 6], min_length=1)
    D_values = serializers.ListField(child=serializers.IntegerField(min_value=1),
                                     default=lambda: [100], min_length=1)
    n_all = serializers.IntegerField(min_value=1, allow_null=True, default=None)
    tolerance = serializers.FloatField(min_value=1e-6, max_value=0.5, default=0.005)
    max_iterations = serializers.IntegerField(min_value=1, max_value=60, default=20)


class EnergySerializer(StrictSerializer):
    gamma_I = serializers.FloatField(min_value=0.0, default=0.05)
    gamma_T = serializers.FloatField(min_value=0.0, default=1.0)
    gamma_R = serializers.FloatField(min_value=0.0, default=0.5)


class MacSerializer(StrictSerializer):
    channels = serializers.IntegerField(min_value=1, default=30)
    pu_probability = probability(default=0.2)
    z = serializers.ListField(child=probability(), default=list)
    nodes_per_class = serializers.IntegerField(min_value=1, default=50)
    weights = serializers.ListField(child=PositiveFloatField(), default=lambda: [1.0, 1.0, 1.0])
    caps = serializers.ListField(child=serializers.IntegerField(min_value=1), default=lambda: [5, 5, 5])
    slots_per_frame = serializers.IntegerField(min_value=9, default=50)
    sw_slots = serializers.IntegerField(min_value=0, default=1)
    bw1_cap = serializers.IntegerField(min_value=1, default=5)
    bw2_slots = serializers.IntegerField(min_value=0, default=2)
    frames = serializers.IntegerField(min_value=2, default=2000)
    warmup = serializers.IntegerField(min_value=0, default=200)
    batches = serializers.IntegerField(min_value=2, default=10)
    lambdas = serializers.ListField(child=serializers.FloatField(min_value=0.0),
                                    default=lambda: [0.01, 0.02, 0.05, 0.1, 0.2], min_length=1)
    modes = serializers.ListField(child=serializers.ChoiceField(['proposed', 'ideal']),
                                  default=lambda: ['proposed', 'ideal'], min_length=1)
    estimator = serializers.ChoiceField(['method1', 'method2'], default='method1')
    energy = EnergySerializer()

    def validate(self, attrs):
        errors = {}
        for name in ('weights', 'caps'):
            if len(attrs[name]) != 3:
                errors[name] = ['Expected one value per class (emergency, periodic, normal).']
        if attrs['weights'] != sorted(attrs['weights'], reverse=True):
            errors.setdefault('weights', []).append('Weights must be nonincreasing from emergency to normal.')
        if attrs['z'] and len(attrs['z']) != attrs['channels']:
            errors['z'] = [f"Expected {attrs['channels']} PU probabilities."]
        if attrs['warmup'] >= attrs['frames']:
            errors['warmup'] = ['Must be smaller than frames.']
        if errors:
            raise serializers.ValidationError(errors)
        return attrs


class MacPointSerializer(StrictSerializer):
    W = serializers.IntegerField(min_value=0)
    d = serializers.IntegerField(min_value=1)
    n = serializers.IntegerField(min_value=0)


class AnalysisSerializer(StrictSerializer):
    T_values = serializers.ListField(child=serializers.IntegerField(min_value=2, max_value=8),
                                     default=lambda: [2, 3, 4, 5, 6])
    n_values = serializers.ListField(child=serializers.IntegerField(min_value=0),
                                     default=lambda: [0, 1, 10, 100])
    s_values = serializers.ListField(child=serializers.IntegerField(min_value=0, max_value=12),
                                     default=lambda: [0, 1, 2, 3, 4])
    mc_runs = serializers.IntegerField(min_value=10, default=2000)
    bound_D = serializers.IntegerField(min_value=1, default=100)
    bound_q = probability(default=0.1)
    bound_T = serializers.IntegerField(min_value=2, max_value=8, default=4)
    q_values = serializers.ListField(child=probability(), default=lambda: [0.05, 0.1, 0.2, 0.3, 0.5])
    mac_points = serializers.ListField(
        child=MacPointSerializer(),
        default=lambda: [{'W': 50, 'd': d, 'n': n} for d in (1, 5) for n in (5, 20)],
    )
    samples = serializers.IntegerField(min_value=10, default=20000)
    fixture_runs = serializers.IntegerField(min_value=10, default=2000)
    energy = EnergySerializer()


class ValidateSerializer(StrictSerializer):
    CHECKS = ['equivalence', 'tables', 'expectations', 'bounds', 'thresholds', 'nested-sum',
              'triangulation', 'mac', 'determinism']

    scale = serializers.ChoiceField(['quick', 'full'], default='quick')
    checks = serializers.ListField(child=serializers.ChoiceField(CHECKS), default=lambda: list(
        ValidateSerializer.CHECKS), min_length=1)


class ExperimentConfigSerializer(StrictSerializer):
    kind = serializers.ChoiceField(KINDS)
    seed = serializers.IntegerField(min_value=0, max_value=2 ** 63 - 1)
    reps = serializers.IntegerField(min_value=1, allow_null=True, default=None)
    jobs = serializers.IntegerField(min_value=1, default=1)
    out = serializers.CharField()
    slot_bits = serializers.IntegerField(min_value=1, default=5)
    hashing_mode = serializers.ChoiceField(['redraw', 'fixed_id'], default='redraw')
    trace = serializers.BooleanField(default=False)
    estimation = EstimationSerializer()
    threshold = ThresholdSerializer()
    mac = MacSerializer()
    analysis = AnalysisSerializer()
    validate_checks = ValidateSerializer(source='validate')

    def to_internal_value(self, data):
        # "validate" is both a section name and a Serializer method
        if isinstance(data, dict) and 'validate' in data:
            data = dict(data)
            data['validate_checks'] = data.pop('validate')
        return super().to_internal_value(data)

    def validate(self, attrs):
        if attrs['reps'] is None:
            attrs['reps'] = DEFAULT_REPS[attrs['kind']]
        return attrs


class ExperimentRunSerializer(serializers.ModelSerializer):
    class Meta:
        model = ExperimentRun
        fields = '__all__'
        read_only_fields = [field.name for field in ExperimentRun._meta.fields]


def flatten_errors(errors, prefix=''):
    """DRF error detail -> ``['mac.weights.1: Ensure this value is greater than 0.', ...]``."""
    messages = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            key = 'validate' if key == 'validate_checks' else key
            path = prefix if key == 'non_field_errors' else (f'{prefix}.{key}' if prefix else str(key))
            messages.extend(flatten_errors(value, path))
    elif isinstance(errors, list):
        for item in errors:
            if isinstance(item, (dict, list)):
                messages.extend(flatten_errors(item, prefix))
            else:
                messages.append(f'{prefix or "config"}: {item}')
    else:
        messages.append(f'{prefix or "config"}: {errors}')
    return messages


def load_config(kind, path=None, overrides=None):
    """Resolve an experiment config: CLI overrides > file values > ``settings.SIMULATION``.

    Raises ``serializers.ValidationError`` whose detail is a list of
    ``path: message`` strings.
    """
    data = {}
    if path:
        try:
            with open(path, encoding='utf-8') as fh:
                data = json.load(fh)
        except OSError as e:
            raise serializers.ValidationError([f'{path}: {e.strerror}'])
        except json.JSONDecodeError as e:
            raise serializers.ValidationError([f'{path}: invalid JSON ({e.msg} at line {e.lineno})'])
        if not isinstance(data, dict):
            raise serializers.ValidationError([f'{path}: the top level must be an object'])
    if data.get('kind', kind) != kind:
        raise serializers.ValidationError([f"kind: this file configures {data['kind']!r}, not {kind!r}"])

    defaults = settings.SIMULATION
    resolved = {
        'kind': kind,
        'seed': defaults['SEED'],
        'jobs': defaults['JOBS'],
        'out': str(defaults['OUTPUT_DIR']),
        'slot_bits': defaults['SLOT_BITS'],
        'hashing_mode': defaults['HASHING_MODE'],
        'trace': defaults['TRACE'],
    }
    resolved.update(data)
    resolved.update({key: value for key, value in (overrides or {}).items() if value is not None})

    serializer = ExperimentConfigSerializer(data=resolved)
    if not serializer.is_valid():
        messages = flatten_errors(serializer.errors)
        logger.error(f"invalid {kind} config: {messages}")
        raise serializers.ValidationError(messages)
    return json.loads(json.dumps(serializer.validated_data))


def header_config(config):
    """The part of a resolved config that determines the numbers in an output file."""
    return {key: value for key, value in config.items() if key not in RUNTIME_KEYS}
