from rest_framework import serializers

from detections.exceptions import ConfigError

from .config import PRESETS, build_config, parse_seeds
from .models import ExperimentResult, ExperimentRun

MAX_SEEDS = 100


class SeedsField(serializers.Field):
    """A list of seeds, or the CLI's '1..20' / '1,2,5' notation."""

    def to_internal_value(self, data):
        if isinstance(data, str):
            try:
                return parse_seeds(data)
            except ConfigError as exc:
                raise serializers.ValidationError(str(exc))
        if not isinstance(data, list) or not data:
            raise serializers.ValidationError("Expected a non-empty list of seeds or a seed range string.")
        if any(isinstance(s, bool) or not isinstance(s, int) or s < 0 for s in data):
            raise serializers.ValidationError("Seeds must be non-negative integers.")
        return list(data)

    def to_representation(self, value):
        return value


class ExperimentResultSerializer(serializers.ModelSerializer):
    class Meta:
        model = ExperimentResult
        fields = ['id', 'seed', 'pipeline', 'ap_base', 'ap_extra', 'ap_match', 'mr_base', 'mr_extra', 'mr_match']


class ExperimentRunSerializer(serializers.ModelSerializer):
    preset = serializers.ChoiceField(choices=[''] + sorted(PRESETS), required=False, allow_blank=True)
    seeds = SeedsField()
    results = ExperimentResultSerializer(many=True, read_only=True)

    class Meta:
        model = ExperimentRun
        fields = ['id', 'preset', 'config', 'seeds', 'ablation', 'status', 'error', 'results', 'created_at', 'updated_at']
        read_only_fields = ['status', 'error', 'created_at', 'updated_at']

    def validate_seeds(self, value):
        if len(value) > MAX_SEEDS:
            raise serializers.ValidationError(f"At most {MAX_SEEDS} seeds per run.")
        return value

    def validate_config(self, value):
        if not isinstance(value, dict):
            raise serializers.ValidationError("Config must be an object of SimConfig fields.")
        return value

    def validate(self, attrs):
        try:
            build_config(attrs.get('config', {}), attrs.get('preset') or None, source="config")
        except ConfigError as exc:
            raise serializers.ValidationError({'config': [str(exc)]})
        return attrs
