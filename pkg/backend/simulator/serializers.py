from pathlib import Path
from typing import Optional, Union

import yaml
from rest_framework import serializers

from episodes.services import Episode, EpisodeError
from .services import Connection, EmbedSpec, RateSegment, SimConfig, SimConfigError


class RateSegmentSerializer(serializers.Serializer):
    from_tick = serializers.IntegerField(min_value=0)
    rate_hz = serializers.FloatField(min_value=0)


class RateScheduleField(serializers.Field):
    """A constant rate in Hz, or a list of {from_tick, rate_hz} segments."""

    default_error_messages = {
        'invalid': 'Expected a rate in Hz or a list of {from_tick, rate_hz} segments.',
    }

    def to_internal_value(self, data):
        if isinstance(data, bool):
            self.fail('invalid')
        if isinstance(data, (int, float)):
            if data < 0:
                raise serializers.ValidationError('Rates must be non-negative.')
            return float(data)
        if isinstance(data, list):
            segments = RateSegmentSerializer(data=data, many=True)
            segments.is_valid(raise_exception=True)
            return tuple(RateSegment(**item) for item in segments.validated_data)
        self.fail('invalid')

    def to_representation(self, value):
        if isinstance(value, tuple):
            return [{'from_tick': s.from_tick, 'rate_hz': s.rate_hz} for s in value]
        return value


class BaseRatesField(serializers.Field):
    """One schedule shared by every neuron, or a list with one schedule per neuron."""

    def to_internal_value(self, data):
        schedule = RateScheduleField()
        if isinstance(data, list) and not any(isinstance(item, dict) for item in data):
            return [schedule.to_internal_value(item) for item in data]
        return schedule.to_internal_value(data)

    def to_representation(self, value):
        return value


class EmbedSpecSerializer(serializers.Serializer):
    pattern = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)
    jitter_span = serializers.IntegerField(min_value=0, default=0)
    rate_hz = serializers.FloatField(min_value=0, required=False)
    ticks = serializers.ListField(child=serializers.IntegerField(min_value=0), required=False)
    instances = serializers.IntegerField(min_value=0, required=False)

    def validate_pattern(self, value):
        try:
            return Episode.of(*value)
        except EpisodeError as e:
            raise serializers.ValidationError(str(e))

    def validate(self, attrs):
        laws = [key for key in ('rate_hz', 'ticks', 'instances') if key in attrs]
        if len(laws) != 1:
            raise serializers.ValidationError('Give exactly one of rate_hz, ticks or instances.')
        if 'ticks' in attrs:
            attrs['ticks'] = tuple(attrs['ticks'])
        return attrs


class ConnectionSerializer(serializers.Serializer):
    source = serializers.IntegerField(min_value=0)
    target = serializers.IntegerField(min_value=0)
    delay = serializers.IntegerField(min_value=0)
    probability = serializers.FloatField(min_value=0, max_value=1)


class SimConfigSerializer(serializers.Serializer):
    num_neurons = serializers.IntegerField(min_value=1)
    length_ticks = serializers.IntegerField(min_value=1)
    delta_t = serializers.FloatField()
    base_rates = BaseRatesField()
    embedded = EmbedSpecSerializer(many=True, required=False)
    connections = ConnectionSerializer(many=True, required=False)
    seed = serializers.IntegerField(min_value=0, required=False, allow_null=True)
    labels = serializers.ListField(child=serializers.CharField(), required=False)

    def validate_delta_t(self, value):
        if value <= 0:
            raise serializers.ValidationError('delta_t must be positive.')
        return value

    def validate(self, attrs):
        rates = attrs['base_rates']
        if not isinstance(rates, list):
            rates = [rates] * attrs['num_neurons']
        try:
            attrs['config'] = SimConfig(
                num_neurons=attrs['num_neurons'],
                length_ticks=attrs['length_ticks'],
                delta_t=attrs['delta_t'],
                base_rates=tuple(rates),
                embedded=tuple(EmbedSpec(**spec) for spec in attrs.get('embedded', [])),
                connections=tuple(Connection(**c) for c in attrs.get('connections', [])),
                seed=attrs.get('seed'),
                labels=tuple(attrs.get('labels', [])),
            )
        except SimConfigError as e:
            raise serializers.ValidationError(str(e))
        return attrs


def _flat_values(text: str) -> dict:
    values = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        key, separator, value = line.partition('=')
        if not separator:
            raise SimConfigError(f"config line {line_number}: expected key=value, got {line!r}")
        try:
            values[key.strip()] = yaml.safe_load(value.strip())
        except yaml.YAMLError:
            raise SimConfigError(f"config line {line_number}: cannot read value {value.strip()!r}")
    return values


def parse_sim_config(text: str, seed: Optional[int] = None) -> SimConfig:
    """Build a SimConfig from YAML or flat key=value text; `seed` overrides the file's seed."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError:
        values = _flat_values(text)
    else:
        if isinstance(data, dict):
            values = data
        elif data is None:
            values = {}
        else:
            values = _flat_values(text)

    serializer = SimConfigSerializer(data=values)
    if not serializer.is_valid():
        raise SimConfigError(_flatten_errors(serializer.errors))
    config = serializer.validated_data['config']
    return config.with_seed(seed) if seed is not None else config


def read_sim_config(path: Union[str, Path], seed: Optional[int] = None) -> SimConfig:
    return parse_sim_config(Path(path).read_text(encoding='utf-8'), seed)


def _flatten_errors(errors, prefix: str = '') -> str:
    if isinstance(errors, dict):
        parts = [_flatten_errors(value, f"{prefix}{key}." if key != 'non_field_errors' else prefix)
                 for key, value in errors.items()]
        return '; '.join(part for part in parts if part)
    if isinstance(errors, list):
        parts = [_flatten_errors(item, f"{prefix}{i}." if isinstance(item, (dict, list)) else prefix)
                 for i, item in enumerate(errors)]
        return '; '.join(part for part in parts if part)
    return f"{prefix.rstrip('.')}: {errors}" if prefix else str(errors)
