from rest_framework import serializers

from .cellspace import INTERVAL, SPACE_KINDS, TORUS2, CellSpace
from .errors import SchemaError
from .svmap import MAP_KINDS, BaseMap, InvalidBaseMap


class SpaceSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=SPACE_KINDS)
    pieces = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2),
        required=False,
    )
    subdivisions = serializers.ListField(
        child=serializers.IntegerField(min_value=1), required=False,
    )
    grid = serializers.ListField(
        child=serializers.IntegerField(min_value=1), min_length=2, max_length=2, required=False,
    )

    def validate(self, attrs):
        if attrs['kind'] == TORUS2:
            if 'grid' not in attrs:
                raise serializers.ValidationError({'grid': 'A torus needs a [width, height] grid.'})
        else:
            for field in ('pieces', 'subdivisions'):
                if field not in attrs:
                    raise serializers.ValidationError({field: 'This field is required.'})
            if attrs['kind'] == INTERVAL and len(attrs['pieces']) != 1:
                raise serializers.ValidationError({'pieces': 'An interval has exactly one piece.'})
        try:
            attrs['space'] = CellSpace.from_dict(attrs)
        except ValueError as e:
            raise serializers.ValidationError(str(e))
        return attrs


class BaseMapSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=MAP_KINDS)
    parameters = serializers.DictField(required=False, default=dict)
    lipschitz = serializers.FloatField(required=False, allow_null=True, default=None, min_value=0)

    def validate(self, attrs):
        try:
            attrs['base'] = BaseMap(attrs['kind'], attrs['parameters'], attrs['lipschitz'])
        except (InvalidBaseMap, TypeError, ValueError) as e:
            raise serializers.ValidationError({'parameters': str(e)})
        return attrs


class GraphSerializer(serializers.Serializer):
    """Graph JSON: space, epsilon, source and one row of cell ids per cell."""

    space = SpaceSerializer()
    epsilon = serializers.FloatField(min_value=0, default=0.0)
    source = serializers.DictField(required=False, default=dict)
    rows = serializers.ListField(child=serializers.ListField(child=serializers.JSONField()))

    def validate(self, attrs):
        space = attrs['space']['space']
        rows = attrs['rows']
        if len(rows) != space.n_cells:
            raise serializers.ValidationError(
                {'rows': f'Expected {space.n_cells} rows, got {len(rows)}.'}
            )
        row_errors = {}
        for r, row in enumerate(rows):
            if not row:
                row_errors[r] = 'Row is empty.'
                continue
            for cell_id in row:
                if isinstance(cell_id, bool) or not isinstance(cell_id, int):
                    row_errors[r] = f'Cell id {cell_id!r} is not an integer.'
                    break
                if not 0 <= cell_id < space.n_cells:
                    row_errors[r] = f'Cell id {cell_id} is out of range 0..{space.n_cells - 1}.'
                    break
        if row_errors:
            raise serializers.ValidationError(
                {'rows': {str(r): message for r, message in row_errors.items()}}
            )
        return attrs


class BuildSpecSerializer(serializers.Serializer):
    """Input of the build command: a space plus either a base map and epsilon or explicit rows."""

    space = SpaceSerializer()
    map = BaseMapSerializer(required=False)
    epsilon = serializers.FloatField(required=False)
    rows = serializers.ListField(child=serializers.ListField(child=serializers.JSONField()), required=False)

    def validate(self, attrs):
        if 'rows' in attrs:
            graph = GraphSerializer(data={
                'space': self.initial_data['space'], 'rows': attrs['rows'],
            })
            if not graph.is_valid():
                raise serializers.ValidationError(graph.errors)
            return attrs
        if 'map' not in attrs:
            raise serializers.ValidationError('Give either explicit rows or a base map with epsilon.')
        if attrs.get('epsilon') is None or attrs['epsilon'] <= 0:
            raise serializers.ValidationError({'epsilon': 'A positive fattening radius is required.'})
        return attrs


def validated(serializer_class, data, what):
    """Run a serializer and raise SchemaError with its field errors on failure."""
    if not isinstance(data, dict):
        raise SchemaError(f'{what}: expected a JSON object')
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise SchemaError(f'{what}: {_flatten(serializer.errors)}', serializer.errors)
    return serializer.validated_data


def _flatten(errors, prefix=''):
    parts = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            name = f'{prefix}.{key}' if prefix else str(key)
            if key == 'non_field_errors':
                name = prefix or 'document'
            parts.append(_flatten(value, name))
    elif isinstance(errors, list):
        if all(isinstance(e, str) for e in errors):
            parts.append(f'{prefix}: {" ".join(errors)}' if prefix else ' '.join(errors))
        else:
            parts.extend(_flatten(e, prefix) for e in errors)
    else:
        parts.append(f'{prefix}: {errors}')
    return '; '.join(p for p in parts if p)

