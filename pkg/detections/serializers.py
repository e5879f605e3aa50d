import math

from rest_framework import serializers

from .boxes import BBox
from .exceptions import DegenerateBoxError
from .groups import DatasetHeader, FlatDetection, GroupDetection, GroupLabel


class StrictFloatField(serializers.FloatField):
    """Accept JSON numbers only: no strings, booleans or non-finite values."""

    default_error_messages = {
        "invalid": "A finite number is required.",
    }

    def to_internal_value(self, data):
        if isinstance(data, bool) or not isinstance(data, (int, float)):
            self.fail("invalid")
        value = float(data)
        if not math.isfinite(value):
            self.fail("invalid")
        return super().to_internal_value(value)


class IdentifierField(serializers.Field):
    """Image and group ids may be integers or strings."""

    default_error_messages = {
        "invalid": "Identifier must be an integer or a string.",
    }

    def to_internal_value(self, data):
        if isinstance(data, bool) or not isinstance(data, (int, str)):
            self.fail("invalid")
        return data

    def to_representation(self, value):
        return value


class BoxField(serializers.ListField):
    """[x, y, w, h] with x, y the top-left corner."""

    child = StrictFloatField()
    default_error_messages = {
        "box_length": "A box needs exactly 4 numbers [x, y, w, h], got {length}.",
    }

    def to_internal_value(self, data):
        values = super().to_internal_value(data)
        if len(values) != 4:
            self.fail("box_length", length=len(values))
        try:
            return BBox(*values)
        except DegenerateBoxError as exc:
            raise serializers.ValidationError(str(exc))

    def to_representation(self, box):
        return box.as_list()


class StrictFieldsMixin:
    """
    Reject unknown keys when the serializer context asks for strict parsing,
    otherwise keep them aside in `extra_fields`.
    """

    def to_internal_value(self, data):
        if not isinstance(data, dict):
            raise serializers.ValidationError({"non_field_errors": ["Expected an object."]})
        unknown = sorted(set(data) - set(self.fields))
        attrs = super().to_internal_value(data)
        if unknown:
            if self.context.get("strict", True):
                raise serializers.ValidationError({name: ["Unknown field."] for name in unknown})
            attrs["extra_fields"] = {name: data[name] for name in unknown}
        return attrs

    def to_representation(self, instance):
        data = super().to_representation(instance)
        for name, value in getattr(instance, "extra_fields", {}).items():
            data.setdefault(name, value)
        return data


class ArityMixin:
    def validate_extras(self, value):
        arity = self.context.get("arity")
        if arity is not None and len(value) != arity:
            raise serializers.ValidationError(
                f"Expected {arity} extras as declared in the header, got {len(value)}."
            )
        return value


class DatasetHeaderSerializer(StrictFieldsMixin, serializers.Serializer):
    base_class_names = serializers.ListField(child=serializers.CharField(), allow_empty=False)
    extra_class_names = serializers.ListField(child=serializers.CharField(), allow_empty=True)
    schema_version = serializers.IntegerField(min_value=1)
    image_sizes = serializers.DictField(
        child=serializers.ListField(child=StrictFloatField(min_value=0), min_length=2, max_length=2),
        required=False,
    )

    def validate_schema_version(self, value):
        if value != 1:
            raise serializers.ValidationError(f"Unsupported schema version {value}.")
        return value

    def create(self, validated_data):
        validated_data.pop("extra_fields", None)
        return DatasetHeader(**validated_data)

    def to_representation(self, instance):
        data = super().to_representation(instance)
        if not instance.image_sizes:
            data.pop("image_sizes", None)
        return data


class GroupLabelSerializer(StrictFieldsMixin, ArityMixin, serializers.Serializer):
    image_id = IdentifierField()
    group_id = IdentifierField()
    class_id = serializers.IntegerField(min_value=0)
    base = BoxField()
    extras = serializers.ListField(child=BoxField(allow_null=True), allow_empty=True)
    ignore = serializers.BooleanField(default=False)

    def validate_class_id(self, value):
        count = self.context.get("class_count")
        if count is not None and value >= count:
            raise serializers.ValidationError(f"class_id {value} is not declared in the header.")
        return value

    def create(self, validated_data):
        return GroupLabel(**validated_data)


class GroupDetectionSerializer(StrictFieldsMixin, ArityMixin, serializers.Serializer):
    image_id = IdentifierField()
    class_id = serializers.IntegerField(min_value=0)
    score = StrictFloatField(min_value=0.0, max_value=1.0)
    base = BoxField()
    extras = serializers.ListField(child=BoxField(allow_null=True), allow_empty=True)

    def create(self, validated_data):
        validated_data.pop("extra_fields", None)
        return GroupDetection(**validated_data)


class FlatDetectionSerializer(StrictFieldsMixin, serializers.Serializer):
    image_id = IdentifierField()
    class_id = serializers.IntegerField(min_value=0)
    role = serializers.IntegerField(min_value=0)
    score = StrictFloatField(min_value=0.0, max_value=1.0)
    box = BoxField()

    def validate_role(self, value):
        arity = self.context.get("arity")
        if arity is not None and value > arity:
            raise serializers.ValidationError(f"role {value} exceeds the header's {arity} extra classes.")
        return value

    def create(self, validated_data):
        validated_data.pop("extra_fields", None)
        return FlatDetection(**validated_data)
