from rest_framework import serializers


class PatternResultSerializer(serializers.Serializer):
    pattern = serializers.SerializerMethodField()
    size = serializers.SerializerMethodField()
    observed_mean = serializers.FloatField()
    quantile = serializers.FloatField()
    significant = serializers.BooleanField()

    def get_pattern(self, obj):
        return obj.pattern.label(self.context.get('seq'))

    def get_size(self, obj):
        return obj.pattern.n
