from rest_framework import serializers


class SignificanceResultSerializer(serializers.Serializer):
    n = serializers.IntegerField()
    rho = serializers.CharField()
    p = serializers.FloatField()
    F = serializers.FloatField()
    V = serializers.FloatField()
    k = serializers.IntegerField()
    threshold = serializers.FloatField()
    min_count = serializers.IntegerField()
