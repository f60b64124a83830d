from rest_framework import serializers

from .models import BenchReportRecord, BenchRowRecord


class BenchRowSerializer(serializers.Serializer):
    vary = serializers.CharField()
    value = serializers.FloatField()
    method = serializers.CharField()
    runs = serializers.IntegerField()
    runtime_s = serializers.FloatField()
    fpr = serializers.FloatField(allow_null=True)
    found = serializers.IntegerField()
    embedded = serializers.IntegerField()
    recall = serializers.FloatField(allow_null=True)


class BenchRowRecordSerializer(serializers.ModelSerializer):

    class Meta:
        model = BenchRowRecord
        fields = ['value', 'method', 'runs', 'runtime_s', 'fpr', 'found', 'embedded', 'recall']


class BenchReportListSerializer(serializers.ModelSerializer):
    row_count = serializers.IntegerField(source='rows.count', read_only=True)

    class Meta:
        model = BenchReportRecord
        fields = ['id', 'vary', 'seed', 'created_at', 'row_count']


class BenchReportDetailSerializer(serializers.ModelSerializer):
    rows = BenchRowRecordSerializer(many=True, read_only=True)

    class Meta:
        model = BenchReportRecord
        fields = ['id', 'vary', 'seed', 'created_at', 'parameters', 'rows']
