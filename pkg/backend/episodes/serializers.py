from rest_framework import serializers


class FrequentEpisodeSerializer(serializers.Serializer):
    """One mined episode; pass the EventSequence as context['seq'] to print labels."""
    episode = serializers.SerializerMethodField()
    size = serializers.SerializerMethodField()
    count = serializers.IntegerField()
    threshold_used = serializers.IntegerField(source='threshold')

    def get_episode(self, obj):
        return obj.episode.label(self.context.get('seq'))

    def get_size(self, obj):
        return obj.episode.n


class LevelStatsSerializer(serializers.Serializer):
    level = serializers.IntegerField()
    candidates = serializers.IntegerField()
    frequent = serializers.IntegerField()
    min_threshold = serializers.IntegerField(allow_null=True)
    max_threshold = serializers.IntegerField(allow_null=True)


def report_order(item):
    """Size descending, count descending, then canonical type order."""
    return -item.episode.n, -item.count, item.episode.types
