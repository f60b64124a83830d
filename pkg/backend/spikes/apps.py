from django.apps import AppConfig


class SpikesConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "spikes"
