from django.apps import AppConfig


class SignificanceConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "significance"
