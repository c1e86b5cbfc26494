from django.apps import AppConfig


class MacsimConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'macsim'
    verbose_name = 'Cognitive MAC simulator'
