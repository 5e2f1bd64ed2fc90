from django.apps import AppConfig


class SciSystemConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'sci_system'
    verbose_name = 'Spectral compressive imaging toolkit'
