from django.apps import AppConfig


class PrognoseConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'prognose'
    verbose_name = 'Kreisprognose'
