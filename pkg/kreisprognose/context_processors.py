from django.conf import settings


def app_version(request):
    """Version und Artefakt-Schema für die Fußzeile."""
    prognose = getattr(settings, 'PROGNOSE', {})
    return {
        'APP_VERSION': getattr(settings, 'APP_VERSION', '1.0'),
        'APP_STAGE': getattr(settings, 'APP_STAGE', ''),
        'CONFIG_VERSION': prognose.get('config_version', ''),
        'FORECAST_LEN': prognose.get('forecast_len'),
    }
