"""
Django settings for kreisprognose project.

Projekt-Einstellungen plus die Standardwerte des Prognose-Werkzeugs
(``PROGNOSE``). Eine Lauf-Konfiguration (JSON) überschreibt diese Werte,
CLI-Flags überschreiben die Lauf-Konfiguration.
"""

from pathlib import Path
import os
import dj_database_url

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
# Lokale Default-Variante, im Deployment als Environment-Variable gesetzt.
SECRET_KEY = os.environ.get('SECRET_KEY', 'dev-unsafe-key')

# Debug: lokal True (Standard), im Deployment per Env DEBUG=False setzen
DEBUG = os.environ.get('DEBUG', 'True') == 'True'

ALLOWED_HOSTS = os.environ.get('ALLOWED_HOSTS', '').split(',') if not DEBUG else []


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    'prognose',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'whitenoise.middleware.WhiteNoiseMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'kreisprognose.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],  # wir nutzen APP_DIRS
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
                'kreisprognose.context_processors.app_version',
                'prognose.context_processors.latest_run_badge',
            ],
        },
    },
]

WSGI_APPLICATION = 'kreisprognose.wsgi.application'


# Database
# Lokal: SQLite, sonst Postgres via DATABASE_URL

DATABASES = {
    'default': dj_database_url.config(
        default=f"sqlite:///{BASE_DIR / 'db.sqlite3'}",
        conn_max_age=600,
    )
}


# Password validation

AUTH_PASSWORD_VALIDATORS = [
    {
        'NAME': 'django.contrib.auth.password_validation.UserAttributeSimilarityValidator',
    },
    {
        'NAME': 'django.contrib.auth.password_validation.MinimumLengthValidator',
    },
    {
        'NAME': 'django.contrib.auth.password_validation.CommonPasswordValidator',
    },
    {
        'NAME': 'django.contrib.auth.password_validation.NumericPasswordValidator',
    },
]


# Internationalization

LANGUAGE_CODE = 'de-de'
TIME_ZONE = 'Europe/Berlin'
USE_I18N = True
USE_TZ = True


# Static files (CSS, JavaScript, Images)

STATIC_URL = '/static/'
STATIC_ROOT = BASE_DIR / 'staticfiles'

STATICFILES_DIRS = [
    BASE_DIR / 'static'
] if (BASE_DIR / 'static').exists() else []

# Whitenoise: statische Dateien komprimiert/mit Hash ausliefern
STATICFILES_STORAGE = 'whitenoise.storage.CompressedManifestStaticFilesStorage'


# Login-Redirects

LOGIN_URL = 'admin:login'
LOGIN_REDIRECT_URL = 'home'


# Default primary key field type

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging
# Alle Module loggen über logging.getLogger(__name__) unterhalb von "prognose".

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'prognose': {
            'handlers': ['console'],
            'level': os.environ.get('PROGNOSE_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# ---------------------------------------------------
# Prognose-Werkzeug: Standardwerte
# ---------------------------------------------------
# Eine JSON-Lauf-Konfiguration überschreibt einzelne Schlüssel,
# verschachtelte Abschnitte werden schlüsselweise zusammengeführt.
PROGNOSE = {
    'config_version': '1.0',
    'output_dir': os.environ.get('PROGNOSE_OUTPUT_DIR', str(BASE_DIR / 'runs' / 'default')),
    'seed': 20200510,
    'forecast_len': 14,
    'lags': [15, 16, 17, 18],
    'aggregation_days': 28,
    'min_coverage': 0.8,
    'quantile_window': 14,
    'plot_history_days': 10,
    'static_columns': ['population', 'population_density', 'hospital_beds'],
    'dump': {
        'dump_abs_min': 10.0,
        'dump_ratio': 5.0,
        'trailing_days': 7,
    },
    'mobility_default': 100.0,
    'clustering': {
        'k': 6,
        'min_cumulative_cases': 10,
        'max_iter': 300,
    },
    'models': {
        'seirqd': {
            'enabled': True,
            'weight_cases': 0.8,
            'weight_deaths': 0.2,
            'severity_threshold': 50.0,
            'max_iters': 2000,
            'tolerance': 1e-8,
            'restarts': 5,
        },
        'gp': {
            'enabled': True,
            'restarts': 3,
            'train_window': None,
        },
        'nn': {
            'enabled': True,
            'learning_rate': 0.01,
            'batch_size': 64,
            'max_epochs': 200,
            'early_stop_patience': 10,
            'early_stop_tolerance': 1e-4,
            'grid': None,
        },
        'qnn': {
            'enabled': True,
            'learning_rate': 0.01,
            'batch_size': 64,
            'max_epochs': 200,
            'early_stop_patience': 10,
            'early_stop_tolerance': 1e-4,
        },
        'forest': {
            'enabled': True,
            'n_trees': 200,
            'max_depth': 12,
            'min_samples_leaf': 3,
            'feature_fraction': 1 / 3,
            'clip_multiplier': 3.0,
        },
        'forest_moving': {
            'enabled': True,
            'n_trees': 200,
            'max_depth': 12,
            'min_samples_leaf': 3,
            'feature_fraction': 1 / 3,
            'clip_multiplier': 3.0,
            'window_days': 45,
        },
        'gbdt': {
            'enabled': True,
            'n_rounds': 100,
            'learning_rate': 0.1,
            'max_depth': 3,
            'min_samples_leaf': 2,
            'n_runs': 5,
            'subsample': 0.8,
        },
    },
    'ensemble': {
        'hidden_dims': [32, 16],
        'dropout': 0.1,
        'learning_rate': 0.005,
        'batch_size': 64,
        'max_epochs': 300,
        'early_stop_patience': 20,
        'early_stop_tolerance': 1e-5,
        'validation_fraction': 0.2,
    },
}

APP_VERSION = "1.0"
APP_STAGE = "beta"
