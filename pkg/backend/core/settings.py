"""
Django settings for the synchrony mining project.

Everything tunable is read from the environment (a `.env` file is loaded first),
so the management commands can be configured without touching this file.
"""
import os

from dotenv import load_dotenv
load_dotenv()

from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'django-insecure-synchrony-local-only')

DEBUG = os.getenv('DJANGO_DEBUG', 'false').lower() == 'true'

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    "django.contrib.auth",
    "django.contrib.contenttypes",
    'rest_framework',
    'spikes',
    'episodes',
    'significance',
    'simulator',
    'baseline',
    'bench',
]


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases
# SQLite unless DB_ENGINE points at postgres (see docker-compose.yaml)

DATABASES = {
    'default': {
        'ENGINE': os.getenv('DB_ENGINE', 'django.db.backends.sqlite3'),
        'NAME': os.getenv('DB_NAME', str(BASE_DIR / 'synchrony.sqlite3')),
        'USER': os.getenv('DB_USER', ''),
        'PASSWORD': os.getenv('DB_PASSWORD', ''),
        'HOST': os.getenv('DB_HOST', ''),
        'PORT': os.getenv('DB_PORT', ''),
    }
}

REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [],
    'UNAUTHENTICATED_USER': None,
}

# Mining / significance / baseline defaults
SYNCHRONY = {
    'DEFAULT_EPSILON': float(os.getenv('SYNCHRONY_DEFAULT_EPSILON', '0.05')),
    'SURROGATES': int(os.getenv('SYNCHRONY_SURROGATES', '25')),
    'TRIALS': int(os.getenv('SYNCHRONY_TRIALS', '20')),
    'ALPHA': float(os.getenv('SYNCHRONY_ALPHA', '0.05')),
    'PATTERN_TYPE_CAP': int(os.getenv('SYNCHRONY_PATTERN_TYPE_CAP', '25')),
}

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': os.getenv('LOG_LEVEL', 'INFO'),
    },
}

# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True

# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"
