"""
LoAd Platform - Django Settings Configuration

This module contains the Django configuration for the LoAd (Local Adaptive)
experiment platform, including the run registry database, logging, and the
knobs that control where runs, caches and bundles are written.

Created:    2026
License:    MIT - See LICENSE file

For Django settings reference:
    https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
import os
from dotenv import load_dotenv
import dj_database_url

BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / ".env")


def _env_bool(name, default="False"):
    return os.getenv(name, default).strip().lower() in ("1", "true", "yes", "on")


# SECURITY WARNING: keep the secret key used in production secret!
# Nothing here is served over HTTP, the key only backs Django internals.
SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "load-platform-local-only")

DEBUG = _env_bool("DJANGO_DEBUG")

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'apps.load',
]

MIDDLEWARE = []


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases
# The run registry defaults to a local SQLite file; point DATABASE_URL at
# PostgreSQL (or anything dj-database-url understands) to share it.

DATABASES = {
    "default": dj_database_url.config(
        default=f"sqlite:///{BASE_DIR / 'db.sqlite3'}",
        conn_max_age=0,
    )
}


# Internationalization
# https://docs.djangoproject.com/en/5.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# ---------------------------------------------------------------------------
# LoAd experiment knobs
# ---------------------------------------------------------------------------
# Run directories: runs/<config_hash>/<repeat>/
LOAD_RUNS_DIR = Path(os.getenv("LOAD_RUNS_DIR", BASE_DIR / "runs"))

# Shared caches (pretrained trunks), keyed by content
LOAD_CACHE_DIR = Path(os.getenv("LOAD_CACHE_DIR", BASE_DIR / "cache"))

# Repeats fanned out to forked workers when > 1
LOAD_WORKERS = int(os.getenv("LOAD_WORKERS", 1))

# Write domainness bundles to disk (one file per image and domain)
LOAD_PERSIST_BUNDLES = _env_bool("LOAD_PERSIST_BUNDLES")

# Statistical acceptance tests take minutes; opt in explicitly
LOAD_RUN_SLOW_TESTS = _env_bool("LOAD_RUN_SLOW_TESTS")

LOG_DIR = BASE_DIR / 'logs'
LOG_DIR.mkdir(exist_ok=True)


# ---------------------------------------------------------------------------
# Logging Configuration
# ---------------------------------------------------------------------------
# Captures training progress, stage transitions and failures
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {asctime} {module}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': os.getenv("LOAD_LOG_LEVEL", "INFO"),
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
        'file': {
            'level': 'WARNING',
            'class': 'logging.FileHandler',
            'filename': LOG_DIR / 'load.log',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['console', 'file'],
            'level': 'WARNING',
            'propagate': True,
        },
        'apps.load': {
            'handlers': ['console', 'file'],
            'level': 'DEBUG',
            'propagate': False,
        },
    },
}
