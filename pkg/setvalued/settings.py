import os
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent

_DEFAULT_DEV_KEY = 'django-insecure-setvalued-dev-key-change-in-production'

DEBUG = os.environ.get('DJANGO_DEBUG', 'True').lower() in ('true', '1')

SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', '' if not DEBUG else _DEFAULT_DEV_KEY)
if not SECRET_KEY:
    raise RuntimeError(
        'DJANGO_SECRET_KEY environment variable is required when DEBUG is off.'
    )

INSTALLED_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'rest_framework',
    'cells',
    'analysis',
    'anosov',
]

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [BASE_DIR / 'templates'],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [],
        },
    },
]

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.environ.get('SETVALUED_DB_PATH', str(BASE_DIR / 'db.sqlite3')),
    }
}

USE_TZ = True
TIME_ZONE = 'UTC'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Logging: artifacts go to stdout, diagnostics to stderr.
LOG_LEVEL = os.environ.get('SETVALUED_LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'cells': {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False},
        'analysis': {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False},
        'anosov': {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False},
    },
}

# Set-valued dynamics settings
SETVALUED_THREADS = max(1, int(os.environ.get('SETVALUED_THREADS', '1')))

ENTROPY_ENUMERATION_BUDGET = int(os.environ.get('SETVALUED_ENTROPY_BUDGET', '200000'))
GROWTH_RATE_TOLERANCE = 1e-10
GROWTH_RATE_MAX_ITERATIONS = 10000

# Brute-force closure is cubic in the cell count
ORACLE_MAX_CELLS = int(os.environ.get('SETVALUED_ORACLE_MAX_CELLS', '500'))

# Decimal digits available to the shadow forward verifier
SHADOW_MAX_DIGITS = int(os.environ.get('SETVALUED_SHADOW_MAX_DIGITS', '6000'))

RECORD_RUNS = os.environ.get('SETVALUED_RECORD_RUNS', 'True').lower() in ('true', '1')

SCHEMA_VERSIONS = {
    'space': 'setvalued.space.v1',
    'graph': 'setvalued.graph.v1',
    'graph_binary': 'SVMG1',
    'decompose': 'setvalued.decompose.v1',
    'entropy': 'setvalued.entropy.v1',
    'anosov': 'setvalued.anosov.v1',
    'oracle': 'setvalued.oracle.v1',
}
