"""
Django settings for the Liouville laboratory.

Every value below can be overridden from the environment or a .env file
through python-decouple.
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config("SECRET_KEY", "your-secret-key")

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = config("DEBUG", default=False, cast=bool)
ADMIN_URL = config("ADMIN_URL", "admin/")
ALLOWED_HOSTS = ['*']


# Application definition

DJANGO_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
]

THIRD_PARTY_APPS = [
    'rest_framework',
    'drf_spectacular',
    'django_extensions',
    'django_filters',
]

LOCAL_APPS = [
    'laboratory',
]

INSTALLED_APPS = DJANGO_APPS + THIRD_PARTY_APPS + LOCAL_APPS


MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'core.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'core.wsgi.application'

# ---------------------------------------------------------------------
# LABORATORY
# ---------------------------------------------------------------------

LABORATORY = {
    'SEED': config("LAB_SEED", default=20240229, cast=int),
    'THREADS': config("LAB_THREADS", default=1, cast=int),
    'RANK_TOLERANCE': config("LAB_RANK_TOLERANCE", default=1e-9, cast=float),
    'MC_SAMPLES': config("LAB_MC_SAMPLES", default=1_000_000, cast=int),
    'MC_REPLICATES': config("LAB_MC_REPLICATES", default=8, cast=int),
    'MC_MAX_RELATIVE_ERROR': config("LAB_MC_MAX_RELATIVE_ERROR", default=0.2, cast=float),
    'SOLVER_METHOD': config("LAB_SOLVER_METHOD", default="auto"),
    'SOLVER_MAX_ITER': config("LAB_SOLVER_MAX_ITER", default=100_000, cast=int),
    'SOLVER_TOLERANCE': config("LAB_SOLVER_TOLERANCE", default=1e-8, cast=float),
    'DIRECT_SOLVER_LIMIT': config("LAB_DIRECT_SOLVER_LIMIT", default=100_000, cast=int),
    'LADDER_OCTAVES': config("LAB_LADDER_OCTAVES", default=40, cast=int),
    'R_MAX_OCTAVES': config("LAB_R_MAX_OCTAVES", default=10, cast=int),
    'GRID_SPACING': config("LAB_GRID_SPACING", default=0.125, cast=float),
}

# ---------------------------------------------------------------------
# DJANGO REST FRAMEWORK
# ---------------------------------------------------------------------

REST_FRAMEWORK = {
    'DEFAULT_PAGINATION_CLASS': 'rest_framework.pagination.PageNumberPagination',
    'PAGE_SIZE': 10,
    'DEFAULT_FILTER_BACKENDS': [
        'django_filters.rest_framework.DjangoFilterBackend',
        'rest_framework.filters.SearchFilter',
        'rest_framework.filters.OrderingFilter',
    ],
    "DEFAULT_AUTHENTICATION_CLASSES": [
        "rest_framework.authentication.SessionAuthentication",
    ],
    "DEFAULT_PERMISSION_CLASSES": ("rest_framework.permissions.AllowAny",),
    "DEFAULT_SCHEMA_CLASS": "drf_spectacular.openapi.AutoSchema",
    "DEFAULT_THROTTLE_RATES": {
        "lab": config("LAB_THROTTLE_RATE", default="200/hour"),
    }
}

# ---------------------------------------------------------------------
# SPECTACULAR (OpenAPI/Swagger)
# ---------------------------------------------------------------------

SPECTACULAR_SETTINGS = {
    "TITLE": "Liouville laboratory API",
    "DESCRIPTION": "Archived experiment runs and synchronous frame and criterion checks",
    "VERSION": "1.0.0",
    "SCHEMA_PATH_PREFIX": "/api/",
}

# Database

DATABASES = {
    "default": {
        "ENGINE": config("DB_ENGINE", "django.db.backends.sqlite3"),
        "NAME": config("DB_NAME", str(BASE_DIR / "laboratory.sqlite3")),
        "USER": config("DB_USER", ""),
        "PASSWORD": config("DB_PASSWORD", ""),
        "HOST": config("DB_HOST", ""),
        "PORT": config("DB_PORT", ""),
    },
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# Static files (CSS, JavaScript, Images)

STATIC_URL = 'static/'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# ---------------------------------------------------------------------
# LOGGING
# ---------------------------------------------------------------------

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "%(levelname)s %(asctime)s %(module)s %(process)d %(thread)d %(message)s",
        },
    },
    "handlers": {
        "console": {
            "level": "DEBUG",
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "root": {"level": "INFO", "handlers": ["console"]},
    "loggers": {
        "laboratory": {
            "level": config("LAB_LOG_LEVEL", default="INFO"),
            "handlers": ["console"],
            "propagate": False,
        },
    },
}

# ---------------------------------------------------------------------
# SECURITY
# ---------------------------------------------------------------------

SESSION_COOKIE_HTTPONLY = True
CSRF_COOKIE_HTTPONLY = True
X_FRAME_OPTIONS = "DENY"


# Cache configuration: Redis when REDIS_URL is set, process memory otherwise
REDIS_URL = config("REDIS_URL", default="")
if REDIS_URL:
    CACHES = {
        "default": {
            "BACKEND": "django_redis.cache.RedisCache",
            "LOCATION": REDIS_URL,
            "OPTIONS": {"CLIENT_CLASS": "django_redis.client.DefaultClient"},
        }
    }
else:
    CACHES = {
        "default": {
            "BACKEND": "django.core.cache.backends.locmem.LocMemCache",
            "LOCATION": "laboratory",
        }
    }
