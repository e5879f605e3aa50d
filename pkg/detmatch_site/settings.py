"""
Django settings for the detmatch_site project.

Toolkit defaults live in DETMATCH; each key can be overridden through an
environment variable (or .env entry) named DETMATCH_<KEY>.
"""
from dotenv import load_dotenv
load_dotenv()

from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


def env_bool(name, default):
    return os.getenv(name, str(default)).strip().lower() in ("1", "true", "yes", "on")


def env_list(name, default=""):
    return [item for item in os.getenv(name, default).split(",") if item]


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv("SECRET_KEY", "detmatch-insecure-development-key")

DEBUG = os.getenv("DEBUG", "False") == "True"

ALLOWED_HOSTS = env_list("ALLOWED_HOSTS", "localhost,127.0.0.1,testserver")

CORS_ALLOWED_ORIGINS = env_list("CORS_ALLOWED_ORIGINS")


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    'rest_framework',
    'corsheaders',
    'detections',
    'evaluation',
    'simulation',
]

MIDDLEWARE = [
    'corsheaders.middleware.CorsMiddleware',

    'django.middleware.security.SecurityMiddleware',
    'whitenoise.middleware.WhiteNoiseMiddleware',

    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'detmatch_site.urls'

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

WSGI_APPLICATION = 'detmatch_site.wsgi.application'


# Database

DB_ENGINE = os.getenv("DB_ENGINE", "django.db.backends.sqlite3")

if DB_ENGINE.endswith("sqlite3"):
    DATABASES = {
        "default": {
            "ENGINE": DB_ENGINE,
            "NAME": os.getenv("DB_NAME", BASE_DIR / "db.sqlite3"),
        }
    }
else:
    DATABASES = {
        "default": {
            "ENGINE": DB_ENGINE,
            "NAME": os.getenv("DB_NAME"),
            "USER": os.getenv("DB_USER"),
            "PASSWORD": os.getenv("DB_PASSWORD"),
            "HOST": os.getenv("DB_HOST"),
            "PORT": os.getenv("DB_PORT", "3306"),
        }
    }


AUTH_PASSWORD_VALIDATORS = [
    {
        'NAME': 'django.contrib.auth.password_validation.UserAttributeSimilarityValidator',
    },
    {
        'NAME': 'django.contrib.auth.password_validation.MinimumLengthValidator',
    },
]


LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


STATIC_URL = 'static/'
STATIC_ROOT = os.path.join(BASE_DIR, "staticfiles")

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# REST Framework settings
REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': [
        'rest_framework.authentication.SessionAuthentication',
        'rest_framework.authentication.BasicAuthentication',
    ],
    'DEFAULT_PERMISSION_CLASSES': [
        'rest_framework.permissions.AllowAny',
    ],
    'STRICT_JSON': True,
}


# Toolkit defaults

DETMATCH = {
    "NMS_IOU_THRESHOLD": float(os.getenv("DETMATCH_NMS_IOU_THRESHOLD", "0.5")),
    "EVAL_IOU_THRESHOLD": float(os.getenv("DETMATCH_EVAL_IOU_THRESHOLD", "0.5")),
    "MATCH_IOU_FLOOR": float(os.getenv("DETMATCH_MATCH_IOU_FLOOR", "0.0")),
    "TORSO_MARGIN": float(os.getenv("DETMATCH_TORSO_MARGIN", "0.1")),
    "FOCAL_ALPHA": float(os.getenv("DETMATCH_FOCAL_ALPHA", "0.25")),
    "FOCAL_GAMMA": float(os.getenv("DETMATCH_FOCAL_GAMMA", "2.0")),
    "SMOOTH_L1_DELTA": float(os.getenv("DETMATCH_SMOOTH_L1_DELTA", "1.0")),
    "CONSTRAINT_WEIGHT": float(os.getenv("DETMATCH_CONSTRAINT_WEIGHT", "1.0")),
    "HISTOGRAM_BINS": int(os.getenv("DETMATCH_HISTOGRAM_BINS", "20")),
    "STRIDES": tuple(int(s) for s in env_list("DETMATCH_STRIDES", "8,16,32")),
    "CENTER_RADIUS": float(os.getenv("DETMATCH_CENTER_RADIUS", "1.5")),
    "DEFAULT_THREADS": int(os.getenv("DETMATCH_DEFAULT_THREADS", "1")),
    "STRICT_IO": env_bool("DETMATCH_STRICT_IO", True),
}


LOG_LEVEL = os.getenv("DETMATCH_LOG_LEVEL", "WARNING").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {"format": "{levelname} {name}: {message}", "style": "{"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "simple"},
    },
    "root": {"handlers": ["console"], "level": LOG_LEVEL},
    "loggers": {
        "detections": {"level": LOG_LEVEL},
        "evaluation": {"level": LOG_LEVEL},
        "simulation": {"level": LOG_LEVEL},
    },
}
