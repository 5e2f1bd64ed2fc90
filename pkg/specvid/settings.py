"""
Django settings for specvid project.

Generated by 'django-admin startproject' using Django 4.2.7.

For more information on this file, see
https://docs.djangoproject.com/en/4.2/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

from pathlib import Path
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('SECRET_KEY', 'django-insecure-specvid-local-key')

DEBUG = os.getenv('DEBUG', 'True').lower() == 'true'

ALLOWED_HOSTS = os.getenv('ALLOWED_HOSTS', 'localhost,127.0.0.1').split(',')


# Application definition

INSTALLED_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'rest_framework',
    'sci_system',
]


# Database
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

# Default primary key field type
# https://docs.djangoproject.com/en/4.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging
SCI_LOG_LEVEL = os.getenv('SCI_LOG_LEVEL', 'INFO').upper()

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
            'formatter': 'plain',
        },
    },
    'loggers': {
        'sci_system': {
            'handlers': ['console'],
            'level': SCI_LOG_LEVEL,
            'propagate': False,
        },
    },
}


def _float_tuple(value):
    return tuple(float(v) for v in value.split(','))


def _int_tuple(value):
    return tuple(int(v) for v in value.split(','))


# Toolkit
SCI_TOOLKIT_VERSION = '1.0.0'
SCI_NUM_THREADS = int(os.getenv('SCI_NUM_THREADS', '0'))

# Spectral sampling (nm)
SCI_WAVELENGTH_MIN = float(os.getenv('SCI_WAVELENGTH_MIN', '500'))
SCI_WAVELENGTH_MAX = float(os.getenv('SCI_WAVELENGTH_MAX', '650'))

# Optics
SCI_DISPERSION_STEP = int(os.getenv('SCI_DISPERSION_STEP', '1'))
SCI_MASK_DENSITY = float(os.getenv('SCI_MASK_DENSITY', '0.5'))
SCI_SPARSE_GRID_DENSITY = float(os.getenv('SCI_SPARSE_GRID_DENSITY', '0.25'))
SCI_NOTCH_DENSITY = float(os.getenv('SCI_NOTCH_DENSITY', '0.9'))

# Solver
SCI_SOLVER_ITERATIONS = int(os.getenv('SCI_SOLVER_ITERATIONS', '100'))
SCI_TV_WEIGHT = float(os.getenv('SCI_TV_WEIGHT', '0.1'))
SCI_TV_INNER_ITERATIONS = int(os.getenv('SCI_TV_INNER_ITERATIONS', '5'))
SCI_STEP_SIZE = float(os.getenv('SCI_STEP_SIZE', '1.0'))

# Network
SCI_WINDOW_HEIGHT = int(os.getenv('SCI_WINDOW_HEIGHT', '8'))
SCI_WINDOW_WIDTH = int(os.getenv('SCI_WINDOW_WIDTH', '32'))
SCI_BRIDGED_TOKENS = int(os.getenv('SCI_BRIDGED_TOKENS', '64'))
SCI_HEADS = int(os.getenv('SCI_HEADS', '1'))
SCI_DEPTH = _int_tuple(os.getenv('SCI_DEPTH', '1,1,1'))

# Metrics and rendering
SCI_RGB_CENTERS = _float_tuple(os.getenv('SCI_RGB_CENTERS', '610,550,465'))
SCI_RGB_WIDTH_NM = float(os.getenv('SCI_RGB_WIDTH_NM', '30'))
SCI_TEMPORAL_BLOCK = int(os.getenv('SCI_TEMPORAL_BLOCK', '8'))
SCI_TEMPORAL_NOISE_FLOOR = float(os.getenv('SCI_TEMPORAL_NOISE_FLOOR', '1e-4'))
SCI_PSNR_CAP = float(os.getenv('SCI_PSNR_CAP', '100'))
