"""
LoAd Platform - Application Configuration

Django application configuration for the LoAd app.

Created:    2026
License:    MIT - See LICENSE file
"""

from django.apps import AppConfig


class LoadAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.load'
    verbose_name = 'Local Adaptive experiments'
