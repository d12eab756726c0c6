"""
LoAd Platform - Configuration Package

Django project configuration package containing the settings module.

Created:    2026
License:    MIT - See LICENSE file
"""
