"""
LoAd Platform - Apps Package

This package contains the Django applications of the LoAd platform.

Created:    2026
License:    MIT - See LICENSE file
"""
